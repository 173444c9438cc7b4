#include "kinuq/calibration.hpp"

#include <cmath>

namespace kinuq {

Array CalibrationProblem::checkpoint_times() const {
  return Array::LinSpaced(n_checkpoints, 0.0, horizon);
}

void CalibrationProblem::validate() const {
  if (f0_set.empty()) throw InvalidInputError("calibration problem has no initial states");
  if (reference_entropy.size() != f0_set.size())
    throw InvalidInputError("calibration problem needs one reference curve per initial state");
  if (n_checkpoints < 2) throw ConfigError("calibration needs at least 2 checkpoints");
  for (const Array& h : reference_entropy) {
    if (h.size() != n_checkpoints)
      throw InvalidInputError("reference entropy curve length does not match checkpoints");
    for (Index i = 1; i < h.size(); ++i)
      if (h[i] > h[i - 1] + 1e-8)
        throw InvalidInputError("reference entropy curve is not nonincreasing");
  }
}

CalibrationProblem make_boltzmann_calibration(std::vector<Distribution> f0_set, Real eps,
                                              Real horizon, Index n_checkpoints,
                                              const SpectralPlan& plan) {
  CalibrationProblem p;
  p.eps = eps;
  p.horizon = horizon;
  p.n_checkpoints = n_checkpoints;
  for (const Distribution& f0 : f0_set) {
    HomBoltzmannOptions opt;
    opt.n_out = n_checkpoints;
    const HomTrajectory traj = solve_hom_boltzmann(f0, eps, horizon, plan, opt);
    Array h(n_checkpoints);
    for (Index i = 0; i < n_checkpoints; ++i)
      h[i] = entropy(traj.states[static_cast<std::size_t>(i)]);
    p.reference_entropy.push_back(std::move(h));
  }
  p.f0_set = std::move(f0_set);
  p.validate();
  return p;
}

Real entropy_discrepancy(Real mu, const CalibrationProblem& problem) {
  if (!(mu > 0)) throw InvalidInputError("entropy_discrepancy: mu must be positive");
  const Array times = problem.checkpoint_times();
  Real total = 0;
  for (std::size_t s = 0; s < problem.f0_set.size(); ++s) {
    const Distribution& f0 = problem.f0_set[s];
    const RelaxationRate rate{mu, problem.eps};
    Real sq = 0;
    for (Index i = 0; i < times.size(); ++i) {
      const Real h = entropy(solve_hom_bgk(f0, rate, times[i]));
      const Real d = h - problem.reference_entropy[s][i];
      sq += d * d;
    }
    total += std::sqrt(sq / static_cast<Real>(times.size()));
  }
  return total / static_cast<Real>(problem.f0_set.size());
}

CalibrationResult calibrate_mu(const CalibrationProblem& problem, Real bracket_lo,
                               Real bracket_hi) {
  problem.validate();
  if (!(bracket_lo > 0) || !(bracket_hi > bracket_lo))
    throw InvalidInputError("calibrate_mu: bracket must satisfy 0 < lo < hi");

  Index evals = 0;
  auto j = [&](Real mu) {
    ++evals;
    return entropy_discrepancy(mu, problem);
  };

  const Real mid = 0.5 * (bracket_lo + bracket_hi);
  const Real j_lo = j(bracket_lo), j_mid = j(mid), j_hi = j(bracket_hi);
  if (!(j_mid < j_lo && j_mid < j_hi))
    throw InvalidInputError("calibrate_mu: no interior minimum in bracket; J(lo, mid, hi) = (" +
                            std::to_string(j_lo) + ", " + std::to_string(j_mid) + ", " +
                            std::to_string(j_hi) + ")");

  const Real gr = (std::sqrt(5.0) - 1.0) / 2.0;
  Real a = bracket_lo, b = bracket_hi;
  Real x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  Real f1 = j(x1), f2 = j(x2);
  while ((b - a) > 1e-3 * 0.5 * (a + b)) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = j(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = j(x2);
    }
  }
  CalibrationResult result;
  result.mu_star = 0.5 * (a + b);
  result.discrepancy = j(result.mu_star);
  result.evaluations = evals;
  return result;
}

}  // namespace kinuq
