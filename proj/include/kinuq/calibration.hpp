#pragma once

#include <vector>

#include "kinuq/solvers.hpp"

namespace kinuq {

/// Entropy-matching problem: initial states, the Knudsen number, uniform
/// entropy checkpoints on [0, T], and reference entropy curves (one per
/// initial state, typically from Boltzmann trajectories).
struct CalibrationProblem {
  std::vector<Distribution> f0_set;
  Real eps = 1.0;
  Real horizon = 2.0;
  Index n_checkpoints = 50;
  std::vector<Array> reference_entropy;  // each of length n_checkpoints

  Array checkpoint_times() const;
  void validate() const;  // reference curves must be nonincreasing within 1e-8
};

/// Builds reference curves by running the spectral Boltzmann solver on each
/// initial state and recording entropy at the checkpoints.
CalibrationProblem make_boltzmann_calibration(std::vector<Distribution> f0_set, Real eps,
                                              Real horizon, Index n_checkpoints,
                                              const SpectralPlan& plan);

/// Discrete L2 (RMS over checkpoints) entropy-curve mismatch between the
/// exact BGK relaxation at frequency mu and the reference, averaged over the
/// initial-state set.
Real entropy_discrepancy(Real mu, const CalibrationProblem& problem);

struct CalibrationResult {
  Real mu_star = 0;
  Real discrepancy = 0;
  Index evaluations = 0;
};

/// Golden-section minimization of the entropy discrepancy over
/// [bracket_lo, bracket_hi] to a relative tolerance of 1e-3 on mu. The
/// midpoint probe must sit below both bracket ends, otherwise a bracketing
/// error (carrying the three probe values) is thrown.
CalibrationResult calibrate_mu(const CalibrationProblem& problem, Real bracket_lo,
                               Real bracket_hi);

}  // namespace kinuq
