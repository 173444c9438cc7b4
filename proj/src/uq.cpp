#include "kinuq/uq.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "kinuq/util.hpp"

namespace kinuq {

namespace {

constexpr Real kVarFloorRel = 1e-14;
constexpr Real kRidge = 1e-10;
constexpr Real kCondLimit = 1e12;
constexpr Index kStreamBlock = 64;

void require_common_ids(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b) {
  if (a != b)
    throw InvalidInputError(
        "common-random-number violation: fidelities do not share sample IDs");
}

Array col_mean(const ArrayXX& values) {
  return pairwise_colsum(values) / static_cast<Real>(values.cols());
}

}  // namespace

RandomInputSpec RandomInputSpec::uniform_box(const Matrix& box) {
  if (box.cols() != 2 || box.rows() < 1) throw ConfigError("random input box must be (dim, 2)");
  for (Index i = 0; i < box.rows(); ++i)
    if (!(box(i, 0) < box(i, 1))) throw ConfigError("random input box has a degenerate interval");
  return {box.rows(), box};
}

SampleSet draw_samples(const RandomInputSpec& spec, Index count, std::uint64_t seed) {
  if (count < 1) throw InvalidInputError("draw_samples: count must be >= 1");
  SampleSet s;
  s.master_seed = seed;
  s.z.resize(spec.dim, count);
  s.ids.resize(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    s.ids[static_cast<std::size_t>(i)] = i;
    const std::uint64_t key = hash_mix(seed, static_cast<std::uint64_t>(i));
    for (Index j = 0; j < spec.dim; ++j) {
      const Real u = uniform01(splitmix64(key + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(j) + 1)));
      s.z(j, i) = spec.box(j, 0) + (spec.box(j, 1) - spec.box(j, 0)) * u;
    }
  }
  return s;
}

FieldSamples evaluate_samples(const SampleSet& samples, const FieldEvaluator& evaluator,
                              int n_jobs) {
  FieldSamples out;
  out.ids = samples.ids;
  const Index k = samples.count();
  if (k == 0) throw InvalidInputError("evaluate_samples: empty sample set");

  Array first = evaluator(samples.ids[0], samples.sample(0));
  out.values.resize(first.size(), k);
  out.values.col(0) = first;
  parallel_for(
      k - 1,
      [&](Index i) {
        const Index col = i + 1;
        Array v;
        try {
          v = evaluator(samples.ids[static_cast<std::size_t>(col)], samples.sample(col));
        } catch (const std::exception& e) {
          throw std::runtime_error("evaluator failed on sample id " +
                                   std::to_string(samples.ids[static_cast<std::size_t>(col)]) +
                                   ": " + e.what());
        }
        if (v.size() != out.values.rows())
          throw InvalidInputError("evaluator returned inconsistent field sizes");
        out.values.col(col) = v;
      },
      n_jobs);
  return out;
}

void MomentAccumulator::add_block(const ArrayXX& block) {
  Stats s;
  s.n = block.cols();
  if (s.n == 0) return;
  s.mean = col_mean(block);
  ArrayXX centered = block.colwise() - s.mean;
  s.m2 = pairwise_colsum(centered.square());
  count_ += s.n;

  for (std::size_t level = 0;; ++level) {
    if (level == levels_.size()) {
      levels_.push_back(std::move(s));
      break;
    }
    if (levels_[level].n == 0) {
      levels_[level] = std::move(s);
      break;
    }
    s = merge(levels_[level], s);
    levels_[level].n = 0;
  }
}

MomentAccumulator::Stats MomentAccumulator::merge(const Stats& a, const Stats& b) {
  Stats out;
  out.n = a.n + b.n;
  const Real na = static_cast<Real>(a.n), nb = static_cast<Real>(b.n);
  const Array delta = b.mean - a.mean;
  out.mean = a.mean + delta * (nb / (na + nb));
  out.m2 = a.m2 + b.m2 + delta.square() * (na * nb / (na + nb));
  return out;
}

Array MomentAccumulator::mean() const {
  Stats acc;
  for (const auto& level : levels_) {
    if (level.n == 0) continue;
    acc = acc.n == 0 ? level : merge(level, acc);
  }
  if (acc.n == 0) throw InvalidInputError("moment accumulator is empty");
  return acc.mean;
}

Array MomentAccumulator::variance() const {
  Stats acc;
  for (const auto& level : levels_) {
    if (level.n == 0) continue;
    acc = acc.n == 0 ? level : merge(level, acc);
  }
  if (acc.n < 2) throw InvalidInputError("variance needs at least 2 samples");
  return acc.m2 / static_cast<Real>(acc.n - 1);
}

EstimatorOutput mc_estimate(const SampleSet& samples, const FieldEvaluator& evaluator,
                            int n_jobs) {
  const Index k = samples.count();
  MomentAccumulator acc;
  ArrayXX block;
  for (Index lo = 0; lo < k; lo += kStreamBlock) {
    const Index hi = std::min(k, lo + kStreamBlock);
    const Index width = hi - lo;
    Array probe;
    if (lo == 0) {
      probe = evaluator(samples.ids[0], samples.sample(0));
      block.resize(probe.size(), kStreamBlock);
      block.col(0) = probe;
    }
    parallel_for(
        lo == 0 ? width - 1 : width,
        [&](Index i) {
          const Index col = (lo == 0 ? i + 1 : lo + i);
          Array v;
          try {
            v = evaluator(samples.ids[static_cast<std::size_t>(col)], samples.sample(col));
          } catch (const std::exception& e) {
            throw std::runtime_error("evaluator failed on sample id " +
                                     std::to_string(samples.ids[static_cast<std::size_t>(col)]) +
                                     ": " + e.what());
          }
          block.col(col - lo) = v;
        },
        n_jobs);
    acc.add_block(block.leftCols(width));
  }
  EstimatorOutput out;
  out.mean = acc.mean();
  out.variance = k >= 2 ? acc.variance() : Array::Zero(out.mean.size());
  return out;
}

EstimatorOutput mc_estimate(const FieldSamples& samples) {
  EstimatorOutput out;
  const Index k = samples.count();
  if (k < 1) throw InvalidInputError("mc_estimate: empty sample block");
  out.mean = col_mean(samples.values);
  if (k >= 2) {
    ArrayXX centered = samples.values.colwise() - out.mean;
    out.variance = pairwise_colsum(centered.square()) / static_cast<Real>(k - 1);
  } else {
    out.variance = Array::Zero(out.mean.size());
  }
  return out;
}

Array optimal_lambda(const FieldSamples& hf, const FieldSamples& lf) {
  require_common_ids(hf.ids, lf.ids);
  const Index k = hf.count();
  if (k < 2) throw InvalidInputError("optimal_lambda needs K >= 2 samples");

  const Array hf_mean = col_mean(hf.values);
  const Array lf_mean = col_mean(lf.values);
  ArrayXX hc = hf.values.colwise() - hf_mean;
  ArrayXX lc = lf.values.colwise() - lf_mean;
  const Array cov = pairwise_colsum(hc * lc) / static_cast<Real>(k - 1);
  const Array var = pairwise_colsum(lc.square()) / static_cast<Real>(k - 1);

  const Real floor = kVarFloorRel * var.maxCoeff();
  Array lambda(var.size());
  for (Index r = 0; r < var.size(); ++r)
    lambda[r] = var[r] <= floor ? 1.0 : cov[r] / var[r];
  return lambda;
}

EstimatorOutput mscv_estimate(const FieldSamples& hf, const FieldSamples& lf,
                              const Array& lf_mean_ref, const LambdaMode& mode) {
  require_common_ids(hf.ids, lf.ids);
  if (lf_mean_ref.size() != hf.values.rows())
    throw InvalidInputError("mscv_estimate: reference mean has the wrong size");
  const Index k = hf.count();

  Array lambda;
  switch (mode.kind) {
    case LambdaMode::Kind::Fixed:
      lambda = Array::Constant(hf.values.rows(), mode.fixed_value);
      break;
    case LambdaMode::Kind::OptimalK:
      lambda = optimal_lambda(hf, lf);
      break;
    case LambdaMode::Kind::OptimalKL: {
      lambda = optimal_lambda(hf, lf);
      if (mode.big_l > 0)
        lambda *= static_cast<Real>(mode.big_l) / static_cast<Real>(k + mode.big_l);
      break;
    }
  }

  EstimatorOutput out;
  out.lambda.resize(lambda.size(), 1);
  out.lambda.col(0) = lambda;

  ArrayXX combined = hf.values - (lf.values.colwise() - lf_mean_ref).colwise() * lambda;
  out.mean = col_mean(combined);
  if (k >= 2) {
    ArrayXX centered = combined.colwise() - out.mean;
    out.variance = pairwise_colsum(centered.square()) / static_cast<Real>(k - 1);

    const Array hf_mean = col_mean(hf.values);
    const Array lf_mean = col_mean(lf.values);
    ArrayXX hc = hf.values.colwise() - hf_mean;
    ArrayXX lc = lf.values.colwise() - lf_mean;
    const Array cov = pairwise_colsum(hc * lc) / static_cast<Real>(k - 1);
    const Array vh = pairwise_colsum(hc.square()) / static_cast<Real>(k - 1);
    const Array vl = pairwise_colsum(lc.square()) / static_cast<Real>(k - 1);
    out.correlation.resize(cov.size());
    for (Index r = 0; r < cov.size(); ++r) {
      const Real denom = std::sqrt(vh[r] * vl[r]);
      out.correlation[r] = denom > 0 ? std::clamp(cov[r] / denom, -1.0, 1.0) : 0.0;
    }
  } else {
    out.variance = Array::Zero(out.mean.size());
    out.correlation = Array::Zero(out.mean.size());
  }
  return out;
}

GramSchmidtBasis gram_schmidt_controls(const std::vector<ArrayXX>& centered_controls) {
  GramSchmidtBasis gs;
  const std::size_t n_ctl = centered_controls.size();
  if (n_ctl == 0) throw InvalidInputError("gram_schmidt_controls: no controls");
  const Index k = centered_controls[0].cols();
  if (k < 2) throw InvalidInputError("gram_schmidt_controls needs K >= 2 samples");

  gs.basis.reserve(n_ctl);
  gs.variances.reserve(n_ctl);
  gs.proj.resize(n_ctl);
  for (std::size_t i = 0; i < n_ctl; ++i) {
    ArrayXX g = centered_controls[i];
    gs.proj[i].resize(i);
    for (std::size_t j = 0; j < i; ++j) {
      // Sample covariance of g_j with control i, pointwise.
      const Array gj_mean = col_mean(gs.basis[j]);
      const Array fi_mean = col_mean(centered_controls[i]);
      ArrayXX gj_c = gs.basis[j].colwise() - gj_mean;
      ArrayXX fi_c = centered_controls[i].colwise() - fi_mean;
      const Array cov = pairwise_colsum(gj_c * fi_c) / static_cast<Real>(k - 1);
      const Real floor = kVarFloorRel * std::max(gs.variances[j].maxCoeff(), Real(0));
      Array coef(cov.size());
      for (Index r = 0; r < cov.size(); ++r)
        coef[r] = gs.variances[j][r] > floor ? cov[r] / gs.variances[j][r] : 0.0;
      g -= gs.basis[j].colwise() * coef;
      gs.proj[i][j] = std::move(coef);
    }
    const Array g_mean = col_mean(g);
    ArrayXX gc = g.colwise() - g_mean;
    gs.variances.push_back(pairwise_colsum(gc.square()) / static_cast<Real>(k - 1));
    gs.basis.push_back(std::move(g));
  }
  return gs;
}

namespace {

EstimatorOutput finalize_multi(const FieldSamples& hf, const std::vector<ArrayXX>& ref_centered,
                               ArrayXX lambda) {
  const Index k = hf.count();
  const Index n = hf.values.rows();
  ArrayXX combined = hf.values;
  for (std::size_t i = 0; i < ref_centered.size(); ++i)
    combined -= ref_centered[i].colwise() * Array(lambda.col(static_cast<Index>(i)));

  EstimatorOutput out;
  out.lambda = std::move(lambda);
  out.mean = col_mean(combined);
  ArrayXX centered = combined.colwise() - out.mean;
  out.variance = pairwise_colsum(centered.square()) / static_cast<Real>(k - 1);

  const Array hf_mean = col_mean(hf.values);
  ArrayXX hc = hf.values.colwise() - hf_mean;
  const Array vh = pairwise_colsum(hc.square()) / static_cast<Real>(k - 1);
  out.correlation.resize(n);
  for (Index r = 0; r < n; ++r) {
    const Real r2 = vh[r] > 0 ? std::clamp(1.0 - out.variance[r] / vh[r], 0.0, 1.0) : 0.0;
    out.correlation[r] = std::sqrt(r2);
  }
  return out;
}

}  // namespace

EstimatorOutput mmscv_estimate(const FieldSamples& hf, const std::vector<FieldSamples>& lfs,
                               const std::vector<Array>& lf_mean_refs, MmscvMode mode) {
  const std::size_t n_ctl = lfs.size();
  if (n_ctl == 0) throw InvalidInputError("mmscv_estimate: no control variates");
  if (lf_mean_refs.size() != n_ctl)
    throw InvalidInputError("mmscv_estimate: one reference mean per control required");
  for (const auto& lf : lfs) require_common_ids(hf.ids, lf.ids);

  const Index k = hf.count();
  if (k < 2) throw InvalidInputError("mmscv_estimate needs K >= 2 samples");
  const Index n = hf.values.rows();

  // Reference-centered control samples (the estimator's F_i - E[F_i]).
  std::vector<ArrayXX> ref_centered(n_ctl);
  for (std::size_t i = 0; i < n_ctl; ++i) {
    if (lf_mean_refs[i].size() != n)
      throw InvalidInputError("mmscv_estimate: reference mean has the wrong size");
    ref_centered[i] = lfs[i].values.colwise() - lf_mean_refs[i];
  }

  if (n_ctl == 1) {
    // Single control: defer to the scalar rule (including its variance floor).
    EstimatorOutput out = mscv_estimate(hf, lfs[0], lf_mean_refs[0], LambdaMode::optimal_k());
    return out;
  }

  EstimatorOutput out;
  ArrayXX lambda(n, static_cast<Index>(n_ctl));
  Index fallback = 0;

  if (mode == MmscvMode::Direct) {
    // Pointwise sample covariances.
    const Array hf_mean = col_mean(hf.values);
    ArrayXX hc = hf.values.colwise() - hf_mean;
    std::vector<ArrayXX> lc(n_ctl);
    for (std::size_t i = 0; i < n_ctl; ++i) {
      const Array m = col_mean(lfs[i].values);
      lc[i] = lfs[i].values.colwise() - m;
    }
    std::vector<std::vector<Array>> cc(n_ctl, std::vector<Array>(n_ctl));
    std::vector<Array> b(n_ctl);
    for (std::size_t i = 0; i < n_ctl; ++i) {
      b[i] = pairwise_colsum(hc * lc[i]) / static_cast<Real>(k - 1);
      for (std::size_t j = 0; j <= i; ++j)
        cc[i][j] = pairwise_colsum(lc[i] * lc[j]) / static_cast<Real>(k - 1);
    }

    const Index m = static_cast<Index>(n_ctl);
    Matrix c_point(m, m);
    Vector b_point(m);
    Eigen::SelfAdjointEigenSolver<Matrix> eig;
    for (Index r = 0; r < n; ++r) {
      for (Index i = 0; i < m; ++i) {
        b_point[i] = b[static_cast<std::size_t>(i)][r];
        for (Index j = 0; j <= i; ++j) {
          c_point(i, j) = cc[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)][r];
          c_point(j, i) = c_point(i, j);
        }
      }
      const Real trace = c_point.trace();
      if (!(trace > 0)) {
        lambda.row(r).setZero();
        lambda(r, 0) = 1.0;  // deterministic-equal controls; scalar floor rule
        ++fallback;
        continue;
      }
      eig.compute(c_point);
      const Real emin = eig.eigenvalues().minCoeff();
      const Real emax = eig.eigenvalues().maxCoeff();
      if (!(emin > 0) || emax / emin > kCondLimit)
        c_point += kRidge * (trace / static_cast<Real>(m)) * Matrix::Identity(m, m);
      const Vector sol = c_point.ldlt().solve(b_point);
      lambda.row(r) = sol.transpose().array();
    }
  } else {
    GramSchmidtBasis gs = gram_schmidt_controls(ref_centered);
    // gamma_k = Cov(hf, g_k) / Var(g_k) with the scalar floor on the leading
    // control and zero on degenerate later directions.
    const Array hf_mean = col_mean(hf.values);
    ArrayXX hc = hf.values.colwise() - hf_mean;
    std::vector<Array> gamma(n_ctl);
    for (std::size_t i = 0; i < n_ctl; ++i) {
      const Array g_mean = col_mean(gs.basis[i]);
      ArrayXX gc = gs.basis[i].colwise() - g_mean;
      const Array cov = pairwise_colsum(hc * gc) / static_cast<Real>(k - 1);
      const Real floor = kVarFloorRel * std::max(gs.variances[i].maxCoeff(), Real(0));
      gamma[i].resize(n);
      for (Index r = 0; r < n; ++r) {
        if (gs.variances[i][r] > floor)
          gamma[i][r] = cov[r] / gs.variances[i][r];
        else
          gamma[i][r] = i == 0 ? 1.0 : 0.0;
      }
    }
    // Express the fit in the original controls: lambda_i = gamma_i - sum
    // over later basis vectors of their projection coefficients.
    for (Index r = 0; r < n; ++r) {
      for (Index i = static_cast<Index>(n_ctl) - 1; i >= 0; --i) {
        Real v = gamma[static_cast<std::size_t>(i)][r];
        for (std::size_t j = static_cast<std::size_t>(i) + 1; j < n_ctl; ++j)
          v -= gs.proj[j][static_cast<std::size_t>(i)][r] * lambda(r, static_cast<Index>(j));
        lambda(r, i) = v;
      }
    }
  }

  out = finalize_multi(hf, ref_centered, std::move(lambda));
  out.fallback_points = fallback;
  return out;
}

namespace {

/// Gauss-Lobatto nodes/weights on [-1, 1], weights summing to 2.
void gauss_lobatto_1d(Index n, Array& nodes, Array& weights) {
  if (n < 2) throw InvalidInputError("gauss_lobatto needs at least 2 nodes");
  nodes.resize(n);
  weights.resize(n);
  const Index order = n - 1;
  auto legendre = [&](Real x, Real& p, Real& dp) {
    Real pm1 = 1.0, pm0 = x;
    if (order == 0) {
      p = 1.0;
      dp = 0.0;
      return;
    }
    for (Index j = 2; j <= order; ++j) {
      const Real pj = ((2.0 * j - 1.0) * x * pm0 - (j - 1.0) * pm1) / static_cast<Real>(j);
      pm1 = pm0;
      pm0 = pj;
    }
    p = pm0;
    dp = static_cast<Real>(order) * (x * pm0 - pm1) / (x * x - 1.0);
  };

  nodes[0] = -1.0;
  nodes[n - 1] = 1.0;
  for (Index i = 1; i < n - 1; ++i) {
    // interior nodes: roots of P'_{n-1}
    Real x = -std::cos(std::numbers::pi * static_cast<Real>(i) / static_cast<Real>(order));
    for (int it = 0; it < 100; ++it) {
      Real p, dp;
      legendre(x, p, dp);
      const Real d2p = (2.0 * x * dp - static_cast<Real>(order) * (order + 1.0) * p) / (1.0 - x * x);
      const Real step = dp / d2p;
      x -= step;
      if (std::abs(step) < 1e-15) break;
    }
    nodes[i] = x;
  }
  for (Index i = 0; i < n; ++i) {
    Real p, dp;
    legendre(nodes[i], p, dp);
    weights[i] = 2.0 / (static_cast<Real>(order) * (order + 1.0) * p * p);
  }
}

}  // namespace

GaussLobattoRule gauss_lobatto_rule(const RandomInputSpec& spec, Index n_cells, Index n_nodes) {
  if (spec.dim > 2) throw InvalidInputError("gauss_lobatto_rule supports d_z <= 2");
  if (n_cells < 1) throw InvalidInputError("gauss_lobatto_rule needs n_cells >= 1");
  Array ref_nodes, ref_weights;
  gauss_lobatto_1d(n_nodes, ref_nodes, ref_weights);

  // Per-dimension composite nodes with probability weights.
  std::vector<Array> dim_nodes(static_cast<std::size_t>(spec.dim));
  std::vector<Array> dim_weights(static_cast<std::size_t>(spec.dim));
  for (Index d = 0; d < spec.dim; ++d) {
    const Real lo = spec.box(d, 0), hi = spec.box(d, 1);
    const Real h = (hi - lo) / static_cast<Real>(n_cells);
    Array nodes(n_cells * n_nodes), weights(n_cells * n_nodes);
    for (Index c = 0; c < n_cells; ++c)
      for (Index j = 0; j < n_nodes; ++j) {
        nodes[c * n_nodes + j] = lo + h * (static_cast<Real>(c) + 0.5 * (ref_nodes[j] + 1.0));
        weights[c * n_nodes + j] = ref_weights[j] / 2.0 / static_cast<Real>(n_cells);
      }
    dim_nodes[static_cast<std::size_t>(d)] = std::move(nodes);
    dim_weights[static_cast<std::size_t>(d)] = std::move(weights);
  }

  GaussLobattoRule rule;
  if (spec.dim == 1) {
    rule.nodes.resize(1, dim_nodes[0].size());
    rule.nodes.row(0) = dim_nodes[0].transpose();
    rule.weights = dim_weights[0];
  } else {
    const Index m0 = dim_nodes[0].size(), m1 = dim_nodes[1].size();
    rule.nodes.resize(2, m0 * m1);
    rule.weights.resize(m0 * m1);
    for (Index b = 0; b < m1; ++b)
      for (Index a = 0; a < m0; ++a) {
        const Index i = a + m0 * b;
        rule.nodes(0, i) = dim_nodes[0][a];
        rule.nodes(1, i) = dim_nodes[1][b];
        rule.weights[i] = dim_weights[0][a] * dim_weights[1][b];
      }
  }
  return rule;
}

Array gauss_lobatto_reference(const RandomInputSpec& spec, const FieldEvaluator& evaluator,
                              Index n_cells, Index n_nodes, int n_jobs) {
  const GaussLobattoRule rule = gauss_lobatto_rule(spec, n_cells, n_nodes);
  const Index m = rule.nodes.cols();
  Array first = evaluator(-1, rule.nodes.col(0));
  ArrayXX fields(first.size(), m);
  fields.col(0) = first * rule.weights[0];
  parallel_for(
      m - 1,
      [&](Index i) {
        const Index col = i + 1;
        fields.col(col) = evaluator(-1, rule.nodes.col(col)) * rule.weights[col];
      },
      n_jobs);
  return pairwise_colsum(fields);
}

Real l1_expectation_error(const Array& estimate, const Array& reference, Real cell_measure) {
  if (estimate.size() != reference.size())
    throw InvalidInputError("l1_expectation_error: grid mismatch");
  return (estimate - reference).abs().sum() * cell_measure;
}

Real l1_expectation_error(const Array& estimate, const Array& reference, const Array& weights) {
  if (estimate.size() != reference.size() || estimate.size() != weights.size())
    throw InvalidInputError("l1_expectation_error: grid mismatch");
  return ((estimate - reference).abs() * weights).sum();
}

Real fit_loglog_slope(const Array& x, const Array& err) {
  if (x.size() != err.size() || x.size() < 2)
    throw InvalidInputError("fit_loglog_slope needs matching arrays of size >= 2");
  const Array lx = x.log();
  const Array le = err.max(1e-300).log();
  const Real mx = lx.mean(), me = le.mean();
  return ((lx - mx) * (le - me)).sum() / (lx - mx).square().sum();
}

}  // namespace kinuq
