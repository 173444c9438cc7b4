#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "kinuq/types.hpp"

namespace kinuq {

/// Uniform random input z on a box, the only supported distribution.
struct RandomInputSpec {
  Index dim = 1;
  Matrix box;  // (dim, 2): lo, hi per component

  static RandomInputSpec uniform_box(const Matrix& box);
};

/// Seeded realizations of z with stable sample IDs. Regeneration from the
/// master seed is bit-exact, and sample i depends only on (seed, i), so the
/// same IDs always carry the same z across fidelities (common random
/// numbers).
struct SampleSet {
  Matrix z;  // (dim, count)
  std::uint64_t master_seed = 0;
  std::vector<std::int64_t> ids;

  Index count() const { return z.cols(); }
  Vector sample(Index i) const { return z.col(i); }
};

SampleSet draw_samples(const RandomInputSpec& spec, Index count, std::uint64_t seed);

/// Evaluates one random realization into a flat field (any layout, caller
/// keeps it consistent across fidelities).
using FieldEvaluator = std::function<Array(std::int64_t id, const Vector& z)>;

/// K stacked evaluations sharing sample IDs (one column per sample).
struct FieldSamples {
  std::vector<std::int64_t> ids;
  ArrayXX values;  // (n_points, K)

  Index count() const { return values.cols(); }
};

FieldSamples evaluate_samples(const SampleSet& samples, const FieldEvaluator& evaluator,
                              int n_jobs = 0);

struct EstimatorOutput {
  Array mean;
  Array variance;       // unbiased pointwise sample variance of the combined variable
  ArrayXX lambda;       // (n_points, I) control coefficients; empty for MC
  Array correlation;    // pointwise correlation diagnostic in [-1, 1]
  Index fallback_points = 0;  // points where a singular covariance forced a fallback
};

/// Plain Monte Carlo mean/variance. The streaming variant evaluates in
/// blocks and merges block statistics over a fixed binary tree, so results
/// do not depend on the worker count.
EstimatorOutput mc_estimate(const SampleSet& samples, const FieldEvaluator& evaluator,
                            int n_jobs = 0);
EstimatorOutput mc_estimate(const FieldSamples& samples);

/// Pointwise optimal control coefficient Cov_K(hf, lf) / Var_K(lf); where
/// Var_K falls below 1e-14 of its maximum both fidelities are treated as
/// deterministic-equal and the coefficient is 1.
Array optimal_lambda(const FieldSamples& hf, const FieldSamples& lf);

struct LambdaMode {
  enum class Kind { Fixed, OptimalK, OptimalKL } kind = Kind::OptimalK;
  Real fixed_value = 0;
  Index big_l = 0;  // L for the K-L corrected optimum; 0 means L -> infinity

  static LambdaMode fixed(Real value) { return {Kind::Fixed, value, 0}; }
  static LambdaMode optimal_k() { return {Kind::OptimalK, 0, 0}; }
  static LambdaMode optimal_kl(Index big_l) { return {Kind::OptimalKL, 0, big_l}; }
};

/// Control-variate estimator mean_K(hf) - lambda (mean_K(lf) - lf_mean_ref).
/// hf and lf must carry identical sample IDs (common random numbers).
/// lf_mean_ref is either a large-L sample mean or a quadrature reference.
EstimatorOutput mscv_estimate(const FieldSamples& hf, const FieldSamples& lf,
                              const Array& lf_mean_ref, const LambdaMode& mode);

enum class MmscvMode { Direct, Orthogonal };

/// Gram-Schmidt orthogonalized control samples with their variances and the
/// triangular projection coefficients, all pointwise.
struct GramSchmidtBasis {
  std::vector<ArrayXX> basis;       // orthogonalized centered samples
  std::vector<Array> variances;     // diagonal d_j per point
  std::vector<std::vector<Array>> proj;  // proj[i][j]: coefficient of basis j in control i
};

GramSchmidtBasis gram_schmidt_controls(const std::vector<ArrayXX>& centered_controls);

/// Multiple control variates: direct mode solves C lambda = b per point with
/// ridge regularization when conditioning exceeds 1e12; exactly singular
/// points fall back to the orthogonal (Gram-Schmidt) coefficients.
EstimatorOutput mmscv_estimate(const FieldSamples& hf, const std::vector<FieldSamples>& lfs,
                               const std::vector<Array>& lf_mean_refs, MmscvMode mode);

/// Composite Gauss-Lobatto rule over the spec box: n_cells equal cells per
/// dimension, n_nodes Gauss-Lobatto points per cell, tensorized up to dim 2.
/// Weights are normalized against the uniform density (they sum to 1).
struct GaussLobattoRule {
  Matrix nodes;   // (dim, n_points)
  Array weights;  // sums to 1
};

GaussLobattoRule gauss_lobatto_rule(const RandomInputSpec& spec, Index n_cells, Index n_nodes);

Array gauss_lobatto_reference(const RandomInputSpec& spec, const FieldEvaluator& evaluator,
                              Index n_cells, Index n_nodes, int n_jobs = 0);

/// L1 error between expectation fields sharing a grid: sum |a - b| * measure.
Real l1_expectation_error(const Array& estimate, const Array& reference, Real cell_measure);
Real l1_expectation_error(const Array& estimate, const Array& reference, const Array& weights);

/// Streaming mean/variance accumulator (Chan merging over a fixed block
/// tree); deterministic for a fixed block size regardless of threading.
class MomentAccumulator {
 public:
  void add_block(const ArrayXX& block);
  Index count() const { return count_; }
  Array mean() const;
  Array variance() const;  // unbiased

 private:
  struct Stats {
    Index n = 0;
    Array mean, m2;
  };
  static Stats merge(const Stats& a, const Stats& b);
  std::vector<Stats> levels_;  // levels_[k] holds a pending subtree of 2^k blocks
  Index count_ = 0;
};

/// Least-squares slope of log(err) against log(x); used by rate checks.
Real fit_loglog_slope(const Array& x, const Array& err);

}  // namespace kinuq
