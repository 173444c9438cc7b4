#pragma once

#include <optional>
#include <utility>

#include "kinuq/collision.hpp"
#include "kinuq/grid.hpp"
#include "kinuq/net.hpp"
#include "kinuq/solvers.hpp"

namespace kinuq {

// ---------------------------------------------------------------------------
// Space homogeneous surrogate: f = M exp(g), network input (g0, t).
//
// The relaxation ODE acts pointwise in velocity, so the solution at a node
// depends on v only through the initial log-correction g0(v). Training the
// map (g0, t) -> g on one initial instance therefore generalizes across the
// random inputs, which only reshuffle the g0 values.
// ---------------------------------------------------------------------------

struct HomSapnnConfig {
  Real w_m = 1, w_r = 1, w_b = 10, w_d = 10;  // loss weights
  Index n_r = 1024;                           // residual collocation points
  Index n_b = 512;                            // initial-condition points
  Index n_d = 512;                            // measured-data points
  Index n_m = 3;                              // moment time slices
  RelaxationRate rate;
  Real t_final = 2.0;
  Real data_horizon_frac = 0.4;  // data confined to [0, frac * T]
  Real g_clip = -6.0;            // floor on the g0 network input
  std::vector<Index> hidden = {64, 64, 64, 64};
  net::AdamSchedule schedule;
  std::uint64_t seed = 1234;
};

struct HomTrainingData {
  Distribution f0;
  HomTrajectory data;  // optional supervision; empty = no data loss
};

/// Trained homogeneous surrogate with its frozen reconstruction rule.
/// Predictions f = M exp(g) are strictly positive for any parameters.
struct HomSurrogate {
  net::Mlp net;
  VelocityGridPtr grid;
  RelaxationRate rate;
  Real t_final = 2.0;
  Real g_clip = -6.0;
  Real g_offset = 0.0, g_scale = 1.0;  // input normalization
  Real data_horizon_frac = 0.4;

  /// Clipped log(f0 / M[f0]) over the grid nodes.
  Array initial_log_correction(const Distribution& f0) const;
  /// Normalized (g0, t) network inputs for a batch of points.
  Matrix encode(const Array& g0, const Array& t) const;
  /// Chain factors d(input)/d(t) and the prediction rule.
  Real t_input_rate() const { return 2.0 / t_final; }
  Array predict_g(const Array& g0, const Array& t) const;
  Distribution evaluate(const Distribution& f0, Real t) const;
};

/// Four-term loss over fixed point sets; one implementation serves training
/// (seeded resampling per step), the value-only test hooks, and the
/// finite-difference gradient checks.
class HomLossAssembler {
 public:
  HomLossAssembler(const HomSapnnConfig& config, const HomTrainingData& data,
                   const HomSurrogate& geometry);

  /// Draw the per-step collocation sets (uniform in the domain, seeded).
  void resample(Index step);

  /// Evaluates all four terms on the context's network, seeds the adjoints,
  /// logs the terms, and returns the weighted total.
  Real assemble(net::GradientContext& ctx) const;

  /// Value-only total at the given parameters (same point sets).
  Real value(const net::Mlp& params) const;

 private:
  const HomSapnnConfig& config_;
  const HomSurrogate& geom_;
  // frozen training-instance quantities
  Array g0_nodes_;     // clipped log correction per node
  Array m_values_;     // Maxwellian per node
  Array f0_values_;    // true initial values per node
  MacroState targets_;
  Real g0_max_ = 0;
  // eligible measured data (within the data horizon)
  std::vector<Index> data_times_;
  const HomTrajectory* data_;
  Array moment_slices_;
  // per-step point sets
  Array r_g0_, r_t_;
  std::vector<Index> b_nodes_;
  std::vector<std::pair<Index, Index>> d_points_;  // (snapshot index, node)
};

struct HomTrainResult {
  HomSurrogate surrogate;
  std::vector<net::LossRecord> history;
};

HomTrainResult train_hom(const HomSapnnConfig& config, const HomTrainingData& data);

/// Residual mean |eps dg/dt - mu (exp(-g) - 1)|^2 from raw values; the test
/// hook for substituting an analytic g.
Real hom_residual_from_values(const Array& g, const Array& dg_dt, const RelaxationRate& rate);

/// Value-only loss pieces on explicit point sets (used by tests).
Real hom_residual_loss(const HomSurrogate& s, const Array& g0_points, const Array& t_points);
Real hom_moment_loss(const HomSurrogate& s, const Distribution& f0, const Array& t_slices,
                     const MacroState& targets);
std::pair<Real, Real> hom_boundary_and_data_loss(const HomSurrogate& s, const Distribution& f0,
                                                 const HomTrajectory& data,
                                                 Index n_b, Index n_d, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Space non homogeneous surrogate: f = exp(g) on a fixed velocity grid,
// g-net (x, t, z) -> R^{N_l}, macro net (x, t, z) -> (rho~, u~, T~) with
// softplus positivity maps on density and temperature.
// ---------------------------------------------------------------------------

struct NonhomSapnnConfig {
  Real w_m = 1, w_r1 = 1, w_r2 = 1, w_b = 10, w_d = 10;
  Index n_m = 256, n_r1 = 128, n_r2 = 256, n_b = 128, n_d = 512;
  RelaxationRate rate;
  Real t_final = 0.0875;
  Real data_horizon_frac = 0.6;  // data confined to [0, frac * T]
  std::vector<Index> g_hidden = {96, 96, 96, 96, 96, 96};
  std::vector<Index> u_hidden = {64, 64, 64, 64};
  Real exp_cap = 30.0;  // cap on exp(-g) arguments in the residual
  net::AdamSchedule schedule;
  std::uint64_t seed = 4321;
};

/// Deterministic training trajectories on sampled z (kinetic snapshots and
/// their conservative moments).
struct NonhomTrainingData {
  VelocityGridPtr vgrid;
  SpatialGrid xgrid;
  Matrix z;  // (d_z, n_samples)
  Matrix z_box;
  Array snapshot_times;
  std::vector<std::vector<ArrayXX>> f_snapshots;  // [sample][time] (n_cells, n_v)
  std::vector<std::vector<ArrayXX>> u_snapshots;  // [sample][time] (n_cells, 3)
};

/// Runs solve_bgk_1d on each z sample and stores snapshots.
NonhomTrainingData make_nonhom_training_data(
    const std::function<KineticField(const Vector& z)>& initial, const Matrix& z,
    const Matrix& z_box, const RelaxationRate& rate, Real t_final, Index n_snapshots, Real cfl);

struct NonhomSurrogate {
  net::Mlp g_net;
  net::Mlp u_net;
  VelocityGridPtr vgrid;
  SpatialGrid xgrid;
  RelaxationRate rate;
  Real t_final = 0;
  Matrix z_box;  // (d_z, 2) input normalization
  Real exp_cap = 30.0;

  Index d_z() const { return z_box.rows(); }
  Matrix encode(const Array& x, const Array& t, const Matrix& z) const;
  /// f field (strictly positive) and macro profile at (z, t).
  KineticField evaluate_field(const Vector& z, Real t) const;
  MacroProfile evaluate_macro(const Vector& z, Real t) const;
};

struct NonhomLossTerms {
  Real m = 0, r1 = 0, r2 = 0, b = 0, d = 0;
  Real total(const NonhomSapnnConfig& c) const {
    return c.w_m * m + c.w_r1 * r1 + c.w_r2 * r2 + c.w_b * b + c.w_d * d;
  }
};

class NonhomLossAssembler {
 public:
  NonhomLossAssembler(const NonhomSapnnConfig& config, const NonhomTrainingData& data,
                      const NonhomSurrogate& geometry);

  void resample(Index step);

  /// Seeds both networks' contexts; returns the weighted total.
  Real assemble(net::GradientContext& g_ctx, net::GradientContext& u_ctx,
                NonhomLossTerms* terms = nullptr) const;

  Real value(const net::Mlp& g_params, const net::Mlp& u_params,
             NonhomLossTerms* terms = nullptr) const;

 private:
  const NonhomSapnnConfig& config_;
  const NonhomTrainingData& data_;
  const NonhomSurrogate& geom_;
  std::vector<Index> data_eligible_;  // snapshot indices within the horizon
  // point sets: interior points are (x, t, z) draws, data/boundary points
  // reference stored snapshots
  Array m_x_, m_t_;
  Matrix m_z_;
  Array r1_x_, r1_t_;
  Matrix r1_z_;
  Array r2_x_, r2_t_;
  Matrix r2_z_;
  struct DataPoint {
    Index sample, snapshot, cell;
  };
  std::vector<DataPoint> b_points_, d_points_;
};

struct NonhomTrainResult {
  NonhomSurrogate surrogate;
  std::vector<net::LossRecord> history;
};

NonhomTrainResult train_nonhom(const NonhomSapnnConfig& config, const NonhomTrainingData& data);

// Stable softplus and logistic helpers shared by the macro positivity maps.
Real softplus(Real x);
Real logistic(Real x);

/// Checkpoint round-trip for surrogates (network checkpoint plus a JSON
/// metadata block describing grid, transform rule, rate, and domain).
void save_hom_surrogate(const std::string& path, const HomSurrogate& s);
HomSurrogate load_hom_surrogate(const std::string& path);
void save_nonhom_surrogate(const std::string& path_prefix, const NonhomSurrogate& s);
NonhomSurrogate load_nonhom_surrogate(const std::string& path_prefix);

}  // namespace kinuq
