#include "kinuq/sapnn.hpp"

#include <cmath>
#include <json.hpp>

#include "kinuq/util.hpp"

namespace kinuq {

using nlohmann::json;

Real softplus(Real x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
Real logistic(Real x) { return x > 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// ---------------------------------------------------------------------------
// Homogeneous surrogate
// ---------------------------------------------------------------------------

Array HomSurrogate::initial_log_correction(const Distribution& f0) const {
  const Distribution m = maxwellian(moments(f0), f0.grid);
  Array g0(f0.values.size());
  for (Index i = 0; i < g0.size(); ++i) {
    const Real num = std::max(f0.values[i], 1e-300);
    const Real den = std::max(m.values[i], 1e-300);
    g0[i] = std::max(std::log(num) - std::log(den), g_clip);
  }
  return g0;
}

Matrix HomSurrogate::encode(const Array& g0, const Array& t) const {
  if (g0.size() != t.size()) throw InvalidInputError("encode: point arrays disagree");
  Matrix x(2, g0.size());
  x.row(0) = ((g0 - g_offset) / g_scale).matrix().transpose();
  x.row(1) = (2.0 * t / t_final - 1.0).matrix().transpose();
  return x;
}

Array HomSurrogate::predict_g(const Array& g0, const Array& t) const {
  return net::forward(net, encode(g0, t)).row(0).transpose().array();
}

Distribution HomSurrogate::evaluate(const Distribution& f0, Real t) const {
  const Distribution m = maxwellian(moments(f0), f0.grid);
  const Array g0 = initial_log_correction(f0);
  const Array g = predict_g(g0, Array::Constant(g0.size(), t));
  return {f0.grid, m.values * g.exp()};
}

Real hom_residual_from_values(const Array& g, const Array& dg_dt, const RelaxationRate& rate) {
  if (g.size() != dg_dt.size()) throw InvalidInputError("residual: value arrays disagree");
  Real acc = 0;
  for (Index i = 0; i < g.size(); ++i) {
    const Real r = rate.eps * dg_dt[i] - rate.mu * std::expm1(-g[i]);
    if (!std::isfinite(r))
      throw InvalidInputError("non-finite residual at collocation point " + std::to_string(i));
    acc += r * r;
  }
  return acc / static_cast<Real>(g.size());
}

namespace {

struct MomentSums {
  Real mass = 0, momx = 0, momy = 0, energy = 0;
};

MomentSums discrete_moments(const Array& f_values, const VelocityGrid& g) {
  MomentSums s;
  const Real dA = g.cell_area;
  s.mass = f_values.sum() * dA;
  s.momx = (g.vx * f_values).sum() * dA;
  s.momy = (g.vy * f_values).sum() * dA;
  s.energy = 0.5 * (g.speed2 * f_values).sum() * dA;
  return s;
}

}  // namespace

HomLossAssembler::HomLossAssembler(const HomSapnnConfig& config, const HomTrainingData& data,
                                   const HomSurrogate& geometry)
    : config_(config), geom_(geometry), data_(&data.data) {
  const Distribution m = maxwellian(moments(data.f0), data.f0.grid);
  m_values_ = m.values;
  f0_values_ = data.f0.values;
  g0_nodes_ = geom_.initial_log_correction(data.f0);
  g0_max_ = g0_nodes_.maxCoeff();
  targets_ = moments(data.f0);

  const Real horizon = config.data_horizon_frac * config.t_final;
  for (Index k = 0; k < data.data.times.size(); ++k)
    if (data.data.times[k] <= horizon + 1e-12) data_times_.push_back(k);

  moment_slices_.resize(config.n_m);
  for (Index j = 0; j < config.n_m; ++j)
    moment_slices_[j] = (static_cast<Real>(j) + 0.5) * config.t_final / static_cast<Real>(config.n_m);
}

void HomLossAssembler::resample(Index step) {
  CounterRng rng(hash_mix(config_.seed, static_cast<std::uint64_t>(step)));

  r_g0_.resize(config_.n_r);
  r_t_.resize(config_.n_r);
  for (Index i = 0; i < config_.n_r; ++i) {
    r_g0_[i] = rng.next01() < 0.5 ? g0_nodes_[rng.uniform_index(g0_nodes_.size())]
                                  : rng.uniform(config_.g_clip, g0_max_);
    r_t_[i] = rng.uniform(0.0, config_.t_final);
  }

  b_nodes_.resize(static_cast<std::size_t>(config_.n_b));
  for (auto& n : b_nodes_) n = rng.uniform_index(g0_nodes_.size());

  d_points_.clear();
  if (!data_times_.empty()) {
    d_points_.reserve(static_cast<std::size_t>(config_.n_d));
    for (Index i = 0; i < config_.n_d; ++i) {
      const Index snap = data_times_[static_cast<std::size_t>(
          rng.uniform_index(static_cast<Index>(data_times_.size())))];
      d_points_.emplace_back(snap, rng.uniform_index(g0_nodes_.size()));
    }
  }
}

Real HomLossAssembler::assemble(net::GradientContext& ctx) const {
  const RelaxationRate& rate = config_.rate;
  const VelocityGrid& grid = *geom_.grid;
  const Real dA = grid.cell_area;

  // Residual term: eps dg/dt - mu (exp(-g) - 1) at scattered (g0, t).
  net::Batch& br = ctx.eval(geom_.encode(r_g0_, r_t_), {1});
  const Array g_r = br.y().row(0).transpose().array();
  const Array dgdt = br.dy(0).row(0).transpose().array() * geom_.t_input_rate();
  Real loss_r = 0;
  {
    const Real scale = 2.0 / static_cast<Real>(g_r.size());
    for (Index i = 0; i < g_r.size(); ++i) {
      const Real em = std::expm1(-g_r[i]);
      const Real r = rate.eps * dgdt[i] - rate.mu * em;
      if (!std::isfinite(r))
        throw InvalidInputError("non-finite residual at collocation point " + std::to_string(i));
      loss_r += r * r;
      br.seed_y()(0, i) = scale * r * rate.mu * (em + 1.0);  // d/dg of -mu(e^-g - 1)
      br.seed_dy(0)(0, i) = scale * r * rate.eps * geom_.t_input_rate();
    }
    loss_r /= static_cast<Real>(g_r.size());
  }

  // Initial-condition term at t = 0 against the true f0 (unclipped).
  Real loss_b = 0;
  {
    Array g0(static_cast<Index>(b_nodes_.size())), t0 = Array::Zero(static_cast<Index>(b_nodes_.size()));
    for (std::size_t i = 0; i < b_nodes_.size(); ++i) g0[static_cast<Index>(i)] = g0_nodes_[b_nodes_[i]];
    net::Batch& bb = ctx.eval(geom_.encode(g0, t0));
    const Real scale = 2.0 / static_cast<Real>(b_nodes_.size());
    for (std::size_t i = 0; i < b_nodes_.size(); ++i) {
      const Index col = static_cast<Index>(i);
      const Real f_pred = m_values_[b_nodes_[i]] * std::exp(bb.y()(0, col));
      const Real diff = f_pred - f0_values_[b_nodes_[i]];
      loss_b += diff * diff;
      bb.seed_y()(0, col) = scale * diff * f_pred;
    }
    loss_b /= static_cast<Real>(b_nodes_.size());
  }

  // Measured-data term (empty set contributes zero by convention).
  Real loss_d = 0;
  if (!d_points_.empty()) {
    Array g0(static_cast<Index>(d_points_.size())), td(static_cast<Index>(d_points_.size()));
    for (std::size_t i = 0; i < d_points_.size(); ++i) {
      g0[static_cast<Index>(i)] = g0_nodes_[d_points_[i].second];
      td[static_cast<Index>(i)] = data_->times[d_points_[i].first];
    }
    net::Batch& bd = ctx.eval(geom_.encode(g0, td));
    const Real scale = 2.0 / static_cast<Real>(d_points_.size());
    for (std::size_t i = 0; i < d_points_.size(); ++i) {
      const Index col = static_cast<Index>(i);
      const auto& [snap, node] = d_points_[i];
      const Real f_pred = m_values_[node] * std::exp(bd.y()(0, col));
      const Real diff = f_pred - data_->states[static_cast<std::size_t>(snap)].values[node];
      loss_d += diff * diff;
      bd.seed_y()(0, col) = scale * diff * f_pred;
    }
    loss_d /= static_cast<Real>(d_points_.size());
  }

  // Conservation term: discrete (mass, momentum, energy) against the
  // initial targets at each time slice, summed over slices.
  Real loss_m = 0;
  {
    const Index n_nodes = g0_nodes_.size();
    Array g0_all(config_.n_m * n_nodes), t_all(config_.n_m * n_nodes);
    for (Index j = 0; j < config_.n_m; ++j) {
      g0_all.segment(j * n_nodes, n_nodes) = g0_nodes_;
      t_all.segment(j * n_nodes, n_nodes).setConstant(moment_slices_[j]);
    }
    net::Batch& bm = ctx.eval(geom_.encode(g0_all, t_all));
    const Real rho0 = targets_.rho;
    const Real px0 = targets_.rho * targets_.u.x();
    const Real py0 = targets_.rho * targets_.u.y();
    const Real e0 = targets_.energy();
    for (Index j = 0; j < config_.n_m; ++j) {
      const Array g = bm.y().row(0).segment(j * n_nodes, n_nodes).transpose().array();
      const Array f = m_values_ * g.exp();
      const MomentSums s = discrete_moments(f, grid);
      const Real dm = s.mass - rho0, dpx = s.momx - px0, dpy = s.momy - py0, de = s.energy - e0;
      loss_m += dm * dm + dpx * dpx + dpy * dpy + de * de;
      const Array df = 2.0 * dA * (dm + dpx * grid.vx + dpy * grid.vy + 0.5 * de * grid.speed2);
      bm.seed_y().row(0).segment(j * n_nodes, n_nodes) = (df * f).matrix().transpose();
    }
  }

  ctx.log_term("moment", loss_m);
  ctx.log_term("residual", loss_r);
  ctx.log_term("boundary", loss_b);
  ctx.log_term("data", loss_d);
  return config_.w_m * loss_m + config_.w_r * loss_r + config_.w_b * loss_b + config_.w_d * loss_d;
}

Real HomLossAssembler::value(const net::Mlp& params) const {
  net::GradientContext ctx(params);
  return assemble(ctx);
}

HomTrainResult train_hom(const HomSapnnConfig& config, const HomTrainingData& data) {
  config.rate.validate();
  if (config.w_m < 0 || config.w_r < 0 || config.w_b < 0 || config.w_d < 0)
    throw ConfigError("train_hom: loss weights must be nonnegative");
  if (config.w_m + config.w_r + config.w_b + config.w_d <= 0)
    throw ConfigError("train_hom: at least one loss weight must be positive");

  HomSurrogate geom;
  geom.grid = data.f0.grid;
  geom.rate = config.rate;
  geom.t_final = config.t_final;
  geom.g_clip = config.g_clip;
  geom.data_horizon_frac = config.data_horizon_frac;
  {
    // Input normalization from the observed clipped range.
    HomSurrogate probe = geom;
    probe.g_offset = 0;
    probe.g_scale = 1;
    const Array g0 = probe.initial_log_correction(data.f0);
    const Real hi = std::max(g0.maxCoeff(), config.g_clip + 1e-3);
    geom.g_offset = 0.5 * (config.g_clip + hi);
    geom.g_scale = std::max(0.5 * (hi - config.g_clip), 1e-6);
  }

  std::vector<Index> dims;
  dims.push_back(2);
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  dims.push_back(1);
  net::Mlp init = net::Mlp::glorot(dims, config.seed);

  HomLossAssembler assembler(config, data, geom);
  net::TrainResult trained = net::optimize(
      std::move(init),
      [&](net::GradientContext& ctx, Index step) -> Real {
        assembler.resample(step);
        return assembler.assemble(ctx);
      },
      config.schedule);

  HomTrainResult result;
  geom.net = std::move(trained.params);
  result.surrogate = std::move(geom);
  result.history = std::move(trained.history);
  return result;
}

Real hom_residual_loss(const HomSurrogate& s, const Array& g0_points, const Array& t_points) {
  net::GradientContext ctx(s.net);
  net::Batch& b = ctx.eval(s.encode(g0_points, t_points), {1});
  const Array g = b.y().row(0).transpose().array();
  const Array dgdt = b.dy(0).row(0).transpose().array() * s.t_input_rate();
  return hom_residual_from_values(g, dgdt, s.rate);
}

Real hom_moment_loss(const HomSurrogate& s, const Distribution& f0, const Array& t_slices,
                     const MacroState& targets) {
  const Distribution m = maxwellian(moments(f0), f0.grid);
  const Array g0 = s.initial_log_correction(f0);
  Real loss = 0;
  for (Index j = 0; j < t_slices.size(); ++j) {
    const Array g = s.predict_g(g0, Array::Constant(g0.size(), t_slices[j]));
    const MomentSums ms = discrete_moments(m.values * g.exp(), *f0.grid);
    const Real dm = ms.mass - targets.rho;
    const Real dpx = ms.momx - targets.rho * targets.u.x();
    const Real dpy = ms.momy - targets.rho * targets.u.y();
    const Real de = ms.energy - targets.energy();
    loss += dm * dm + dpx * dpx + dpy * dpy + de * de;
  }
  return loss;
}

std::pair<Real, Real> hom_boundary_and_data_loss(const HomSurrogate& s, const Distribution& f0,
                                                 const HomTrajectory& data, Index n_b, Index n_d,
                                                 std::uint64_t seed) {
  const Distribution m = maxwellian(moments(f0), f0.grid);
  const Array g0 = s.initial_log_correction(f0);
  CounterRng rng(seed);

  Real loss_b = 0;
  for (Index i = 0; i < n_b; ++i) {
    const Index node = rng.uniform_index(g0.size());
    const Real g = s.predict_g(Array::Constant(1, g0[node]), Array::Zero(1))[0];
    const Real diff = m.values[node] * std::exp(g) - f0.values[node];
    loss_b += diff * diff;
  }
  loss_b /= static_cast<Real>(n_b);

  Real loss_d = 0;
  std::vector<Index> eligible;
  const Real horizon = s.data_horizon_frac * s.t_final;
  for (Index k = 0; k < data.times.size(); ++k)
    if (data.times[k] <= horizon + 1e-12) eligible.push_back(k);
  if (!eligible.empty()) {
    for (Index i = 0; i < n_d; ++i) {
      const Index snap = eligible[static_cast<std::size_t>(
          rng.uniform_index(static_cast<Index>(eligible.size())))];
      const Index node = rng.uniform_index(g0.size());
      const Real g =
          s.predict_g(Array::Constant(1, g0[node]), Array::Constant(1, data.times[snap]))[0];
      const Real diff =
          m.values[node] * std::exp(g) - data.states[static_cast<std::size_t>(snap)].values[node];
      loss_d += diff * diff;
    }
    loss_d /= static_cast<Real>(n_d);
  }
  return {loss_b, loss_d};
}

// ---------------------------------------------------------------------------
// Non homogeneous surrogate
// ---------------------------------------------------------------------------

NonhomTrainingData make_nonhom_training_data(
    const std::function<KineticField(const Vector& z)>& initial, const Matrix& z,
    const Matrix& z_box, const RelaxationRate& rate, Real t_final, Index n_snapshots, Real cfl) {
  if (z.cols() < 1) throw InvalidInputError("nonhom training data needs at least one z sample");
  NonhomTrainingData data;
  data.z = z;
  data.z_box = z_box;
  data.snapshot_times = Array::LinSpaced(n_snapshots, 0.0, t_final);

  for (Index s = 0; s < z.cols(); ++s) {
    const KineticField init = initial(z.col(s));
    if (s == 0) {
      data.vgrid = init.vgrid;
      data.xgrid = init.xgrid;
    }
    std::vector<ArrayXX> fs(static_cast<std::size_t>(n_snapshots));
    std::vector<ArrayXX> us(static_cast<std::size_t>(n_snapshots));
    Index next = 0;
    auto observer = [&](Real t, const KineticField& f) {
      while (next < n_snapshots && data.snapshot_times[next] <= t + 1e-12) {
        fs[static_cast<std::size_t>(next)] = f.values;
        const MacroProfile p = moments_profile(f);
        ArrayXX u(f.xgrid.n_cells, 3);
        u.col(0) = p.rho;
        u.col(1) = p.rho * p.ux;
        u.col(2) = p.energy;
        us[static_cast<std::size_t>(next)] = std::move(u);
        ++next;
      }
    };
    solve_bgk_1d(init, rate, t_final, cfl, observer);
    if (next != n_snapshots) throw std::runtime_error("nonhom training data: missed snapshots");
    data.f_snapshots.push_back(std::move(fs));
    data.u_snapshots.push_back(std::move(us));
  }
  return data;
}

Matrix NonhomSurrogate::encode(const Array& x, const Array& t, const Matrix& z) const {
  if (x.size() != t.size() || z.cols() != x.size())
    throw InvalidInputError("encode: point arrays disagree");
  Matrix in(2 + d_z(), x.size());
  in.row(0) = (2.0 * x - 1.0).matrix().transpose();
  in.row(1) = (2.0 * t / t_final - 1.0).matrix().transpose();
  for (Index d = 0; d < d_z(); ++d) {
    const Real mid = 0.5 * (z_box(d, 0) + z_box(d, 1));
    const Real half = std::max(0.5 * (z_box(d, 1) - z_box(d, 0)), 1e-12);
    in.row(2 + d) = ((z.row(d).array() - mid) / half).matrix();
  }
  return in;
}

KineticField NonhomSurrogate::evaluate_field(const Vector& z, Real t) const {
  const Index n_cells = xgrid.n_cells;
  Matrix zrep(d_z(), n_cells);
  zrep.colwise() = z;
  const Matrix in = encode(xgrid.centers(), Array::Constant(n_cells, t), zrep);
  const Matrix g = net::forward(g_net, in);  // (N_l, n_cells)
  KineticField f(vgrid, xgrid);
  f.values = g.transpose().array().exp();
  return f;
}

MacroProfile NonhomSurrogate::evaluate_macro(const Vector& z, Real t) const {
  const Index n_cells = xgrid.n_cells;
  Matrix zrep(d_z(), n_cells);
  zrep.colwise() = z;
  const Matrix in = encode(xgrid.centers(), Array::Constant(n_cells, t), zrep);
  const Matrix w = net::forward(u_net, in);  // (3, n_cells)
  MacroProfile p;
  p.rho.resize(n_cells);
  p.ux.resize(n_cells);
  p.uy = Array::Zero(n_cells);
  p.temp.resize(n_cells);
  p.energy.resize(n_cells);
  for (Index c = 0; c < n_cells; ++c) {
    const Real rho = softplus(w(0, c));
    const Real ux = w(1, c);
    const Real temp = softplus(w(2, c));
    p.rho[c] = rho;
    p.ux[c] = ux;
    p.temp[c] = temp;
    p.energy[c] = 0.5 * rho * (ux * ux + 2.0 * temp);
  }
  return p;
}

namespace {

/// U = (rho, rho u, E) from raw macro-net outputs w = (rho~, u~, T~) with the
/// softplus positivity maps, plus its Jacobian and per-component Hessians.
struct MacroMap {
  Real rho, u, temp;
  Eigen::Matrix3d jac;
  Eigen::Matrix3d hess[3];
  Eigen::Vector3d value;

  explicit MacroMap(const Eigen::Vector3d& w) {
    const Real s_r = logistic(w[0]), s_t = logistic(w[2]);
    const Real sp_r = s_r * (1.0 - s_r), sp_t = s_t * (1.0 - s_t);
    rho = softplus(w[0]);
    u = w[1];
    temp = softplus(w[2]);
    value << rho, rho * u, 0.5 * rho * (u * u + 2.0 * temp);

    jac.setZero();
    jac(0, 0) = s_r;
    jac(1, 0) = s_r * u;
    jac(1, 1) = rho;
    jac(2, 0) = s_r * 0.5 * (u * u + 2.0 * temp);
    jac(2, 1) = rho * u;
    jac(2, 2) = rho * s_t;

    hess[0].setZero();
    hess[0](0, 0) = sp_r;
    hess[1].setZero();
    hess[1](0, 0) = sp_r * u;
    hess[1](0, 1) = hess[1](1, 0) = s_r;
    hess[2].setZero();
    hess[2](0, 0) = sp_r * 0.5 * (u * u + 2.0 * temp);
    hess[2](0, 1) = hess[2](1, 0) = s_r * u;
    hess[2](0, 2) = hess[2](2, 0) = s_r * s_t;
    hess[2](1, 1) = rho;
    hess[2](2, 2) = rho * sp_t;
  }
};

}  // namespace

NonhomLossAssembler::NonhomLossAssembler(const NonhomSapnnConfig& config,
                                         const NonhomTrainingData& data,
                                         const NonhomSurrogate& geometry)
    : config_(config), data_(data), geom_(geometry) {
  const Real horizon = config.data_horizon_frac * config.t_final;
  for (Index k = 0; k < data.snapshot_times.size(); ++k)
    if (data.snapshot_times[k] <= horizon + 1e-12) data_eligible_.push_back(k);
  if (data_eligible_.empty()) throw ConfigError("nonhom training: no snapshots within the horizon");
}

void NonhomLossAssembler::resample(Index step) {
  CounterRng rng(hash_mix(config_.seed, static_cast<std::uint64_t>(step)));
  const Index dz = geom_.d_z();

  auto draw_interior = [&](Index count, Array& x, Array& t, Matrix& z) {
    x.resize(count);
    t.resize(count);
    z.resize(dz, count);
    for (Index i = 0; i < count; ++i) {
      x[i] = rng.next01();
      t[i] = rng.uniform(0.0, config_.t_final);
      for (Index d = 0; d < dz; ++d) z(d, i) = rng.uniform(geom_.z_box(d, 0), geom_.z_box(d, 1));
    }
  };
  draw_interior(config_.n_m, m_x_, m_t_, m_z_);
  draw_interior(config_.n_r1, r1_x_, r1_t_, r1_z_);
  draw_interior(config_.n_r2, r2_x_, r2_t_, r2_z_);

  const Index n_samples = data_.z.cols();
  const Index n_snaps = data_.snapshot_times.size();
  const Index n_cells = data_.xgrid.n_cells;

  b_points_.clear();
  for (Index i = 0; i < config_.n_b; ++i) {
    DataPoint p;
    p.sample = rng.uniform_index(n_samples);
    if (rng.next01() < 0.5) {  // initial slab
      p.snapshot = 0;
      p.cell = rng.uniform_index(n_cells);
    } else {  // spatial boundary cells over the whole horizon
      p.snapshot = rng.uniform_index(n_snaps);
      p.cell = rng.next01() < 0.5 ? 0 : n_cells - 1;
    }
    b_points_.push_back(p);
  }

  d_points_.clear();
  for (Index i = 0; i < config_.n_d; ++i) {
    DataPoint p;
    p.sample = rng.uniform_index(n_samples);
    p.snapshot = data_eligible_[static_cast<std::size_t>(
        rng.uniform_index(static_cast<Index>(data_eligible_.size())))];
    p.cell = rng.uniform_index(n_cells);
    d_points_.push_back(p);
  }
}

Real NonhomLossAssembler::assemble(net::GradientContext& g_ctx, net::GradientContext& u_ctx,
                                   NonhomLossTerms* terms) const {
  const VelocityGrid& vg = *geom_.vgrid;
  const Index n_l = vg.size();
  const Real dA = vg.cell_area;
  const RelaxationRate& rate = config_.rate;
  const Real t_rate = 2.0 / config_.t_final;  // d(t input)/dt
  const Real x_rate = 2.0;                    // d(x input)/dx

  const Array phi_mass = Array::Ones(n_l);
  const Array& phi_momx = vg.vx;
  const Array phi_energy = 0.5 * vg.speed2;

  NonhomLossTerms out;

  // Moment-coupling term: U^NN against the discrete moments of f^NN = e^g.
  {
    const Matrix in = geom_.encode(m_x_, m_t_, m_z_);
    net::Batch& bg = g_ctx.eval(in);
    net::Batch& bu = u_ctx.eval(in);
    const Real scale = 2.0 / static_cast<Real>(config_.n_m);
    for (Index p = 0; p < config_.n_m; ++p) {
      const Array f = bg.y().col(p).array().exp();
      const MacroMap mm(bu.y().col(p));
      Eigen::Vector3d mom;
      mom << f.sum() * dA, (phi_momx * f).sum() * dA, (phi_energy * f).sum() * dA;
      const Eigen::Vector3d diff = mm.value - mom;
      out.m += diff.squaredNorm();
      bu.seed_y().col(p) += scale * (mm.jac.transpose() * diff);
      bg.seed_y().col(p) -=
          (scale * dA *
           (diff[0] * phi_mass + diff[1] * phi_momx + diff[2] * phi_energy) * f)
              .matrix();
    }
    out.m /= static_cast<Real>(config_.n_m);
  }

  // Kinetic residual: eps (dt g + v dx g) - mu (exp(-g) - 1), all nodes.
  {
    const Matrix in = geom_.encode(r1_x_, r1_t_, r1_z_);
    net::Batch& bg = g_ctx.eval(in, {0, 1});
    const Real n_total = static_cast<Real>(config_.n_r1) * static_cast<Real>(n_l);
    const Real scale = 2.0 / n_total;
    for (Index p = 0; p < config_.n_r1; ++p) {
      for (Index l = 0; l < n_l; ++l) {
        const Real g = bg.y()(l, p);
        const Real gx = bg.dy(0)(l, p) * x_rate;
        const Real gt = bg.dy(1)(l, p) * t_rate;
        const Real arg = std::min(-g, config_.exp_cap);
        const Real eg = std::exp(arg);
        const Real r = rate.eps * (gt + vg.vx[l] * gx) - rate.mu * (eg - 1.0);
        if (!std::isfinite(r))
          throw InvalidInputError("non-finite kinetic residual at collocation point " +
                                  std::to_string(p));
        out.r1 += r * r;
        const Real dg = arg < config_.exp_cap ? rate.mu * eg : 0.0;
        bg.seed_y()(l, p) += scale * r * dg;
        bg.seed_dy(0)(l, p) += scale * r * rate.eps * vg.vx[l] * x_rate;
        bg.seed_dy(1)(l, p) += scale * r * rate.eps * t_rate;
      }
    }
    out.r1 /= n_total;
  }

  // Moment-system residual: dt U + dx (sum_l v_l f_l phi_h).
  {
    const Matrix in = geom_.encode(r2_x_, r2_t_, r2_z_);
    net::Batch& bg = g_ctx.eval(in, {0});
    net::Batch& bu = u_ctx.eval(in, {1});
    const Real scale = 2.0 / static_cast<Real>(config_.n_r2);
    for (Index p = 0; p < config_.n_r2; ++p) {
      const MacroMap mm(bu.y().col(p));
      const Eigen::Vector3d wdot = bu.dy(0).col(p) * t_rate;
      const Eigen::Vector3d dudt = mm.jac * wdot;

      const Array f = bg.y().col(p).array().exp();
      const Array gx = bg.dy(0).col(p).array() * x_rate;
      const Array flux_core = vg.vx * f * gx * dA;  // d/dx of v f phi integrands, per node
      Eigen::Vector3d resid;
      resid[0] = dudt[0] + (flux_core * phi_mass).sum();
      resid[1] = dudt[1] + (flux_core * phi_momx).sum();
      resid[2] = dudt[2] + (flux_core * phi_energy).sum();
      out.r2 += resid.squaredNorm();

      // macro net: through both dU/dt (Hessian path) and the tangent.
      Eigen::Vector3d w_seed = Eigen::Vector3d::Zero();
      for (int h = 0; h < 3; ++h) w_seed += resid[h] * (mm.hess[h] * wdot);
      bu.seed_y().col(p) += scale * w_seed;
      bu.seed_dy(0).col(p) += scale * t_rate * (mm.jac.transpose() * resid);

      // g net: flux depends on f = e^g and on dx g.
      const Array common =
          (resid[0] * phi_mass + resid[1] * phi_momx + resid[2] * phi_energy) * vg.vx * dA;
      bg.seed_y().col(p) += (scale * common * f * gx).matrix();
      bg.seed_dy(0).col(p) += (scale * common * f * x_rate).matrix();
    }
    out.r2 /= static_cast<Real>(config_.n_r2);
  }

  // Boundary/data supervision on f and U.
  auto supervised = [&](const std::vector<DataPoint>& pts, Real& loss_out) {
    if (pts.empty()) return;
    const Index n = static_cast<Index>(pts.size());
    Array x(n), t(n);
    Matrix z(geom_.d_z(), n);
    for (Index i = 0; i < n; ++i) {
      const DataPoint& p = pts[static_cast<std::size_t>(i)];
      x[i] = data_.xgrid.center(p.cell);
      t[i] = data_.snapshot_times[p.snapshot];
      z.col(i) = data_.z.col(p.sample);
    }
    const Matrix in = geom_.encode(x, t, z);
    net::Batch& bg = g_ctx.eval(in);
    net::Batch& bu = u_ctx.eval(in);
    const Real scale = 2.0 / static_cast<Real>(n);
    for (Index i = 0; i < n; ++i) {
      const DataPoint& p = pts[static_cast<std::size_t>(i)];
      const auto& f_snap = data_.f_snapshots[static_cast<std::size_t>(p.sample)]
                                            [static_cast<std::size_t>(p.snapshot)];
      const auto& u_snap = data_.u_snapshots[static_cast<std::size_t>(p.sample)]
                                            [static_cast<std::size_t>(p.snapshot)];
      const Array f_pred = bg.y().col(i).array().exp();
      const Array df = f_pred - f_snap.row(p.cell).transpose();
      loss_out += df.square().sum();
      bg.seed_y().col(i) += (scale * df * f_pred).matrix();

      const MacroMap mm(bu.y().col(i));
      const Eigen::Vector3d du = mm.value - Eigen::Vector3d(u_snap.row(p.cell).transpose());
      loss_out += du.squaredNorm();
      bu.seed_y().col(i) += scale * (mm.jac.transpose() * du);
    }
    loss_out /= static_cast<Real>(n);
  };
  supervised(b_points_, out.b);
  supervised(d_points_, out.d);

  g_ctx.log_term("moment", out.m);
  g_ctx.log_term("residual_kinetic", out.r1);
  g_ctx.log_term("residual_moment", out.r2);
  g_ctx.log_term("boundary", out.b);
  g_ctx.log_term("data", out.d);
  if (terms) *terms = out;
  return out.total(config_);
}

Real NonhomLossAssembler::value(const net::Mlp& g_params, const net::Mlp& u_params,
                                NonhomLossTerms* terms) const {
  net::GradientContext g_ctx(g_params), u_ctx(u_params);
  return assemble(g_ctx, u_ctx, terms);
}

NonhomTrainResult train_nonhom(const NonhomSapnnConfig& config, const NonhomTrainingData& data) {
  config.rate.validate();
  const Index n_l = data.vgrid->size();
  const Index dz = data.z.rows();

  NonhomSurrogate geom;
  geom.vgrid = data.vgrid;
  geom.xgrid = data.xgrid;
  geom.rate = config.rate;
  geom.t_final = config.t_final;
  geom.z_box = data.z_box;
  geom.exp_cap = config.exp_cap;

  std::vector<Index> g_dims{2 + dz};
  g_dims.insert(g_dims.end(), config.g_hidden.begin(), config.g_hidden.end());
  g_dims.push_back(n_l);
  std::vector<Index> u_dims{2 + dz};
  u_dims.insert(u_dims.end(), config.u_hidden.begin(), config.u_hidden.end());
  u_dims.push_back(3);

  net::Mlp g_net = net::Mlp::glorot(g_dims, config.seed);
  net::Mlp u_net = net::Mlp::glorot(u_dims, config.seed + 1);
  NonhomLossAssembler assembler(config, data, geom);

  // Joint Adam over both parameter sets.
  const Index n_g = g_net.n_params();
  Vector theta(n_g + u_net.n_params());
  theta.head(n_g) = g_net.flatten();
  theta.tail(u_net.n_params()) = u_net.flatten();
  Vector m = Vector::Zero(theta.size()), v = Vector::Zero(theta.size());

  NonhomTrainResult result;
  Real initial_loss = 0;
  const net::AdamSchedule& sched = config.schedule;
  for (Index step = 0; step < sched.steps; ++step) {
    g_net.assign(theta.head(n_g));
    u_net.assign(theta.tail(u_net.n_params()));
    net::GradientContext g_ctx(g_net), u_ctx(u_net);
    assembler.resample(step);
    NonhomLossTerms terms;
    const Real value = assembler.assemble(g_ctx, u_ctx, &terms);
    if (!std::isfinite(value)) throw net::DivergenceError(result.history);
    if (step == 0) initial_loss = std::max(value, 1e-300);
    if (value > sched.divergence_factor * initial_loss) throw net::DivergenceError(result.history);
    if (step % sched.record_every == 0) result.history.push_back({step, value, g_ctx.terms()});

    Vector grad(theta.size());
    grad.head(n_g) = g_ctx.backward();
    grad.tail(u_net.n_params()) = u_ctx.backward();
    m = sched.beta1 * m + (1.0 - sched.beta1) * grad;
    v = sched.beta2 * v + (1.0 - sched.beta2) * grad.cwiseProduct(grad);
    const Real bc1 = 1.0 - std::pow(sched.beta1, static_cast<Real>(step + 1));
    const Real bc2 = 1.0 - std::pow(sched.beta2, static_cast<Real>(step + 1));
    theta.array() -= sched.learning_rate * (m.array() / bc1) /
                     ((v.array() / bc2).sqrt() + sched.eps);
  }
  g_net.assign(theta.head(n_g));
  u_net.assign(theta.tail(u_net.n_params()));
  {
    assembler.resample(sched.steps);
    NonhomLossTerms terms;
    net::GradientContext g_ctx(g_net), u_ctx(u_net);
    const Real final_value = assembler.assemble(g_ctx, u_ctx, &terms);
    result.history.push_back({sched.steps, final_value, g_ctx.terms()});
  }

  geom.g_net = std::move(g_net);
  geom.u_net = std::move(u_net);
  result.surrogate = std::move(geom);
  return result;
}

// ---------------------------------------------------------------------------
// Surrogate checkpoint IO
// ---------------------------------------------------------------------------

void save_hom_surrogate(const std::string& path, const HomSurrogate& s) {
  json meta;
  meta["kind"] = "hom";
  meta["grid"] = {{"extent", s.grid->extent}, {"n_per_dim", s.grid->n_per_dim}};
  meta["rate"] = {{"mu", s.rate.mu}, {"eps", s.rate.eps}};
  meta["t_final"] = s.t_final;
  meta["g_clip"] = s.g_clip;
  meta["g_offset"] = s.g_offset;
  meta["g_scale"] = s.g_scale;
  meta["data_horizon_frac"] = s.data_horizon_frac;
  net::save_checkpoint(path, s.net, meta.dump());
}

HomSurrogate load_hom_surrogate(const std::string& path) {
  const net::Checkpoint ck = net::load_checkpoint(path);
  const json meta = json::parse(ck.metadata_json);
  if (meta.value("kind", "") != "hom")
    throw InvalidInputError("checkpoint is not a homogeneous surrogate: " + path);
  HomSurrogate s;
  s.net = ck.net;
  s.grid = make_velocity_grid(meta["grid"]["extent"].get<Real>(),
                              meta["grid"]["n_per_dim"].get<Index>());
  s.rate = {meta["rate"]["mu"].get<Real>(), meta["rate"]["eps"].get<Real>()};
  s.t_final = meta["t_final"].get<Real>();
  s.g_clip = meta["g_clip"].get<Real>();
  s.g_offset = meta["g_offset"].get<Real>();
  s.g_scale = meta["g_scale"].get<Real>();
  s.data_horizon_frac = meta["data_horizon_frac"].get<Real>();
  return s;
}

void save_nonhom_surrogate(const std::string& path_prefix, const NonhomSurrogate& s) {
  json meta;
  meta["kind"] = "nonhom";
  meta["grid"] = {{"extent", s.vgrid->extent}, {"n_per_dim", s.vgrid->n_per_dim}};
  meta["n_cells"] = s.xgrid.n_cells;
  meta["rate"] = {{"mu", s.rate.mu}, {"eps", s.rate.eps}};
  meta["t_final"] = s.t_final;
  meta["exp_cap"] = s.exp_cap;
  meta["z_box"] = json::array();
  for (Index d = 0; d < s.z_box.rows(); ++d)
    meta["z_box"].push_back({s.z_box(d, 0), s.z_box(d, 1)});
  net::save_checkpoint(path_prefix + "_g.ckpt", s.g_net, meta.dump());
  net::save_checkpoint(path_prefix + "_u.ckpt", s.u_net, meta.dump());
}

NonhomSurrogate load_nonhom_surrogate(const std::string& path_prefix) {
  const net::Checkpoint g_ck = net::load_checkpoint(path_prefix + "_g.ckpt");
  const net::Checkpoint u_ck = net::load_checkpoint(path_prefix + "_u.ckpt");
  const json meta = json::parse(g_ck.metadata_json);
  if (meta.value("kind", "") != "nonhom")
    throw InvalidInputError("checkpoint is not a nonhomogeneous surrogate: " + path_prefix);
  NonhomSurrogate s;
  s.g_net = g_ck.net;
  s.u_net = u_ck.net;
  s.vgrid = make_velocity_grid(meta["grid"]["extent"].get<Real>(),
                               meta["grid"]["n_per_dim"].get<Index>());
  s.xgrid = make_spatial_grid(meta["n_cells"].get<Index>());
  s.rate = {meta["rate"]["mu"].get<Real>(), meta["rate"]["eps"].get<Real>()};
  s.t_final = meta["t_final"].get<Real>();
  s.exp_cap = meta["exp_cap"].get<Real>();
  const auto& box = meta["z_box"];
  s.z_box.resize(static_cast<Index>(box.size()), 2);
  for (Index d = 0; d < s.z_box.rows(); ++d) {
    s.z_box(d, 0) = box[static_cast<std::size_t>(d)][0].get<Real>();
    s.z_box(d, 1) = box[static_cast<std::size_t>(d)][1].get<Real>();
  }
  return s;
}

}  // namespace kinuq
