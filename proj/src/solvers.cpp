#include "kinuq/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace kinuq {

namespace {

Real minmod(Real a, Real b) {
  if (a > 0 && b > 0) return std::min(a, b);
  if (a < 0 && b < 0) return std::max(a, b);
  return 0;
}

/// Second-order MUSCL update for constant-speed advection on one column,
/// zero-gradient boundaries.
void advect_column(Eigen::Ref<Array> u, Real a, Real dt_over_dx, Array& slopes, Array& flux) {
  const Index n = u.size();
  const Real nu = a * dt_over_dx;
  for (Index i = 0; i < n; ++i) {
    const Real dl = i > 0 ? u[i] - u[i - 1] : 0.0;
    const Real dr = i + 1 < n ? u[i + 1] - u[i] : 0.0;
    slopes[i] = minmod(dl, dr);
  }
  // flux[j] at interface j - 1/2, j = 0..n
  if (a > 0) {
    flux[0] = a * u[0];  // ghost = u[0], slope 0
    for (Index j = 1; j <= n; ++j)
      flux[j] = a * (u[j - 1] + 0.5 * (1.0 - nu) * slopes[j - 1]);
  } else {
    flux[n] = a * u[n - 1];
    for (Index j = 0; j < n; ++j) flux[j] = a * (u[j] - 0.5 * (1.0 + nu) * slopes[j]);
  }
  for (Index i = 0; i < n; ++i) u[i] -= dt_over_dx * (flux[i + 1] - flux[i]);
}

struct CellMoments {
  Array rho, ux, uy, temp;
};

CellMoments field_moments(const KineticField& f) {
  const auto& g = *f.vgrid;
  const Real dA = g.cell_area;
  CellMoments m;
  m.rho = f.values.rowwise().sum() * dA;
  m.ux = (f.values.matrix() * g.vx.matrix()).array() * dA / m.rho;
  m.uy = (f.values.matrix() * g.vy.matrix()).array() * dA / m.rho;
  const Array e2 = (f.values.matrix() * g.speed2.matrix()).array() * dA;
  m.temp = (e2 / m.rho - m.ux.square() - m.uy.square()) / kVelocityDim;
  return m;
}

/// Exact relaxation toward the per-cell Maxwellian: f <- M + decay (f - M).
void relax_cells(KineticField& f, Real decay) {
  const auto& g = *f.vgrid;
  const CellMoments m = field_moments(f);
  const Array coef = m.rho / (2.0 * std::numbers::pi * m.temp);
  const Array inv2t = 0.5 / m.temp;
  for (Index l = 0; l < g.size(); ++l) {
    const Array maxw =
        coef * (-((g.vx[l] - m.ux).square() + (g.vy[l] - m.uy).square()) * inv2t).exp();
    f.values.col(l) = maxw + decay * (f.values.col(l) - maxw);
  }
}

}  // namespace

Distribution solve_hom_bgk(const Distribution& f0, const RelaxationRate& rate, Real t) {
  rate.validate();
  if (!(t >= 0)) throw InvalidInputError("solve_hom_bgk: t must be >= 0");
  if (t == 0) return f0;
  Distribution m = maxwellian(moments(f0), f0.grid);
  const Real decay = std::exp(-rate.mu * t / rate.eps);
  m.values += decay * (f0.values - m.values);
  return m;
}

HomTrajectory solve_hom_boltzmann(const Distribution& f0, Real eps, Real t_final,
                                  const SpectralPlan& plan, HomBoltzmannOptions opt) {
  if (!(eps > 0)) throw InvalidInputError("solve_hom_boltzmann: eps must be positive");
  if (!plan.matches(*f0.grid)) throw InvalidInputError("solve_hom_boltzmann: grid/plan mismatch");
  if (opt.n_out < 2) throw ConfigError("solve_hom_boltzmann: need at least 2 output times");

  const Real rho = moments(f0).rho;
  Real dt = opt.dt > 0 ? opt.dt : 0.01 * eps;
  const Real dt_stable = eps / (2.0 * rho);
  if (dt > dt_stable)
    throw ConfigError("solve_hom_boltzmann: dt exceeds the stability bound eps / (2 rho)");

  const Index n_steps = std::max<Index>(1, static_cast<Index>(std::ceil(t_final / dt - 1e-12)));
  dt = t_final / static_cast<Real>(n_steps);

  HomTrajectory traj;
  traj.times.resize(opt.n_out);
  traj.states.reserve(static_cast<std::size_t>(opt.n_out));

  std::vector<Index> out_steps(static_cast<std::size_t>(opt.n_out));
  for (Index j = 0; j < opt.n_out; ++j)
    out_steps[static_cast<std::size_t>(j)] =
        static_cast<Index>(std::llround(static_cast<Real>(j) * static_cast<Real>(n_steps) /
                                        static_cast<Real>(opt.n_out - 1)));

  const Distribution m0 = maxwellian(moments(f0), f0.grid);

  CollisionWorkspace ws(plan);
  Array f = f0.values;
  Array q1(f.size()), q2(f.size()), fs(f.size());
  bool settled = false;

  auto record = [&](Index j, Real t) {
    Array out = f;
    clip_negative_values(out, opt.negative_tol);
    traj.times[j] = t;
    traj.states.emplace_back(f0.grid, std::move(out));
  };

  Index next_out = 0;
  if (out_steps[0] == 0) record(next_out++, 0.0);

  for (Index step = 1; step <= n_steps; ++step) {
    if (!settled) {
      ws.apply(plan, f, q1);
      fs = f + (dt / eps) * q1;
      ws.apply(plan, fs, q2);
      f += (dt / (2.0 * eps)) * (q1 + q2);
      if (step % 16 == 0) {
        const Real dist = (f - m0.values).abs().sum() * f0.grid->cell_area;
        if (dist < 1e-13 * rho) settled = true;
      }
    }
    while (next_out < opt.n_out && out_steps[static_cast<std::size_t>(next_out)] == step)
      record(next_out++, static_cast<Real>(step) * dt);
  }
  return traj;
}

KineticField::KineticField(VelocityGridPtr vg, SpatialGrid xg)
    : vgrid(std::move(vg)), xgrid(xg), values(ArrayXX::Zero(xg.n_cells, vgrid->size())) {}

EulerField::EulerField(SpatialGrid g, ArrayXX vals) : grid(g), u(std::move(vals)) {
  if (u.rows() != grid.n_cells || u.cols() != 3)
    throw InvalidInputError("euler field needs (n_cells, 3) values");
}

MacroProfile moments_profile(const KineticField& f) {
  const CellMoments m = field_moments(f);
  MacroProfile p;
  p.rho = m.rho;
  p.ux = m.ux;
  p.uy = m.uy;
  p.temp = m.temp;
  p.energy = 0.5 * m.rho * (m.ux.square() + m.uy.square() + 2.0 * m.temp);
  return p;
}

MacroProfile euler_profile(const EulerField& f) {
  MacroProfile p;
  p.rho = f.u.col(0);
  p.ux = f.u.col(1) / f.u.col(0);
  p.uy = Array::Zero(f.u.rows());
  p.energy = f.u.col(2);
  // E = rho (u^2 + 2T)/2  ->  T = E/rho - u^2/2
  p.temp = p.energy / p.rho - 0.5 * p.ux.square();
  return p;
}

namespace {

void transport_half_step(KineticField& f, Real dt_half, Array& slopes, Array& flux) {
  const auto& g = *f.vgrid;
  const Real dt_over_dx = dt_half / f.xgrid.dx;
  for (Index l = 0; l < g.size(); ++l) {
    const Real a = g.vx[l];
    if (a == 0) continue;
    advect_column(f.values.col(l), a, dt_over_dx, slopes, flux);
  }
}

}  // namespace

KineticField solve_bgk_1d(const KineticField& init, const RelaxationRate& rate, Real t_final,
                          Real cfl, const KineticObserver& observer) {
  rate.validate();
  if (!(cfl > 0 && cfl <= 0.9)) throw ConfigError("solve_bgk_1d: cfl must lie in (0, 0.9]");

  KineticField f = init;
  const Real dt_max = cfl * f.xgrid.dx / f.vgrid->extent;
  const Index n_steps =
      std::max<Index>(1, static_cast<Index>(std::ceil(t_final / dt_max - 1e-12)));
  const Real dt = t_final / static_cast<Real>(n_steps);

  Array slopes(f.xgrid.n_cells), flux(f.xgrid.n_cells + 1);
  if (observer) observer(0.0, f);
  for (Index step = 1; step <= n_steps; ++step) {
    transport_half_step(f, 0.5 * dt, slopes, flux);
    relax_cells(f, std::exp(-rate.mu * dt / rate.eps));
    transport_half_step(f, 0.5 * dt, slopes, flux);
    if (observer) observer(static_cast<Real>(step) * dt, f);
  }
  return f;
}

KineticField solve_boltzmann_1d(const KineticField& init, Real eps, Real t_final, Real cfl,
                                const SpectralPlan& plan, const KineticObserver& observer) {
  if (!(eps > 0)) throw InvalidInputError("solve_boltzmann_1d: eps must be positive");
  if (!(cfl > 0 && cfl <= 0.9)) throw ConfigError("solve_boltzmann_1d: cfl must lie in (0, 0.9]");
  if (!plan.matches(*init.vgrid)) throw InvalidInputError("solve_boltzmann_1d: grid/plan mismatch");

  KineticField f = init;
  const Real dA = f.vgrid->cell_area;
  const Real dt_max = cfl * f.xgrid.dx / f.vgrid->extent;
  const Index n_steps =
      std::max<Index>(1, static_cast<Index>(std::ceil(t_final / dt_max - 1e-12)));
  const Real dt = t_final / static_cast<Real>(n_steps);

  Array slopes(f.xgrid.n_cells), flux(f.xgrid.n_cells + 1);
  CollisionWorkspace ws(plan);
  Array cell(f.vgrid->size()), q1(cell.size()), q2(cell.size()), stage(cell.size());

  if (observer) observer(0.0, f);
  for (Index step = 1; step <= n_steps; ++step) {
    transport_half_step(f, 0.5 * dt, slopes, flux);

    const Real rho_max = f.values.rowwise().sum().maxCoeff() * dA;
    const Real dt_coll = 0.5 * eps / std::max(rho_max, 1e-12);
    const Index n_sub = std::max<Index>(1, static_cast<Index>(std::ceil(dt / dt_coll - 1e-12)));
    const Real h = dt / static_cast<Real>(n_sub);
    for (Index c = 0; c < f.xgrid.n_cells; ++c) {
      cell = f.values.row(c).transpose();
      for (Index s = 0; s < n_sub; ++s) {
        ws.apply(plan, cell, q1);
        stage = cell + (h / eps) * q1;
        ws.apply(plan, stage, q2);
        cell += (h / (2.0 * eps)) * (q1 + q2);
      }
      f.values.row(c) = cell.transpose();
    }

    transport_half_step(f, 0.5 * dt, slopes, flux);
    if (observer) observer(static_cast<Real>(step) * dt, f);
  }
  return f;
}

namespace {

constexpr Real kEulerGamma = 2.0;  // d_v = 2 kinetic closure
constexpr Real kVacuumFloor = 1e-10;

struct EulerRhs {
  ArrayXX dudt;  // (n, 3)
  Real max_speed = 0;
};

Real euler_pressure(Real rho, Real mom, Real e) { return (kEulerGamma - 1.0) * (e - 0.5 * mom * mom / rho); }

void euler_rhs(const ArrayXX& u, Real dx, EulerRhs& out) {
  const Index n = u.rows();
  ArrayXX slope(n, 3);
  for (int c = 0; c < 3; ++c)
    for (Index i = 0; i < n; ++i) {
      const Real dl = i > 0 ? u(i, c) - u(i - 1, c) : 0.0;
      const Real dr = i + 1 < n ? u(i + 1, c) - u(i, c) : 0.0;
      slope(i, c) = minmod(dl, dr);
    }

  auto flux_of = [](Real rho, Real mom, Real e, Real p, Eigen::Ref<Eigen::Array<Real, 3, 1>> fl) {
    const Real vel = mom / rho;
    fl[0] = mom;
    fl[1] = mom * vel + p;
    fl[2] = (e + p) * vel;
  };

  out.dudt.setZero(n, 3);
  out.max_speed = 0;
  Eigen::Array<Real, 3, 1> ul, ur, fl, fr, fhat;
  // interface j between cells j-1 and j; boundary interfaces use ghost copies
  for (Index j = 0; j <= n; ++j) {
    for (int c = 0; c < 3; ++c) {
      ul[c] = j > 0 ? u(j - 1, c) + 0.5 * slope(j - 1, c) : u(0, c);
      ur[c] = j < n ? u(j, c) - 0.5 * slope(j, c) : u(n - 1, c);
    }
    const Real rho_l = std::max(ul[0], kVacuumFloor), rho_r = std::max(ur[0], kVacuumFloor);
    const Real p_l = std::max(euler_pressure(rho_l, ul[1], ul[2]), 0.0);
    const Real p_r = std::max(euler_pressure(rho_r, ur[1], ur[2]), 0.0);
    const Real s = std::max(std::abs(ul[1] / rho_l) + std::sqrt(kEulerGamma * p_l / rho_l),
                            std::abs(ur[1] / rho_r) + std::sqrt(kEulerGamma * p_r / rho_r));
    out.max_speed = std::max(out.max_speed, s);
    flux_of(rho_l, ul[1], ul[2], p_l, fl);
    flux_of(rho_r, ur[1], ur[2], p_r, fr);
    fhat = 0.5 * (fl + fr) - 0.5 * s * (ur - ul);
    if (j > 0)
      for (int c = 0; c < 3; ++c) out.dudt(j - 1, c) -= fhat[c] / dx;
    if (j < n)
      for (int c = 0; c < 3; ++c) out.dudt(j, c) += fhat[c] / dx;
  }
}

bool apply_positivity_floor(ArrayXX& u) {
  bool floored = false;
  for (Index i = 0; i < u.rows(); ++i) {
    if (u(i, 0) <= kVacuumFloor) {
      u(i, 0) = kVacuumFloor;
      floored = true;
    }
    const Real e_int = u(i, 2) - 0.5 * u(i, 1) * u(i, 1) / u(i, 0);
    if (e_int <= kVacuumFloor * u(i, 0)) {
      u(i, 2) = 0.5 * u(i, 1) * u(i, 1) / u(i, 0) + kVacuumFloor * u(i, 0);
      floored = true;
    }
  }
  return floored;
}

Real euler_max_speed(const ArrayXX& u) {
  Real s = 0;
  for (Index i = 0; i < u.rows(); ++i) {
    const Real rho = std::max(u(i, 0), kVacuumFloor);
    const Real p = std::max(euler_pressure(rho, u(i, 1), u(i, 2)), 0.0);
    s = std::max(s, std::abs(u(i, 1) / rho) + std::sqrt(kEulerGamma * p / rho));
  }
  return s;
}

}  // namespace

EulerField solve_euler_1d(const EulerField& init, Real t_final, Real cfl, EulerSolveInfo* info,
                          const EulerObserver& observer) {
  if (!(cfl > 0 && cfl <= 0.9)) throw ConfigError("solve_euler_1d: cfl must lie in (0, 0.9]");
  for (Index i = 0; i < init.u.rows(); ++i) {
    if (!(init.u(i, 0) > 0)) throw InvalidInputError("solve_euler_1d: nonpositive density");
    if (!(init.u(i, 2) - 0.5 * init.u(i, 1) * init.u(i, 1) / init.u(i, 0) > 0))
      throw InvalidInputError("solve_euler_1d: nonpositive internal energy");
  }

  EulerField f = init;
  const Real dx = f.grid.dx;
  EulerSolveInfo local;
  EulerRhs rhs;
  ArrayXX u1;

  Real t = 0;
  if (observer) observer(0.0, f);
  while (t < t_final - 1e-14 * std::max(t_final, Real(1))) {
    const Real dt = std::min(cfl * dx / std::max(euler_max_speed(f.u), 1e-12), t_final - t);
    euler_rhs(f.u, dx, rhs);
    u1 = f.u + dt * rhs.dudt;
    local.vacuum_floored |= apply_positivity_floor(u1);
    euler_rhs(u1, dx, rhs);
    f.u = 0.5 * f.u + 0.5 * (u1 + dt * rhs.dudt);
    local.vacuum_floored |= apply_positivity_floor(f.u);
    t += dt;
    ++local.steps;
    if (observer) observer(t, f);
  }
  if (info) *info = local;
  return f;
}

}  // namespace kinuq
