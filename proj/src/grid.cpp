#include "kinuq/grid.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

namespace kinuq {

VelocityGridPtr make_velocity_grid(Real extent, Index n_per_dim) {
  if (!(extent > 0) || !std::isfinite(extent))
    throw ConfigError("velocity grid extent must be positive and finite");
  if (n_per_dim < 4 || n_per_dim % 2 != 0)
    throw ConfigError("velocity grid needs n_per_dim >= 4 and even, got " +
                      std::to_string(n_per_dim));

  auto g = std::make_shared<VelocityGrid>();
  g->extent = extent;
  g->n_per_dim = n_per_dim;
  g->dv = 2.0 * extent / static_cast<Real>(n_per_dim);
  g->cell_area = g->dv * g->dv;
  g->axis = Array::LinSpaced(n_per_dim, -extent + 0.5 * g->dv, extent - 0.5 * g->dv);

  const Index n = n_per_dim * n_per_dim;
  g->vx.resize(n);
  g->vy.resize(n);
  for (Index iy = 0; iy < n_per_dim; ++iy)
    for (Index ix = 0; ix < n_per_dim; ++ix) {
      const Index i = ix + n_per_dim * iy;
      g->vx[i] = g->axis[ix];
      g->vy[i] = g->axis[iy];
    }
  g->speed2 = g->vx.square() + g->vy.square();
  return g;
}

Array SpatialGrid::centers() const {
  return Array::LinSpaced(n_cells, 0.5 * dx, 1.0 - 0.5 * dx);
}

SpatialGrid make_spatial_grid(Index n_cells) {
  if (n_cells < 2) throw ConfigError("spatial grid needs at least 2 cells");
  return SpatialGrid{n_cells, 1.0 / static_cast<Real>(n_cells)};
}

void MacroState::validate() const {
  if (!std::isfinite(rho) || !u.allFinite() || !std::isfinite(temp))
    throw InvalidInputError("macro state has non-finite fields");
  if (rho <= 0) throw DegenerateStateError("macro state has nonpositive density");
  if (temp <= 0) throw DegenerateStateError("macro state has nonpositive temperature");
}

Distribution::Distribution(VelocityGridPtr g, Array v) : grid(std::move(g)), values(std::move(v)) {
  if (!grid) throw InvalidInputError("distribution needs a velocity grid");
  if (values.size() != grid->size())
    throw InvalidInputError("distribution value count does not match grid");
}

Distribution maxwellian(const MacroState& state, const VelocityGridPtr& grid) {
  state.validate();
  const Real reach = 6.0 * std::sqrt(state.temp);
  if (grid->extent < std::abs(state.u.x()) + reach || grid->extent < std::abs(state.u.y()) + reach)
    std::fprintf(stderr,
                 "kinuq: warning: velocity grid extent %.3g does not cover |u| + 6 sqrt(T)\n",
                 grid->extent);

  const Real inv2t = 1.0 / (2.0 * kGasR * state.temp);
  const Real norm = state.rho / (2.0 * std::numbers::pi * kGasR * state.temp);
  Array vals = norm * (-(((grid->vx - state.u.x()).square() + (grid->vy - state.u.y()).square()) *
                         inv2t)).exp();
  return {grid, std::move(vals)};
}

MacroState moments(const Distribution& f) {
  if (!f.values.allFinite()) throw InvalidInputError("moments: distribution has non-finite values");
  const auto& g = *f.grid;
  const Real dA = g.cell_area;
  const Real mass = f.values.sum() * dA;
  if (!(mass > 0)) throw DegenerateStateError("moments: nonpositive discrete mass");

  MacroState m;
  m.rho = mass;
  m.u.x() = (g.vx * f.values).sum() * dA / mass;
  m.u.y() = (g.vy * f.values).sum() * dA / mass;
  const Real e2 = (g.speed2 * f.values).sum() * dA;  // integral of |v|^2 f
  m.temp = (e2 / mass - m.u.squaredNorm()) / (kVelocityDim * kGasR);
  if (!(m.temp > 0)) throw DegenerateStateError("moments: nonpositive discrete temperature");
  return m;
}

Real entropy(const Distribution& f) {
  const Real fmax = f.values.maxCoeff();
  const Real neg_tol = 1e-12 * std::max(fmax, Real(0));
  Real acc = 0;
  for (Index i = 0; i < f.values.size(); ++i) {
    const Real v = f.values[i];
    if (v < -neg_tol)
      throw InvalidInputError("entropy: distribution has significant negative entries");
    if (v > 1e-300) acc += v * std::log(v);
  }
  return acc * f.grid->cell_area;
}

Real weighted_norm_values(const Array& values, const VelocityGrid& grid, int s, int p) {
  if (p != 1 && p != 2) throw InvalidInputError("weighted_norm: p must be 1 or 2");
  if (s < 0) throw InvalidInputError("weighted_norm: s must be >= 0");
  Array w = values.abs();
  if (p == 2) w = w.square();
  if (s > 0) w *= (1.0 + grid.speed2.sqrt()).pow(s);
  const Real total = w.sum() * grid.cell_area;
  return p == 1 ? total : std::sqrt(total);
}

Real weighted_norm(const Distribution& f, int s, int p) {
  return weighted_norm_values(f.values, *f.grid, s, p);
}

void clip_negative_values(Array& values, Real rel_tol) {
  const Real fmax = values.maxCoeff();
  const Real bound = rel_tol * std::max(fmax, Real(0));
  const Real lowest = values.minCoeff();
  if (lowest < -bound)
    throw InvalidInputError("distribution has negative entries beyond the clip tolerance");
  if (lowest < 0) values = values.max(0.0);
}

}  // namespace kinuq
