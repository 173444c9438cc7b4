#include "kinuq/initial_data.hpp"

#include <cmath>
#include <numbers>

namespace kinuq {

Vec2 two_bump_shift(const Vector& z) {
  if (z.size() < 2) throw InvalidInputError("two_bump_shift needs a 2D random input");
  const Real angle = 2.0 * std::numbers::pi * z[1];
  return z[0] * Vec2(std::sin(angle), std::cos(angle));
}

Distribution two_bump(const TwoBumpParams& p, const Vec2& shift, const VelocityGridPtr& grid) {
  if (!(p.rho0 > 0) || !(p.sigma > 0)) throw InvalidInputError("two_bump needs rho0, sigma > 0");
  const Vec2 off(p.d, p.d);
  const Vec2 c1 = shift + off, c2 = shift - off;
  const Real norm = p.rho0 / (2.0 * std::numbers::pi * p.sigma);
  Array vals =
      norm * ((-((grid->vx - c1.x()).square() + (grid->vy - c1.y()).square()) / p.sigma).exp() +
              (-((grid->vx - c2.x()).square() + (grid->vy - c2.y()).square()) / p.sigma).exp());
  return {grid, std::move(vals)};
}

RiemannMacro sod_macro(Real z, Real s) {
  RiemannMacro r;
  r.left = {1.0, Vec2::Zero(), 1.0 + s * z};
  r.right = {0.125, Vec2::Zero(), 0.8 + s * z};
  return r;
}

RiemannMacro lax_macro(Real z1, Real z2) {
  RiemannMacro r;
  r.left = {0.445 + 0.02 * z1, Vec2(0.698, 0.0), 3.528};
  r.right = {0.5, Vec2::Zero(), 0.571 + 0.02 * z2};
  return r;
}

RiemannMacro double_rarefaction_macro(Real z1, Real z2) {
  RiemannMacro r;
  r.left = {1.0, Vec2(-2.0 + 0.05 * z1, 0.0), 0.4};
  r.right = {1.0, Vec2(2.0 + 0.05 * z2, 0.0), 0.4};
  return r;
}

KineticField equilibrium_field(const RiemannMacro& data, const SpatialGrid& xgrid,
                               const VelocityGridPtr& vgrid) {
  data.left.validate();
  data.right.validate();
  KineticField f(vgrid, xgrid);
  const Distribution ml = maxwellian(data.left, vgrid);
  const Distribution mr = maxwellian(data.right, vgrid);
  for (Index c = 0; c < xgrid.n_cells; ++c)
    f.values.row(c) = (xgrid.center(c) <= 0.5 ? ml.values : mr.values).transpose();
  return f;
}

EulerField euler_riemann_field(const RiemannMacro& data, const SpatialGrid& grid) {
  data.left.validate();
  data.right.validate();
  ArrayXX u(grid.n_cells, 3);
  for (Index c = 0; c < grid.n_cells; ++c) {
    const MacroState& s = grid.center(c) <= 0.5 ? data.left : data.right;
    u(c, 0) = s.rho;
    u(c, 1) = s.rho * s.u.x();
    u(c, 2) = s.energy();
  }
  return {grid, std::move(u)};
}

}  // namespace kinuq
