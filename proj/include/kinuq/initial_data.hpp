#pragma once

#include "kinuq/grid.hpp"
#include "kinuq/solvers.hpp"

namespace kinuq {

/// Two-bump initial data: an equal mixture of Gaussians of thermal width
/// sigma centered at shift +- d (1, 1)^T, normalized to total mass rho0.
/// Moments: rho = rho0, u = shift, T = sigma/2 + d^2.
struct TwoBumpParams {
  Real rho0 = 0.75;
  Real sigma = 0.5;
  Real d = 1.5;
};

/// Stochastic displacement s(z) = z1 (sin(2 pi z2), cos(2 pi z2))^T,
/// z1 in (-1, 1), z2 in (0, 1).
Vec2 two_bump_shift(const Vector& z);

Distribution two_bump(const TwoBumpParams& p, const Vec2& shift, const VelocityGridPtr& grid);

/// Left/right macroscopic Riemann data; the jump sits at x = 0.5.
struct RiemannMacro {
  MacroState left, right;
};

/// Sod: (rho, T) = (1, 1 + s z) | (0.125, 0.8 + s z), u = 0.
RiemannMacro sod_macro(Real z, Real s = 0.25);

/// Lax: (rho, ux, T) = (0.445 + 0.02 z1, 0.698, 3.528) | (0.5, 0, 0.571 + 0.02 z2).
RiemannMacro lax_macro(Real z1, Real z2);

/// Double rarefaction: rho = 1, T = 0.4, ux = -2 + 0.05 z1 | +2 + 0.05 z2.
RiemannMacro double_rarefaction_macro(Real z1, Real z2);

/// Per-cell local Maxwellian field from piecewise Riemann data.
KineticField equilibrium_field(const RiemannMacro& data, const SpatialGrid& xgrid,
                               const VelocityGridPtr& vgrid);

/// Conservative Euler initialization from the same data.
EulerField euler_riemann_field(const RiemannMacro& data, const SpatialGrid& grid);

}  // namespace kinuq
