#pragma once

#include <memory>

#include "kinuq/types.hpp"

namespace kinuq {

// Fixed model dimensions: 2D velocity, 1D space, gas constant R = 1.
inline constexpr Real kGasR = 1.0;
inline constexpr int kVelocityDim = 2;

/// Uniform midpoint lattice over [-extent, extent]^2, symmetric about the
/// origin. Node index = ix + n_per_dim * iy (x fastest).
struct VelocityGrid {
  Real extent = 0;
  Index n_per_dim = 0;
  Real dv = 0;
  Real cell_area = 0;
  Array axis;     // per-dim midpoints, length n_per_dim
  Array vx, vy;   // flattened node coordinates
  Array speed2;   // |v|^2 per node

  Index size() const { return n_per_dim * n_per_dim; }
};

using VelocityGridPtr = std::shared_ptr<const VelocityGrid>;

/// n_per_dim must be >= 4 and even (spectral collision plan requirement).
VelocityGridPtr make_velocity_grid(Real extent, Index n_per_dim);

/// Uniform cells on [0, 1], centers at (i + 1/2) * dx.
struct SpatialGrid {
  Index n_cells = 0;
  Real dx = 0;

  Real center(Index i) const { return (static_cast<Real>(i) + 0.5) * dx; }
  Array centers() const;
};

SpatialGrid make_spatial_grid(Index n_cells);

/// Macroscopic state (rho, u, T) with derived E = rho(|u|^2 + 2T)/2 and
/// p = rho T.
struct MacroState {
  Real rho = 0;
  Vec2 u = Vec2::Zero();
  Real temp = 0;

  Real energy() const { return rho * (u.squaredNorm() + 2.0 * temp) / 2.0; }
  Real pressure() const { return rho * temp; }
  void validate() const;  // throws on non-finite or nonpositive rho/temp
};

/// Discrete density over a velocity grid (one value per node, per unit
/// velocity-area).
struct Distribution {
  VelocityGridPtr grid;
  Array values;

  Distribution() = default;
  Distribution(VelocityGridPtr g, Array v);
};

/// M[v] = rho/(2 pi T) exp(-|v - u|^2 / (2T)). Warns on stderr when the grid
/// extent does not cover |u| + 6 sqrt(T) componentwise.
Distribution maxwellian(const MacroState& state, const VelocityGridPtr& grid);

/// Midpoint-rule (rho, u, T) of f. Throws DegenerateStateError when the
/// discrete mass or temperature is nonpositive.
MacroState moments(const Distribution& f);

/// Quadrature of f log f with the convention 0 log 0 = 0 (values below 1e-300
/// contribute zero). Negative entries beyond -1e-12 max(f) are rejected;
/// smaller ones are treated as zero.
Real entropy(const Distribution& f);

/// L^p norm with polynomial weight: (sum |f|^p (1 + |v|)^s dA)^(1/p), p in {1, 2}.
Real weighted_norm(const Distribution& f, int s, int p);

/// Same norm over raw node values (shared by spatial fields, which also sum
/// over cells with a dx factor).
Real weighted_norm_values(const Array& values, const VelocityGrid& grid, int s, int p);

/// Clamp small negative values (spectral ringing) to zero. Entries below
/// -rel_tol * max(f) throw InvalidInputError; the rest are clipped in place.
void clip_negative_values(Array& values, Real rel_tol);

}  // namespace kinuq
