#pragma once

#include <vector>

#include "kinuq/fft2.hpp"
#include "kinuq/grid.hpp"

namespace kinuq {

/// Collision frequency mu and Knudsen number eps.
struct RelaxationRate {
  Real mu = 1.0;
  Real eps = 1.0;

  void validate() const;
};

/// mu * (M[f] - f) where M[f] is the Maxwellian sharing f's discrete moments.
Distribution bgk_operator(const Distribution& f, const RelaxationRate& rate);

/// Precomputed convolution weights for the fast spectral evaluation of the
/// 2D Maxwell-molecule collision operator (constant kernel 1/(2 pi), so the
/// loss-term frequency equals the density).
///
/// The operator is evaluated through the orthogonal-plane representation:
/// angular quadrature decouples the bilinear form into per-angle Fourier
/// multipliers. Weights depend only on (n_modes, n_angle, extent) and are
/// reusable across calls.
class SpectralPlan {
 public:
  static SpectralPlan build(const VelocityGridPtr& grid, Index n_angle = 8);

  const VelocityGridPtr& grid() const { return grid_; }
  Index n_modes() const { return n_modes_; }
  Index n_angle() const { return n_angle_; }
  Real support_radius() const { return support_; }
  Real kernel_radius() const { return kernel_radius_; }

  /// Per-angle gain multipliers A_p(k), as n x n arrays.
  const std::vector<ArrayXX>& gain_symbols() const { return gain_; }
  /// Orthogonal-direction multipliers; empty when n_angle is even (then
  /// B_p = A_{(p + n_angle/2) mod n_angle}).
  const std::vector<ArrayXX>& gain_symbols_perp() const { return gain_perp_; }
  /// Diagonal loss multiplier, angular quadrature folded in.
  const ArrayXX& loss_symbol() const { return loss_; }

  bool matches(const VelocityGrid& g) const;

 private:
  VelocityGridPtr grid_;
  Index n_modes_ = 0;
  Index n_angle_ = 0;
  Real support_ = 0;
  Real kernel_radius_ = 0;
  std::vector<ArrayXX> gain_, gain_perp_;
  ArrayXX loss_;
};

/// Reusable scratch for spectral collision evaluations. Not thread-safe;
/// use one per thread.
class CollisionWorkspace {
 public:
  explicit CollisionWorkspace(const SpectralPlan& plan);

  /// q_out = Q(f, f) evaluated on the plan's grid.
  void apply(const SpectralPlan& plan, const Array& f_values, Array& q_out);

 private:
  Fft2 fft_;
  ArrayXXc fhat_, scratch_;
  std::vector<ArrayXX> transformed_;
  ArrayXX loss_field_;
};

/// Convenience wrapper building a one-shot workspace.
Distribution boltzmann_operator(const Distribution& f, const SpectralPlan& plan);

}  // namespace kinuq
