#pragma once

#include <functional>
#include <vector>

#include "kinuq/collision.hpp"
#include "kinuq/grid.hpp"

namespace kinuq {

/// Homogeneous trajectory: one Distribution per (strictly increasing) time.
struct HomTrajectory {
  Array times;
  std::vector<Distribution> states;
};

/// Exact homogeneous BGK relaxation M + exp(-mu t / eps) (f0 - M); no
/// time-step error.
Distribution solve_hom_bgk(const Distribution& f0, const RelaxationRate& rate, Real t);

struct HomBoltzmannOptions {
  Real dt = 0;             // 0 -> 0.01 * eps
  Index n_out = 11;        // output checkpoints including t = 0
  Real negative_tol = 1e-8;  // output clip tolerance (relative to max)
};

/// Homogeneous Boltzmann with RK2 time stepping on the spectral operator.
/// Requires dt <= eps / (2 rho) (explicit stability against the loss term).
/// Once the state is at equilibrium to round-off the remaining span is
/// filled without further stepping.
HomTrajectory solve_hom_boltzmann(const Distribution& f0, Real eps, Real t_final,
                                  const SpectralPlan& plan, HomBoltzmannOptions opt = {});

/// f(x, v) over SpatialGrid x VelocityGrid; values(cell, velocity node).
struct KineticField {
  VelocityGridPtr vgrid;
  SpatialGrid xgrid;
  ArrayXX values;

  KineticField() = default;
  KineticField(VelocityGridPtr vg, SpatialGrid xg);
};

/// Per-cell conservative variables (rho, rho u_x, E); gamma = 2 closure.
struct EulerField {
  SpatialGrid grid;
  ArrayXX u;  // (n_cells, 3)

  EulerField() = default;
  EulerField(SpatialGrid g, ArrayXX vals);
};

/// Per-cell macroscopic fields extracted from a kinetic or Euler solution.
struct MacroProfile {
  Array rho, ux, uy, temp, energy;
};

MacroProfile moments_profile(const KineticField& f);
MacroProfile euler_profile(const EulerField& f);

using KineticObserver = std::function<void(Real t, const KineticField&)>;
using EulerObserver = std::function<void(Real t, const EulerField&)>;

/// 1D x 2V BGK via Strang splitting: MUSCL/minmod transport per velocity
/// node (dt = cfl dx / V_max) and the exact local exponential relaxation map
/// (unconditionally stable in eps). Zero-gradient boundaries.
KineticField solve_bgk_1d(const KineticField& init, const RelaxationRate& rate, Real t_final,
                          Real cfl, const KineticObserver& observer = {});

/// Same splitting with the spectral Boltzmann operator per cell; the
/// collision step uses RK2 substeps bounded by 0.5 eps / max(rho).
KineticField solve_boltzmann_1d(const KineticField& init, Real eps, Real t_final, Real cfl,
                                const SpectralPlan& plan, const KineticObserver& observer = {});

struct EulerSolveInfo {
  bool vacuum_floored = false;
  Index steps = 0;
};

/// Finite-volume Euler: MUSCL/minmod reconstruction, Rusanov flux, SSP-RK2,
/// gamma = 2, zero-gradient boundaries. Vacuum cells (rho <= 1e-10) are
/// flagged and floored, and the run continues.
EulerField solve_euler_1d(const EulerField& init, Real t_final, Real cfl,
                          EulerSolveInfo* info = nullptr, const EulerObserver& observer = {});

}  // namespace kinuq
