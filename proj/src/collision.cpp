#include "kinuq/collision.hpp"

#include <cmath>
#include <numbers>

namespace kinuq {

namespace {

Real sinc(Real x) { return std::abs(x) < 1e-12 ? 1.0 : std::sin(x) / x; }

/// Integral of exp(i s r) over r in [-R, R].
Real segment_symbol(Real s, Real radius) { return 2.0 * radius * sinc(radius * s); }

Index signed_mode(Index i, Index n) { return i < n / 2 ? i : i - n; }

}  // namespace

void RelaxationRate::validate() const {
  if (!(mu > 0) || !std::isfinite(mu)) throw InvalidInputError("relaxation rate needs mu > 0");
  if (!(eps > 0) || !std::isfinite(eps)) throw InvalidInputError("relaxation rate needs eps > 0");
}

Distribution bgk_operator(const Distribution& f, const RelaxationRate& rate) {
  rate.validate();
  Distribution m = maxwellian(moments(f), f.grid);
  m.values = rate.mu * (m.values - f.values);
  return m;
}

SpectralPlan SpectralPlan::build(const VelocityGridPtr& grid, Index n_angle) {
  if (n_angle < 4) throw ConfigError("spectral plan needs n_angle >= 4");
  if (grid->n_per_dim % 2 != 0) throw ConfigError("spectral plan needs an even grid");

  SpectralPlan plan;
  plan.grid_ = grid;
  plan.n_modes_ = grid->n_per_dim;
  plan.n_angle_ = n_angle;
  // Anti-aliasing: distributions supported in B(0, S) with the box acting as
  // the 2S-truncated kernel's period, S = 2 extent / (3 + sqrt 2).
  plan.support_ = 2.0 * grid->extent / (3.0 + std::numbers::sqrt2);
  plan.kernel_radius_ = 2.0 * plan.support_;

  const Index n = plan.n_modes_;
  const Real xi0 = std::numbers::pi / grid->extent;  // wavenumber spacing
  const bool even = n_angle % 2 == 0;

  std::vector<Real> cs(n_angle), sn(n_angle);
  for (Index p = 0; p < n_angle; ++p) {
    const Real theta = std::numbers::pi * (static_cast<Real>(p) + 0.5) / static_cast<Real>(n_angle);
    cs[p] = std::cos(theta);
    sn[p] = std::sin(theta);
  }

  plan.gain_.assign(n_angle, ArrayXX(n, n));
  if (!even) plan.gain_perp_.assign(n_angle, ArrayXX(n, n));
  plan.loss_ = ArrayXX::Zero(n, n);

  for (Index p = 0; p < n_angle; ++p) {
    for (Index iy = 0; iy < n; ++iy) {
      const Real ky = xi0 * static_cast<Real>(signed_mode(iy, n));
      for (Index ix = 0; ix < n; ++ix) {
        const Real kx = xi0 * static_cast<Real>(signed_mode(ix, n));
        plan.gain_[p](ix, iy) = segment_symbol(kx * cs[p] + ky * sn[p], plan.kernel_radius_);
        if (!even)
          plan.gain_perp_[p](ix, iy) =
              segment_symbol(-kx * sn[p] + ky * cs[p], plan.kernel_radius_);
      }
    }
  }
  for (Index p = 0; p < n_angle; ++p) {
    const ArrayXX& perp = even ? plan.gain_[(p + n_angle / 2) % n_angle] : plan.gain_perp_[p];
    plan.loss_ += plan.gain_[p] * perp;
  }
  plan.loss_ /= static_cast<Real>(n_angle);
  return plan;
}

bool SpectralPlan::matches(const VelocityGrid& g) const {
  return g.n_per_dim == grid_->n_per_dim && g.extent == grid_->extent;
}

CollisionWorkspace::CollisionWorkspace(const SpectralPlan& plan)
    : fft_(plan.n_modes()),
      fhat_(plan.n_modes(), plan.n_modes()),
      scratch_(plan.n_modes(), plan.n_modes()),
      transformed_(static_cast<std::size_t>(plan.n_angle()),
                   ArrayXX(plan.n_modes(), plan.n_modes())),
      loss_field_(plan.n_modes(), plan.n_modes()) {}

void CollisionWorkspace::apply(const SpectralPlan& plan, const Array& f_values, Array& q_out) {
  const Index n = plan.n_modes();
  if (f_values.size() != n * n)
    throw InvalidInputError("collision: value count does not match the plan's grid");

  fhat_.real() = Eigen::Map<const ArrayXX>(f_values.data(), n, n);
  fhat_.imag().setZero();
  fft_.forward(fhat_);

  const Index a = plan.n_angle();
  for (Index p = 0; p < a; ++p) {
    const ArrayXX& sym = plan.gain_symbols()[static_cast<std::size_t>(p)];
    scratch_.real() = fhat_.real() * sym;
    scratch_.imag() = fhat_.imag() * sym;
    fft_.inverse(scratch_);
    transformed_[static_cast<std::size_t>(p)] = scratch_.real();
  }
  scratch_.real() = fhat_.real() * plan.loss_symbol();
  scratch_.imag() = fhat_.imag() * plan.loss_symbol();
  fft_.inverse(scratch_);
  loss_field_ = scratch_.real();

  const bool even = a % 2 == 0;
  ArrayXX gain = ArrayXX::Zero(n, n);
  if (even) {
    for (Index p = 0; p < a; ++p)
      gain += transformed_[static_cast<std::size_t>(p)] *
              transformed_[static_cast<std::size_t>((p + a / 2) % a)];
  } else {
    for (Index p = 0; p < a; ++p) {
      const ArrayXX& sym = plan.gain_symbols_perp()[static_cast<std::size_t>(p)];
      scratch_.real() = fhat_.real() * sym;
      scratch_.imag() = fhat_.imag() * sym;
      fft_.inverse(scratch_);
      gain += transformed_[static_cast<std::size_t>(p)] * scratch_.real();
    }
  }
  gain /= static_cast<Real>(a);

  q_out.resize(n * n);
  Eigen::Map<ArrayXX>(q_out.data(), n, n) =
      gain - Eigen::Map<const ArrayXX>(f_values.data(), n, n) * loss_field_;
}

Distribution boltzmann_operator(const Distribution& f, const SpectralPlan& plan) {
  if (!plan.matches(*f.grid)) throw InvalidInputError("collision: grid/plan mismatch");
  CollisionWorkspace ws(plan);
  Array q;
  ws.apply(plan, f.values, q);
  return {f.grid, std::move(q)};
}

}  // namespace kinuq
