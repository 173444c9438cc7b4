#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "kinuq/types.hpp"

namespace kinuq::net {

/// Feed-forward network parameters: tanh hidden layers, linear output.
/// weights[l] has shape (layer_dims[l+1], layer_dims[l]).
struct Mlp {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  std::vector<Index> layer_dims;
  std::uint64_t init_seed = 0;

  /// Glorot-uniform initialization scaled by layer fan-in/out, biases zero.
  static Mlp glorot(const std::vector<Index>& dims, std::uint64_t seed);

  Index n_layers() const { return static_cast<Index>(weights.size()); }
  Index d_in() const { return layer_dims.front(); }
  Index d_out() const { return layer_dims.back(); }
  Index n_params() const;
  Vector flatten() const;
  void assign(const Vector& theta);
};

/// Batched evaluation: x is (d_in, n), result (d_out, n).
Matrix forward(const Mlp& net, const Matrix& x);
Vector forward(const Mlp& net, const Vector& x);

/// Exact forward-mode Jacobian of outputs with respect to inputs, (d_out, d_in).
Matrix input_jacobian(const Mlp& net, const Vector& x);

struct GradientReport {
  Real loss = 0;
  Vector gradient;
  Real gradient_norm = 0;
};

class GradientContext;

/// One recorded forward pass (with optional input-direction tangents).
/// Read y()/dy(), then write the loss adjoints into seed_y()/seed_dy()
/// before GradientContext::backward().
class Batch {
 public:
  const Matrix& y() const { return activations.back(); }
  const Matrix& dy(std::size_t dir) const { return tangents[dir].back(); }
  Matrix& seed_y() { return y_seed; }
  Matrix& seed_dy(std::size_t dir) { return dy_seed[dir]; }
  Index size() const { return activations.front().cols(); }

 private:
  friend class GradientContext;
  std::vector<Index> dirs;
  std::vector<Matrix> activations;             // [0] = input, back() = output
  std::vector<std::vector<Matrix>> tangents;   // per dir, per layer
  Matrix y_seed;
  std::vector<Matrix> dy_seed;
};

/// Records forward(+tangent) passes of one network and reverse-accumulates
/// the exact parameter gradient of any scalar assembled from outputs and
/// input-derivatives of outputs (reverse over the tangent-augmented forward).
class GradientContext {
 public:
  explicit GradientContext(const Mlp& net) : net_(&net) {}

  Batch& eval(const Matrix& x, const std::vector<Index>& tangent_dirs = {});

  /// Named loss-term bookkeeping for history CSVs.
  void log_term(const std::string& name, Real value);
  const std::vector<std::pair<std::string, Real>>& terms() const { return terms_; }

  /// d(loss)/d(theta) over all recorded batches, flattened like Mlp::flatten.
  Vector backward() const;

  const Mlp& net() const { return *net_; }

 private:
  const Mlp* net_;
  std::deque<Batch> batches_;
  std::vector<std::pair<std::string, Real>> terms_;
};

/// Scalar loss over one context; `step` lets the evaluator resample
/// collocation points deterministically.
using LossFn = std::function<Real(GradientContext&, Index step)>;

/// Value + exact gradient of the loss at the given parameters.
GradientReport loss_gradient(const Mlp& net, const LossFn& loss, Index step = 0);

struct AdamSchedule {
  Index steps = 1000;
  Real learning_rate = 1e-3;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
  Index record_every = 100;
  Real divergence_factor = 1e6;
};

struct LossRecord {
  Index step = 0;
  Real total = 0;
  std::vector<std::pair<std::string, Real>> terms;
};

struct TrainResult {
  Mlp params;
  std::vector<LossRecord> history;
};

struct DivergenceError : std::runtime_error {
  explicit DivergenceError(std::vector<LossRecord> h)
      : std::runtime_error("optimizer diverged (loss exceeded the divergence factor)"),
        history(std::move(h)) {}
  std::vector<LossRecord> history;
};

/// Adam with the standard bias correction; deterministic given the loss
/// function and initial parameters.
TrainResult optimize(Mlp net, const LossFn& loss, const AdamSchedule& schedule);

/// Checkpoint format: small little-endian header (layer dims, activation
/// tag, seed) followed by the flat float64 parameter array and an optional
/// JSON metadata block.
void save_checkpoint(const std::string& path, const Mlp& net,
                     const std::string& metadata_json = "");

struct Checkpoint {
  Mlp net;
  std::string metadata_json;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace kinuq::net
