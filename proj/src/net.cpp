#include "kinuq/net.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "kinuq/util.hpp"

namespace kinuq::net {

Mlp Mlp::glorot(const std::vector<Index>& dims, std::uint64_t seed) {
  if (dims.size() < 2) throw ConfigError("network needs at least input and output layers");
  for (Index d : dims)
    if (d < 1) throw ConfigError("network layer dimensions must be positive");

  Mlp net;
  net.layer_dims = dims;
  net.init_seed = seed;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const Index rows = dims[l + 1], cols = dims[l];
    const Real limit = std::sqrt(6.0 / static_cast<Real>(rows + cols));
    CounterRng rng(hash_mix(seed, static_cast<std::uint64_t>(l)));
    Matrix w(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) w(i, j) = limit * (2.0 * rng.next01() - 1.0);
    net.weights.push_back(std::move(w));
    net.biases.push_back(Vector::Zero(rows));
  }
  return net;
}

Index Mlp::n_params() const {
  Index n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

Vector Mlp::flatten() const {
  Vector theta(n_params());
  Index at = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    theta.segment(at, weights[l].size()) = Eigen::Map<const Vector>(weights[l].data(), weights[l].size());
    at += weights[l].size();
    theta.segment(at, biases[l].size()) = biases[l];
    at += biases[l].size();
  }
  return theta;
}

void Mlp::assign(const Vector& theta) {
  if (theta.size() != n_params()) throw InvalidInputError("parameter vector has the wrong size");
  Index at = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Eigen::Map<Vector>(weights[l].data(), weights[l].size()) = theta.segment(at, weights[l].size());
    at += weights[l].size();
    biases[l] = theta.segment(at, biases[l].size());
    at += biases[l].size();
  }
}

Matrix forward(const Mlp& net, const Matrix& x) {
  if (x.rows() != net.d_in()) throw InvalidInputError("forward: input dimension mismatch");
  Matrix a = x;
  const Index last = net.n_layers() - 1;
  for (Index l = 0; l < last; ++l)
    a = ((net.weights[static_cast<std::size_t>(l)] * a).colwise() +
         net.biases[static_cast<std::size_t>(l)])
            .array()
            .tanh()
            .matrix();
  return (net.weights[static_cast<std::size_t>(last)] * a).colwise() +
         net.biases[static_cast<std::size_t>(last)];
}

Vector forward(const Mlp& net, const Vector& x) { return forward(net, Matrix(x)).col(0); }

Matrix input_jacobian(const Mlp& net, const Vector& x) {
  if (x.size() != net.d_in()) throw InvalidInputError("input_jacobian: input dimension mismatch");
  Matrix a = x;
  Matrix da = Matrix::Identity(net.d_in(), net.d_in());  // one tangent per input direction
  const Index last = net.n_layers() - 1;
  for (Index l = 0; l < last; ++l) {
    const auto& w = net.weights[static_cast<std::size_t>(l)];
    a = ((w * a).colwise() + net.biases[static_cast<std::size_t>(l)]).array().tanh().matrix();
    da = w * da;
    da.array().colwise() *= (1.0 - a.col(0).array().square());
  }
  return net.weights[static_cast<std::size_t>(last)] * da;
}

Batch& GradientContext::eval(const Matrix& x, const std::vector<Index>& tangent_dirs) {
  const Mlp& net = *net_;
  if (x.rows() != net.d_in()) throw InvalidInputError("eval: input dimension mismatch");
  for (Index d : tangent_dirs)
    if (d < 0 || d >= net.d_in()) throw InvalidInputError("eval: tangent direction out of range");

  Batch b;
  b.dirs = tangent_dirs;
  const Index n = x.cols();
  const Index layers = net.n_layers();

  b.activations.reserve(static_cast<std::size_t>(layers) + 1);
  b.activations.push_back(x);
  b.tangents.resize(tangent_dirs.size());
  for (std::size_t d = 0; d < tangent_dirs.size(); ++d) {
    Matrix t = Matrix::Zero(net.d_in(), n);
    t.row(tangent_dirs[d]).setOnes();
    b.tangents[d].push_back(std::move(t));
  }

  for (Index l = 0; l < layers; ++l) {
    const auto& w = net.weights[static_cast<std::size_t>(l)];
    const auto& bias = net.biases[static_cast<std::size_t>(l)];
    Matrix a = (w * b.activations.back()).colwise() + bias;
    std::vector<Matrix> next_tangent(b.tangents.size());
    for (std::size_t d = 0; d < b.tangents.size(); ++d)
      next_tangent[d] = w * b.tangents[d].back();
    if (l + 1 < layers) {
      a = a.array().tanh().matrix();
      for (auto& t : next_tangent) t.array() *= (1.0 - a.array().square());
    }
    b.activations.push_back(std::move(a));
    for (std::size_t d = 0; d < b.tangents.size(); ++d)
      b.tangents[d].push_back(std::move(next_tangent[d]));
  }

  b.y_seed = Matrix::Zero(net.d_out(), n);
  b.dy_seed.assign(tangent_dirs.size(), Matrix::Zero(net.d_out(), n));
  batches_.push_back(std::move(b));
  return batches_.back();
}

void GradientContext::log_term(const std::string& name, Real value) {
  terms_.emplace_back(name, value);
}

Vector GradientContext::backward() const {
  const Mlp& net = *net_;
  const Index layers = net.n_layers();
  std::vector<Matrix> gw(static_cast<std::size_t>(layers));
  std::vector<Vector> gb(static_cast<std::size_t>(layers));
  for (Index l = 0; l < layers; ++l) {
    gw[static_cast<std::size_t>(l)] =
        Matrix::Zero(net.weights[static_cast<std::size_t>(l)].rows(),
                     net.weights[static_cast<std::size_t>(l)].cols());
    gb[static_cast<std::size_t>(l)] = Vector::Zero(net.biases[static_cast<std::size_t>(l)].size());
  }

  for (const Batch& b : batches_) {
    const std::size_t n_dirs = b.dirs.size();
    // Output layer is linear.
    const Index last = layers - 1;
    const auto& w_last = net.weights[static_cast<std::size_t>(last)];
    Matrix abar = w_last.transpose() * b.y_seed;
    std::vector<Matrix> atil(n_dirs);
    gw[static_cast<std::size_t>(last)] +=
        b.y_seed * b.activations[static_cast<std::size_t>(last)].transpose();
    gb[static_cast<std::size_t>(last)] += b.y_seed.rowwise().sum();
    for (std::size_t d = 0; d < n_dirs; ++d) {
      gw[static_cast<std::size_t>(last)] +=
          b.dy_seed[d] * b.tangents[d][static_cast<std::size_t>(last)].transpose();
      atil[d] = w_last.transpose() * b.dy_seed[d];
    }

    for (Index l = last - 1; l >= 0; --l) {
      const auto& a = b.activations[static_cast<std::size_t>(l) + 1];  // tanh output
      // phi'(s) = 1 - a^2; the tangent-path term uses phi''(s) sdot = -2 a adot.
      Matrix sbar = abar.array() * (1.0 - a.array().square());
      for (std::size_t d = 0; d < n_dirs; ++d) {
        const auto& adot = b.tangents[d][static_cast<std::size_t>(l) + 1];
        sbar.array() -= 2.0 * a.array() * adot.array() * atil[d].array();
      }
      std::vector<Matrix> stil(n_dirs);
      for (std::size_t d = 0; d < n_dirs; ++d)
        stil[d] = (atil[d].array() * (1.0 - a.array().square())).matrix();

      gw[static_cast<std::size_t>(l)] += sbar * b.activations[static_cast<std::size_t>(l)].transpose();
      gb[static_cast<std::size_t>(l)] += sbar.rowwise().sum();
      for (std::size_t d = 0; d < n_dirs; ++d)
        gw[static_cast<std::size_t>(l)] +=
            stil[d] * b.tangents[d][static_cast<std::size_t>(l)].transpose();

      if (l > 0) {
        const auto& w = net.weights[static_cast<std::size_t>(l)];
        abar = w.transpose() * sbar;
        for (std::size_t d = 0; d < n_dirs; ++d) atil[d] = w.transpose() * stil[d];
      }
    }
  }

  Vector grad(net.n_params());
  Index at = 0;
  for (Index l = 0; l < layers; ++l) {
    const auto& w = gw[static_cast<std::size_t>(l)];
    grad.segment(at, w.size()) = Eigen::Map<const Vector>(w.data(), w.size());
    at += w.size();
    grad.segment(at, gb[static_cast<std::size_t>(l)].size()) = gb[static_cast<std::size_t>(l)];
    at += gb[static_cast<std::size_t>(l)].size();
  }
  return grad;
}

GradientReport loss_gradient(const Mlp& net, const LossFn& loss, Index step) {
  GradientContext ctx(net);
  GradientReport report;
  report.loss = loss(ctx, step);
  if (!std::isfinite(report.loss))
    throw InvalidInputError("loss_gradient: loss evaluated to a non-finite value");
  report.gradient = ctx.backward();
  report.gradient_norm = report.gradient.norm();
  return report;
}

TrainResult optimize(Mlp net, const LossFn& loss, const AdamSchedule& schedule) {
  Vector theta = net.flatten();
  Vector m = Vector::Zero(theta.size());
  Vector v = Vector::Zero(theta.size());

  TrainResult result;
  Real initial_loss = 0;

  for (Index step = 0; step < schedule.steps; ++step) {
    net.assign(theta);
    GradientContext ctx(net);
    const Real value = loss(ctx, step);
    if (!std::isfinite(value)) throw DivergenceError(result.history);
    if (step == 0) initial_loss = std::max(value, 1e-300);
    if (value > schedule.divergence_factor * initial_loss) throw DivergenceError(result.history);

    if (step % schedule.record_every == 0)
      result.history.push_back({step, value, ctx.terms()});

    const Vector grad = ctx.backward();
    m = schedule.beta1 * m + (1.0 - schedule.beta1) * grad;
    v = schedule.beta2 * v + (1.0 - schedule.beta2) * grad.cwiseProduct(grad);
    const Real bc1 = 1.0 - std::pow(schedule.beta1, static_cast<Real>(step + 1));
    const Real bc2 = 1.0 - std::pow(schedule.beta2, static_cast<Real>(step + 1));
    theta.array() -= schedule.learning_rate * (m.array() / bc1) /
                     ((v.array() / bc2).sqrt() + schedule.eps);
  }

  net.assign(theta);
  // Final loss for the tail of the history.
  GradientContext ctx(net);
  const Real final_value = loss(ctx, schedule.steps);
  result.history.push_back({schedule.steps, final_value, ctx.terms()});
  result.params = std::move(net);
  return result;
}

namespace {

constexpr std::uint32_t kMagic = 0x4b514e43;  // "KQNC"
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kActivationTanh = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw InvalidInputError("checkpoint file truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Mlp& net, const std::string& metadata_json) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint format is little-endian");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open checkpoint file for writing: " + path);
  write_pod(out, kMagic);
  write_pod(out, kVersion);
  write_pod(out, net.init_seed);
  write_pod(out, kActivationTanh);
  write_pod(out, static_cast<std::uint32_t>(net.layer_dims.size()));
  for (Index d : net.layer_dims) write_pod(out, static_cast<std::uint32_t>(d));
  const Vector theta = net.flatten();
  write_pod(out, static_cast<std::uint64_t>(theta.size()));
  out.write(reinterpret_cast<const char*>(theta.data()),
            static_cast<std::streamsize>(theta.size() * sizeof(Real)));
  write_pod(out, static_cast<std::uint64_t>(metadata_json.size()));
  out.write(metadata_json.data(), static_cast<std::streamsize>(metadata_json.size()));
  if (!out) throw ConfigError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint file: " + path);
  if (read_pod<std::uint32_t>(in) != kMagic)
    throw InvalidInputError("not a network checkpoint: " + path);
  if (read_pod<std::uint32_t>(in) != kVersion)
    throw InvalidInputError("unsupported checkpoint version in " + path);
  const std::uint64_t seed = read_pod<std::uint64_t>(in);
  if (read_pod<std::uint8_t>(in) != kActivationTanh)
    throw InvalidInputError("unsupported activation tag in " + path);
  const std::uint32_t n_dims = read_pod<std::uint32_t>(in);
  std::vector<Index> dims(n_dims);
  for (auto& d : dims) d = static_cast<Index>(read_pod<std::uint32_t>(in));

  Checkpoint ck;
  ck.net = Mlp::glorot(dims, 0);
  ck.net.init_seed = seed;
  const std::uint64_t n_params = read_pod<std::uint64_t>(in);
  if (static_cast<Index>(n_params) != ck.net.n_params())
    throw InvalidInputError("checkpoint parameter count mismatch in " + path);
  Vector theta(static_cast<Index>(n_params));
  in.read(reinterpret_cast<char*>(theta.data()),
          static_cast<std::streamsize>(n_params * sizeof(Real)));
  if (!in) throw InvalidInputError("checkpoint file truncated: " + path);
  ck.net.assign(theta);

  const std::uint64_t meta_len = read_pod<std::uint64_t>(in);
  ck.metadata_json.resize(meta_len);
  in.read(ck.metadata_json.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw InvalidInputError("checkpoint file truncated: " + path);
  return ck;
}

}  // namespace kinuq::net
