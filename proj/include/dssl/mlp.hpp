#ifndef DSSL_MLP_HPP_
#define DSSL_MLP_HPP_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dssl/core.hpp"
#include "dssl/debias.hpp"
#include "dssl/random_stream.hpp"

namespace dssl {

/// y = x * weight + bias, weight stored [fan_in x fan_out].
template <typename Scalar>
struct DenseLayer {
  Matrix<Scalar> weight;
  RowVector<Scalar> bias;

  bool operator==(const DenseLayer&) const = default;
};

/// Parameter-shaped gradient (or velocity) set.
template <typename Scalar>
using ParamSet = std::vector<DenseLayer<Scalar>>;

/// Fully connected classifier: ReLU between layers, identity on the output.
template <typename Scalar>
class Mlp {
 public:
  /// Activations kept by a training forward pass; inputs[l] feeds layer l.
  struct Trace {
    std::vector<Matrix<Scalar>> inputs;
    Matrix<Scalar> logits;
  };

  Mlp() = default;

  /// Uniform Glorot initialization, zero biases.
  static Mlp glorot(const std::vector<int>& layer_sizes, std::uint64_t seed);
  /// All parameters zero; the output softmax is uniform for every input.
  static Mlp zeros(const std::vector<int>& layer_sizes);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  Index input_dim() const { return sizes_.front(); }
  Index class_count() const { return sizes_.back(); }

  ParamSet<Scalar>& layers() { return layers_; }
  const ParamSet<Scalar>& layers() const { return layers_; }

  Matrix<Scalar> forward(const Matrix<Scalar>& batch) const { return forward(batch, nullptr); }
  Matrix<Scalar> forward(const Matrix<Scalar>& batch, Trace* trace) const;

  /// Backpropagate d(loss)/d(logits) through a recorded trace.
  ParamSet<Scalar> backward(const Trace& trace, const Matrix<Scalar>& dlogits) const;

  ParamSet<Scalar> zeros_like() const;

  bool operator==(const Mlp&) const = default;

 private:
  explicit Mlp(std::vector<int> sizes);

  std::vector<int> sizes_;
  ParamSet<Scalar> layers_;
};

template <typename Scalar>
Mlp<Scalar>::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw ArgumentError("Mlp: need at least input and output sizes");
  for (int s : sizes_) {
    if (s < 1) throw ArgumentError("Mlp: layer sizes must be positive");
  }
  layers_.resize(sizes_.size() - 1);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    layers_[l].weight = Matrix<Scalar>::Zero(sizes_[l], sizes_[l + 1]);
    layers_[l].bias = RowVector<Scalar>::Zero(sizes_[l + 1]);
  }
}

template <typename Scalar>
Mlp<Scalar> Mlp<Scalar>::zeros(const std::vector<int>& layer_sizes) {
  return Mlp(layer_sizes);
}

template <typename Scalar>
Mlp<Scalar> Mlp<Scalar>::glorot(const std::vector<int>& layer_sizes, std::uint64_t seed) {
  Mlp m(layer_sizes);
  const RandomStream base(seed, {0x4D4C50});
  for (std::size_t l = 0; l < m.layers_.size(); ++l) {
    const double bound = std::sqrt(6.0 / (layer_sizes[l] + layer_sizes[l + 1]));
    RandomStream s = base.child(l);
    Matrix<Scalar>& w = m.layers_[l].weight;
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(s.uniform(-bound, bound));
  }
  return m;
}

template <typename Scalar>
Matrix<Scalar> Mlp<Scalar>::forward(const Matrix<Scalar>& batch, Trace* trace) const {
  if (batch.cols() != input_dim()) {
    throw ShapeError("Mlp::forward: input has " + std::to_string(batch.cols()) +
                     " features, model expects " + std::to_string(input_dim()));
  }
  if (trace) trace->inputs.clear();
  Matrix<Scalar> a = batch;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix<Scalar> z = a * layers_[l].weight;
    z.rowwise() += layers_[l].bias;
    if (trace) trace->inputs.push_back(std::move(a));
    if (l + 1 < layers_.size()) {
      a = z.cwiseMax(Scalar(0));
    } else {
      a = std::move(z);
    }
  }
  if (trace) trace->logits = a;
  return a;
}

template <typename Scalar>
ParamSet<Scalar> Mlp<Scalar>::backward(const Trace& trace, const Matrix<Scalar>& dlogits) const {
  ParamSet<Scalar> grads(layers_.size());
  Matrix<Scalar> delta = dlogits;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Matrix<Scalar>& input = trace.inputs[l];
    grads[l].weight.noalias() = input.transpose() * delta;
    grads[l].bias = delta.colwise().sum();
    if (l == 0) break;
    Matrix<Scalar> upstream = delta * layers_[l].weight.transpose();
    // inputs[l] is the ReLU output of layer l-1; its derivative is 1 where positive.
    delta = (input.array() > Scalar(0)).select(upstream, Scalar(0));
  }
  return grads;
}

template <typename Scalar>
ParamSet<Scalar> Mlp<Scalar>::zeros_like() const {
  ParamSet<Scalar> out(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    out[l].weight = Matrix<Scalar>::Zero(layers_[l].weight.rows(), layers_[l].weight.cols());
    out[l].bias = RowVector<Scalar>::Zero(layers_[l].bias.size());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

template <typename Scalar>
struct LossAndGrad {
  Scalar total{};
  Scalar loss_s{};
  Scalar loss_u{};
  ParamSet<Scalar> grads;
};

/// L = CE(labeled) + lambda_u * (1/B_u) * sum over accepted rows of the
/// margin cross-entropy on the strong batch. Rejected rows contribute
/// nothing; an all-zero `margin_deltas` makes the unlabeled term plain CE.
template <typename Scalar>
LossAndGrad<Scalar> loss_and_grad(const Mlp<Scalar>& model, const Matrix<Scalar>& labeled_batch,
                                  std::span<const int> labeled_targets,
                                  const Matrix<Scalar>& strong_batch,
                                  std::span<const int> pseudo_targets,
                                  std::span<const char> accept_mask, Scalar lambda_u,
                                  const VectorXd& margin_deltas) {
  require_finite(labeled_batch, "loss_and_grad(labeled_batch)");
  require_finite(strong_batch, "loss_and_grad(strong_batch)");
  require_finite(margin_deltas, "loss_and_grad(margin_deltas)");
  if (!std::isfinite(static_cast<double>(lambda_u))) {
    throw NumericError("loss_and_grad: lambda_u is not finite");
  }
  if (static_cast<Index>(accept_mask.size()) != strong_batch.rows() ||
      static_cast<Index>(pseudo_targets.size()) != strong_batch.rows()) {
    throw ShapeError("loss_and_grad: accept mask / pseudo targets do not match unlabeled batch");
  }
  if (margin_deltas.size() != model.class_count()) {
    throw ShapeError("loss_and_grad: margin_deltas length must equal class count");
  }

  LossAndGrad<Scalar> out;
  typename Mlp<Scalar>::Trace trace;
  const Matrix<Scalar> logits = model.forward(labeled_batch, &trace);
  out.loss_s = cross_entropy_from_logits(logits, labeled_targets);
  out.grads = model.backward(trace, cross_entropy_grad(logits, labeled_targets));

  const Index unlabeled = strong_batch.rows();
  Index accepted = 0;
  for (char a : accept_mask) accepted += a ? 1 : 0;
  if (unlabeled == 0 || accepted == 0 || lambda_u == Scalar(0)) {
    out.total = out.loss_s;
    return out;
  }

  // Only accepted rows carry signal; forward just those.
  Matrix<Scalar> rows(accepted, strong_batch.cols());
  std::vector<int> targets;
  targets.reserve(static_cast<std::size_t>(accepted));
  for (Index j = 0, k = 0; j < unlabeled; ++j) {
    if (!accept_mask[static_cast<std::size_t>(j)]) continue;
    rows.row(k++) = strong_batch.row(j);
    targets.push_back(pseudo_targets[static_cast<std::size_t>(j)]);
  }
  typename Mlp<Scalar>::Trace utrace;
  const Matrix<Scalar> ulogits = model.forward(rows, &utrace);
  Matrix<Scalar> dlogits(accepted, ulogits.cols());
  Scalar sum(0);
  for (Index k = 0; k < accepted; ++k) {
    const int t = targets[static_cast<std::size_t>(k)];
    if (t < 0 || t >= model.class_count()) throw IndexError("loss_and_grad: pseudo target out of range");
    sum += margin_cross_entropy(ulogits.row(k), t, margin_deltas);
    dlogits.row(k) = margin_cross_entropy_grad(ulogits.row(k), t, margin_deltas);
  }
  const Scalar scale = lambda_u / static_cast<Scalar>(unlabeled);
  out.loss_u = sum / static_cast<Scalar>(unlabeled);
  dlogits *= scale;
  const ParamSet<Scalar> ugrads = model.backward(utrace, dlogits);
  for (std::size_t l = 0; l < out.grads.size(); ++l) {
    out.grads[l].weight += ugrads[l].weight;
    out.grads[l].bias += ugrads[l].bias;
  }
  out.total = out.loss_s + lambda_u * out.loss_u;
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct SgdConfig {
  double learning_rate = 0.03;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int epochs = 30;
  int batch_size_labeled = 16;
  int unlabeled_ratio = 4;

  void validate() const;
};

/// Heavy-ball SGD: v <- momentum * v + g + weight_decay * w; w <- w - lr * v.
template <typename Scalar>
class Sgd {
 public:
  explicit Sgd(const SgdConfig& config) : config_(config) {}

  void step(Mlp<Scalar>& model, const ParamSet<Scalar>& grads) {
    auto& layers = model.layers();
    if (grads.size() != layers.size()) throw ShapeError("sgd_step: gradient layer count mismatch");
    if (velocity_.empty()) velocity_ = model.zeros_like();
    const auto mu = static_cast<Scalar>(config_.momentum);
    const auto wd = static_cast<Scalar>(config_.weight_decay);
    const auto lr = static_cast<Scalar>(config_.learning_rate);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (grads[l].weight.rows() != layers[l].weight.rows() ||
          grads[l].weight.cols() != layers[l].weight.cols() ||
          grads[l].bias.size() != layers[l].bias.size()) {
        throw ShapeError("sgd_step: gradient shape mismatch at layer " + std::to_string(l));
      }
      velocity_[l].weight = mu * velocity_[l].weight + grads[l].weight + wd * layers[l].weight;
      velocity_[l].bias = mu * velocity_[l].bias + grads[l].bias + wd * layers[l].bias;
      layers[l].weight -= lr * velocity_[l].weight;
      layers[l].bias -= lr * velocity_[l].bias;
    }
  }

  const ParamSet<Scalar>& velocity() const { return velocity_; }

 private:
  SgdConfig config_;
  ParamSet<Scalar> velocity_;
};

template <typename Scalar>
void sgd_step(Mlp<Scalar>& model, const ParamSet<Scalar>& grads, Sgd<Scalar>& optimizer) {
  optimizer.step(model, grads);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// "DSSLCKPT", u64 little-endian header length, JSON header (layer sizes plus
/// caller metadata), then every weight matrix (row-major) and bias as
/// little-endian float64 in layer order.
void save_checkpoint(const std::filesystem::path& path, const Mlp<double>& model,
                     const std::string& metadata_json = "{}");
Mlp<double> load_checkpoint(const std::filesystem::path& path);

}  // namespace dssl

#endif  // DSSL_MLP_HPP_
