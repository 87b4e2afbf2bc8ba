#ifndef DSSL_DEBIAS_HPP_
#define DSSL_DEBIAS_HPP_

#include <cmath>
#include <span>
#include <vector>

#include "dssl/core.hpp"

namespace dssl {

/// Floor applied to every prior before a logarithm is taken.
inline constexpr double kPriorFloor = 1e-8;

struct DebiasConfig {
  double lambda_debias = 0.5;  // strength of the counterfactual logit shift
  double lambda_margin = 0.5;  // strength of the adaptive margins
  double tau = 0.95;           // confidence threshold
  double momentum = 0.999;     // prior update momentum
  double tau_la = 1.0;         // evaluation-time logit adjustment strength

  void validate() const;
};

/// Momentum-tracked pseudo-label prior p_hat plus the fixed training-label
/// frequency vector pi.
///
/// p_hat starts uniform, which makes the debiasing shift a constant (and
/// thus prediction-neutral) until the model shows a bias.
class ClassPrior {
 public:
  ClassPrior(int class_count, double momentum);
  /// pi from labeled-set class counts (floored at 1e-8, renormalized).
  ClassPrior(std::span<const int> labeled_counts, double momentum);
  /// Explicit p_hat and pi; both are floored and renormalized.
  ClassPrior(VectorXd p_hat, VectorXd pi, double momentum);

  int class_count() const { return static_cast<int>(p_hat_.size()); }
  const VectorXd& p_hat() const { return p_hat_; }
  const VectorXd& pi() const { return pi_; }
  double momentum() const { return momentum_; }

  /// p_hat <- m * p_hat + (1 - m) * column_mean(probs), then floored at 1e-8
  /// and renormalized. An empty batch is a no-op.
  template <typename Derived>
  void update(const Eigen::MatrixBase<Derived>& probs);

 private:
  VectorXd p_hat_;
  VectorXd pi_;
  double momentum_;
};

template <typename Derived>
void ClassPrior::update(const Eigen::MatrixBase<Derived>& probs) {
  if (probs.rows() == 0 || momentum_ == 1.0) return;
  if (probs.cols() != p_hat_.size()) throw ShapeError("update_prior: class count mismatch");
  require_finite(probs, "update_prior");
  const VectorXd mean = probs.colwise().mean().transpose().template cast<double>();
  p_hat_ = floor_normalize<double>(momentum_ * p_hat_ + (1.0 - momentum_) * mean, kPriorFloor);
}

/// Free-function spelling of ClassPrior::update.
template <typename Derived>
void update_prior(ClassPrior& prior, const Eigen::MatrixBase<Derived>& weak_probs) {
  prior.update(weak_probs);
}

namespace detail {
// Subtract strength * log(prior) from every row.
template <typename Derived>
Matrix<typename Derived::Scalar> subtract_log_prior(const Eigen::MatrixBase<Derived>& logits,
                                                    const VectorXd& prior, double strength) {
  using Scalar = typename Derived::Scalar;
  if (logits.cols() != prior.size()) throw ShapeError("logit shift: class count mismatch");
  Matrix<Scalar> out = logits;
  if (strength == 0.0) return out;
  const RowVector<Scalar> shift =
      (strength * prior.array().log()).matrix().transpose().template cast<Scalar>();
  out.rowwise() -= shift;
  return out;
}
}  // namespace detail

/// Counterfactual debiasing of weak-view logits: f - lambda * log(p_hat).
template <typename Derived>
Matrix<typename Derived::Scalar> debias_logits(const Eigen::MatrixBase<Derived>& raw_logits,
                                               const ClassPrior& prior, double lambda_debias) {
  return detail::subtract_log_prior(raw_logits, prior.p_hat(), lambda_debias);
}

/// Evaluation-time logit adjustment: z - tau_la * log(pi).
template <typename Derived>
Matrix<typename Derived::Scalar> adjust_logits_eval(const Eigen::MatrixBase<Derived>& logits,
                                                    const VectorXd& pi, double tau_la) {
  return detail::subtract_log_prior(logits, pi, tau_la);
}

/// Per-sample pseudo-labeling outcome for one unlabeled batch.
struct PseudoLabelBatch {
  MatrixXd raw_logits;
  MatrixXd debiased_logits;
  VectorXd confidence;
  std::vector<int> pseudo_label;
  std::vector<char> accepted;

  Index size() const { return static_cast<Index>(pseudo_label.size()); }
  Index accepted_count() const;
};

/// Debias (with lambda_debias), then confidence = max softmax, label = argmax
/// with ties to the lowest index, accepted iff confidence >= tau.
PseudoLabelBatch select_pseudo_labels(const MatrixXd& weak_logits, const ClassPrior& prior,
                                      double lambda_debias, double tau);

/// Adaptive margins: delta_j = lambda * log(1 / p_hat_j).
VectorXd margin_deltas(const ClassPrior& prior, double lambda_margin);

/// -log softmax(z - delta)[target], stabilized by max-subtraction over z - delta.
template <typename DerivedZ, typename DerivedD>
typename DerivedZ::Scalar margin_cross_entropy(const Eigen::MatrixBase<DerivedZ>& z, int target,
                                               const Eigen::MatrixBase<DerivedD>& deltas) {
  using Scalar = typename DerivedZ::Scalar;
  if (z.size() != deltas.size()) throw ShapeError("margin_cross_entropy: delta length mismatch");
  if (target < 0 || target >= z.size()) throw IndexError("margin_cross_entropy: target out of range");
  const RowVector<Scalar> shifted =
      z.derived().reshaped().transpose() - deltas.derived().reshaped().transpose().template cast<Scalar>();
  return log_sum_exp(shifted) - shifted(target);
}

/// d margin_cross_entropy / d z = softmax(z - delta) - one_hot(target).
template <typename DerivedZ, typename DerivedD>
RowVector<typename DerivedZ::Scalar> margin_cross_entropy_grad(
    const Eigen::MatrixBase<DerivedZ>& z, int target, const Eigen::MatrixBase<DerivedD>& deltas) {
  using Scalar = typename DerivedZ::Scalar;
  const RowVector<Scalar> shifted =
      z.derived().reshaped().transpose() - deltas.derived().reshaped().transpose().template cast<Scalar>();
  RowVector<Scalar> g = softmax(shifted);
  g(target) -= Scalar(1);
  return g;
}

/// Sum_c q_c ln(q_c * C) for the empirical distribution q of `counts`;
/// zero when counts are all zero.
double kl_to_uniform(std::span<const long> counts);

}  // namespace dssl

#endif  // DSSL_DEBIAS_HPP_
