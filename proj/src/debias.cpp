#include "dssl/debias.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace dssl {

void DebiasConfig::validate() const {
  auto fail = [](const char* field, const std::string& why) {
    throw ConfigError(std::string("debias.") + field + ": " + why);
  };
  if (!(lambda_debias >= 0.0)) fail("lambda_debias", "must be >= 0");
  if (!(lambda_margin >= 0.0)) fail("lambda_margin", "must be >= 0");
  if (!(tau > 0.0 && tau <= 1.0)) fail("tau", "must be in (0, 1]");
  if (!(momentum >= 0.0 && momentum <= 1.0)) fail("momentum", "must be in [0, 1]");
  if (!(tau_la >= 0.0)) fail("tau_la", "must be >= 0");
}

ClassPrior::ClassPrior(int class_count, double momentum)
    : p_hat_(VectorXd::Constant(class_count, 1.0 / class_count)),
      pi_(VectorXd::Constant(class_count, 1.0 / class_count)),
      momentum_(momentum) {
  if (class_count < 1) throw ArgumentError("ClassPrior: class_count must be positive");
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw ArgumentError("ClassPrior: momentum must be in [0, 1]");
}

ClassPrior::ClassPrior(std::span<const int> labeled_counts, double momentum)
    : ClassPrior(static_cast<int>(labeled_counts.size()), momentum) {
  VectorXd pi(static_cast<Index>(labeled_counts.size()));
  for (std::size_t c = 0; c < labeled_counts.size(); ++c) {
    pi(static_cast<Index>(c)) = labeled_counts[c];
  }
  if (pi.sum() <= 0.0) throw ArgumentError("ClassPrior: labeled counts are all zero");
  pi_ = floor_normalize<double>(pi / pi.sum(), kPriorFloor);
}

ClassPrior::ClassPrior(VectorXd p_hat, VectorXd pi, double momentum)
    : ClassPrior(static_cast<int>(p_hat.size()), momentum) {
  if (pi.size() != p_hat.size()) throw ShapeError("ClassPrior: p_hat and pi lengths differ");
  require_finite(p_hat, "ClassPrior");
  require_finite(pi, "ClassPrior");
  p_hat_ = floor_normalize<double>(std::move(p_hat), kPriorFloor);
  pi_ = floor_normalize<double>(std::move(pi), kPriorFloor);
}

Index PseudoLabelBatch::accepted_count() const {
  return std::count(accepted.begin(), accepted.end(), char{1});
}

PseudoLabelBatch select_pseudo_labels(const MatrixXd& weak_logits, const ClassPrior& prior,
                                      double lambda_debias, double tau) {
  PseudoLabelBatch out;
  out.raw_logits = weak_logits;
  out.debiased_logits = debias_logits(weak_logits, prior, lambda_debias);
  const MatrixXd probs = softmax(out.debiased_logits);
  const Index n = weak_logits.rows();
  out.confidence.resize(n);
  out.pseudo_label.resize(static_cast<std::size_t>(n));
  out.accepted.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const Index label = argmax(out.debiased_logits.row(i));
    out.confidence(i) = probs(i, label);
    out.pseudo_label[static_cast<std::size_t>(i)] = static_cast<int>(label);
    out.accepted[static_cast<std::size_t>(i)] = out.confidence(i) >= tau ? 1 : 0;
  }
  return out;
}

VectorXd margin_deltas(const ClassPrior& prior, double lambda_margin) {
  if (lambda_margin == 0.0) return VectorXd::Zero(prior.class_count());
  return -lambda_margin * prior.p_hat().array().log().matrix();
}

double kl_to_uniform(std::span<const long> counts) {
  const long total = std::accumulate(counts.begin(), counts.end(), 0L);
  if (total == 0) return 0.0;
  const double classes = static_cast<double>(counts.size());
  double kl = 0.0;
  for (long n : counts) {
    if (n == 0) continue;
    const double q = static_cast<double>(n) / static_cast<double>(total);
    kl += q * std::log(q * classes);
  }
  return std::max(kl, 0.0);
}

}  // namespace dssl
