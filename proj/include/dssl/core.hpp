#ifndef DSSL_CORE_HPP_
#define DSSL_CORE_HPP_

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace dssl {

// Dense row-major storage is used everywhere so that the flat data order
// matches the IDX interchange format.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;
using RowVectorXd = RowVector<double>;

using Index = Eigen::Index;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Class index or element index outside its valid range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Argument outside its documented domain.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Mismatched tensor extents.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Configuration value failed schema or range validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Bad command-line usage (unknown override key and the like).
class UsageError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  return x.derived().array().isFinite().all();
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& x, const char* what) {
  if (!all_finite(x)) {
    throw NumericError(std::string(what) + ": non-finite input");
  }
}

// ---------------------------------------------------------------------------
// Probability primitives
// ---------------------------------------------------------------------------

/// Row-wise softmax with max-subtraction. A compile-time vector (row or
/// column) is treated as a single distribution.
template <typename Derived>
Matrix<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  require_finite(logits, "softmax");
  if constexpr (Derived::IsVectorAtCompileTime) {
    const Index n = logits.size();
    Matrix<Scalar> out(1, n);
    const Scalar mx = logits.maxCoeff();
    for (Index k = 0; k < n; ++k) out(0, k) = std::exp(logits(k) - mx);
    out /= out.sum();
    if (Derived::ColsAtCompileTime == 1) out.transposeInPlace();
    return out;
  } else {
    Matrix<Scalar> out(logits.rows(), logits.cols());
    for (Index r = 0; r < logits.rows(); ++r) {
      const Scalar mx = logits.row(r).maxCoeff();
      out.row(r) = (logits.row(r).array() - mx).exp().matrix();
      out.row(r) /= out.row(r).sum();
    }
    return out;
  }
}

/// log-sum-exp of one row, stabilized.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& row) {
  using Scalar = typename Derived::Scalar;
  const Scalar mx = row.maxCoeff();
  return mx + std::log((row.array() - mx).exp().sum());
}

/// Index of the largest entry; ties go to the lowest index.
template <typename Derived>
Index argmax(const Eigen::MatrixBase<Derived>& row) {
  Index best = 0;
  for (Index k = 1; k < row.size(); ++k) {
    if (row(k) > row(best)) best = k;
  }
  return best;
}

namespace detail {
template <typename Derived>
void check_targets(const Eigen::MatrixBase<Derived>& logits, std::span<const int> targets) {
  if (static_cast<Index>(targets.size()) != logits.rows()) {
    throw ShapeError("cross_entropy: target count does not match batch rows");
  }
  for (int t : targets) {
    if (t < 0 || t >= logits.cols()) {
      throw IndexError("cross_entropy: target " + std::to_string(t) + " outside [0, " +
                       std::to_string(logits.cols()) + ")");
    }
  }
}
}  // namespace detail

/// Mean over rows of -log softmax(logits)[row, target].
template <typename Derived>
typename Derived::Scalar cross_entropy_from_logits(const Eigen::MatrixBase<Derived>& logits,
                                                   std::span<const int> targets) {
  using Scalar = typename Derived::Scalar;
  detail::check_targets(logits, targets);
  require_finite(logits, "cross_entropy_from_logits");
  if (logits.rows() == 0) return Scalar(0);
  Scalar total(0);
  for (Index r = 0; r < logits.rows(); ++r) {
    total += log_sum_exp(logits.row(r)) - logits(r, targets[static_cast<std::size_t>(r)]);
  }
  return total / static_cast<Scalar>(logits.rows());
}

/// Gradient of the mean cross-entropy with respect to the logits:
/// (softmax - one_hot) / rows.
template <typename Derived>
Matrix<typename Derived::Scalar> cross_entropy_grad(const Eigen::MatrixBase<Derived>& logits,
                                                    std::span<const int> targets) {
  using Scalar = typename Derived::Scalar;
  detail::check_targets(logits, targets);
  Matrix<Scalar> g = softmax(logits);
  for (Index r = 0; r < g.rows(); ++r) g(r, targets[static_cast<std::size_t>(r)]) -= Scalar(1);
  if (g.rows() > 0) g /= static_cast<Scalar>(g.rows());
  return g;
}

/// Clamp a nonnegative weight vector from below and rescale it onto the
/// probability simplex.
template <typename Scalar>
Vector<Scalar> floor_normalize(Vector<Scalar> v, Scalar floor) {
  v = v.cwiseMax(floor);
  return v / v.sum();
}

}  // namespace dssl

#endif  // DSSL_CORE_HPP_
