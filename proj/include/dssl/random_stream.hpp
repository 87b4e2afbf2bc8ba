#ifndef DSSL_RANDOM_STREAM_HPP_
#define DSSL_RANDOM_STREAM_HPP_

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace dssl {

/// Counter-based random stream keyed by (master_seed, path).
///
/// The n-th draw of a stream is a pure function of (master_seed, path, n),
/// so any consumer that addresses its randomness by path (epoch, sample,
/// transform, ...) gets identical values regardless of evaluation order or
/// thread count. Distinct paths hash to unrelated keys.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t master_seed, std::vector<std::uint64_t> path = {});

  /// Stream whose path is this path extended by `subkey`. Draw position of
  /// the parent does not influence the child.
  RandomStream child(std::uint64_t subkey) const;
  RandomStream child(std::initializer_list<std::uint64_t> subkeys) const;

  std::uint64_t master_seed() const { return master_seed_; }
  const std::vector<std::uint64_t>& path() const { return path_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform double in [0, 1) with 53 random bits.
  double next_unit();
  /// Uniform in [lo, hi); returns lo when lo == hi. Throws ArgumentError when lo > hi.
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (consumes two draws).
  double normal();

 private:
  std::uint64_t master_seed_;
  std::vector<std::uint64_t> path_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace dssl

#endif  // DSSL_RANDOM_STREAM_HPP_
