#include "dssl/random_stream.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "dssl/core.hpp"

namespace dssl {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t absorb(std::uint64_t key, std::uint64_t subkey) {
  return mix64(key ^ mix64(subkey + kGolden) ^ 0x632BE59BD9B4E019ULL);
}

}  // namespace

RandomStream::RandomStream(std::uint64_t master_seed, std::vector<std::uint64_t> path)
    : master_seed_(master_seed), path_(std::move(path)), key_(mix64(master_seed ^ kGolden)) {
  for (std::uint64_t p : path_) key_ = absorb(key_, p);
}

RandomStream RandomStream::child(std::uint64_t subkey) const {
  RandomStream out = *this;
  out.path_.push_back(subkey);
  out.key_ = absorb(key_, subkey);
  out.counter_ = 0;
  return out;
}

RandomStream RandomStream::child(std::initializer_list<std::uint64_t> subkeys) const {
  RandomStream out = *this;
  for (std::uint64_t k : subkeys) out = out.child(k);
  return out;
}

std::uint64_t RandomStream::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double RandomStream::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::uniform(double lo, double hi) {
  if (!(lo <= hi)) {
    throw ArgumentError("uniform: lo (" + std::to_string(lo) + ") > hi (" + std::to_string(hi) +
                        ")");
  }
  const double u = next_unit();
  if (lo == hi) return lo;
  const double v = lo + (hi - lo) * u;
  return v < hi ? v : std::nextafter(hi, lo);
}

std::uint64_t RandomStream::below(std::uint64_t n) {
  if (n == 0) throw ArgumentError("below: n must be positive");
  // Lemire's nearly-divisionless rejection method.
  unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      m = static_cast<unsigned __int128>(next_u64()) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double RandomStream::normal() {
  const double u1 = 1.0 - next_unit();  // (0, 1]
  const double u2 = next_unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace dssl
