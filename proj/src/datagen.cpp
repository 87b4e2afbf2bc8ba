#include "dssl/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dssl {

namespace {

// Stream roots for the generator and splitter.
constexpr std::uint64_t kRenderRoot = 0x11;
constexpr std::uint64_t kBalancedRoot = 0x12;
constexpr std::uint64_t kSplitRoot = 0x13;

constexpr double kNoiseSigma = 0.1;
constexpr double kMaxShift = 0.2;
// Per-sample size jitter, standing in for varying ground sampling distance.
constexpr double kScaleJitter = 0.2;
constexpr double kBackground = 0.1;
constexpr double kForeground = 0.9;

enum class Pattern { kBar = 0, kDisc = 1, kChecker = 2 };

// Number of classes sharing pattern p when patterns cycle over C classes.
int variants_of(int p, int class_count) { return (class_count - p + 2) / 3; }

}  // namespace

std::vector<int> class_counts(const LongTailProfile& profile) {
  if (profile.class_count < 2) throw ArgumentError("profile: class_count must be >= 2");
  if (profile.head_count < profile.class_count) {
    throw ArgumentError("profile: head_count must be >= class_count");
  }
  if (!(profile.imbalance_ratio >= 1.0) || !std::isfinite(profile.imbalance_ratio)) {
    throw ArgumentError("profile: imbalance_ratio must be a finite value >= 1");
  }
  const int c_max = profile.class_count - 1;
  std::vector<int> counts(static_cast<std::size_t>(profile.class_count));
  for (int c = 0; c <= c_max; ++c) {
    const double n = profile.head_count *
                     std::pow(profile.imbalance_ratio, -static_cast<double>(c) / c_max);
    counts[static_cast<std::size_t>(c)] = static_cast<int>(std::lround(n));
  }
  if (counts.back() < 1) {
    throw ArgumentError("profile: tail class would have no samples (head_count " +
                        std::to_string(profile.head_count) + ", ratio " +
                        std::to_string(profile.imbalance_ratio) + ")");
  }
  return counts;
}

void recount(Dataset& dataset) {
  dataset.counts.assign(static_cast<std::size_t>(dataset.class_count), 0);
  for (int y : dataset.labels) {
    if (y < 0 || y >= dataset.class_count) {
      throw IndexError("dataset label " + std::to_string(y) + " outside [0, " +
                       std::to_string(dataset.class_count) + ")");
    }
    ++dataset.counts[static_cast<std::size_t>(y)];
  }
}

MatrixXd render_sample(int cls, int class_count, ImageSize size, RandomStream& stream) {
  const auto pattern = static_cast<Pattern>(cls % 3);
  const int variant = cls / 3;
  const int variants = variants_of(cls % 3, class_count);
  const double side = std::min(size.height, size.width);
  const double cx = 0.5 * (size.width - 1);
  const double cy = 0.5 * (size.height - 1);

  // Angle bucket: bars get one of `variants` orientations evenly spaced over
  // [0, 90] degrees so that no two bar classes are mirror images of each
  // other (hflip maps theta to 180 - theta). Jitter is a sixth of the bucket
  // spacing, leaving room for +-10 degrees of rotation augmentation.
  const double spacing = variants > 1 ? 90.0 / (variants - 1) : 90.0;
  const double jitter = spacing / 6.0;
  const double center = pattern == Pattern::kBar ? variant * spacing : 0.0;
  const double angle = (center + stream.uniform(-jitter, jitter)) * std::numbers::pi / 180.0;
  const double tx = stream.uniform(-kMaxShift, kMaxShift) * size.width;
  const double ty = stream.uniform(-kMaxShift, kMaxShift) * size.height;
  const double gsd = stream.uniform(1.0 - kScaleJitter, 1.0 + kScaleJitter);
  const double ca = std::cos(angle);
  const double sa = std::sin(angle);

  // Radii and checker cell sizes double per variant. Size jitter and
  // augmentation only let neighbouring variants meet at the extremes of
  // both ranges.
  const double radius = gsd * side * 0.08 * std::pow(2.0, variant);
  const double period = gsd * side * 0.1 * std::pow(2.0, variant);
  const double bar_half_width = gsd * 0.12 * side;
  const double bar_half_length = gsd * 0.4 * side;
  const double patch_half = gsd * 0.35 * side;

  MatrixXd img(size.height, size.width);
  for (int y = 0; y < size.height; ++y) {
    for (int x = 0; x < size.width; ++x) {
      const double px = x - cx - tx;
      const double py = y - cy - ty;
      const double u = ca * px + sa * py;
      const double v = -sa * px + ca * py;
      bool on = false;
      switch (pattern) {
        case Pattern::kBar:
          on = std::abs(v) < bar_half_width && std::abs(u) < bar_half_length;
          break;
        case Pattern::kDisc:
          on = u * u + v * v < radius * radius;
          break;
        case Pattern::kChecker:
          if (std::abs(u) < patch_half && std::abs(v) < patch_half) {
            const auto iu = static_cast<long>(std::floor((u + patch_half) / period));
            const auto iv = static_cast<long>(std::floor((v + patch_half) / period));
            on = ((iu + iv) & 1L) == 0;
          }
          break;
      }
      const double value = (on ? kForeground : kBackground) + kNoiseSigma * stream.normal();
      img(y, x) = std::clamp(value, 0.0, 1.0);
    }
  }
  return img;
}

namespace {

Dataset render_counts(const std::vector<int>& counts, ImageSize size, std::uint64_t seed,
                      std::uint64_t root) {
  if (size.height < 8 || size.width < 8) throw ArgumentError("image size must be at least 8x8");
  Dataset ds;
  ds.height = size.height;
  ds.width = size.width;
  ds.class_count = static_cast<int>(counts.size());
  Index total = 0;
  for (int n : counts) total += n;
  ds.images.resize(total, ds.pixels());
  ds.labels.reserve(static_cast<std::size_t>(total));
  const RandomStream base(seed, {root});
  Index row = 0;
  for (int c = 0; c < ds.class_count; ++c) {
    for (int i = 0; i < counts[static_cast<std::size_t>(c)]; ++i) {
      RandomStream s = base.child({static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(i)});
      const MatrixXd img = render_sample(c, ds.class_count, size, s);
      ds.images.row(row++) = Eigen::Map<const RowVectorXd>(img.data(), img.size());
      ds.labels.push_back(c);
    }
  }
  ds.counts = counts;
  return ds;
}

}  // namespace

Dataset generate(const LongTailProfile& profile, ImageSize size, std::uint64_t seed) {
  return render_counts(class_counts(profile), size, seed, kRenderRoot);
}

Dataset generate_balanced(int class_count, int per_class, ImageSize size, std::uint64_t seed) {
  if (class_count < 2) throw ArgumentError("balanced set: class_count must be >= 2");
  if (per_class < 1) throw ArgumentError("balanced set: per_class must be >= 1");
  return render_counts(std::vector<int>(static_cast<std::size_t>(class_count), per_class), size,
                       seed, kBalancedRoot);
}

// ---------------------------------------------------------------------------
// Split
// ---------------------------------------------------------------------------

namespace {

// First k entries of `pool` become a uniform sample without replacement.
void partial_shuffle(std::vector<Index>& pool, std::size_t k, RandomStream& stream) {
  for (std::size_t i = 0; i < k && i + 1 < pool.size(); ++i) {
    const auto j = i + static_cast<std::size_t>(stream.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
}

}  // namespace

Split stratified_split(const Dataset& dataset, double label_fraction, std::uint64_t seed,
                       SplitMode mode) {
  if (!(label_fraction > 0.0 && label_fraction <= 1.0)) {
    throw ArgumentError("label_fraction must be in (0, 1], got " + std::to_string(label_fraction));
  }
  if (dataset.size() == 0) throw ArgumentError("split: dataset is empty");
  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(dataset.class_count));
  for (Index i = 0; i < dataset.size(); ++i) {
    by_class[static_cast<std::size_t>(dataset.labels[static_cast<std::size_t>(i)])].push_back(i);
  }
  for (int c = 0; c < dataset.class_count; ++c) {
    if (by_class[static_cast<std::size_t>(c)].empty()) {
      throw ArgumentError("split: class " + std::to_string(c) + " has no samples");
    }
  }

  std::vector<char> is_labeled(static_cast<std::size_t>(dataset.size()), 0);
  const RandomStream base(seed, {kSplitRoot, static_cast<std::uint64_t>(mode)});
  if (mode == SplitMode::kStratified) {
    for (int c = 0; c < dataset.class_count; ++c) {
      auto& pool = by_class[static_cast<std::size_t>(c)];
      const auto want = std::max<long>(1, std::lround(label_fraction * static_cast<double>(pool.size())));
      RandomStream s = base.child(static_cast<std::uint64_t>(c));
      partial_shuffle(pool, static_cast<std::size_t>(want), s);
      for (long i = 0; i < want; ++i) is_labeled[static_cast<std::size_t>(pool[static_cast<std::size_t>(i)])] = 1;
    }
  } else {
    std::vector<Index> pool(static_cast<std::size_t>(dataset.size()));
    for (Index i = 0; i < dataset.size(); ++i) pool[static_cast<std::size_t>(i)] = i;
    const auto want = static_cast<std::size_t>(
        std::lround(label_fraction * static_cast<double>(dataset.size())));
    RandomStream s = base.child(0);
    partial_shuffle(pool, want, s);
    for (std::size_t i = 0; i < want; ++i) is_labeled[static_cast<std::size_t>(pool[i])] = 1;
    for (int c = 0; c < dataset.class_count; ++c) {
      auto& members = by_class[static_cast<std::size_t>(c)];
      const bool covered = std::any_of(members.begin(), members.end(), [&](Index i) {
        return is_labeled[static_cast<std::size_t>(i)] != 0;
      });
      if (!covered) {
        RandomStream fill = base.child({1, static_cast<std::uint64_t>(c)});
        is_labeled[static_cast<std::size_t>(members[fill.below(members.size())])] = 1;
      }
    }
  }

  Split split;
  for (Index i = 0; i < dataset.size(); ++i) {
    (is_labeled[static_cast<std::size_t>(i)] ? split.labeled : split.unlabeled).push_back(i);
  }
  return split;
}

std::vector<int> subset_counts(const Dataset& dataset, const std::vector<Index>& indices) {
  std::vector<int> counts(static_cast<std::size_t>(dataset.class_count), 0);
  for (Index i : indices) ++counts[static_cast<std::size_t>(dataset.labels[static_cast<std::size_t>(i)])];
  return counts;
}

std::string to_string(SplitMode mode) {
  return mode == SplitMode::kStratified ? "stratified" : "global";
}

SplitMode split_mode_from_string(const std::string& s) {
  if (s == "stratified") return SplitMode::kStratified;
  if (s == "global") return SplitMode::kGlobal;
  throw ArgumentError("unknown split mode '" + s + "' (expected stratified|global)");
}

}  // namespace dssl
