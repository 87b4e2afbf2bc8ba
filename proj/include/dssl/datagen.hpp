#ifndef DSSL_DATAGEN_HPP_
#define DSSL_DATAGEN_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dssl/core.hpp"
#include "dssl/random_stream.hpp"

namespace dssl {

/// Exponential long-tail: n_c = round(n0 * rho^(-c / (C - 1))).
struct LongTailProfile {
  int class_count = 10;
  int head_count = 1000;
  double imbalance_ratio = 100.0;
};

struct ImageSize {
  int height = 32;
  int width = 32;
};

/// Per-class sample counts for a profile. Throws ArgumentError when the
/// profile is invalid or leaves the tail class empty.
std::vector<int> class_counts(const LongTailProfile& profile);

/// Grayscale images in [0, 1], one flattened H*W row per sample.
struct Dataset {
  MatrixXd images;
  int height = 0;
  int width = 0;
  std::vector<int> labels;
  int class_count = 0;
  std::vector<int> counts;

  Index size() const { return static_cast<Index>(labels.size()); }
  Index pixels() const { return static_cast<Index>(height) * width; }

  /// H x W view of sample i.
  Eigen::Map<const MatrixXd> image(Index i) const {
    return Eigen::Map<const MatrixXd>(images.row(i).data(), height, width);
  }
};

/// Recount labels into `counts`; throws IndexError on labels outside [0, C).
void recount(Dataset& dataset);

/// Render one noisy sample of class `cls` among `class_count` classes.
/// Patterns cycle bar / disc / checker over the class index; the k-th class
/// of a pattern type gets the k-th angle bucket, radius or period.
MatrixXd render_sample(int cls, int class_count, ImageSize size, RandomStream& stream);

/// Long-tailed dataset whose per-class counts follow the profile exactly.
Dataset generate(const LongTailProfile& profile, ImageSize size, std::uint64_t seed);

/// Equal per-class counts (evaluation sets).
Dataset generate_balanced(int class_count, int per_class, ImageSize size, std::uint64_t seed);

// ---------------------------------------------------------------------------
// IDX files
// ---------------------------------------------------------------------------

/// Sibling labels file for an images file: "<path>.labels".
std::filesystem::path labels_path_for(const std::filesystem::path& images_path);

/// Images: magic 00 00 0D 03, big-endian u32 dims N, H, W, big-endian float32
/// payload. Labels: magic 00 00 08 01, big-endian u32 N, one byte per label.
void write_idx(const std::filesystem::path& images_path, const Dataset& dataset);

/// Inverse of write_idx. When `class_count` is not given it is inferred as
/// max(label) + 1. Throws FormatError on bad magic, dims or truncation.
Dataset read_idx(const std::filesystem::path& images_path,
                 std::optional<int> class_count = std::nullopt);

// ---------------------------------------------------------------------------
// Labeled / unlabeled split
// ---------------------------------------------------------------------------

enum class SplitMode { kStratified, kGlobal };

struct Split {
  std::vector<Index> labeled;
  std::vector<Index> unlabeled;
};

/// Stratified: per class, max(1, round(fraction * n_c)) samples drawn
/// uniformly without replacement. Global: round(fraction * N) drawn over the
/// whole set, then any class left without a labeled sample receives one.
/// Both index lists come back sorted.
Split stratified_split(const Dataset& dataset, double label_fraction, std::uint64_t seed,
                       SplitMode mode = SplitMode::kStratified);

/// Per-class label counts over a subset of indices.
std::vector<int> subset_counts(const Dataset& dataset, const std::vector<Index>& indices);

std::string to_string(SplitMode mode);
SplitMode split_mode_from_string(const std::string& s);

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

/// JSON record of how a dataset pair on disk was produced. Relative file
/// paths are resolved against the manifest's directory.
struct DatasetManifest {
  LongTailProfile profile;
  ImageSize image_size;
  int test_per_class = 200;
  std::uint64_t seed = 0;
  double label_fraction = 0.1;
  SplitMode split_mode = SplitMode::kStratified;
  std::filesystem::path train_images;
  std::filesystem::path test_images;
};

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
/// Throws ConfigError when the file is missing or malformed.
DatasetManifest read_manifest(const std::filesystem::path& path);

}  // namespace dssl

#endif  // DSSL_DATAGEN_HPP_
