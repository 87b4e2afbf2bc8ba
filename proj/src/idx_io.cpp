#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dssl/datagen.hpp"

namespace dssl {

namespace {

constexpr std::array<unsigned char, 4> kImagesMagic{0x00, 0x00, 0x0D, 0x03};
constexpr std::array<unsigned char, 4> kLabelsMagic{0x00, 0x00, 0x08, 0x01};

void put_be32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>(v & 0xFF));
}

std::uint32_t get_be32(const unsigned char* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

const unsigned char* bytes_of(const std::string& s) {
  return reinterpret_cast<const unsigned char*>(s.data());
}

void expect_magic(const std::string& blob, const std::array<unsigned char, 4>& magic,
                  const std::filesystem::path& path) {
  if (blob.size() < 4 || !std::equal(magic.begin(), magic.end(), bytes_of(blob))) {
    throw FormatError("'" + path.string() + "': bad IDX magic");
  }
}

}  // namespace

std::filesystem::path labels_path_for(const std::filesystem::path& images_path) {
  std::filesystem::path p = images_path;
  p += ".labels";
  return p;
}

void write_idx(const std::filesystem::path& images_path, const Dataset& dataset) {
  if (dataset.class_count > 256) throw ArgumentError("IDX labels are bytes: at most 256 classes");
  const auto n = static_cast<std::uint32_t>(dataset.size());

  std::string images;
  images.reserve(16 + static_cast<std::size_t>(dataset.images.size()) * 4);
  images.append(reinterpret_cast<const char*>(kImagesMagic.data()), 4);
  put_be32(images, n);
  put_be32(images, static_cast<std::uint32_t>(dataset.height));
  put_be32(images, static_cast<std::uint32_t>(dataset.width));
  const double* data = dataset.images.data();
  for (Index i = 0; i < dataset.images.size(); ++i) {
    put_be32(images, std::bit_cast<std::uint32_t>(static_cast<float>(data[i])));
  }

  std::string labels;
  labels.reserve(8 + dataset.labels.size());
  labels.append(reinterpret_cast<const char*>(kLabelsMagic.data()), 4);
  put_be32(labels, n);
  for (int y : dataset.labels) labels.push_back(static_cast<char>(static_cast<unsigned char>(y)));

  dump(images_path, images);
  dump(labels_path_for(images_path), labels);
}

Dataset read_idx(const std::filesystem::path& images_path, std::optional<int> class_count) {
  const std::string images = slurp(images_path);
  expect_magic(images, kImagesMagic, images_path);
  if (images.size() < 16) throw FormatError("'" + images_path.string() + "': truncated header");
  const unsigned char* p = bytes_of(images);
  const std::uint32_t n = get_be32(p + 4);
  const std::uint32_t h = get_be32(p + 8);
  const std::uint32_t w = get_be32(p + 12);
  const std::size_t values = std::size_t{n} * h * w;
  if (images.size() != 16 + values * 4) {
    throw FormatError("'" + images_path.string() + "': payload size does not match dims " +
                      std::to_string(n) + "x" + std::to_string(h) + "x" + std::to_string(w));
  }

  const auto labels_path = labels_path_for(images_path);
  const std::string labels = slurp(labels_path);
  expect_magic(labels, kLabelsMagic, labels_path);
  if (labels.size() < 8) throw FormatError("'" + labels_path.string() + "': truncated header");
  if (get_be32(bytes_of(labels) + 4) != n) {
    throw FormatError("'" + labels_path.string() + "': label count does not match image count");
  }
  if (labels.size() != 8 + std::size_t{n}) {
    throw FormatError("'" + labels_path.string() + "': payload size does not match dims");
  }

  Dataset ds;
  ds.height = static_cast<int>(h);
  ds.width = static_cast<int>(w);
  ds.images.resize(n, static_cast<Index>(h) * w);
  double* out = ds.images.data();
  for (std::size_t i = 0; i < values; ++i) {
    out[i] = std::bit_cast<float>(get_be32(p + 16 + 4 * i));
  }
  ds.labels.reserve(n);
  int max_label = -1;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = bytes_of(labels)[8 + i];
    ds.labels.push_back(y);
    max_label = std::max(max_label, y);
  }
  ds.class_count = class_count.value_or(max_label + 1);
  try {
    recount(ds);
  } catch (const IndexError& e) {
    throw FormatError("'" + labels_path.string() + "': " + e.what());
  }
  return ds;
}

}  // namespace dssl
