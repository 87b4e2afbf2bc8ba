#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "dssl/mlp.hpp"

namespace dssl {

namespace {

constexpr char kMagic[8] = {'D', 'S', 'S', 'L', 'C', 'K', 'P', 'T'};

void put_le64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<unsigned char>(p[i])} << (8 * i);
  return v;
}

}  // namespace

void SgdConfig::validate() const {
  auto fail = [](const char* field, const std::string& why) {
    throw ConfigError(std::string("sgd.") + field + ": " + why);
  };
  if (!(learning_rate > 0.0)) fail("learning_rate", "must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum", "must be in [0, 1)");
  if (!(weight_decay >= 0.0)) fail("weight_decay", "must be >= 0");
  if (epochs < 0) fail("epochs", "must be >= 0");
  if (batch_size_labeled < 1) fail("batch_size_labeled", "must be >= 1");
  if (unlabeled_ratio < 0) fail("unlabeled_ratio", "must be >= 0");
}

void save_checkpoint(const std::filesystem::path& path, const Mlp<double>& model,
                     const std::string& metadata_json) {
  nlohmann::json header;
  header["format"] = "dssl-mlp";
  header["version"] = 1;
  header["layer_sizes"] = model.layer_sizes();
  header["metadata"] = nlohmann::json::parse(metadata_json);
  const std::string text = header.dump();

  std::string blob(kMagic, sizeof kMagic);
  put_le64(blob, text.size());
  blob += text;
  auto append = [&blob](const double* data, Index n) {
    for (Index i = 0; i < n; ++i) put_le64(blob, std::bit_cast<std::uint64_t>(data[i]));
  };
  for (const auto& layer : model.layers()) {
    append(layer.weight.data(), layer.weight.size());
    append(layer.bias.data(), layer.bias.size());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

Mlp<double> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  const std::string blob{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (blob.size() < 16 || std::memcmp(blob.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError("'" + path.string() + "': not a checkpoint");
  }
  const std::uint64_t header_len = get_le64(blob.data() + 8);
  if (blob.size() < 16 + header_len) throw FormatError("'" + path.string() + "': truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path.string() + "': bad header: " + e.what());
  }
  const auto sizes = header.at("layer_sizes").get<std::vector<int>>();
  Mlp<double> model = Mlp<double>::zeros(sizes);

  std::size_t offset = 16 + header_len;
  auto read = [&](double* data, Index n) {
    if (blob.size() < offset + 8 * static_cast<std::size_t>(n)) {
      throw FormatError("'" + path.string() + "': truncated parameter payload");
    }
    for (Index i = 0; i < n; ++i, offset += 8) {
      data[i] = std::bit_cast<double>(get_le64(blob.data() + offset));
    }
  };
  for (auto& layer : model.layers()) {
    read(layer.weight.data(), layer.weight.size());
    read(layer.bias.data(), layer.bias.size());
  }
  if (offset != blob.size()) throw FormatError("'" + path.string() + "': trailing bytes");
  return model;
}

}  // namespace dssl
