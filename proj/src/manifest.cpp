#include <fstream>

#include <nlohmann/json.hpp>

#include "dssl/datagen.hpp"

namespace dssl {

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["profile"] = {{"class_count", m.profile.class_count},
                  {"head_count", m.profile.head_count},
                  {"imbalance_ratio", m.profile.imbalance_ratio}};
  j["image_size"] = {{"height", m.image_size.height}, {"width", m.image_size.width}};
  j["test_per_class"] = m.test_per_class;
  j["seed"] = m.seed;
  j["split"] = {{"label_fraction", m.label_fraction}, {"mode", to_string(m.split_mode)}};
  j["train"] = {{"images", m.train_images.generic_string()},
                {"labels", labels_path_for(m.train_images).generic_string()}};
  j["test"] = {{"images", m.test_images.generic_string()},
               {"labels", labels_path_for(m.test_images).generic_string()}};
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("dataset manifest not found: '" + path.string() + "'");
  DatasetManifest m;
  try {
    const auto j = nlohmann::json::parse(in);
    m.profile.class_count = j.at("profile").at("class_count").get<int>();
    m.profile.head_count = j.at("profile").at("head_count").get<int>();
    m.profile.imbalance_ratio = j.at("profile").at("imbalance_ratio").get<double>();
    m.image_size.height = j.at("image_size").at("height").get<int>();
    m.image_size.width = j.at("image_size").at("width").get<int>();
    m.test_per_class = j.at("test_per_class").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.label_fraction = j.at("split").at("label_fraction").get<double>();
    m.split_mode = split_mode_from_string(j.at("split").at("mode").get<std::string>());
    const auto base = path.parent_path();
    auto resolve = [&base](const std::string& p) {
      const std::filesystem::path fp(p);
      return fp.is_absolute() ? fp : base / fp;
    };
    m.train_images = resolve(j.at("train").at("images").get<std::string>());
    m.test_images = resolve(j.at("test").at("images").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed manifest '" + path.string() + "': " + e.what());
  } catch (const ArgumentError& e) {
    throw ConfigError("malformed manifest '" + path.string() + "': " + e.what());
  }
  return m;
}

}  // namespace dssl
