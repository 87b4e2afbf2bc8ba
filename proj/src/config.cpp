#include "dssl/config.hpp"

#include <cmath>
#include <fstream>

namespace dssl {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

ordered_json augment_to_json(const AugmentSpec& s) {
  return {{"kind", to_string(s.kind)},
          {"rotation_degrees", s.rotation_degrees},
          {"scale_range", {s.scale_range.first, s.scale_range.second}},
          {"crop_scale_range", {s.crop_scale_range.first, s.crop_scale_range.second}},
          {"hflip_prob", s.hflip_prob}};
}

// Category check of a user value against the default value at `key`.
void check_type(const ordered_json& def, const json& value, const std::string& key) {
  auto bad = [&](const char* expected) {
    throw ConfigError(key + ": expected " + expected + ", got " + std::string(value.type_name()));
  };
  if (def.is_boolean() && !value.is_boolean()) bad("boolean");
  if (def.is_string() && !value.is_string()) bad("string");
  if (def.is_array() && !value.is_array()) bad("array");
  if (def.is_object() && !value.is_object()) bad("object");
  if (def.is_number_integer()) {
    if (!value.is_number_integer()) bad("integer");
    if (def.is_number_unsigned() && value.is_number_integer() && value.get<long long>() < 0 &&
        !value.is_number_unsigned()) {
      bad("nonnegative integer");
    }
  } else if (def.is_number_float() && !value.is_number()) {
    bad("number");
  }
  if (def.is_array()) {
    for (const auto& item : value) {
      if (!def.empty()) check_type(def.front(), item, key + "[]");
    }
  }
}

void merge(ordered_json& target, const json& user, const std::string& prefix) {
  if (!user.is_object()) throw ConfigError((prefix.empty() ? "config" : prefix) + ": expected object");
  for (const auto& [k, v] : user.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (!target.contains(k)) throw ConfigError(key + ": unknown config key");
    ordered_json& slot = target[k];
    check_type(slot, v, key);
    if (slot.is_object()) {
      merge(slot, v, key);
    } else {
      slot = v;
    }
  }
}

void apply_override(ordered_json& root, const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw UsageError("override '" + text + "': expected dotted.key=value");
  }
  const std::string key = text.substr(0, eq);
  const std::string raw = text.substr(eq + 1);
  ordered_json* node = &root;
  std::size_t pos = 0;
  while (true) {
    const auto dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (!node->is_object() || !node->contains(part)) {
      throw UsageError("override '" + key + "': unknown config key");
    }
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  check_type(*node, value, key);
  if (node->is_object()) {
    merge(*node, value, key);
  } else {
    *node = value;
  }
}

template <typename T>
T get(const ordered_json& j, const char* section, const char* field) {
  try {
    return j.at(section).at(field).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(section) + "." + field + ": " + e.what());
  }
}

std::pair<double, double> get_range(const ordered_json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(key + ": expected [lo, hi]");
  return {j[0].get<double>(), j[1].get<double>()};
}

AugmentSpec augment_from_json(const ordered_json& j, const std::string& key) {
  AugmentSpec s;
  try {
    s.kind = augment_kind_from_string(j.at("kind").get<std::string>());
  } catch (const ArgumentError& e) {
    throw ConfigError(key + ".kind: " + e.what());
  }
  s.rotation_degrees = j.at("rotation_degrees").get<double>();
  s.scale_range = get_range(j.at("scale_range"), key + ".scale_range");
  s.crop_scale_range = get_range(j.at("crop_scale_range"), key + ".crop_scale_range");
  s.hflip_prob = j.at("hflip_prob").get<double>();
  return s;
}

ExperimentConfig from_json(const ordered_json& j) {
  ExperimentConfig c;
  c.master_seed = j.at("master_seed").get<std::uint64_t>();
  c.data.profile.class_count = get<int>(j, "data", "class_count");
  c.data.profile.head_count = get<int>(j, "data", "head_count");
  c.data.profile.imbalance_ratio = get<double>(j, "data", "imbalance_ratio");
  c.data.image_size.height = get<int>(j, "data", "height");
  c.data.image_size.width = get<int>(j, "data", "width");
  c.data.test_per_class = get<int>(j, "data", "test_per_class");
  c.data.manifest = get<std::string>(j, "data", "manifest");
  c.split.label_fraction = get<double>(j, "split", "label_fraction");
  try {
    c.split.mode = split_mode_from_string(get<std::string>(j, "split", "mode"));
    c.prior_source = prior_source_from_string(get<std::string>(j, "debias", "prior_source"));
    c.margin_view = margin_view_from_string(get<std::string>(j, "debias", "margin_view"));
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  c.weak = augment_from_json(j.at("augment").at("weak"), "augment.weak");
  c.strong = augment_from_json(j.at("augment").at("strong"), "augment.strong");
  c.hidden_layers = get<std::vector<int>>(j, "model", "hidden_layers");
  c.sgd.learning_rate = get<double>(j, "sgd", "learning_rate");
  c.sgd.momentum = get<double>(j, "sgd", "momentum");
  c.sgd.weight_decay = get<double>(j, "sgd", "weight_decay");
  c.sgd.epochs = get<int>(j, "sgd", "epochs");
  c.sgd.batch_size_labeled = get<int>(j, "sgd", "batch_size_labeled");
  c.sgd.unlabeled_ratio = get<int>(j, "sgd", "unlabeled_ratio");
  c.debias.lambda_debias = get<double>(j, "debias", "lambda_debias");
  c.debias.lambda_margin = get<double>(j, "debias", "lambda_margin");
  c.lambda_u = get<double>(j, "debias", "lambda_u");
  c.debias.tau = get<double>(j, "debias", "tau");
  c.debias.momentum = get<double>(j, "debias", "momentum");
  c.debias.tau_la = get<double>(j, "debias", "tau_la");
  c.toggles.debias_on = get<bool>(j, "toggles", "debias_on");
  c.toggles.margin_on = get<bool>(j, "toggles", "margin_on");
  c.toggles.logit_adjust_on = get<bool>(j, "toggles", "logit_adjust_on");
  c.workers = j.at("workers").get<int>();
  c.output_dir = get<std::string>(j, "output", "dir");
  c.run_id = get<std::string>(j, "output", "run_id");
  c.seeds = get<std::vector<std::uint64_t>>(j, "experiments", "seeds");
  c.sweep_fractions = get<std::vector<double>>(j, "experiments", "sweep_fractions");
  return c;
}

}  // namespace

ordered_json to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["master_seed"] = c.master_seed;
  j["data"] = {{"class_count", c.data.profile.class_count},
               {"head_count", c.data.profile.head_count},
               {"imbalance_ratio", c.data.profile.imbalance_ratio},
               {"height", c.data.image_size.height},
               {"width", c.data.image_size.width},
               {"test_per_class", c.data.test_per_class},
               {"manifest", c.data.manifest}};
  j["split"] = {{"label_fraction", c.split.label_fraction}, {"mode", to_string(c.split.mode)}};
  j["augment"] = {{"weak", augment_to_json(c.weak)}, {"strong", augment_to_json(c.strong)}};
  j["model"] = {{"hidden_layers", c.hidden_layers}};
  j["sgd"] = {{"learning_rate", c.sgd.learning_rate},
              {"momentum", c.sgd.momentum},
              {"weight_decay", c.sgd.weight_decay},
              {"epochs", c.sgd.epochs},
              {"batch_size_labeled", c.sgd.batch_size_labeled},
              {"unlabeled_ratio", c.sgd.unlabeled_ratio}};
  j["debias"] = {{"lambda_debias", c.debias.lambda_debias},
                 {"lambda_margin", c.debias.lambda_margin},
                 {"lambda_u", c.lambda_u},
                 {"tau", c.debias.tau},
                 {"momentum", c.debias.momentum},
                 {"tau_la", c.debias.tau_la},
                 {"prior_source", to_string(c.prior_source)},
                 {"margin_view", to_string(c.margin_view)}};
  j["toggles"] = {{"debias_on", c.toggles.debias_on},
                  {"margin_on", c.toggles.margin_on},
                  {"logit_adjust_on", c.toggles.logit_adjust_on}};
  j["workers"] = c.workers;
  j["output"] = {{"dir", c.output_dir}, {"run_id", c.run_id}};
  j["experiments"] = {{"seeds", c.seeds}, {"sweep_fractions", c.sweep_fractions}};
  return j;
}

ordered_json default_config_json() { return to_json(ExperimentConfig{}); }

ExperimentConfig parse_config_json(const json& user, const std::vector<std::string>& overrides) {
  ordered_json resolved = default_config_json();
  merge(resolved, user, "");
  for (const auto& o : overrides) apply_override(resolved, o);
  ExperimentConfig c;
  try {
    c = from_json(resolved);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig parse_config(const std::filesystem::path& path,
                              const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: '" + path.string() + "'");
  json user;
  try {
    user = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  if (!user.is_object()) throw ConfigError("config '" + path.string() + "': expected a JSON object");
  return parse_config_json(user, overrides);
}

void write_resolved_config(const std::filesystem::path& path, const ExperimentConfig& config) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << to_json(config).dump(2) << '\n';
}

}  // namespace dssl
