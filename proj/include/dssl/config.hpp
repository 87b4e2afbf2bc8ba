#ifndef DSSL_CONFIG_HPP_
#define DSSL_CONFIG_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dssl/trainer.hpp"

namespace dssl {

/// Every field with its default value; the config schema.
nlohmann::ordered_json default_config_json();

nlohmann::ordered_json to_json(const ExperimentConfig& config);

/// Merge `user` over the defaults, apply "dotted.key=value" overrides,
/// convert and validate. Unknown keys in `user` and type mismatches raise
/// ConfigError; unknown override keys raise UsageError. Values in overrides
/// are parsed as JSON, falling back to a plain string.
ExperimentConfig parse_config_json(const nlohmann::json& user,
                                   const std::vector<std::string>& overrides = {});

/// Reads a JSON object from `path`; a missing file raises ConfigError.
ExperimentConfig parse_config(const std::filesystem::path& path,
                              const std::vector<std::string>& overrides = {});

/// Writes the fully resolved config (every default spelled out).
void write_resolved_config(const std::filesystem::path& path, const ExperimentConfig& config);

}  // namespace dssl

#endif  // DSSL_CONFIG_HPP_
