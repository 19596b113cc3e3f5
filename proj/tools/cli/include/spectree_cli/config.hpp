#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "spectree/engine.hpp"
#include "spectree/lm.hpp"

namespace spectree::cli {

/// A config file or flag combination that cannot be used (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OutputFormat { kCsv, kJson };

struct OutputSpec {
  std::optional<std::filesystem::path> dir;
  OutputFormat format = OutputFormat::kCsv;
};

struct RunConfig {
  ModelPairSpec models;
  GenConfig generation;
  OutputSpec output;
};

/// Parses a run config document:
///   {"models": {...}, "generation": {...}, "costs": {...}, "output": {...}}
/// `models` is required; the other sections are optional. Unknown keys, wrong
/// types and out-of-range values raise ConfigError naming the offending field.
/// Generation temperatures default to the model section's temperatures.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

/// Defaults used when no config file is given.
RunConfig default_run_config();

/// Runs the domain validators and rethrows their failures as ConfigError.
void validate_run_config(const RunConfig& config);

OutputFormat parse_format(const std::string& name);

}  // namespace spectree::cli
