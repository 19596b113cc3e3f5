#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace spectree::cli {

struct SuiteOptions {
  std::optional<std::size_t> instances;  // suite default when unset
  std::optional<std::size_t> trials;
  std::uint64_t seed = 0;
};

struct SuiteReport {
  std::string suite;
  bool passed = false;
  nlohmann::json details;  // instance spec, expected vs observed, tolerances
};

/// unbiasedness, optimality, expectation, threshold-equivalence.
const std::vector<std::string>& suite_names();

/// Throws ConfigError for an unknown suite name.
SuiteReport run_suite(const std::string& name, const SuiteOptions& options);

}  // namespace spectree::cli
