#pragma once

#include <iosfwd>
#include <string>

#include <nlohmann/json.hpp>

#include "spectree/engine.hpp"
#include "spectree/token_tree.hpp"
#include "spectree/verify.hpp"

namespace spectree {

/// Shortest round-trip decimal form of `x` ('.' separator); "nan", "inf", "-inf"
/// for non-finite values.
std::string format_number(double x);

/// JSON array of {id, parent, token, sibling_index, depth, value, draft_prob,
/// sampling_prob}; parent is -1 for nodes hanging off the root position.
nlohmann::json tree_to_json(const TokenTree& tree);

/// Writes one JSON object per branch test, then one for the bonus token.
void write_trace_jsonl(std::ostream& os, const VerifyResult& result);

/// Aggregates plus per-step records; `accepted` counts include the bonus token.
nlohmann::json metrics_to_json(const RunMetrics& metrics);

/// CSV with header step,tree_size,tree_depth,accepted,modeled_latency.
void write_steps_csv(std::ostream& os, const RunMetrics& metrics);

}  // namespace spectree
