#include "spectree/serialize.hpp"

#include <charconv>
#include <cmath>
#include <ostream>

namespace spectree {

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

nlohmann::json tree_to_json(const TokenTree& tree) {
  nlohmann::json out = nlohmann::json::array();
  for (const TreeNode& n : tree.nodes()) {
    out.push_back({{"id", n.id},
                   {"parent", n.parent},
                   {"token", n.token},
                   {"sibling_index", n.sibling_index},
                   {"depth", n.depth},
                   {"value", n.value},
                   {"draft_prob", n.draft_prob},
                   {"sampling_prob", n.sampling_prob}});
  }
  return out;
}

void write_trace_jsonl(std::ostream& os, const VerifyResult& result) {
  for (const BranchTrial& t : result.trace) {
    const nlohmann::json line = {{"node", t.node},
                                 {"uniform", t.uniform},
                                 {"draft_prob", t.draft_prob},
                                 {"accept_prob", t.accept_prob},
                                 {"accepted", t.accepted}};
    os << line.dump() << '\n';
  }
  const nlohmann::json bonus = {{"bonus_token", result.bonus_token}, {"from_residual", result.bonus_from_residual}};
  os << bonus.dump() << '\n';
}

nlohmann::json metrics_to_json(const RunMetrics& metrics) {
  nlohmann::json steps = nlohmann::json::array();
  for (const StepMetrics& s : metrics.steps) {
    steps.push_back({{"tree_size", s.tree_size},
                     {"tree_depth", s.tree_depth},
                     {"accepted", s.accepted},
                     {"modeled_latency", s.modeled_latency}});
  }
  return {{"accepted_includes_bonus", true},
          {"steps_count", metrics.steps.size()},
          {"mean_accepted", metrics.mean_accepted},
          {"mean_tree_size", metrics.mean_tree_size},
          {"tokens_per_modeled_second", metrics.tokens_per_modeled_second},
          {"steps", std::move(steps)}};
}

void write_steps_csv(std::ostream& os, const RunMetrics& metrics) {
  os << "step,tree_size,tree_depth,accepted,modeled_latency\n";
  for (std::size_t i = 0; i < metrics.steps.size(); ++i) {
    const StepMetrics& s = metrics.steps[i];
    os << i << ',' << s.tree_size << ',' << s.tree_depth << ',' << s.accepted << ','
       << format_number(s.modeled_latency) << '\n';
  }
}

}  // namespace spectree
