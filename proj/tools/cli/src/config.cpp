#include "spectree_cli/config.hpp"

#include <fstream>
#include <set>

namespace spectree::cli {

namespace {

using nlohmann::json;

void reject_unknown(const json& section, const std::string& name, const std::set<std::string>& allowed) {
  if (!section.is_object()) throw ConfigError("'" + name + "' must be an object");
  for (const auto& [key, value] : section.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + name + "." + key + "'");
  }
}

template <typename T>
void read(const json& section, const std::string& name, const char* key, T& out) {
  if (!section.contains(key)) return;
  const json& v = section.at(key);
  const std::string field = name + "." + key;
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError("'" + field + "' must be a boolean");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<long long>() < 0)) {
      throw ConfigError("'" + field + "' must be a non-negative integer");
    }
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError("'" + field + "' must be a number");
  } else {
    if (!v.is_string()) throw ConfigError("'" + field + "' must be a string");
  }
  out = v.get<T>();
}

}  // namespace

RunConfig default_run_config() {
  RunConfig c;
  c.generation.draft_temp = c.models.draft_temp;
  c.generation.target_temp = c.models.target_temp;
  return c;
}

OutputFormat parse_format(const std::string& name) {
  if (name == "csv") return OutputFormat::kCsv;
  if (name == "json") return OutputFormat::kJson;
  throw ConfigError("format must be 'csv' or 'json', got '" + name + "'");
}

RunConfig parse_run_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(doc, "config", {"models", "generation", "costs", "output"});
  if (!doc.contains("models")) throw ConfigError("missing required section 'models'");

  RunConfig c = default_run_config();

  const json& m = doc.at("models");
  reject_unknown(m, "models",
                 {"vocab_size", "markov_order", "target_seed", "draft_seed", "noise_sigma", "concentration",
                  "draft_temp", "target_temp"});
  read(m, "models", "vocab_size", c.models.vocab_size);
  read(m, "models", "markov_order", c.models.markov_order);
  read(m, "models", "target_seed", c.models.target_seed);
  read(m, "models", "draft_seed", c.models.draft_seed);
  read(m, "models", "noise_sigma", c.models.noise_sigma);
  read(m, "models", "concentration", c.models.concentration);
  read(m, "models", "draft_temp", c.models.draft_temp);
  read(m, "models", "target_temp", c.models.target_temp);
  c.generation.draft_temp = c.models.draft_temp;
  c.generation.target_temp = c.models.target_temp;

  if (doc.contains("generation")) {
    const json& g = doc.at("generation");
    reject_unknown(g, "generation",
                   {"prefix_len", "gen_len", "budget", "threshold", "size_cap", "draft_temp", "target_temp", "seed",
                    "structure", "branching", "k_chains"});
    GenConfig& gen = c.generation;
    read(g, "generation", "prefix_len", gen.prefix_len);
    read(g, "generation", "gen_len", gen.gen_len);
    read(g, "generation", "size_cap", gen.size_cap);
    read(g, "generation", "draft_temp", gen.draft_temp);
    read(g, "generation", "target_temp", gen.target_temp);
    read(g, "generation", "seed", gen.seed);
    read(g, "generation", "k_chains", gen.k_chains);
    if (g.contains("threshold") && !g.at("threshold").is_null()) {
      double threshold = 0.0;
      read(g, "generation", "threshold", threshold);
      gen.threshold = threshold;
      gen.budget.reset();
    }
    if (g.contains("budget") && !g.at("budget").is_null()) {
      std::size_t budget = 0;
      read(g, "generation", "budget", budget);
      if (gen.threshold) throw ConfigError("'generation.budget' and 'generation.threshold' are mutually exclusive");
      gen.budget = budget;
    }
    if (g.contains("structure")) {
      std::string name;
      read(g, "generation", "structure", name);
      const auto s = parse_structure(name);
      if (!s) throw ConfigError("'generation.structure' must be dynamic, chain, static_tree or k_chains");
      gen.structure = *s;
    }
    if (g.contains("branching")) {
      const json& b = g.at("branching");
      if (!b.is_array()) throw ConfigError("'generation.branching' must be an array of integers");
      gen.branching.clear();
      for (const json& x : b) {
        if (!x.is_number_integer() || x.get<long long>() < 1) {
          throw ConfigError("'generation.branching' entries must be positive integers");
        }
        gen.branching.push_back(x.get<std::size_t>());
      }
    }
  }

  if (doc.contains("costs")) {
    const json& k = doc.at("costs");
    reject_unknown(k, "costs", {"draft_step", "target_step", "per_node_overhead"});
    read(k, "costs", "draft_step", c.generation.costs.draft_step);
    read(k, "costs", "target_step", c.generation.costs.target_step);
    read(k, "costs", "per_node_overhead", c.generation.costs.per_node_overhead);
  }

  if (doc.contains("output")) {
    const json& o = doc.at("output");
    reject_unknown(o, "output", {"dir", "format"});
    if (o.contains("dir")) {
      std::string dir;
      read(o, "output", "dir", dir);
      c.output.dir = dir;
    }
    if (o.contains("format")) {
      std::string format;
      read(o, "output", "format", format);
      c.output.format = parse_format(format);
    }
  }

  validate_run_config(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(doc);
}

void validate_run_config(const RunConfig& config) {
  try {
    config.models.validate();
    config.generation.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace spectree::cli
