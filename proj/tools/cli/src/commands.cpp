#include "spectree_cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "spectree/mask_opt.hpp"
#include "spectree/parallel.hpp"
#include "spectree/serialize.hpp"

namespace spectree::cli {

namespace {

using nlohmann::json;

constexpr std::uint64_t kPromptStream = 0x70726f6d7074ULL;

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << content;
}

// Sends `content` to <dir>/<name> when an output directory is set, else to `out`.
void emit(const OutputSpec& output, const std::string& name, const std::string& content, std::ostream& out) {
  if (output.dir) {
    write_file(*output.dir / name, content);
  } else {
    out << content;
  }
}

std::string opt_number(std::optional<double> x) { return x ? format_number(*x) : ""; }

}  // namespace

std::vector<TokenId> make_prompt(const LanguageModel& target, std::size_t length, std::uint64_t seed) {
  return sample_sequence(target.with_temperature(1.0), length, hash_combine(seed, kPromptStream));
}

int cmd_generate(const RunConfig& config, std::ostream& out) {
  validate_run_config(config);
  const ModelPair pair = make_model_pair(config.models);
  const auto prompt = make_prompt(pair.target, config.generation.prefix_len, config.generation.seed);
  const GenerationResult result = generate(pair.target, pair.draft, prompt, config.generation);

  json metrics = metrics_to_json(result.metrics);
  metrics["tokens"] = result.tokens;
  if (config.output.dir) {
    write_file(*config.output.dir / "metrics.json", metrics.dump(2) + "\n");
    std::ostringstream csv;
    write_steps_csv(csv, result.metrics);
    write_file(*config.output.dir / "steps.csv", csv.str());
  }

  const RunMetrics& m = result.metrics;
  if (config.output.format == OutputFormat::kJson) {
    out << json{{"steps", m.steps.size()},
                {"mean_accepted", m.mean_accepted},
                {"mean_tree_size", m.mean_tree_size},
                {"tokens_per_modeled_second", m.tokens_per_modeled_second},
                {"accepted_includes_bonus", true}}
               .dump()
        << '\n';
  } else {
    out << "steps,mean_accepted,mean_tree_size,tokens_per_modeled_second\n"
        << m.steps.size() << ',' << format_number(m.mean_accepted) << ',' << format_number(m.mean_tree_size) << ','
        << format_number(m.tokens_per_modeled_second) << '\n';
  }
  return kExitOk;
}

int cmd_bench(const RunConfig& config, const BenchSweep& sweep, std::ostream& out) {
  validate_run_config(config);
  struct Cell {
    Structure structure;
    std::optional<std::size_t> budget;
    std::optional<double> threshold;
    double temp;
    double sigma;
  };
  const std::vector<double> temps = sweep.temps.empty() ? std::vector<double>{config.generation.target_temp} : sweep.temps;
  const std::vector<double> sigmas =
      sweep.sigmas.empty() ? std::vector<double>{config.models.noise_sigma} : sweep.sigmas;
  if (sweep.seeds == 0) throw ConfigError("bench: --seeds must be >= 1");

  std::vector<Cell> cells;
  for (double sigma : sigmas) {
    for (double temp : temps) {
      for (const std::string& name : sweep.structures) {
        const auto s = parse_structure(name);
        if (!s) throw ConfigError("bench: unknown structure '" + name + "'");
        for (std::size_t b : sweep.budgets) cells.push_back({*s, b, std::nullopt, temp, sigma});
        if (*s == Structure::kDynamic) {
          for (double c : sweep.thresholds) cells.push_back({*s, std::nullopt, c, temp, sigma});
        }
      }
    }
  }
  if (cells.empty()) throw ConfigError("bench: the sweep is empty");

  // Validate every cell up front so a bad combination is a usage error.
  std::vector<RunConfig> runs;
  for (const Cell& cell : cells) {
    RunConfig rc = config;
    rc.models.noise_sigma = cell.sigma;
    // The sweep varies the target temperature; the draft keeps its own.
    rc.models.target_temp = rc.generation.target_temp = cell.temp;
    rc.generation.structure = cell.structure;
    rc.generation.budget = cell.budget;
    rc.generation.threshold = cell.threshold;
    validate_run_config(rc);
    runs.push_back(rc);
  }

  struct Stats {
    double accepted = 0.0;
    double size = 0.0;
    double latency = 0.0;
  };
  std::vector<Stats> per(cells.size() * sweep.seeds);
  parallel_for(per.size(), [&](std::size_t job) {
    const RunConfig& rc = runs[job / sweep.seeds];
    const std::uint64_t s = job % sweep.seeds;
    ModelPairSpec spec = rc.models;
    spec.target_seed += s;
    spec.draft_seed += s;
    const ModelPair pair = make_model_pair(spec);
    GenConfig gen = rc.generation;
    gen.seed += s;
    const auto prompt = make_prompt(pair.target, gen.prefix_len, gen.seed);
    const RunMetrics m = generate(pair.target, pair.draft, prompt, gen).metrics;
    per[job] = {m.mean_accepted, m.mean_tree_size,
                m.tokens_per_modeled_second > 0.0 ? 1.0 / m.tokens_per_modeled_second : 0.0};
  });

  const bool as_json = config.output.format == OutputFormat::kJson;
  std::ostringstream csv;
  json rows = json::array();
  csv << "structure,budget,threshold,temp,noise_sigma,seeds,mean_accepted,mean_tree_size,latency_per_token\n";
  for (std::size_t c = 0; c < cells.size(); ++c) {
    Stats avg;
    for (std::size_t s = 0; s < sweep.seeds; ++s) {
      avg.accepted += per[c * sweep.seeds + s].accepted;
      avg.size += per[c * sweep.seeds + s].size;
      avg.latency += per[c * sweep.seeds + s].latency;
    }
    const double n = static_cast<double>(sweep.seeds);
    avg = {avg.accepted / n, avg.size / n, avg.latency / n};
    const Cell& cell = cells[c];
    csv << to_string(cell.structure) << ',' << (cell.budget ? std::to_string(*cell.budget) : "") << ','
        << opt_number(cell.threshold) << ',' << format_number(cell.temp) << ',' << format_number(cell.sigma) << ','
        << sweep.seeds << ',' << format_number(avg.accepted) << ',' << format_number(avg.size) << ','
        << format_number(avg.latency) << '\n';
    rows.push_back({{"structure", to_string(cell.structure)},
                    {"budget", cell.budget ? json(*cell.budget) : json(nullptr)},
                    {"threshold", cell.threshold ? json(*cell.threshold) : json(nullptr)},
                    {"temp", cell.temp},
                    {"noise_sigma", cell.sigma},
                    {"seeds", sweep.seeds},
                    {"mean_accepted", avg.accepted},
                    {"mean_tree_size", avg.size},
                    {"latency_per_token", avg.latency}});
  }
  if (as_json) {
    emit(config.output, "bench.json", rows.dump(2) + "\n", out);
  } else {
    emit(config.output, "bench.csv", csv.str(), out);
  }
  return kExitOk;
}

int cmd_oracle(const std::string& suite, const SuiteOptions& options, const OutputSpec& output, std::ostream& out) {
  const SuiteReport report = run_suite(suite, options);
  const json doc = {{"suite", report.suite}, {"pass", report.passed}, {"details", report.details}};
  emit(output, "oracle_" + suite + ".json", doc.dump(2) + "\n", out);
  return report.passed ? kExitOk : kExitCheckFailed;
}

int cmd_mask(const MaskParams& params, const OutputSpec& output, std::ostream& out) {
  if (params.sizes.empty() || params.prefixes.empty() || params.orders.empty()) {
    throw ConfigError("mask: sizes, prefixes and orders must be non-empty");
  }
  if (params.block == 0) throw ConfigError("mask: --block must be >= 1");
  if (params.seeds == 0) throw ConfigError("mask: --seeds must be >= 1");
  for (std::size_t n : params.sizes) {
    if (n == 0) throw ConfigError("mask: n must be >= 1");
  }
  for (const std::string& o : params.orders) {
    if (o != "original" && o != "dfs" && o != "hpd") throw ConfigError("mask: unknown order '" + o + "'");
  }
  if (params.shape != "random" && params.shape != "chain" && params.shape != "star") {
    throw ConfigError("mask: --shape must be random, chain or star");
  }

  const auto make_shape = [&](std::size_t n, std::size_t s) {
    if (params.shape == "random") return random_tree(n, hash_combine(params.seed, s));
    TreeShape shape;
    shape.parent.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      shape.parent[i] = i == 0 ? -1 : (params.shape == "chain" ? static_cast<NodeId>(i - 1) : 0);
    }
    return shape;
  };
  const auto make_order = [](const std::string& name, const TreeShape& shape) {
    if (name == "dfs") return dfs_order(shape);
    if (name == "hpd") return hpd_order(shape);
    return Permutation::identity(shape.size());
  };

  json rows = json::array();
  std::ostringstream csv;
  csv << "n,prefix,block,order,count\n";
  for (std::size_t n : params.sizes) {
    std::vector<TreeShape> shapes(params.seeds);
    parallel_for(params.seeds, [&](std::size_t s) { shapes[s] = make_shape(n, s); });
    for (std::size_t prefix : params.prefixes) {
      for (const std::string& order : params.orders) {
        std::vector<double> counts(params.seeds);
        parallel_for(params.seeds, [&](std::size_t s) {
          counts[s] = static_cast<double>(
              count_tree_blocks(shapes[s], make_order(order, shapes[s]), prefix, params.block));
        });
        const double mean = std::accumulate(counts.begin(), counts.end(), 0.0) / static_cast<double>(counts.size());
        double var = 0.0;
        for (double c : counts) var += (c - mean) * (c - mean);
        const double stddev = counts.size() > 1 ? std::sqrt(var / static_cast<double>(counts.size() - 1)) : 0.0;
        csv << n << ',' << prefix << ',' << params.block << ',' << order << ',' << format_number(mean) << '\n';
        rows.push_back({{"n", n},
                        {"prefix", prefix},
                        {"block", params.block},
                        {"order", order},
                        {"mean", mean},
                        {"stddev", stddev},
                        {"seeds", params.seeds}});
        if (params.dump_grids && output.dir) {
          std::ostringstream grid;
          write_mask_grid(grid, apply_permutation(shapes[0], make_order(order, shapes[0]), prefix));
          write_file(*output.dir / ("mask_" + std::to_string(n) + "_" + std::to_string(prefix) + "_" + order + ".txt"),
                     grid.str());
        }
      }
    }
  }
  if (output.format == OutputFormat::kJson) {
    emit(output, "mask.json", rows.dump(2) + "\n", out);
  } else {
    emit(output, "mask.csv", csv.str(), out);
  }
  return kExitOk;
}

int cmd_hypothesis(const RunConfig& config, const HypothesisParams& params, std::ostream& out, std::ostream& info) {
  validate_run_config(config);
  if (params.bins == 0) throw ConfigError("hypothesis: --bins must be >= 1");
  if (params.min_events == 0) throw ConfigError("hypothesis: --min-events must be >= 1");
  GenConfig gen = config.generation;
  gen.collect_trace = true;

  // Every run draws a fresh model pair so the events cover many tables rather
  // than the few contexts of a single one. The fixed batch size keeps the
  // event set independent of the worker count.
  constexpr std::size_t kBatch = 8;
  std::vector<BranchEvent> events;
  for (std::uint64_t batch = 0; events.size() < params.min_events; ++batch) {
    std::vector<std::vector<BranchEvent>> got(kBatch);
    parallel_for(kBatch, [&](std::size_t i) {
      const std::uint64_t run = batch * kBatch + i;
      ModelPairSpec spec = config.models;
      spec.target_seed = hash_combine(config.models.target_seed, run);
      spec.draft_seed = hash_combine(config.models.draft_seed, run);
      const ModelPair pair = make_model_pair(spec);
      GenConfig local = gen;
      local.seed = hash_combine(gen.seed, run);
      const auto prompt = make_prompt(pair.target, local.prefix_len, local.seed);
      got[i] = generate(pair.target, pair.draft, prompt, local).branch_events;
    });
    for (auto& g : got) events.insert(events.end(), g.begin(), g.end());
  }

  const auto bins = acceptance_vs_draft_bins(events, params.bins);
  const double rho = bin_trend_spearman(bins);
  info << "events=" << events.size() << " spearman=" << format_number(rho) << '\n';

  if (config.output.format == OutputFormat::kJson) {
    json rows = json::array();
    for (const AcceptanceBin& b : bins) {
      rows.push_back({{"bin_lo", b.lo},
                      {"bin_hi", b.hi},
                      {"acc_rate", b.count ? json(b.acceptance_rate) : json(nullptr)},
                      {"count", b.count}});
    }
    const json doc = {{"events", events.size()},
                      {"spearman", std::isnan(rho) ? json(nullptr) : json(rho)},
                      {"bins", rows}};
    emit(config.output, "hypothesis.json", doc.dump(2) + "\n", out);
  } else {
    std::ostringstream csv;
    csv << "bin_lo,bin_hi,acc_rate,count\n";
    for (const AcceptanceBin& b : bins) {
      csv << format_number(b.lo) << ',' << format_number(b.hi) << ',' << (b.count ? format_number(b.acceptance_rate) : "")
          << ',' << b.count << '\n';
    }
    emit(config.output, "hypothesis.csv", csv.str(), out);
  }
  return kExitOk;
}

}  // namespace spectree::cli
