#include "naseval/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "naseval/errors.hpp"
#include "naseval/oracle.hpp"
#include "naseval/samplers.hpp"
#include "naseval/stats.hpp"

namespace naseval::cli {

using nlohmann::json;

namespace {

std::string fmt(double value) {
  if (std::isnan(value)) return "";
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, ptr);
}

std::string fmt(std::int64_t value) { return std::to_string(value); }

std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i) out += ';';
    out += std::to_string(seeds[i]);
  }
  return out;
}

/// CSV with a leading provenance comment; comma-separated, header row,
/// '.' decimal, LF endings. Everything written is a pure function of the
/// inputs, so reruns are byte-identical.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& config_hash,
            const std::vector<std::uint64_t>& seeds)
      : out_(path, std::ios::binary) {
    if (!out_) throw ParseError("cannot write " + path.string());
    out_ << "# " << kToolVersion << " config=" << config_hash << " seeds=" << join_seeds(seeds)
         << "\n";
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

struct Manifest {
  std::string command;
  const ExperimentConfig* config = nullptr;
  std::vector<std::string> outputs;
  json notes = json::object();
  std::int64_t started_ms = now_ms();

  void write(const std::filesystem::path& dir) const {
    json doc;
    doc["tool_version"] = kToolVersion;
    doc["command"] = command;
    doc["config_hash"] = config->hash();
    doc["config"] = config->doc();
    doc["outputs"] = outputs;
    doc["notes"] = notes;
    doc["wallclock_started_unix_ms"] = started_ms;
    doc["wallclock_finished_unix_ms"] = now_ms();
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw ParseError("cannot write manifest in " + dir.string());
    out << doc.dump(2) << '\n';
  }
};

oracle::TableProvenance provenance_for(const ExperimentConfig& config) {
  oracle::TableProvenance provenance;
  provenance.tool_version = kToolVersion;
  provenance.config_hash = config.hash();
  provenance.seeds = config.seeds();
  return provenance;
}

int parse_int_field(const json& doc, const char* key, int fallback) {
  return doc.contains(key) ? doc.at(key).get<int>() : fallback;
}

double parse_double_field(const json& doc, const char* key, double fallback) {
  return doc.contains(key) ? doc.at(key).get<double>() : fallback;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  return ExperimentConfig(std::move(doc));
}

std::string ExperimentConfig::hash() const {
  const std::string canonical = doc_.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(h));
  return buffer;
}

space::SearchSpaceSpec ExperimentConfig::space_spec() const {
  space::SearchSpaceSpec spec;
  if (!doc_.contains("space")) return spec;
  const json& s = doc_.at("space");
  if (s.contains("family")) spec.family = space::family_from_string(s.at("family").get<std::string>());
  spec.node_count = parse_int_field(s, "node_count", spec.node_count);
  if (s.contains("ops")) {
    spec.ops = space::OpSet(s.at("ops").get<std::vector<std::string>>());
  } else if (spec.family == space::Family::kGraphCnn) {
    spec.ops = space::OpSet::graph();
  }
  if (s.contains("enumeration_limit")) {
    spec.enumeration_limit = s.at("enumeration_limit").get<std::uint64_t>();
  }
  return spec;
}

supernet::TaskSpec ExperimentConfig::task_spec() const {
  supernet::TaskSpec task;
  if (!doc_.contains("task")) return task;
  const json& t = doc_.at("task");
  task.vocab_size = parse_int_field(t, "vocab_size", task.vocab_size);
  task.sequence_length = parse_int_field(t, "sequence_length", task.sequence_length);
  task.order = parse_int_field(t, "order", task.order);
  task.noise = parse_double_field(t, "noise", task.noise);
  task.train_sequences = parse_int_field(t, "train_sequences", task.train_sequences);
  task.valid_sequences = parse_int_field(t, "valid_sequences", task.valid_sequences);
  task.test_sequences = parse_int_field(t, "test_sequences", task.test_sequences);
  if (t.contains("seed")) task.seed = t.at("seed").get<std::uint64_t>();
  return task;
}

supernet::TrainConfig ExperimentConfig::train_config(const char* section) const {
  supernet::TrainConfig config;
  if (std::string_view(section) == "ws_train") config.epochs = 100;
  if (!doc_.contains(section)) return config;
  const json& t = doc_.at(section);
  config.hidden_size = parse_int_field(t, "hidden_size", config.hidden_size);
  config.embedding_size = parse_int_field(t, "embedding_size", config.embedding_size);
  config.learning_rate = parse_double_field(t, "learning_rate", config.learning_rate);
  config.epochs = parse_int_field(t, "epochs", config.epochs);
  config.batch_size = parse_int_field(t, "batch_size", config.batch_size);
  config.gradient_clip = parse_double_field(t, "gradient_clip", config.gradient_clip);
  config.eval_every = parse_int_field(t, "eval_every", config.eval_every);
  return config;
}

std::vector<std::uint64_t> ExperimentConfig::seeds() const {
  if (!doc_.contains("seeds")) return {1};
  auto seeds = doc_.at("seeds").get<std::vector<std::uint64_t>>();
  if (seeds.empty()) throw UsageError("seed list must not be empty");
  return seeds;
}

std::int64_t ExperimentConfig::budget() const {
  return doc_.contains("budget") ? doc_.at("budget").get<std::int64_t>() : 1;
}

std::filesystem::path ExperimentConfig::output_dir() const {
  std::filesystem::path dir =
      doc_.contains("output_dir") ? doc_.at("output_dir").get<std::string>() : std::string("out");
  if (const char* root = std::getenv("NASEVAL_OUT_ROOT"); root && *root && dir.is_relative()) {
    dir = std::filesystem::path(root) / dir;
  }
  return dir;
}

int cmd_enumerate(const ExperimentConfig& config) {
  const space::SearchSpaceSpec spec = config.space_spec();
  const auto archs = space::enumerate_space(spec);  // throws SpaceTooLargeError

  const std::filesystem::path dir = config.output_dir();
  std::filesystem::create_directories(dir);
  const std::filesystem::path out_path = dir / "enumeration.jsonl";
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + out_path.string());
  for (const auto& arch : archs) {
    json row;
    row["key"] = space::canonical_encoding(arch, spec);
    row["mean"] = nullptr;
    row["std"] = nullptr;
    row["runs"] = nullptr;
    out << row.dump() << '\n';
  }
  out.close();

  Manifest manifest{.command = "enumerate", .config = &config, .outputs = {"enumeration.jsonl"}};
  manifest.notes["cardinality"] = archs.size();
  manifest.write(dir);
  std::cout << "enumerated " << archs.size() << " architectures -> " << out_path.string() << "\n";
  return kExitOk;
}

int cmd_ground_truth(const ExperimentConfig& config) {
  const space::SearchSpaceSpec spec = config.space_spec();
  const supernet::SyntheticTask task(config.task_spec());
  const supernet::TrainConfig train = config.train_config("train");
  const std::vector<std::uint64_t> seeds = config.seeds();

  const supernet::SweepResult sweep = supernet::sweep_standalone(spec, task, train, seeds);
  int failed_archs = 0;
  const oracle::BenchmarkTable table = supernet::table_from_sweep(sweep, spec, &failed_archs);
  // Validation drives the ranking; the test-split table is reported next to it.
  const oracle::BenchmarkTable test_table =
      supernet::table_from_sweep(sweep, spec, nullptr, true);
  const supernet::RankTrajectory trajectory = supernet::trajectory_from_sweep(sweep);

  const std::filesystem::path dir = config.output_dir();
  std::filesystem::create_directories(dir);
  table.save(dir / "ground_truth.jsonl", provenance_for(config));
  test_table.save(dir / "ground_truth_test.jsonl", provenance_for(config));

  {
    CsvWriter csv(dir / "trajectory.csv", config.hash(), seeds);
    std::vector<std::string> header{"key"};
    for (int epoch : trajectory.checkpoint_epochs) header.push_back("epoch_" + std::to_string(epoch));
    csv.row(header);
    for (std::size_t a = 0; a < trajectory.keys.size(); ++a) {
      std::vector<std::string> cells{trajectory.keys[a]};
      for (int rank : trajectory.ranks[a]) cells.push_back(std::to_string(rank));
      csv.row(cells);
    }
  }

  Manifest manifest{.command = "ground-truth",
                    .config = &config,
                    .outputs = {"ground_truth.jsonl", "ground_truth_test.jsonl",
                                "trajectory.csv"}};
  manifest.notes["failed_runs"] = sweep.failed_runs;
  manifest.notes["failed_archs_dropped"] = failed_archs;
  manifest.notes["tau_first_last_checkpoint"] = trajectory.tau_first_last;
  manifest.write(dir);

  std::cout << "ground truth over " << table.size() << " architectures, " << sweep.failed_runs
            << " failed runs -> " << (dir / "ground_truth.jsonl").string() << "\n";
  return sweep.failed_runs > 0 ? kExitPartialFailure : kExitOk;
}

namespace {

struct SamplerSpec {
  std::string name;
  json options;
};

std::vector<SamplerSpec> sampler_specs(const ExperimentConfig& config) {
  std::vector<SamplerSpec> specs;
  if (!config.doc().contains("samplers")) {
    specs.push_back({"random", json::object()});
    return specs;
  }
  for (const json& entry : config.doc().at("samplers")) {
    SamplerSpec spec;
    spec.name = entry.at("name").get<std::string>();
    spec.options = entry;
    specs.push_back(std::move(spec));
  }
  return specs;
}

samplers::ReinforceConfig reinforce_config(const json& options) {
  samplers::ReinforceConfig config;
  config.learning_rate = parse_double_field(options, "learning_rate", config.learning_rate);
  config.baseline_decay = parse_double_field(options, "baseline_decay", config.baseline_decay);
  config.novelty_patience = parse_int_field(options, "novelty_patience", config.novelty_patience);
  return config;
}

samplers::PredictorConfig predictor_config(const json& options) {
  samplers::PredictorConfig config;
  config.pool_fraction = parse_double_field(options, "pool_fraction", config.pool_fraction);
  config.per_iteration = parse_int_field(options, "per_iteration", config.per_iteration);
  config.ridge_lambda = parse_double_field(options, "ridge_lambda", config.ridge_lambda);
  return config;
}

}  // namespace

int cmd_search(const ExperimentConfig& config) {
  const space::SearchSpaceSpec spec = config.space_spec();
  const std::vector<std::uint64_t> seeds = config.seeds();
  const std::int64_t budget = config.budget();
  const std::vector<SamplerSpec> sampler_list = sampler_specs(config);

  const json& binding = config.doc().contains("evaluator") ? config.doc().at("evaluator")
                                                           : json{{"kind", "table-exact"}};
  const std::string kind = binding.at("kind").get<std::string>();

  std::optional<oracle::BenchmarkTable> table;
  if (kind == "table-exact" || kind == "table-noisy") {
    if (!binding.contains("table")) throw UsageError("evaluator binding needs a table path");
    table = oracle::BenchmarkTable::load(binding.at("table").get<std::string>());
  } else if (kind != "supernet") {
    throw UsageError("unknown evaluator kind: " + kind);
  }

  std::optional<supernet::SyntheticTask> task;
  std::optional<supernet::TrainConfig> ws_train;
  const bool needs_task =
      kind == "supernet" || std::any_of(sampler_list.begin(), sampler_list.end(),
                                        [](const auto& s) { return s.name == "relaxation"; });
  if (needs_task) {
    task.emplace(config.task_spec());
    ws_train = config.train_config("ws_train");
  }

  const std::filesystem::path dir = config.output_dir();
  std::filesystem::create_directories(dir / "runs");

  // seed -> trained shared weights, reused by every sampler at that seed.
  std::map<std::string, std::vector<samplers::SearchResult>> results;
  int failed_runs = 0;
  for (const std::uint64_t seed : seeds) {
    std::optional<supernet::WeightSharingRun> shared;
    if (kind == "supernet") {
      shared = supernet::train_weight_sharing(spec, *task, *ws_train, seed);
      if (shared->failed) {
        ++failed_runs;
        continue;
      }
    }
    for (const SamplerSpec& sampler : sampler_list) {
      std::unique_ptr<samplers::Evaluator> evaluator;
      if (kind == "table-exact") {
        evaluator = std::make_unique<samplers::TableExactEvaluator>(*table);
      } else if (kind == "table-noisy") {
        evaluator = std::make_unique<samplers::TableNoisyEvaluator>(*table, seed);
      } else {
        evaluator = std::make_unique<samplers::SupernetEvaluator>(shared->params, spec, *task);
      }

      samplers::SearchResult result;
      if (sampler.name == "random") {
        result = samplers::run_random(spec, *evaluator, {budget}, seed);
      } else if (sampler.name == "reinforce") {
        result = samplers::run_reinforce(spec, *evaluator, {budget}, seed,
                                         reinforce_config(sampler.options));
      } else if (sampler.name == "predictor") {
        result = samplers::run_predictor(spec, *evaluator, {budget}, seed,
                                         predictor_config(sampler.options));
      } else if (sampler.name == "relaxation") {
        const int epochs = parse_int_field(sampler.options, "epochs", static_cast<int>(budget));
        samplers::RelaxationConfig relax;
        relax.alpha_learning_rate =
            parse_double_field(sampler.options, "alpha_learning_rate", relax.alpha_learning_rate);
        result = samplers::run_relaxation(spec, *task, config.train_config("train"), epochs, seed,
                                          relax);
        if (std::isnan(result.best_score)) ++failed_runs;
      } else {
        throw UsageError("unknown sampler: " + sampler.name);
      }

      json run_doc = result.to_json();
      run_doc["tool_version"] = kToolVersion;
      run_doc["config_hash"] = config.hash();
      std::ofstream out(dir / "runs" / (sampler.name + "_seed" + std::to_string(seed) + ".json"),
                        std::ios::binary);
      out << run_doc.dump(2) << '\n';
      results[sampler.name].push_back(std::move(result));
    }
  }

  // Summary rows; the random sampler is the Welch baseline when present.
  const std::vector<samplers::SearchResult>* random_results = nullptr;
  if (auto it = results.find("random"); it != results.end()) random_results = &it->second;

  const MetricDirection direction =
      table ? table->direction() : MetricDirection::kLowerBetter;

  CsvWriter csv(dir / "summary.csv", config.hash(), seeds);
  csv.row({"sampler", "runs", "mean", "std", "best", "best_key", "best_rank", "p_surpass_mean",
           "p_surpass_best", "welch_t_vs_random", "welch_p_vs_random"});
  for (const SamplerSpec& sampler : sampler_list) {
    const auto it = results.find(sampler.name);
    if (it == results.end() || it->second.empty()) continue;
    const std::vector<samplers::SearchResult>& runs = it->second;

    std::vector<double> bests;
    for (const auto& run : runs) bests.push_back(run.best_score);
    const stats::AggregateReport agg = stats::aggregate(bests, direction);

    std::string best_key;
    for (const auto& run : runs) {
      if (run.best_score == agg.best) {
        best_key = run.best_key;
        break;
      }
    }

    std::string best_rank_cell, p_mean_cell, p_best_cell;
    if (table) {
      double p_sum = 0.0;
      int p_count = 0;
      for (const auto& run : runs) {
        const int rank = table->rank_of(run.best_key);
        p_sum += stats::p_surpass_random(
            {rank, static_cast<std::int64_t>(table->size()), run.evaluations_used});
        ++p_count;
      }
      const int best_rank = table->rank_of(best_key);
      best_rank_cell = fmt(static_cast<std::int64_t>(best_rank));
      p_mean_cell = fmt(p_sum / p_count);
      p_best_cell = fmt(stats::p_surpass_random({best_rank,
                                                 static_cast<std::int64_t>(table->size()),
                                                 static_cast<std::int64_t>(runs.size())}));
    }

    std::string welch_t_cell, welch_p_cell;
    if (random_results && sampler.name != "random" && runs.size() >= 2 &&
        random_results->size() >= 2) {
      std::vector<double> random_bests;
      for (const auto& run : *random_results) random_bests.push_back(run.best_score);
      const stats::AggregateReport random_agg = stats::aggregate(random_bests, direction);
      const stats::WelchResult welch =
          stats::welch_t({agg.mean, agg.std_dev, agg.n}, {random_agg.mean, random_agg.std_dev,
                                                          random_agg.n});
      welch_t_cell = fmt(welch.t);
      welch_p_cell = fmt(welch.p_two_sided);
    }

    csv.row({sampler.name, fmt(static_cast<std::int64_t>(runs.size())), fmt(agg.mean),
             fmt(agg.std_dev), fmt(agg.best), best_key, best_rank_cell, p_mean_cell, p_best_cell,
             welch_t_cell, welch_p_cell});
  }

  Manifest manifest{.command = "search", .config = &config, .outputs = {"summary.csv", "runs/"}};
  manifest.notes["failed_runs"] = failed_runs;
  manifest.write(dir);

  std::cout << "search finished; summary -> " << (dir / "summary.csv").string() << "\n";
  return failed_runs > 0 ? kExitPartialFailure : kExitOk;
}

int cmd_ws_rank(const ExperimentConfig& config) {
  if (!config.doc().contains("table")) {
    throw UsageError("ws-rank needs a ground-truth table path under \"table\"");
  }
  const oracle::BenchmarkTable table =
      oracle::BenchmarkTable::load(config.doc().at("table").get<std::string>());
  const space::SearchSpaceSpec spec = table.spec();
  const supernet::SyntheticTask task(config.task_spec());
  const supernet::TrainConfig ws_train = config.train_config("ws_train");
  const std::vector<std::uint64_t> seeds = config.seeds();

  std::vector<std::string> gt_order;
  for (std::size_t r = 1; r <= table.size(); ++r) {
    gt_order.push_back(table.key_at_rank(static_cast<int>(r)));
  }

  struct RunRow {
    std::uint64_t seed;
    double tau;
    std::vector<std::string> ws_order;
  };
  std::vector<RunRow> rows;
  int failed_runs = 0;
  for (const std::uint64_t seed : seeds) {
    const supernet::WeightSharingRun run = supernet::train_weight_sharing(spec, task, ws_train, seed);
    if (run.failed) {
      ++failed_runs;
      continue;
    }
    std::vector<std::string> ws_order;
    for (const auto& [arch, eval] : supernet::ws_ranking(run.params, spec, task)) {
      ws_order.push_back(eval.arch_key);
    }
    const double tau = stats::kendall_tau(ws_order, gt_order).tau;
    rows.push_back({seed, tau, std::move(ws_order)});
  }
  if (rows.empty()) throw UsageError("every weight-sharing run failed");

  double tau_sum = 0.0;
  std::size_t best_i = 0, worst_i = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    tau_sum += rows[i].tau;
    if (rows[i].tau > rows[best_i].tau) best_i = i;
    if (rows[i].tau < rows[worst_i].tau) worst_i = i;
  }
  const double tau_mean = tau_sum / static_cast<double>(rows.size());
  std::size_t average_i = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (std::fabs(rows[i].tau - tau_mean) < std::fabs(rows[average_i].tau - tau_mean)) {
      average_i = i;
    }
  }

  const std::filesystem::path dir = config.output_dir();
  std::filesystem::create_directories(dir);

  {
    CsvWriter csv(dir / "ws_tau.csv", config.hash(), seeds);
    csv.row({"seed", "tau", "label"});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::string label;
      if (i == best_i) label = "best";
      if (i == worst_i) label = label.empty() ? "worst" : label + ";worst";
      if (i == average_i) label = label.empty() ? "average" : label + ";average";
      csv.row({std::to_string(rows[i].seed), fmt(rows[i].tau), label});
    }
  }
  {
    CsvWriter csv(dir / "rank_disorder.csv", config.hash(), seeds);
    csv.row({"seed", "key", "gt_rank", "ws_rank", "abs_delta"});
    for (const RunRow& run : rows) {
      for (std::size_t pos = 0; pos < run.ws_order.size(); ++pos) {
        const std::string& key = run.ws_order[pos];
        const int gt_rank = table.rank_of(key);
        const int ws_rank = static_cast<int>(pos) + 1;
        csv.row({std::to_string(run.seed), key, std::to_string(gt_rank), std::to_string(ws_rank),
                 std::to_string(std::abs(gt_rank - ws_rank))});
      }
    }
  }

  Manifest manifest{.command = "ws-rank",
                    .config = &config,
                    .outputs = {"ws_tau.csv", "rank_disorder.csv"}};
  manifest.notes["mean_tau"] = tau_mean;
  manifest.notes["best_tau"] = rows[best_i].tau;
  manifest.notes["worst_tau"] = rows[worst_i].tau;
  // Published full-scale reference points for this protocol, for context
  // only; desk-scale numbers are not expected to match them.
  manifest.notes["fullscale_reference_tau"] = {{"rnn_reduced", -0.004}, {"cnn_7node", 0.195}};
  manifest.notes["failed_runs"] = failed_runs;
  manifest.write(dir);

  std::cout << "ws-rank mean tau " << tau_mean << " over " << rows.size() << " runs -> "
            << (dir / "ws_tau.csv").string() << "\n";
  return failed_runs > 0 ? kExitPartialFailure : kExitOk;
}

int cmd_sharing_amount(const ExperimentConfig& config) {
  space::SearchSpaceSpec spec = config.space_spec();
  if (spec.node_count != 3) throw UsageError("sharing-amount expects a 3-node chain space");
  const supernet::SyntheticTask task(config.task_spec());
  const supernet::TrainConfig train = config.train_config("train");
  const supernet::TrainConfig ws_train = config.train_config("ws_train");
  const std::vector<std::uint64_t> seeds = config.seeds();

  // Frozen prefix for nodes 1 and 2; node 3 is searched.
  std::vector<space::Decision> prefix = {{0, spec.ops.index_of("tanh")},
                                         {1, spec.ops.index_of("relu")}};
  if (config.doc().contains("prefix")) {
    prefix.clear();
    for (const json& entry : config.doc().at("prefix")) {
      space::Decision d;
      d.predecessor = entry.at("predecessor").get<int>();
      const int op = spec.ops.index_of(entry.at("op").get<std::string>());
      if (op < 0) throw UsageError("prefix op not in the op set");
      d.op = op;
      prefix.push_back(d);
    }
  }
  if (prefix.size() != 2) throw UsageError("prefix must fix exactly nodes 1 and 2");

  std::vector<space::ChainArch> variants;
  for (int pred = 0; pred <= 2; ++pred) {
    for (int op = 0; op < spec.ops.size(); ++op) {
      space::ChainArch arch;
      arch.decisions = prefix;
      arch.decisions.push_back({pred, op});
      space::validate(arch, spec);
      variants.push_back(std::move(arch));
    }
  }

  space::ChainArch prefix_arch;
  prefix_arch.decisions = prefix;
  const std::vector<space::Edge> prefix_edges = space::active_edges(prefix_arch);
  auto shared_count = [&](const space::ChainArch& arch) {
    int count = 0;
    for (const space::Edge& e : space::upstream_edges(arch, 3)) {
      if (std::find(prefix_edges.begin(), prefix_edges.end(), e) != prefix_edges.end()) ++count;
    }
    return count;
  };

  // Ground truth: standalone means over the seeds.
  std::vector<std::string> keys;
  std::vector<double> gt_mean(variants.size(), 0.0);
  int failed_runs = 0;
  for (std::size_t a = 0; a < variants.size(); ++a) {
    keys.push_back(space::canonical_encoding(variants[a], spec));
    std::vector<double> ppls;
    for (const std::uint64_t seed : seeds) {
      const supernet::EvalResult eval =
          supernet::train_standalone(variants[a], spec, task, train, seed);
      if (eval.failed) {
        ++failed_runs;
      } else {
        ppls.push_back(eval.ppl);
      }
    }
    if (ppls.empty()) throw UsageError("all standalone runs failed for " + keys.back());
    gt_mean[a] = stats::aggregate(ppls, MetricDirection::kLowerBetter).mean;
  }

  // Weight sharing over the 12 variants, one run per seed.
  std::vector<std::vector<double>> ws_ppl_per_seed;
  for (const std::uint64_t seed : seeds) {
    const supernet::WeightSharingRun run =
        supernet::train_weight_sharing(spec, task, ws_train, seed, &variants);
    if (run.failed) {
      ++failed_runs;
      continue;
    }
    std::vector<double> ppls;
    for (const auto& arch : variants) {
      ppls.push_back(supernet::evaluate(arch, run.params, spec, task, ws_train.epochs).ppl);
    }
    ws_ppl_per_seed.push_back(std::move(ppls));
  }
  if (ws_ppl_per_seed.empty()) throw UsageError("every weight-sharing run failed");

  std::vector<double> ws_mean(variants.size(), 0.0);
  for (const auto& ppls : ws_ppl_per_seed) {
    for (std::size_t a = 0; a < ppls.size(); ++a) ws_mean[a] += ppls[a];
  }
  for (double& v : ws_mean) v /= static_cast<double>(ws_ppl_per_seed.size());

  const std::filesystem::path dir = config.output_dir();
  std::filesystem::create_directories(dir);

  {
    CsvWriter csv(dir / "sharing_tau.csv", config.hash(), seeds);
    csv.row({"shared_matrices", "group_size", "mean_tau", "ws_runs"});
    for (int count = 0; count <= 2; ++count) {
      std::vector<std::size_t> group;
      for (std::size_t a = 0; a < variants.size(); ++a) {
        if (shared_count(variants[a]) == count) group.push_back(a);
      }
      if (group.size() < 2) continue;
      double tau_sum = 0.0;
      for (const auto& ppls : ws_ppl_per_seed) {
        std::vector<double> gt_group, ws_group;
        for (std::size_t a : group) {
          gt_group.push_back(gt_mean[a]);
          ws_group.push_back(ppls[a]);
        }
        tau_sum += stats::kendall_tau(gt_group, ws_group).tau;
      }
      csv.row({std::to_string(count), std::to_string(group.size()),
               fmt(tau_sum / static_cast<double>(ws_ppl_per_seed.size())),
               std::to_string(ws_ppl_per_seed.size())});
    }
  }
  {
    // Ranks within the 12 variants, ties by key.
    auto ranks_of = [&](const std::vector<double>& values) {
      std::vector<std::size_t> order(values.size());
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (values[a] != values[b]) return values[a] < values[b];
        return keys[a] < keys[b];
      });
      std::vector<int> ranks(values.size());
      for (std::size_t r = 0; r < order.size(); ++r) ranks[order[r]] = static_cast<int>(r) + 1;
      return ranks;
    };
    const std::vector<int> gt_ranks = ranks_of(gt_mean);
    const std::vector<int> ws_ranks = ranks_of(ws_mean);
    CsvWriter csv(dir / "sharing_scatter.csv", config.hash(), seeds);
    csv.row({"key", "shared_matrices", "gt_mean_ppl", "ws_mean_ppl", "gt_rank", "ws_rank"});
    for (std::size_t a = 0; a < variants.size(); ++a) {
      csv.row({keys[a], std::to_string(shared_count(variants[a])), fmt(gt_mean[a]),
               fmt(ws_mean[a]), std::to_string(gt_ranks[a]), std::to_string(ws_ranks[a])});
    }
  }

  Manifest manifest{.command = "sharing-amount",
                    .config = &config,
                    .outputs = {"sharing_tau.csv", "sharing_scatter.csv"}};
  manifest.notes["variants"] = variants.size();
  manifest.notes["failed_runs"] = failed_runs;
  manifest.write(dir);

  std::cout << "sharing-amount over " << variants.size() << " variants -> "
            << (dir / "sharing_tau.csv").string() << "\n";
  return failed_runs > 0 ? kExitPartialFailure : kExitOk;
}

namespace {

stats::SampleSummary parse_summary(const std::string& text) {
  stats::SampleSummary summary;
  std::istringstream in(text);
  std::string token;
  if (!std::getline(in, token, ',')) throw UsageError("summary needs mean,std,n");
  summary.mean = std::stod(token);
  if (!std::getline(in, token, ',')) throw UsageError("summary needs mean,std,n");
  summary.std_dev = std::stod(token);
  if (!std::getline(in, token, ',')) throw UsageError("summary needs mean,std,n");
  summary.n = std::stoi(token);
  return summary;
}

std::vector<std::string> read_ranking_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open ranking file: " + path.string());
  std::vector<std::string> keys;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) keys.push_back(line);
  }
  if (keys.size() < 2) throw UsageError("ranking file needs at least 2 keys: " + path.string());
  return keys;
}

void apply_overrides(ExperimentConfig& config, const std::string& seeds_csv, std::int64_t budget,
                     const std::string& output_dir, const std::string& table) {
  if (!seeds_csv.empty()) {
    std::vector<std::uint64_t> seeds;
    std::istringstream in(seeds_csv);
    std::string token;
    while (std::getline(in, token, ',')) seeds.push_back(std::stoull(token));
    config.doc()["seeds"] = seeds;
  }
  if (budget > 0) config.doc()["budget"] = budget;
  if (!output_dir.empty()) config.doc()["output_dir"] = output_dir;
  if (!table.empty()) {
    config.doc()["table"] = table;
    if (config.doc().contains("evaluator")) config.doc()["evaluator"]["table"] = table;
  }
}

}  // namespace

int run_main(int argc, const char* const* argv) {
  CLI::App app{"Desk-scale evaluation harness for architecture-search policies"};
  app.require_subcommand(1);

  std::string config_path, seeds_csv, output_dir, table_path;
  std::int64_t budget_override = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON experiment config");
    sub->add_option("--seeds", seeds_csv, "comma-separated seed list (overrides config)");
    sub->add_option("--budget", budget_override, "evaluation budget (overrides config)");
    sub->add_option("--output-dir", output_dir, "output directory (overrides config)");
    sub->add_option("--table", table_path, "benchmark table path (overrides config)");
  };

  CLI::App* enumerate_cmd = app.add_subcommand("enumerate", "write a table skeleton of all keys");
  CLI::App* ground_truth_cmd =
      app.add_subcommand("ground-truth", "train the whole space standalone and emit the table");
  CLI::App* search_cmd = app.add_subcommand("search", "run samplers against an evaluator");
  CLI::App* ws_rank_cmd =
      app.add_subcommand("ws-rank", "weight-sharing rankings against ground truth");
  CLI::App* sharing_cmd =
      app.add_subcommand("sharing-amount", "fixed-prefix sharing experiment");
  for (CLI::App* sub : {enumerate_cmd, ground_truth_cmd, search_cmd, ws_rank_cmd, sharing_cmd}) {
    add_common(sub);
  }
  // enumerate-only space flags, handy without a config file.
  int nodes_flag = 0;
  std::string family_flag, ops_flag;
  enumerate_cmd->add_option("--nodes", nodes_flag, "node count");
  enumerate_cmd->add_option("--family", family_flag, "chain-recurrent | graph-cnn");
  enumerate_cmd->add_option("--ops", ops_flag, "comma-separated op names");

  CLI::App* stats_cmd = app.add_subcommand("stats", "statistics helpers");
  stats_cmd->require_subcommand(1);
  CLI::App* psr_cmd = stats_cmd->add_subcommand("psr", "probability to surpass random");
  std::int64_t psr_rank = 0, psr_total = 0, psr_budget = 0;
  psr_cmd->add_option("--rank", psr_rank)->required();
  psr_cmd->add_option("--total", psr_total)->required();
  psr_cmd->add_option("--budget", psr_budget)->required();

  CLI::App* welch_cmd = stats_cmd->add_subcommand("welch", "Welch's t-test from summaries");
  std::string welch_a, welch_b;
  welch_cmd->add_option("--a", welch_a, "mean,std,n")->required();
  welch_cmd->add_option("--b", welch_b, "mean,std,n")->required();

  CLI::App* tau_cmd = stats_cmd->add_subcommand("tau", "Kendall tau between two ranking files");
  std::string tau_a, tau_b;
  tau_cmd->add_option("--a", tau_a, "best-first key list")->required();
  tau_cmd->add_option("--b", tau_b, "best-first key list")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (stats_cmd->parsed()) {
      json out;
      if (psr_cmd->parsed()) {
        out["p_surpass_random"] = stats::p_surpass_random({psr_rank, psr_total, psr_budget});
      } else if (welch_cmd->parsed()) {
        const stats::WelchResult r = stats::welch_t(parse_summary(welch_a), parse_summary(welch_b));
        out["t"] = r.t;
        out["df"] = r.df;
        out["p_two_sided"] = r.p_two_sided;
      } else if (tau_cmd->parsed()) {
        const stats::CorrelationReport r =
            stats::kendall_tau(read_ranking_file(tau_a), read_ranking_file(tau_b));
        out["tau"] = r.tau;
        out["concordant"] = r.concordant;
        out["discordant"] = r.discordant;
        out["ties"] = r.ties;
        out["n_items"] = r.n_items;
      }
      std::cout << out.dump() << "\n";
      return kExitOk;
    }

    ExperimentConfig config;
    if (!config_path.empty()) config = ExperimentConfig::from_file(config_path);
    apply_overrides(config, seeds_csv, budget_override, output_dir, table_path);

    if (enumerate_cmd->parsed()) {
      if (nodes_flag > 0) config.doc()["space"]["node_count"] = nodes_flag;
      if (!family_flag.empty()) config.doc()["space"]["family"] = family_flag;
      if (!ops_flag.empty()) {
        std::vector<std::string> ops;
        std::istringstream in(ops_flag);
        std::string token;
        while (std::getline(in, token, ',')) ops.push_back(token);
        config.doc()["space"]["ops"] = ops;
      }
      return cmd_enumerate(config);
    }
    if (ground_truth_cmd->parsed()) return cmd_ground_truth(config);
    if (search_cmd->parsed()) return cmd_search(config);
    if (ws_rank_cmd->parsed()) return cmd_ws_rank(config);
    if (sharing_cmd->parsed()) return cmd_sharing_amount(config);
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const SpaceTooLargeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
}

}  // namespace naseval::cli
