#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "naseval/cli.hpp"

using namespace naseval;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kSourceDir = NASEVAL_SOURCE_DIR;

int run(std::vector<std::string> args) {
  std::vector<const char*> argv{"naseval"};
  for (const auto& arg : args) argv.push_back(arg.c_str());
  return cli::run_main(static_cast<int>(argv.size()), argv.data());
}

int run_capture(std::vector<std::string> args, std::string& out) {
  std::ostringstream captured;
  std::streambuf* old = std::cout.rdbuf(captured.rdbuf());
  const int code = run(std::move(args));
  std::cout.rdbuf(old);
  out = captured.str();
  return code;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::size_t line_count(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  std::size_t count = 0;
  while (std::getline(in, line)) ++count;
  return count;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

json tiny_task() {
  return {{"vocab_size", 6}, {"sequence_length", 6}, {"order", 2},      {"noise", 0.1},
          {"train_sequences", 32}, {"valid_sequences", 8}, {"test_sequences", 8}, {"seed", 11}};
}

json tiny_train(int epochs, int eval_every) {
  return {{"hidden_size", 8},  {"embedding_size", 6}, {"learning_rate", 0.5},
          {"epochs", epochs},  {"batch_size", 8},     {"gradient_clip", 0.25},
          {"eval_every", eval_every}};
}

}  // namespace

TEST_CASE("enumerate writes a headerless skeleton") {
  SUBCASE("2-node recurrent space gives a 32-line file") {
    const fs::path dir = fresh_dir("naseval_cli_enum32");
    std::string out;
    CHECK(run_capture({"enumerate", "--nodes", "2", "--family", "chain-recurrent",
                       "--output-dir", dir.string()},
                      out) == cli::kExitOk);
    CHECK(line_count(dir / "enumeration.jsonl") == 32);
    // Rows carry null metrics, ready for filling.
    std::ifstream in(dir / "enumeration.jsonl");
    std::string line;
    std::getline(in, line);
    const json row = json::parse(line);
    CHECK(row.at("mean").is_null());
    CHECK(row.at("std").is_null());
    CHECK(fs::exists(dir / "manifest.json"));
  }
  SUBCASE("single point space gives one line") {
    const fs::path dir = fresh_dir("naseval_cli_enum1");
    std::string out;
    CHECK(run_capture({"enumerate", "--nodes", "1", "--ops", "tanh", "--output-dir",
                       dir.string()},
                      out) == cli::kExitOk);
    CHECK(line_count(dir / "enumeration.jsonl") == 1);
  }
  SUBCASE("12-node space is refused with its cardinality") {
    const fs::path dir = fresh_dir("naseval_cli_enum12");
    std::ostringstream captured;
    std::streambuf* old = std::cerr.rdbuf(captured.rdbuf());
    const int code = run({"enumerate", "--nodes", "12", "--output-dir", dir.string()});
    std::cerr.rdbuf(old);
    CHECK(code == cli::kExitUsage);
    CHECK(captured.str().find("8036313307545600") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "enumeration.jsonl"));
  }
}

TEST_CASE("stats subcommands print machine-readable JSON") {
  std::string out;
  SUBCASE("psr reproduces the published query") {
    CHECK(run_capture({"stats", "psr", "--rank", "19552", "--total", "423624", "--budget", "10"},
                      out) == cli::kExitOk);
    const json doc = json::parse(out);
    CHECK(doc.at("p_surpass_random").get<double>() == doctest::Approx(0.62).epsilon(0.008));
  }
  SUBCASE("welch reproduces the published summary test") {
    CHECK(run_capture({"stats", "welch", "--a", "59.88,1.92,10", "--b", "60.13,0.65,10"}, out) ==
          cli::kExitOk);
    const json doc = json::parse(out);
    CHECK(doc.at("p_two_sided").get<double>() == doctest::Approx(0.7039500744).epsilon(1e-6));
  }
  SUBCASE("tau of identical ranking files is 1") {
    const fs::path ranking = fs::temp_directory_path() / "naseval_cli_rank.txt";
    std::ofstream(ranking) << "0 tanh\n0 relu\n0 identity\n";
    CHECK(run_capture({"stats", "tau", "--a", ranking.string(), "--b", ranking.string()}, out) ==
          cli::kExitOk);
    CHECK(json::parse(out).at("tau").get<double>() == doctest::Approx(1.0));
  }
}

TEST_CASE("ground-truth command emits table, trajectory and manifest deterministically") {
  json config;
  config["space"] = {{"family", "chain-recurrent"},
                     {"node_count", 1},
                     {"ops", json::array({"identity", "sigmoid", "tanh", "relu"})}};
  config["task"] = tiny_task();
  config["train"] = tiny_train(4, 2);
  config["seeds"] = json::array({1, 2});

  auto run_into = [&](const std::string& name) {
    const fs::path dir = fresh_dir(name);
    const fs::path config_path = fs::temp_directory_path() / (name + ".json");
    json doc = config;
    doc["output_dir"] = dir.string();
    std::ofstream(config_path) << doc.dump();
    REQUIRE(run({"ground-truth", "--config", config_path.string()}) == cli::kExitOk);
    return dir;
  };

  const fs::path dir_a = run_into("naseval_cli_gt_a");

  SUBCASE("artifact shapes") {
    CHECK(line_count(dir_a / "ground_truth.jsonl") == 5);  // header + 4 records
    // Validation drives ranks; the test-split metrics ship alongside.
    CHECK(line_count(dir_a / "ground_truth_test.jsonl") == 5);
    CHECK(slurp(dir_a / "ground_truth_test.jsonl") != slurp(dir_a / "ground_truth.jsonl"));
    // 4 epochs / eval_every 2 -> key column + 2 checkpoint columns.
    std::ifstream in(dir_a / "trajectory.csv");
    std::string meta, header;
    std::getline(in, meta);
    std::getline(in, header);
    CHECK(meta.rfind("# naseval", 0) == 0);
    CHECK(header == "key,epoch_2,epoch_4");
    CHECK(fs::exists(dir_a / "manifest.json"));
  }
  SUBCASE("reruns are byte-identical on the data files") {
    const std::string table_bytes = slurp(dir_a / "ground_truth.jsonl");
    const std::string trajectory_bytes = slurp(dir_a / "trajectory.csv");
    const fs::path dir_c = run_into("naseval_cli_gt_a");  // wiped and regenerated
    CHECK(slurp(dir_c / "ground_truth.jsonl") == table_bytes);
    CHECK(slurp(dir_c / "trajectory.csv") == trajectory_bytes);
    // A different output dir changes only the provenance hash in the header
    // line, never the record payloads.
    const fs::path dir_b = run_into("naseval_cli_gt_b");
    std::istringstream a(table_bytes);
    std::istringstream b(slurp(dir_b / "ground_truth.jsonl"));
    std::string line_a, line_b;
    std::getline(a, line_a);
    std::getline(b, line_b);
    while (std::getline(a, line_a) && std::getline(b, line_b)) CHECK(line_a == line_b);
  }
}

TEST_CASE("search command on the bundled table") {
  json config;
  config["space"] = {{"family", "chain-recurrent"},
                     {"node_count", 2},
                     {"ops", json::array({"identity", "sigmoid", "tanh", "relu"})}};
  config["evaluator"] = {{"kind", "table-exact"},
                         {"table", (kSourceDir / "data" / "reduced_rnn32.jsonl").string()}};
  config["samplers"] =
      json::array({{{"name", "random"}}, {{"name", "reinforce"}}, {{"name", "predictor"}}});
  config["budget"] = 5;
  config["seeds"] = json::array({1, 2, 3, 4});

  auto run_into = [&](const std::string& name) {
    const fs::path dir = fresh_dir(name);
    const fs::path config_path = fs::temp_directory_path() / (name + ".json");
    json doc = config;
    doc["output_dir"] = dir.string();
    std::ofstream(config_path) << doc.dump();
    REQUIRE(run({"search", "--config", config_path.string()}) == cli::kExitOk);
    return dir;
  };
  const fs::path dir = run_into("naseval_cli_search");

  SUBCASE("summary has one row per sampler with the declared columns") {
    std::ifstream in(dir / "summary.csv");
    std::string meta, header;
    std::getline(in, meta);
    std::getline(in, header);
    CHECK(header ==
          "sampler,runs,mean,std,best,best_key,best_rank,p_surpass_mean,p_surpass_best,"
          "welch_t_vs_random,welch_p_vs_random");
    std::vector<std::string> rows;
    std::string line;
    while (std::getline(in, line)) rows.push_back(line);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].rfind("random,4,", 0) == 0);
    CHECK(rows[1].rfind("reinforce,4,", 0) == 0);
    CHECK(rows[2].rfind("predictor,4,", 0) == 0);
  }
  SUBCASE("summary best equals the max over the per-seed run files") {
    // Perplexity tables are lower-better, so best = min.
    double best_from_runs = 1e300;
    for (int seed = 1; seed <= 4; ++seed) {
      const json run_doc =
          json::parse(slurp(dir / "runs" / ("random_seed" + std::to_string(seed) + ".json")));
      best_from_runs = std::min(best_from_runs, run_doc.at("best_score").get<double>());
      CHECK(run_doc.at("history").size() == 5);
      CHECK(run_doc.at("evaluations_used").get<int>() == 5);
    }
    std::ifstream in(dir / "summary.csv");
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    std::getline(in, line);  // random row
    std::stringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    CHECK(std::stod(cells[4]) == doctest::Approx(best_from_runs).epsilon(1e-12));
  }
  SUBCASE("reruns into the same directory are byte-identical") {
    const std::string summary_a = slurp(dir / "summary.csv");
    const std::string run_a = slurp(dir / "runs" / "predictor_seed2.json");
    const fs::path again = run_into("naseval_cli_search");
    CHECK(slurp(again / "summary.csv") == summary_a);
    CHECK(slurp(again / "runs" / "predictor_seed2.json") == run_a);
  }
}

TEST_CASE("budget-1 random search mean tracks the space mean") {
  json config;
  config["space"] = {{"family", "chain-recurrent"},
                     {"node_count", 2},
                     {"ops", json::array({"identity", "sigmoid", "tanh", "relu"})}};
  config["evaluator"] = {{"kind", "table-exact"},
                         {"table", (kSourceDir / "data" / "reduced_rnn32.jsonl").string()}};
  config["samplers"] = json::array({{{"name", "random"}}});
  config["budget"] = 1;
  config["seeds"] = json::array({1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  const fs::path dir = fresh_dir("naseval_cli_budget1");
  config["output_dir"] = dir.string();
  const fs::path config_path = fs::temp_directory_path() / "naseval_cli_budget1.json";
  std::ofstream(config_path) << config.dump();
  REQUIRE(run({"search", "--config", config_path.string()}) == cli::kExitOk);

  std::ifstream in(dir / "summary.csv");
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  std::getline(in, line);
  std::stringstream row(line);
  std::string cell;
  std::vector<std::string> cells;
  while (std::getline(row, cell, ',')) cells.push_back(cell);
  const double summary_mean = std::stod(cells[2]);
  // Space mean 4.1973, population std 1.2874 (independent recomputation of
  // the bundled fixture); 3 sigma / sqrt(10).
  CHECK(std::fabs(summary_mean - 4.197283899190661) < 3.0 * 1.2874416969859268 / std::sqrt(10.0));
}

TEST_CASE("ws-rank command labels runs and reports rank deltas") {
  json config;
  config["table"] = (kSourceDir / "data" / "reduced_rnn32.jsonl").string();
  config["task"] = json{{"vocab_size", 8},  {"sequence_length", 20}, {"order", 2},
                        {"noise", 0.1},     {"train_sequences", 256}, {"valid_sequences", 64},
                        {"test_sequences", 64}, {"seed", 11}};
  config["ws_train"] = tiny_train(8, 4);
  config["ws_train"]["hidden_size"] = 16;
  config["ws_train"]["embedding_size"] = 8;
  config["ws_train"]["batch_size"] = 32;
  config["seeds"] = json::array({1, 2, 3});
  const fs::path dir = fresh_dir("naseval_cli_wsrank");
  config["output_dir"] = dir.string();
  const fs::path config_path = fs::temp_directory_path() / "naseval_cli_wsrank.json";
  std::ofstream(config_path) << config.dump();
  REQUIRE(run({"ws-rank", "--config", config_path.string()}) == cli::kExitOk);

  // Tau rows: all in [-1, 1]; best/worst labels present.
  std::ifstream taus(dir / "ws_tau.csv");
  std::string line;
  std::getline(taus, line);  // meta
  std::getline(taus, line);  // header
  CHECK(line == "seed,tau,label");
  bool saw_best = false, saw_worst = false;
  double best_tau = -2.0, worst_tau = 2.0, labeled_best = 0, labeled_worst = 0;
  while (std::getline(taus, line)) {
    std::stringstream row(line);
    std::string seed_cell, tau_cell, label;
    std::getline(row, seed_cell, ',');
    std::getline(row, tau_cell, ',');
    std::getline(row, label, ',');
    const double tau = std::stod(tau_cell);
    CHECK(tau >= -1.0);
    CHECK(tau <= 1.0);
    best_tau = std::max(best_tau, tau);
    worst_tau = std::min(worst_tau, tau);
    if (label.find("best") != std::string::npos) {
      saw_best = true;
      labeled_best = tau;
    }
    if (label.find("worst") != std::string::npos) {
      saw_worst = true;
      labeled_worst = tau;
    }
  }
  CHECK(saw_best);
  CHECK(saw_worst);
  CHECK(labeled_best == doctest::Approx(best_tau));
  CHECK(labeled_worst == doctest::Approx(worst_tau));

  // Disorder rows: |delta| column is consistent, 32 rows per seed.
  std::ifstream disorder(dir / "rank_disorder.csv");
  std::getline(disorder, line);  // meta
  std::getline(disorder, line);  // header
  CHECK(line == "seed,key,gt_rank,ws_rank,abs_delta");
  int rows = 0;
  while (std::getline(disorder, line)) {
    std::stringstream row(line);
    std::string seed_cell, key, gt_cell, ws_cell, delta_cell;
    std::getline(row, seed_cell, ',');
    std::getline(row, key, ',');
    std::getline(row, gt_cell, ',');
    std::getline(row, ws_cell, ',');
    std::getline(row, delta_cell, ',');
    CHECK(std::abs(std::stoi(gt_cell) - std::stoi(ws_cell)) == std::stoi(delta_cell));
    ++rows;
  }
  CHECK(rows == 3 * 32);
}

TEST_CASE("sharing-amount command groups the twelve variants") {
  json config;
  config["space"] = {{"family", "chain-recurrent"},
                     {"node_count", 3},
                     {"ops", json::array({"identity", "sigmoid", "tanh", "relu"})}};
  config["task"] = tiny_task();
  config["train"] = tiny_train(4, 2);
  config["ws_train"] = tiny_train(6, 3);
  config["prefix"] =
      json::array({{{"predecessor", 0}, {"op", "tanh"}}, {{"predecessor", 1}, {"op", "relu"}}});
  config["seeds"] = json::array({1, 2});
  const fs::path dir = fresh_dir("naseval_cli_sharing");
  config["output_dir"] = dir.string();
  const fs::path config_path = fs::temp_directory_path() / "naseval_cli_sharing.json";
  std::ofstream(config_path) << config.dump();
  REQUIRE(run({"sharing-amount", "--config", config_path.string()}) == cli::kExitOk);

  std::ifstream scatter(dir / "sharing_scatter.csv");
  std::string line;
  std::getline(scatter, line);  // meta
  std::getline(scatter, line);  // header
  CHECK(line == "key,shared_matrices,gt_mean_ppl,ws_mean_ppl,gt_rank,ws_rank");
  int rows = 0;
  std::set<int> counts;
  while (std::getline(scatter, line)) {
    std::stringstream row(line);
    std::string key, count_cell;
    std::getline(row, key, ',');
    std::getline(row, count_cell, ',');
    counts.insert(std::stoi(count_cell));
    ++rows;
  }
  CHECK(rows == 12);
  CHECK(counts == std::set<int>{0, 1, 2});

  // One tau row per sharing level.
  std::ifstream taus(dir / "sharing_tau.csv");
  std::getline(taus, line);
  std::getline(taus, line);
  CHECK(line == "shared_matrices,group_size,mean_tau,ws_runs");
  int tau_rows = 0;
  while (std::getline(taus, line)) {
    std::stringstream row(line);
    std::string count_cell, size_cell, tau_cell;
    std::getline(row, count_cell, ',');
    std::getline(row, size_cell, ',');
    std::getline(row, tau_cell, ',');
    CHECK(size_cell == "4");
    const double tau = std::stod(tau_cell);
    CHECK(tau >= -1.0);
    CHECK(tau <= 1.0);
    ++tau_rows;
  }
  CHECK(tau_rows == 3);
}

TEST_CASE("supernet-backed search runs every sampler family") {
  json config;
  config["space"] = {{"family", "chain-recurrent"},
                     {"node_count", 2},
                     {"ops", json::array({"identity", "sigmoid", "tanh", "relu"})}};
  config["evaluator"] = {{"kind", "supernet"}};
  config["task"] = tiny_task();
  config["train"] = tiny_train(3, 3);
  config["ws_train"] = tiny_train(4, 2);
  config["samplers"] = json::array({{{"name", "random"}},
                                    {{"name", "reinforce"}},
                                    {{"name", "predictor"}},
                                    {{"name", "relaxation"}, {"epochs", 2}}});
  config["budget"] = 4;
  config["seeds"] = json::array({1, 2});
  const fs::path dir = fresh_dir("naseval_cli_supernet_search");
  config["output_dir"] = dir.string();
  const fs::path config_path = fs::temp_directory_path() / "naseval_cli_supernet.json";
  std::ofstream(config_path) << config.dump();
  REQUIRE(run({"search", "--config", config_path.string()}) == cli::kExitOk);

  for (const char* name : {"random", "reinforce", "predictor", "relaxation"}) {
    CHECK(fs::exists(dir / "runs" / (std::string(name) + "_seed1.json")));
    CHECK(fs::exists(dir / "runs" / (std::string(name) + "_seed2.json")));
  }
  // Supernet evaluators have no table, so rank columns stay blank.
  std::ifstream in(dir / "summary.csv");
  std::string meta, header, first_row;
  std::getline(in, meta);
  std::getline(in, header);
  std::getline(in, first_row);
  CHECK(first_row.find(",,") != std::string::npos);
}

TEST_CASE("exit codes") {
  SUBCASE("missing config file is an I/O error") {
    CHECK(run({"search", "--config", "/nonexistent/naseval.json"}) == cli::kExitIo);
  }
  SUBCASE("bad sampler name is a usage error") {
    const fs::path config_path = fs::temp_directory_path() / "naseval_cli_bad.json";
    json config;
    config["evaluator"] = {{"kind", "table-exact"},
                           {"table", (kSourceDir / "data" / "reduced_rnn32.jsonl").string()}};
    config["samplers"] = json::array({{{"name", "simulated-annealing"}}});
    config["space"] = {{"node_count", 2}};
    config["output_dir"] = fresh_dir("naseval_cli_bad_out").string();
    std::ofstream(config_path) << config.dump();
    CHECK(run({"search", "--config", config_path.string()}) == cli::kExitUsage);
  }
  SUBCASE("unknown flags are a usage error") {
    CHECK(run({"enumerate", "--definitely-not-a-flag"}) == cli::kExitUsage);
  }
}

TEST_CASE("environment variable overrides the output root") {
  const fs::path root = fresh_dir("naseval_cli_root");
  setenv("NASEVAL_OUT_ROOT", root.c_str(), 1);
  std::string out;
  const int code = run_capture({"enumerate", "--nodes", "1", "--ops", "tanh", "--output-dir",
                                "nested/enum"},
                               out);
  unsetenv("NASEVAL_OUT_ROOT");
  CHECK(code == cli::kExitOk);
  CHECK(fs::exists(root / "nested" / "enum" / "enumeration.jsonl"));
}

TEST_CASE("config hash is stable and sensitive") {
  cli::ExperimentConfig a(json{{"budget", 10}, {"seeds", {1, 2}}});
  cli::ExperimentConfig b(json{{"seeds", {1, 2}}, {"budget", 10}});  // same content
  cli::ExperimentConfig c(json{{"budget", 11}, {"seeds", {1, 2}}});
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != c.hash());
  CHECK(a.hash().size() == 16);
}
