#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "naseval/errors.hpp"
#include "naseval/oracle.hpp"

using namespace naseval;
using namespace naseval::oracle;

namespace {

namespace fs = std::filesystem;

fs::path write_temp(const std::string& name, const std::string& contents) {
  const fs::path path = fs::temp_directory_path() / name;
  std::ofstream out(path, std::ios::binary);
  out << contents;
  return path;
}

const char* kAccuracyHeader =
    R"({"family":"chain-recurrent","node_count":1,"ops":["identity","sigmoid","tanh","relu"],"metric":"accuracy","direction":"higher-better"})";

std::string three_row_table() {
  std::string text = kAccuracyHeader;
  text += "\n";
  text += R"({"key":"0 identity","mean":0.90,"std":0.01,"runs":3})" "\n";
  text += R"({"key":"0 sigmoid","mean":0.95,"std":0.02,"runs":3})" "\n";
  text += R"({"key":"0 tanh","mean":0.92,"std":0.00,"runs":3})" "\n";
  return text;
}

}  // namespace

TEST_CASE("load and rank a small table") {
  const auto path = write_temp("naseval_three_row.jsonl", three_row_table());
  const BenchmarkTable table = BenchmarkTable::load(path);

  CHECK(table.size() == 3);
  CHECK(table.direction() == MetricDirection::kHigherBetter);
  CHECK(table.rank_of("0 identity") == 3);
  CHECK(table.rank_of("0 sigmoid") == 1);
  CHECK(table.rank_of("0 tanh") == 2);
  CHECK(table.best().key == "0 sigmoid");
  CHECK(table.rank_of(table.best().key) == 1);
  CHECK(table.key_at_rank(3) == "0 identity");

  SUBCASE("query returns records verbatim") {
    const TabularRecord& record = table.query("0 tanh");
    CHECK(record.mean == doctest::Approx(0.92));
    CHECK(record.std_dev == 0.0);
    CHECK(record.runs == 3);
    CHECK_THROWS_AS(table.query("0 relu"), NotFoundError);
    CHECK_THROWS_AS(table.rank_of("0 relu"), NotFoundError);
  }

  SUBCASE("space stats use the population std") {
    const SpaceStats stats = table.space_stats();
    CHECK(stats.mean == doctest::Approx(0.9233333333333333).epsilon(1e-12));
    CHECK(stats.best == doctest::Approx(0.95));
    // sqrt(mean of squared deviations), 3 in the denominator.
    CHECK(stats.std_dev == doctest::Approx(0.02054804667656325).epsilon(1e-9));
  }

  SUBCASE("ranks survive a save/load round trip byte-identically") {
    const fs::path copy = fs::temp_directory_path() / "naseval_three_row_copy.jsonl";
    table.save(copy);
    const BenchmarkTable reloaded = BenchmarkTable::load(copy);
    for (const std::string& key : table.keys()) {
      CHECK(reloaded.rank_of(key) == table.rank_of(key));
    }
    const fs::path copy2 = fs::temp_directory_path() / "naseval_three_row_copy2.jsonl";
    reloaded.save(copy2);
    std::ifstream a(copy, std::ios::binary), b(copy2, std::ios::binary);
    std::string bytes_a((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string bytes_b((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(bytes_a == bytes_b);
  }
}

TEST_CASE("loader rejects malformed tables") {
  SUBCASE("duplicate keys are named") {
    std::string text = kAccuracyHeader;
    text += "\n";
    text += R"({"key":"0 tanh","mean":0.9,"std":0.0,"runs":1})" "\n";
    text += R"({"key":"0 tanh","mean":0.8,"std":0.0,"runs":1})" "\n";
    const auto path = write_temp("naseval_dup.jsonl", text);
    try {
      BenchmarkTable::load(path);
      FAIL("expected DuplicateKeyError");
    } catch (const DuplicateKeyError& e) {
      CHECK(std::string(e.what()).find("0 tanh") != std::string::npos);
    }
  }
  SUBCASE("json syntax errors carry the line number") {
    std::string text = kAccuracyHeader;
    text += "\n";
    text += R"({"key":"0 tanh","mean":0.9,"std":0.0,"runs":1})" "\n";
    text += "{not json\n";
    const auto path = write_temp("naseval_badline.jsonl", text);
    try {
      BenchmarkTable::load(path);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
  }
  SUBCASE("keys must decode for the declared spec") {
    std::string text = kAccuracyHeader;
    text += "\n";
    text += R"({"key":"0 tanh 1 relu","mean":0.9,"std":0.0,"runs":1})" "\n";
    const auto path = write_temp("naseval_badkey.jsonl", text);
    CHECK_THROWS_AS(BenchmarkTable::load(path), InvalidArchError);
  }
  SUBCASE("null metrics (skeleton rows) are not loadable") {
    std::string text = kAccuracyHeader;
    text += "\n";
    text += R"({"key":"0 tanh","mean":null,"std":null,"runs":null})" "\n";
    const auto path = write_temp("naseval_nulls.jsonl", text);
    CHECK_THROWS_AS(BenchmarkTable::load(path), ParseError);
  }
  SUBCASE("empty or header-only files are rejected") {
    CHECK_THROWS_AS(BenchmarkTable::load(write_temp("naseval_empty.jsonl", "")), ParseError);
    CHECK_THROWS_AS(
        BenchmarkTable::load(write_temp("naseval_hdr.jsonl", std::string(kAccuracyHeader) + "\n")),
        ParseError);
  }
}

TEST_CASE("tie ranks fall back to key order") {
  std::string text = kAccuracyHeader;
  text += "\n";
  text += R"({"key":"0 tanh","mean":0.9,"std":0.0,"runs":1})" "\n";
  text += R"({"key":"0 identity","mean":0.9,"std":0.0,"runs":1})" "\n";
  text += R"({"key":"0 sigmoid","mean":0.95,"std":0.0,"runs":1})" "\n";
  const BenchmarkTable table = BenchmarkTable::load(write_temp("naseval_ties.jsonl", text));
  CHECK(table.rank_of("0 sigmoid") == 1);
  // "0 identity" < "0 tanh" lexicographically.
  CHECK(table.rank_of("0 identity") == 2);
  CHECK(table.rank_of("0 tanh") == 3);
}

TEST_CASE("bundled fixtures") {
  SUBCASE("reduced RNN table") {
    const BenchmarkTable table =
        BenchmarkTable::load(fs::path(NASEVAL_SOURCE_DIR) / "data" / "reduced_rnn32.jsonl");
    CHECK(table.size() == 32);
    CHECK(table.direction() == MetricDirection::kLowerBetter);
    CHECK(table.metric() == MetricKind::kPerplexity);
    CHECK(table.spec().node_count == 2);

    // Independent recomputation (decimal arithmetic, external tooling).
    const SpaceStats stats = table.space_stats();
    CHECK(std::fabs(stats.mean - 4.197283899190661) < 1e-9);
    CHECK(std::fabs(stats.std_dev - 1.2874416969859268) < 1e-9);
    CHECK(std::fabs(stats.best - 3.2321190359935166) < 1e-9);
    CHECK(table.best().key == "0 identity 0 identity");

    // Ranks are a permutation of 1..32.
    std::set<int> ranks;
    for (const std::string& key : table.keys()) ranks.insert(table.rank_of(key));
    CHECK(ranks.size() == 32);
    CHECK(*ranks.begin() == 1);
    CHECK(*ranks.rbegin() == 32);

    // Rank order follows the metric: lower-better means non-decreasing
    // means down the ranking.
    for (int r = 1; r < 32; ++r) {
      CHECK(table.query(table.key_at_rank(r)).mean <=
            table.query(table.key_at_rank(r + 1)).mean);
    }

    // Calibration of the bundled task: best and worst architectures are
    // separated by well over 5% in relative validation loss.
    const double best_loss = std::log(table.query(table.key_at_rank(1)).mean);
    const double worst_loss = std::log(table.query(table.key_at_rank(32)).mean);
    CHECK((worst_loss - best_loss) / worst_loss >= 0.05);
  }
  SUBCASE("graph sample") {
    const BenchmarkTable table =
        BenchmarkTable::load(fs::path(NASEVAL_SOURCE_DIR) / "data" / "nasbench_sample.jsonl");
    CHECK(table.size() == 300);
    CHECK(table.spec().family == space::Family::kGraphCnn);
    CHECK(table.direction() == MetricDirection::kHigherBetter);
    for (const std::string& key : table.keys()) {
      CHECK_NOTHROW(space::decode_graph(key, table.spec()));
    }
    CHECK(table.rank_of(table.best().key) == 1);
    // Higher-better: non-increasing means down the ranking.
    for (int r = 1; r < 300; ++r) {
      CHECK(table.query(table.key_at_rank(r)).mean >=
            table.query(table.key_at_rank(r + 1)).mean);
    }
  }
}

TEST_CASE("noisy sampling") {
  const BenchmarkTable table =
      BenchmarkTable::load(write_temp("naseval_noise.jsonl", three_row_table()));

  SUBCASE("zero std draws the mean exactly") {
    Rng rng(5, streams::kNoise);
    const double mean = table.query("0 tanh").mean;
    for (int i = 0; i < 10; ++i) {
      CHECK(table.sample_noisy("0 tanh", rng) == mean);
    }
  }
  SUBCASE("law of large numbers at 10k draws") {
    Rng rng(17, streams::kNoise);
    double sum = 0.0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) sum += table.sample_noisy("0 identity", rng);
    const double sample_mean = sum / draws;
    // 4 sigma of the sample mean: 4 * std / sqrt(10000).
    CHECK(std::fabs(sample_mean - 0.90) < 4.0 * 0.01 / 100.0);
  }
  SUBCASE("accuracy draws clamp to 1.0") {
    std::string text = kAccuracyHeader;
    text += "\n";
    text += R"({"key":"0 relu","mean":0.999,"std":0.01,"runs":10})" "\n";
    const BenchmarkTable clamped =
        BenchmarkTable::load(write_temp("naseval_clamp.jsonl", text));
    Rng rng(3, streams::kNoise);
    for (int i = 0; i < 2000; ++i) {
      const double draw = clamped.sample_noisy("0 relu", rng);
      CHECK(draw <= 1.0);
      CHECK(draw >= 0.0);
    }
  }
  SUBCASE("deterministic given the seed") {
    Rng rng_a(11, streams::kNoise);
    Rng rng_b(11, streams::kNoise);
    for (int i = 0; i < 50; ++i) {
      CHECK(table.sample_noisy("0 sigmoid", rng_a) == table.sample_noisy("0 sigmoid", rng_b));
    }
  }
}
