#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>

#include "naseval/errors.hpp"
#include "naseval/samplers.hpp"
#include "naseval/stats.hpp"

using namespace naseval;
using namespace naseval::samplers;

namespace {

space::SearchSpaceSpec chain_spec(int nodes) {
  space::SearchSpaceSpec spec;
  spec.family = space::Family::kChainRecurrent;
  spec.node_count = nodes;
  spec.ops = space::OpSet::recurrent();
  return spec;
}

// Synthetic 32-row table with distinct means; rank r key has mean
// 1 - r/100 under higher-better.
oracle::BenchmarkTable synthetic_table(const space::SearchSpaceSpec& spec) {
  std::vector<oracle::TabularRecord> records;
  int i = 0;
  for (const auto& arch : space::enumerate_space(spec)) {
    records.push_back({space::canonical_encoding(arch, spec), 0.99 - 0.01 * i, 0.005, 3});
    ++i;
  }
  return oracle::BenchmarkTable(spec, MetricKind::kAccuracy, MetricDirection::kHigherBetter,
                                std::move(records));
}

// One architecture scores 1, everything else 0.
oracle::BenchmarkTable planted_table(const space::SearchSpaceSpec& spec,
                                     const std::string& planted_key) {
  std::vector<oracle::TabularRecord> records;
  for (const auto& arch : space::enumerate_space(spec)) {
    const std::string key = space::canonical_encoding(arch, spec);
    records.push_back({key, key == planted_key ? 1.0 : 0.0, 0.0, 1});
  }
  return oracle::BenchmarkTable(spec, MetricKind::kAccuracy, MetricDirection::kHigherBetter,
                                std::move(records));
}

supernet::TaskSpec tiny_task_spec() {
  supernet::TaskSpec task;
  task.vocab_size = 6;
  task.sequence_length = 8;
  task.train_sequences = 32;
  task.valid_sequences = 16;
  task.test_sequences = 16;
  task.seed = 11;
  return task;
}

supernet::TrainConfig tiny_train_config() {
  supernet::TrainConfig config;
  config.hidden_size = 8;
  config.embedding_size = 6;
  config.epochs = 3;
  config.batch_size = 8;
  config.eval_every = 3;
  return config;
}

}  // namespace

TEST_CASE("random search") {
  const auto spec = chain_spec(2);
  const auto table = synthetic_table(spec);
  TableExactEvaluator evaluator(table);

  SUBCASE("budget 1 returns exactly the drawn architecture's table mean") {
    const SearchResult result = run_random(spec, evaluator, {1}, 7);
    CHECK(result.history.size() == 1);
    CHECK(result.evaluations_used == 1);
    CHECK(result.best_score == doctest::Approx(table.query(result.best_key).mean));
  }
  SUBCASE("same seed twice gives the identical result") {
    const SearchResult a = run_random(spec, evaluator, {10}, 3);
    const SearchResult b = run_random(spec, evaluator, {10}, 3);
    CHECK(a.best_key == b.best_key);
    CHECK(a.best_score == b.best_score);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
      CHECK(a.history[i].key == b.history[i].key);
      CHECK(a.history[i].score == b.history[i].score);
    }
  }
  SUBCASE("best score is extremal over the history") {
    const SearchResult result = run_random(spec, evaluator, {20}, 5);
    double best = result.history[0].score;
    for (const auto& h : result.history) best = std::max(best, h.score);
    CHECK(result.best_score == doctest::Approx(best));
  }
  SUBCASE("mean best-rank over 200 trials sits in the order-statistics band") {
    double rank_sum = 0.0;
    const int trials = 200;
    for (int trial = 0; trial < trials; ++trial) {
      const SearchResult result =
          run_random(spec, evaluator, {10}, 1000 + static_cast<std::uint64_t>(trial));
      rank_sum += table.rank_of(result.best_key);
    }
    const double mean_rank = rank_sum / trials;
    const double center = 32.0 / 11.0;
    CHECK(mean_rank > center - 2.0);
    CHECK(mean_rank < center + 2.0);
  }
  SUBCASE("1000 budget-1 draws pass chi-square uniformity at 0.001") {
    std::map<std::string, int> counts;
    const int runs = 1000;
    for (int i = 0; i < runs; ++i) {
      counts[run_random(spec, evaluator, {1}, 40000 + static_cast<std::uint64_t>(i)).best_key]++;
    }
    const double expected = runs / 32.0;
    double chi2 = 0.0;
    for (const auto& arch : space::enumerate_space(spec)) {
      const double observed = counts[space::canonical_encoding(arch, spec)];
      chi2 += (observed - expected) * (observed - expected) / expected;
    }
    // chi2.isf(0.001, 31)
    CHECK(chi2 < 61.09830608105814);
  }
}

TEST_CASE("reinforce search") {
  const auto spec = chain_spec(2);

  SUBCASE("planted bandit converges in at least 9 of 10 seeds") {
    const std::string planted = "0 relu 1 tanh";  // an arbitrary non-default key
    const auto table = planted_table(spec, planted);
    const auto planted_arch = space::decode_chain(planted, spec);
    int converged = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      TableExactEvaluator evaluator(table);
      ReinforcePolicy policy;
      const SearchResult result = run_reinforce(spec, evaluator, {300}, seed, {}, &policy);
      CHECK(result.history.size() == 300);
      if (policy.arch_probability(planted_arch) > 0.9) ++converged;
    }
    CHECK(converged >= 9);
  }
  SUBCASE("zero learning rate leaves the policy uniform") {
    const auto table = synthetic_table(spec);
    TableExactEvaluator evaluator(table);
    ReinforceConfig config;
    config.learning_rate = 0.0;
    ReinforcePolicy policy;
    run_reinforce(spec, evaluator, {50}, 2, config, &policy);
    for (const auto& logits : policy.edge_logits) {
      for (double l : logits) CHECK(l == 0.0);
    }
    for (const auto& logits : policy.op_logits) {
      for (double l : logits) CHECK(l == 0.0);
    }
  }
  SUBCASE("history length stays at the budget and runs are deterministic") {
    const auto table = synthetic_table(spec);
    TableExactEvaluator evaluator_a(table);
    TableExactEvaluator evaluator_b(table);
    const SearchResult a = run_reinforce(spec, evaluator_a, {25}, 11);
    const SearchResult b = run_reinforce(spec, evaluator_b, {25}, 11);
    CHECK(a.history.size() == 25);
    CHECK(a.evaluations_used == 25);
    CHECK(a.best_key == b.best_key);
    for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].key == b.history[i].key);
  }
  SUBCASE("graph spaces are rejected") {
    space::SearchSpaceSpec graph;
    graph.family = space::Family::kGraphCnn;
    graph.ops = space::OpSet::graph();
    const auto table = synthetic_table(spec);
    TableExactEvaluator evaluator(table);
    CHECK_THROWS_AS(run_reinforce(graph, evaluator, {5}, 1), UsageError);
  }
}

TEST_CASE("predictor search") {
  const auto spec = chain_spec(2);
  const auto table = synthetic_table(spec);

  SUBCASE("pool covering the full space finds the table best") {
    TableExactEvaluator evaluator(table);
    PredictorConfig config;
    config.pool_fraction = 1.0;
    const SearchResult result = run_predictor(spec, evaluator, {32}, 3, config);
    CHECK(result.best_key == table.best().key);
    CHECK(result.evaluations_used == 32);
  }
  SUBCASE("budget accounting covers pool plus iterations") {
    TableExactEvaluator evaluator(table);
    const SearchResult result = run_predictor(spec, evaluator, {10}, 5);
    CHECK(result.evaluations_used == 10);
    CHECK(result.history.size() == 10);
    std::set<std::string> unique;
    for (const auto& h : result.history) unique.insert(h.key);
    CHECK(unique.size() == 10);  // never re-evaluates a pool member
  }
  SUBCASE("deterministic given the seed") {
    TableExactEvaluator evaluator_a(table);
    TableExactEvaluator evaluator_b(table);
    const SearchResult a = run_predictor(spec, evaluator_a, {12}, 9);
    const SearchResult b = run_predictor(spec, evaluator_b, {12}, 9);
    CHECK(a.best_key == b.best_key);
  }
  SUBCASE("ridge fit ranks a held-out half of an additive space") {
    // Score built to be exactly additive in the decision one-hots.
    const auto spec3 = chain_spec(3);
    std::vector<std::string> keys;
    std::vector<double> scores;
    for (const auto& arch : space::enumerate_space(spec3)) {
      double score = 0.0;
      for (std::size_t i = 0; i < arch.decisions.size(); ++i) {
        score += 0.13 * static_cast<double>(i + 1) * arch.decisions[i].predecessor;
        score += 0.07 * static_cast<double>(i + 1) * arch.decisions[i].op;
      }
      keys.push_back(space::canonical_encoding(arch, spec3));
      scores.push_back(score);
    }
    // Alternating halves.
    std::vector<std::string> train_keys, held_keys;
    std::vector<double> train_scores, held_scores;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (i % 2 == 0) {
        train_keys.push_back(keys[i]);
        train_scores.push_back(scores[i]);
      } else {
        held_keys.push_back(keys[i]);
        held_scores.push_back(scores[i]);
      }
    }
    const std::vector<double> predicted =
        predictor_fit_predict(train_keys, train_scores, held_keys, spec3, 1e-3);
    const double tau = stats::kendall_tau(predicted, held_scores).tau;
    CHECK(tau >= 0.8);
  }
}

TEST_CASE("relaxation search") {
  const auto spec = chain_spec(2);
  const supernet::SyntheticTask task(tiny_task_spec());
  const supernet::TrainConfig train = tiny_train_config();

  SUBCASE("uniform alpha discretizes to the lexicographically first slot with tie events") {
    std::vector<std::string> events;
    const space::ChainArch arch = discretize(space::RelaxationParams::zeros(spec), spec, &events);
    CHECK(space::canonical_encoding(arch, spec) == "0 identity 0 identity");
    CHECK_FALSE(events.empty());
  }
  SUBCASE("frozen alpha run reports the tie breaks") {
    RelaxationConfig config;
    config.alpha_learning_rate = 0.0;
    const SearchResult result = run_relaxation(spec, task, train, 1, 4, config);
    CHECK(result.best_key == "0 identity 0 identity");
    CHECK_FALSE(result.events.empty());
  }
  SUBCASE("alpha gradients match finite differences") {
    // Four nodes give 26 alpha coordinates.
    const auto wide_spec = chain_spec(4);
    supernet::SharedParams params(wide_spec, train, task.vocab_size());
    Rng init(3, streams::kInit);
    params.init_uniform(init, 0.2);
    space::RelaxationParams alpha = space::RelaxationParams::zeros(wide_spec);
    // Move off the symmetric point.
    Rng jitter(5, 1);
    for (auto& v : alpha.alpha_edge) {
      for (double& l : v) l = 0.4 * (2.0 * jitter.next_double() - 1.0);
    }
    for (auto& v : alpha.alpha_op) {
      for (double& l : v) l = 0.4 * (2.0 * jitter.next_double() - 1.0);
    }

    std::vector<int> rows(8);
    std::iota(rows.begin(), rows.end(), 0);
    SoftGradients grads(params, wide_spec);
    soft_forward_backward(alpha, params, task.valid(), rows, grads);

    const double h = 1e-5;
    int checked = 0;
    auto check_block = [&](std::vector<std::vector<double>>& block,
                           const std::vector<std::vector<double>>& grad_block) {
      for (std::size_t i = 0; i < block.size(); ++i) {
        for (std::size_t k = 0; k < block[i].size(); ++k) {
          const double saved = block[i][k];
          block[i][k] = saved + h;
          const double up = soft_forward(alpha, params, task.valid(), rows);
          block[i][k] = saved - h;
          const double down = soft_forward(alpha, params, task.valid(), rows);
          block[i][k] = saved;
          const double fd = (up - down) / (2.0 * h);
          const double analytic = grad_block[i][k];
          CHECK(std::fabs(analytic - fd) <=
                1e-3 * std::max({std::fabs(analytic), std::fabs(fd), 1e-8}));
          ++checked;
        }
      }
    };
    check_block(alpha.alpha_edge, grads.alpha.alpha_edge);
    check_block(alpha.alpha_op, grads.alpha.alpha_op);
    CHECK(checked >= 20);
  }
  SUBCASE("weight gradients of the soft cell match finite differences") {
    supernet::SharedParams params(spec, train, task.vocab_size());
    Rng init(9, streams::kInit);
    params.init_uniform(init, 0.2);
    const space::RelaxationParams alpha = space::RelaxationParams::zeros(spec);
    std::vector<int> rows(6);
    std::iota(rows.begin(), rows.end(), 0);
    SoftGradients grads(params, spec);
    soft_forward_backward(alpha, params, task.valid(), rows, grads);

    Rng coord(12, 2);
    const double h = 1e-5;
    std::vector<std::pair<Eigen::MatrixXd*, const Eigen::MatrixXd*>> slots = {
        {&params.w_x, &grads.weights.w_x},
        {&params.w_h, &grads.weights.w_h},
        {&params.readout, &grads.weights.readout},
        {&params.embedding, &grads.weights.embedding},
    };
    for (std::size_t s = 0; s < params.edges.size(); ++s) {
      slots.emplace_back(&params.edges[s], &grads.weights.edges[s]);
    }
    for (int check = 0; check < 60; ++check) {
      auto& [param, grad] = slots[coord.next_below(slots.size())];
      const Eigen::Index index =
          static_cast<Eigen::Index>(coord.next_below(static_cast<std::uint64_t>(param->size())));
      const double saved = param->data()[index];
      param->data()[index] = saved + h;
      const double up = soft_forward(alpha, params, task.valid(), rows);
      param->data()[index] = saved - h;
      const double down = soft_forward(alpha, params, task.valid(), rows);
      param->data()[index] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double analytic = grad->data()[index];
      CHECK(std::fabs(analytic - fd) <= 1e-4 * (1.0 + std::fabs(analytic)));
    }
  }
  SUBCASE("same seed picks the same architecture") {
    const SearchResult a = run_relaxation(spec, task, train, 2, 8);
    const SearchResult b = run_relaxation(spec, task, train, 2, 8);
    CHECK(a.best_key == b.best_key);
    CHECK(a.best_score == b.best_score);
    CHECK(a.evaluations_used == 2);
    CHECK(a.history.size() == 2);
  }
}

TEST_CASE("graph spaces search through the table's key universe") {
  const auto table = oracle::BenchmarkTable::load(
      std::filesystem::path(NASEVAL_SOURCE_DIR) / "data" / "nasbench_sample.jsonl");
  const space::SearchSpaceSpec spec = table.spec();
  TableExactEvaluator evaluator(table);

  SUBCASE("random draws come from the table keys") {
    const SearchResult result = run_random(spec, evaluator, {20}, 5);
    CHECK(result.history.size() == 20);
    for (const auto& entry : result.history) {
      CHECK_NOTHROW(table.query(entry.key));
    }
    const SearchResult again = run_random(spec, evaluator, {20}, 5);
    CHECK(again.best_key == result.best_key);
  }
  SUBCASE("predictor consumes graph one-hot features") {
    PredictorConfig config;
    config.pool_fraction = 0.05;  // 15 of 300
    const SearchResult result = run_predictor(spec, evaluator, {30}, 9, config);
    CHECK(result.evaluations_used == 30);
    // Guided picks should land in the upper half of a 300-row table.
    CHECK(table.rank_of(result.best_key) <= 150);
  }
  SUBCASE("graph features have a fixed length") {
    const auto a = predictor_features(table.keys().front(), spec);
    const auto b = predictor_features(table.keys().back(), spec);
    CHECK(a.size() == b.size());
    CHECK(a.size() == 21 + 5 * 3);
  }
  SUBCASE("random sampling without a table-backed evaluator is an error") {
    const auto chain = chain_spec(2);
    const auto small = synthetic_table(chain);
    supernet::SyntheticTask task(tiny_task_spec());
    supernet::TrainConfig config = tiny_train_config();
    const auto ws = supernet::train_weight_sharing(chain, task, config, 1);
    SupernetEvaluator shared(ws.params, chain, task);  // no key universe
    CHECK_THROWS_AS(run_random(spec, shared, {5}, 1), UsageError);
  }
}

TEST_CASE("samplers accept any evaluator kind through one interface") {
  const auto spec = chain_spec(2);
  const auto table = synthetic_table(spec);
  const supernet::SyntheticTask task(tiny_task_spec());
  const supernet::TrainConfig config = tiny_train_config();
  const supernet::WeightSharingRun ws = supernet::train_weight_sharing(spec, task, config, 31);
  REQUIRE_FALSE(ws.failed);

  TableExactEvaluator exact(table);
  TableNoisyEvaluator noisy(table, 31);
  SupernetEvaluator shared(ws.params, spec, task);
  Evaluator* evaluators[] = {&exact, &noisy, &shared};
  for (Evaluator* evaluator : evaluators) {
    for (auto runner : {run_random}) {
      const SearchResult result = runner(spec, *evaluator, {5}, 77);
      CHECK(result.history.size() == 5);
      CHECK_FALSE(result.best_key.empty());
    }
    const SearchResult reinforce_result = run_reinforce(spec, *evaluator, {5}, 78);
    CHECK(reinforce_result.history.size() == 5);
    const SearchResult predictor_result = run_predictor(spec, *evaluator, {5}, 79);
    CHECK(predictor_result.evaluations_used <= 5);
  }

  SUBCASE("noisy evaluator differs from exact but is seed-deterministic") {
    TableNoisyEvaluator noisy_a(table, 5);
    TableNoisyEvaluator noisy_b(table, 5);
    const std::string key = table.keys().front();
    const double draw_a = noisy_a.evaluate(key);
    CHECK(draw_a == noisy_b.evaluate(key));
    CHECK(draw_a != table.query(key).mean);  // std 0.005 makes exact equality implausible
  }

  SUBCASE("aggregate over noisy runs matches a independent recomputation") {
    std::vector<double> bests;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      TableNoisyEvaluator noisy(table, seed);
      bests.push_back(run_random(spec, noisy, {1}, seed).best_score);
    }
    const auto report = naseval::stats::aggregate(bests, MetricDirection::kHigherBetter);

    // Recompute with long doubles and the two-pass formula.
    long double sum = 0.0L;
    for (double b : bests) sum += b;
    const long double mean = sum / static_cast<long double>(bests.size());
    long double ss = 0.0L;
    long double best = bests[0];
    for (double b : bests) {
      ss += (static_cast<long double>(b) - mean) * (static_cast<long double>(b) - mean);
      best = std::max(best, static_cast<long double>(b));
    }
    const long double std_dev = std::sqrt(ss / static_cast<long double>(bests.size() - 1));
    CHECK(std::fabs(report.mean - static_cast<double>(mean)) < 1e-9);
    CHECK(std::fabs(report.std_dev - static_cast<double>(std_dev)) < 1e-9);
    CHECK(report.best == static_cast<double>(best));
  }
}
