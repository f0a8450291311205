#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "naseval/metric.hpp"
#include "naseval/oracle.hpp"
#include "naseval/rng.hpp"
#include "naseval/space.hpp"
#include "naseval/supernet.hpp"

namespace naseval::samplers {

/// Pluggable architecture scorer. Samplers see nothing but this interface,
/// so exact-table, noisy-table and shared-weight searches differ only in
/// the binding.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual const char* kind() const = 0;
  virtual MetricDirection direction() const = 0;
  virtual double evaluate(const std::string& key) = 0;
  /// Key universe for table-backed spaces; empty when the space is sampled
  /// structurally.
  virtual std::span<const std::string> key_universe() const { return {}; }
};

class TableExactEvaluator final : public Evaluator {
 public:
  explicit TableExactEvaluator(const oracle::BenchmarkTable& table) : table_(table) {}
  const char* kind() const override { return "table-exact"; }
  MetricDirection direction() const override { return table_.direction(); }
  double evaluate(const std::string& key) override { return table_.query(key).mean; }
  std::span<const std::string> key_universe() const override { return table_.keys(); }

 private:
  const oracle::BenchmarkTable& table_;
};

class TableNoisyEvaluator final : public Evaluator {
 public:
  TableNoisyEvaluator(const oracle::BenchmarkTable& table, std::uint64_t seed)
      : table_(table), rng_(seed, streams::kNoise) {}
  const char* kind() const override { return "table-noisy"; }
  MetricDirection direction() const override { return table_.direction(); }
  double evaluate(const std::string& key) override { return table_.sample_noisy(key, rng_); }
  std::span<const std::string> key_universe() const override { return table_.keys(); }

 private:
  const oracle::BenchmarkTable& table_;
  Rng rng_;
};

/// Scores a key by the validation perplexity of its path through a trained
/// weight-sharing supernet.
class SupernetEvaluator final : public Evaluator {
 public:
  SupernetEvaluator(const supernet::SharedParams& shared, const space::SearchSpaceSpec& spec,
                    const supernet::SyntheticTask& task)
      : shared_(shared), spec_(spec), task_(task) {}
  const char* kind() const override { return "supernet-shared"; }
  MetricDirection direction() const override { return MetricDirection::kLowerBetter; }
  double evaluate(const std::string& key) override;

 private:
  const supernet::SharedParams& shared_;
  const space::SearchSpaceSpec& spec_;
  const supernet::SyntheticTask& task_;
};

/// Number of architecture evaluations a run may consume. Strict.
struct SearchBudget {
  std::int64_t evaluations = 1;
};

struct HistoryEntry {
  std::int64_t step = 0;
  std::string key;
  double score = 0.0;
};

struct SearchResult {
  std::string sampler;
  std::uint64_t seed = 0;
  std::string best_key;
  double best_score = 0.0;
  std::int64_t evaluations_used = 0;
  std::vector<HistoryEntry> history;
  std::vector<std::string> events;  // tie breaks, divergence notes

  nlohmann::json to_json() const;
};

struct ReinforceConfig {
  double learning_rate = 0.5;
  double baseline_decay = 0.9;
  /// Resample attempts before accepting an already-evaluated architecture;
  /// repeats replay their cached score but still consume budget.
  int novelty_patience = 8;
};

/// Factored categorical policy: independent logits per decision slot.
/// Exposed so tests can inspect convergence.
struct ReinforcePolicy {
  std::vector<std::vector<double>> edge_logits;  // node i+1: logits over [0, i]
  std::vector<std::vector<double>> op_logits;

  static ReinforcePolicy uniform(const space::SearchSpaceSpec& spec);
  double arch_probability(const space::ChainArch& arch) const;
};

struct PredictorConfig {
  double pool_fraction = 0.2;  // of the candidate universe
  int per_iteration = 3;       // evaluations per predict-select round
  double ridge_lambda = 1e-3;
};

struct RelaxationConfig {
  double alpha_learning_rate = 0.1;
};

/// Uniform draws, best kept. With budget 1 this is the per-seed random
/// baseline policy.
SearchResult run_random(const space::SearchSpaceSpec& spec, Evaluator& evaluator,
                        SearchBudget budget, std::uint64_t seed);

/// REINFORCE over factored categorical logits with an EMA baseline.
SearchResult run_reinforce(const space::SearchSpaceSpec& spec, Evaluator& evaluator,
                           SearchBudget budget, std::uint64_t seed,
                           const ReinforceConfig& config = {},
                           ReinforcePolicy* final_policy = nullptr);

/// Pool / fit / select loop with a ridge-regularized linear predictor over
/// one-hot decision encodings.
SearchResult run_predictor(const space::SearchSpaceSpec& spec, Evaluator& evaluator,
                           SearchBudget budget, std::uint64_t seed,
                           const PredictorConfig& config = {});

/// One-hot feature encoding used by the predictor (exposed for tests).
std::vector<double> predictor_features(const std::string& key,
                                       const space::SearchSpaceSpec& spec);

/// Fit the ridge predictor on (key, score) pairs and score `candidates`.
std::vector<double> predictor_fit_predict(const std::vector<std::string>& train_keys,
                                          const std::vector<double>& train_scores,
                                          const std::vector<std::string>& candidates,
                                          const space::SearchSpaceSpec& spec,
                                          double ridge_lambda);

/// Softmax-relaxed supernet search: alternating weight steps on the train
/// split and alpha steps on the validation split, argmax discretization,
/// then one standalone training of the chosen architecture for the final
/// score. The budget counts epochs.
SearchResult run_relaxation(const space::SearchSpaceSpec& spec,
                            const supernet::SyntheticTask& task,
                            const supernet::TrainConfig& train_config, int budget_epochs,
                            std::uint64_t seed, const RelaxationConfig& config = {});

/// Soft-mixture gradients; alpha entries mirror space::RelaxationParams.
struct SoftGradients {
  supernet::Gradients weights;
  space::RelaxationParams alpha;

  SoftGradients(const supernet::SharedParams& params, const space::SearchSpaceSpec& spec);
};

/// Mean cross-entropy of the fully mixed cell (every edge and op weighted
/// by its mixture probability).
double soft_forward(const space::RelaxationParams& alpha, const supernet::SharedParams& params,
                    const supernet::Sequences& data, std::span<const int> rows);

/// Forward plus gradients with respect to both weights and alpha.
double soft_forward_backward(const space::RelaxationParams& alpha,
                             const supernet::SharedParams& params,
                             const supernet::Sequences& data, std::span<const int> rows,
                             SoftGradients& grads);

/// Per-slot argmax discretization; ties resolved to the lowest index and
/// reported through `tie_events`.
space::ChainArch discretize(const space::RelaxationParams& alpha,
                            const space::SearchSpaceSpec& spec,
                            std::vector<std::string>* tie_events = nullptr);

}  // namespace naseval::samplers
