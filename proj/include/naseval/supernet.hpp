#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "naseval/oracle.hpp"
#include "naseval/rng.hpp"
#include "naseval/space.hpp"
#include "naseval/task.hpp"

namespace naseval::supernet {

struct TrainConfig {
  int hidden_size = 16;
  int embedding_size = 8;
  double learning_rate = 0.5;
  int epochs = 30;
  int batch_size = 32;
  double gradient_clip = 0.25;
  int eval_every = 5;

  void validate() const;
};

/// Weight store covering the whole DAG: one matrix per (target node,
/// predecessor) edge any architecture in the spec can activate, plus the
/// input maps, token embedding and the readout. A discrete architecture
/// touches only its active path.
class SharedParams {
 public:
  SharedParams(const space::SearchSpaceSpec& spec, const TrainConfig& config, int vocab_size);

  static int edge_slot(int target, int predecessor);

  int node_count = 0;
  int vocab = 0;
  int hidden = 0;
  int emb = 0;
  space::OpSet ops = space::OpSet::recurrent();  // index encoding of the spec

  Eigen::MatrixXd embedding;            // emb x vocab, one column per token
  Eigen::MatrixXd w_x;                  // hidden x emb
  Eigen::MatrixXd w_h;                  // hidden x hidden
  std::vector<Eigen::MatrixXd> edges;   // hidden x hidden per DAG edge
  Eigen::MatrixXd readout;              // vocab x hidden
  Eigen::MatrixXd readout_bias;         // vocab x 1, starts at zero

  /// Uniform(-range, range) fill of the weight matrices; the bias stays
  /// zero. When `subset` is given, only those edge slots are drawn (in
  /// slot order); the rest stay zero.
  void init_uniform(Rng& rng, double range,
                    const std::vector<space::Edge>* subset = nullptr);

  /// 1/sqrt(hidden): large enough that signal survives the node chain at
  /// this scale.
  double default_init_range() const;

  bool all_finite() const;
};

/// Same shapes as SharedParams, accumulated by the backward pass. Inactive
/// edge slots stay exactly zero.
struct Gradients {
  Eigen::MatrixXd embedding, w_x, w_h, readout, readout_bias;
  std::vector<Eigen::MatrixXd> edges;

  explicit Gradients(const SharedParams& params);
  void set_zero();
};

struct EvalResult {
  double loss = 0.0;
  double ppl = 1.0;
  std::string arch_key;
  int epoch = 0;
  bool failed = false;
};

using Sequences = std::vector<std::vector<int>>;

/// Mean cross-entropy of the architecture's path over the given rows.
double forward(const space::ChainArch& arch, const SharedParams& params, const Sequences& data,
               std::span<const int> rows);

/// Forward plus full backward through time. Returns the loss; `grads` is
/// overwritten (not accumulated).
double forward_backward(const space::ChainArch& arch, const SharedParams& params,
                        const Sequences& data, std::span<const int> rows, Gradients& grads);

/// Validation-split evaluation with fixed parameters.
EvalResult evaluate(const space::ChainArch& arch, const SharedParams& params,
                    const space::SearchSpaceSpec& spec, const SyntheticTask& task, int epoch);

/// Same, over the held-out test split.
EvalResult evaluate_test(const space::ChainArch& arch, const SharedParams& params,
                         const space::SearchSpaceSpec& spec, const SyntheticTask& task,
                         int epoch);

struct StandaloneRun {
  EvalResult final_eval;       // validation split; drives every ranking
  EvalResult final_test_eval;  // test split, reported alongside
  std::vector<std::pair<int, EvalResult>> checkpoints;  // (epoch, valid eval)
};

/// Fresh per-architecture training: seeded init over the active path only,
/// SGD with global-norm clipping. Divergence is reported via the failed
/// flag, never thrown.
StandaloneRun train_standalone_run(const space::ChainArch& arch,
                                   const space::SearchSpaceSpec& spec, const SyntheticTask& task,
                                   const TrainConfig& config, std::uint64_t seed);

EvalResult train_standalone(const space::ChainArch& arch, const space::SearchSpaceSpec& spec,
                            const SyntheticTask& task, const TrainConfig& config,
                            std::uint64_t seed);

struct WeightSharingRun {
  SharedParams params;
  std::vector<std::string> sampling_log;  // canonical key drawn per batch
  bool failed = false;
};

/// Single-path supernet training: every mini-batch is given to one
/// uniformly drawn architecture and only that path is updated. When
/// `candidates` is set, draws are uniform over that subset instead of the
/// full space.
WeightSharingRun train_weight_sharing(const space::SearchSpaceSpec& spec,
                                      const SyntheticTask& task, const TrainConfig& config,
                                      std::uint64_t seed,
                                      const std::vector<space::ChainArch>* candidates = nullptr);

/// Every enumerable architecture evaluated with the shared weights on the
/// validation split, best (lowest loss) first; ties broken by key.
std::vector<std::pair<space::ChainArch, EvalResult>> ws_ranking(
    const SharedParams& shared, const space::SearchSpaceSpec& spec, const SyntheticTask& task);

/// One standalone training sweep over the whole space and all seeds, with
/// per-checkpoint validation perplexities. Everything downstream (ground
/// truth, trajectories) is a view of this.
struct SweepResult {
  std::vector<std::string> keys;        // enumeration order
  std::vector<int> checkpoint_epochs;
  std::vector<std::vector<double>> mean_ppl;              // [arch][checkpoint], over good seeds
  std::vector<std::vector<double>> per_seed_final_ppl;    // [arch][seed], NaN on failure
  std::vector<std::vector<double>> per_seed_test_ppl;     // [arch][seed], NaN on failure
  std::vector<std::uint64_t> seeds;
  int failed_runs = 0;
};

SweepResult sweep_standalone(const space::SearchSpaceSpec& spec, const SyntheticTask& task,
                             const TrainConfig& config, std::span<const std::uint64_t> seeds);

/// Mean/std-over-seeds table in the oracle format (perplexity,
/// lower-better). Architectures whose every seed diverged are dropped and
/// counted in `failed_archs`. Validation metrics by default; test metrics
/// when `use_test_metric` is set.
oracle::BenchmarkTable table_from_sweep(const SweepResult& sweep,
                                        const space::SearchSpaceSpec& spec,
                                        int* failed_archs = nullptr,
                                        bool use_test_metric = false);

oracle::BenchmarkTable ground_truth_table(const space::SearchSpaceSpec& spec,
                                          const SyntheticTask& task, const TrainConfig& config,
                                          std::span<const std::uint64_t> seeds,
                                          int* failed_runs = nullptr);

struct RankTrajectory {
  std::vector<std::string> keys;
  std::vector<int> checkpoint_epochs;
  std::vector<std::vector<int>> ranks;  // [arch][checkpoint], dense, 1 = best
  double tau_first_last = 0.0;
};

RankTrajectory trajectory_from_sweep(const SweepResult& sweep);

RankTrajectory rank_trajectory(const space::SearchSpaceSpec& spec, const SyntheticTask& task,
                               const TrainConfig& config, std::span<const std::uint64_t> seeds);

}  // namespace naseval::supernet
