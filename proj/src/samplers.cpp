#include "naseval/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "naseval/errors.hpp"

namespace naseval::samplers {

using nlohmann::json;

namespace {

int categorical_draw(std::span<const double> probs, Rng& rng) {
  const double u = rng.next_double();
  double cumulative = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cumulative += probs[i];
    if (u < cumulative) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

void record(SearchResult& result, std::int64_t step, const std::string& key, double score,
            MetricDirection direction) {
  result.history.push_back({step, key, score});
  if (result.history.size() == 1 || improves(score, result.best_score, direction)) {
    result.best_key = key;
    result.best_score = score;
  }
}

std::vector<std::string> candidate_universe(const space::SearchSpaceSpec& spec,
                                            Evaluator& evaluator) {
  const auto universe = evaluator.key_universe();
  if (!universe.empty()) return {universe.begin(), universe.end()};
  if (spec.family != space::Family::kChainRecurrent) {
    throw UsageError("graph-cnn search needs a table-backed evaluator");
  }
  std::vector<std::string> keys;
  for (const auto& arch : space::enumerate_space(spec)) {
    keys.push_back(space::canonical_encoding(arch, spec));
  }
  return keys;
}

bool evaluator_is_deterministic(const Evaluator& evaluator) {
  return std::string_view(evaluator.kind()) != "table-noisy";
}

}  // namespace

double SupernetEvaluator::evaluate(const std::string& key) {
  const space::ChainArch arch = space::decode_chain(key, spec_);
  return supernet::evaluate(arch, shared_, spec_, task_, 0).ppl;
}

json SearchResult::to_json() const {
  json out;
  out["sampler"] = sampler;
  out["seed"] = seed;
  out["best_key"] = best_key;
  out["best_score"] = best_score;
  out["evaluations_used"] = evaluations_used;
  json hist = json::array();
  for (const HistoryEntry& h : history) {
    hist.push_back({{"step", h.step}, {"key", h.key}, {"score", h.score}});
  }
  out["history"] = std::move(hist);
  out["events"] = events;
  return out;
}

SearchResult run_random(const space::SearchSpaceSpec& spec, Evaluator& evaluator,
                        SearchBudget budget, std::uint64_t seed) {
  if (budget.evaluations < 1) throw UsageError("budget must be >= 1");
  SearchResult result;
  result.sampler = "random";
  result.seed = seed;
  Rng rng(seed, streams::kArchSample);

  const bool structural = spec.family == space::Family::kChainRecurrent;
  std::vector<std::string> universe;
  if (!structural) {
    universe = candidate_universe(spec, evaluator);
  }

  for (std::int64_t step = 1; step <= budget.evaluations; ++step) {
    std::string key;
    if (structural) {
      key = space::canonical_encoding(space::sample_uniform(spec, rng), spec);
    } else {
      key = universe[rng.next_below(universe.size())];
    }
    record(result, step, key, evaluator.evaluate(key), evaluator.direction());
  }
  result.evaluations_used = budget.evaluations;
  return result;
}

ReinforcePolicy ReinforcePolicy::uniform(const space::SearchSpaceSpec& spec) {
  ReinforcePolicy policy;
  policy.edge_logits.resize(static_cast<std::size_t>(spec.node_count));
  policy.op_logits.resize(static_cast<std::size_t>(spec.node_count));
  for (int i = 0; i < spec.node_count; ++i) {
    policy.edge_logits[static_cast<std::size_t>(i)].assign(static_cast<std::size_t>(i + 1), 0.0);
    policy.op_logits[static_cast<std::size_t>(i)].assign(
        static_cast<std::size_t>(spec.ops.size()), 0.0);
  }
  return policy;
}

double ReinforcePolicy::arch_probability(const space::ChainArch& arch) const {
  double prob = 1.0;
  for (std::size_t i = 0; i < arch.decisions.size(); ++i) {
    const auto edge_probs = space::mixture_probs(edge_logits[i]);
    const auto op_probs = space::mixture_probs(op_logits[i]);
    prob *= edge_probs[static_cast<std::size_t>(arch.decisions[i].predecessor)];
    prob *= op_probs[static_cast<std::size_t>(arch.decisions[i].op)];
  }
  return prob;
}

SearchResult run_reinforce(const space::SearchSpaceSpec& spec, Evaluator& evaluator,
                           SearchBudget budget, std::uint64_t seed,
                           const ReinforceConfig& config, ReinforcePolicy* final_policy) {
  if (spec.family != space::Family::kChainRecurrent) {
    throw UsageError("the REINFORCE sampler works on chain-recurrent spaces");
  }
  if (budget.evaluations < 1) throw UsageError("budget must be >= 1");

  SearchResult result;
  result.sampler = "reinforce";
  result.seed = seed;
  Rng rng(seed, streams::kArchSample);
  ReinforcePolicy policy = ReinforcePolicy::uniform(spec);

  const bool deterministic = evaluator_is_deterministic(evaluator);
  std::unordered_map<std::string, double> cache;
  double baseline = 0.0;
  double var_ema = 0.0;
  bool baseline_set = false;

  auto sample_arch = [&]() {
    space::ChainArch arch;
    arch.decisions.resize(static_cast<std::size_t>(spec.node_count));
    for (int i = 0; i < spec.node_count; ++i) {
      const auto edge_probs = space::mixture_probs(policy.edge_logits[static_cast<std::size_t>(i)]);
      const auto op_probs = space::mixture_probs(policy.op_logits[static_cast<std::size_t>(i)]);
      arch.decisions[static_cast<std::size_t>(i)].predecessor = categorical_draw(edge_probs, rng);
      arch.decisions[static_cast<std::size_t>(i)].op = categorical_draw(op_probs, rng);
    }
    return arch;
  };

  for (std::int64_t step = 1; step <= budget.evaluations; ++step) {
    space::ChainArch arch = sample_arch();
    std::string key = space::canonical_encoding(arch, spec);
    // Prefer unseen architectures; duplicates replay the cached score but
    // still count against the budget.
    for (int attempt = 0; attempt < config.novelty_patience && cache.contains(key); ++attempt) {
      arch = sample_arch();
      key = space::canonical_encoding(arch, spec);
    }

    double score;
    if (deterministic && cache.contains(key)) {
      score = cache.at(key);
    } else {
      score = evaluator.evaluate(key);
      cache[key] = score;
    }
    record(result, step, key, score, evaluator.direction());

    const double reward =
        evaluator.direction() == MetricDirection::kHigherBetter ? score : -score;
    if (!baseline_set) {
      baseline = reward;
      baseline_set = true;
    }
    // Advantage standardized by an EMA of the squared deviation, so one
    // learning rate works across reward scales; clipped against early
    // variance estimates.
    const double centered = reward - baseline;
    const double advantage =
        std::clamp(centered / std::sqrt(var_ema + 1e-8), -3.0, 3.0);
    baseline = config.baseline_decay * baseline + (1.0 - config.baseline_decay) * reward;
    var_ema = config.baseline_decay * var_ema +
              (1.0 - config.baseline_decay) * centered * centered;

    for (int i = 0; i < spec.node_count; ++i) {
      auto& elogits = policy.edge_logits[static_cast<std::size_t>(i)];
      const auto edge_probs = space::mixture_probs(elogits);
      for (std::size_t k = 0; k < elogits.size(); ++k) {
        const double indicator =
            k == static_cast<std::size_t>(arch.decisions[static_cast<std::size_t>(i)].predecessor)
                ? 1.0
                : 0.0;
        elogits[k] += config.learning_rate * advantage * (indicator - edge_probs[k]);
      }
      auto& ologits = policy.op_logits[static_cast<std::size_t>(i)];
      const auto op_probs = space::mixture_probs(ologits);
      for (std::size_t k = 0; k < ologits.size(); ++k) {
        const double indicator =
            k == static_cast<std::size_t>(arch.decisions[static_cast<std::size_t>(i)].op) ? 1.0
                                                                                          : 0.0;
        ologits[k] += config.learning_rate * advantage * (indicator - op_probs[k]);
      }
    }
  }

  result.evaluations_used = budget.evaluations;
  if (final_policy) *final_policy = policy;
  return result;
}

std::vector<double> predictor_features(const std::string& key,
                                       const space::SearchSpaceSpec& spec) {
  std::vector<double> features;
  if (spec.family == space::Family::kChainRecurrent) {
    const space::ChainArch arch = space::decode_chain(key, spec);
    for (int i = 0; i < spec.node_count; ++i) {
      std::vector<double> pred_onehot(static_cast<std::size_t>(i + 1), 0.0);
      pred_onehot[static_cast<std::size_t>(arch.decisions[static_cast<std::size_t>(i)]
                                               .predecessor)] = 1.0;
      features.insert(features.end(), pred_onehot.begin(), pred_onehot.end());
      std::vector<double> op_onehot(static_cast<std::size_t>(spec.ops.size()), 0.0);
      op_onehot[static_cast<std::size_t>(arch.decisions[static_cast<std::size_t>(i)].op)] = 1.0;
      features.insert(features.end(), op_onehot.begin(), op_onehot.end());
    }
    return features;
  }

  // Graph keys: fixed-size layout over the spec's maximum vertex count so
  // tables mixing sizes still map to one feature space.
  const space::GraphArch arch = space::decode_graph(key, spec);
  const int max_v = spec.node_count;
  features.assign(static_cast<std::size_t>(max_v * (max_v - 1) / 2) +
                      static_cast<std::size_t>((max_v - 2) * spec.ops.size()),
                  0.0);
  std::size_t bit = 0;
  for (int i = 0; i < max_v; ++i) {
    for (int j = i + 1; j < max_v; ++j, ++bit) {
      if (j < arch.vertex_count && arch.edge(i, j)) features[bit] = 1.0;
    }
  }
  const std::size_t op_base = static_cast<std::size_t>(max_v * (max_v - 1) / 2);
  for (std::size_t v = 0; v + 2 < static_cast<std::size_t>(arch.vertex_count); ++v) {
    features[op_base + v * static_cast<std::size_t>(spec.ops.size()) +
             static_cast<std::size_t>(arch.ops[v])] = 1.0;
  }
  return features;
}

std::vector<double> predictor_fit_predict(const std::vector<std::string>& train_keys,
                                          const std::vector<double>& train_scores,
                                          const std::vector<std::string>& candidates,
                                          const space::SearchSpaceSpec& spec,
                                          double ridge_lambda) {
  if (train_keys.empty()) throw UsageError("predictor needs at least one observation");
  if (train_keys.size() != train_scores.size()) {
    throw UsageError("predictor training keys and scores differ in length");
  }

  const std::size_t dim = predictor_features(train_keys[0], spec).size() + 1;  // + intercept
  Eigen::MatrixXd x(train_keys.size(), dim);
  Eigen::VectorXd y(train_keys.size());
  for (std::size_t row = 0; row < train_keys.size(); ++row) {
    const auto features = predictor_features(train_keys[row], spec);
    for (std::size_t col = 0; col < features.size(); ++col) {
      x(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) = features[col];
    }
    x(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(dim - 1)) = 1.0;
    y(static_cast<Eigen::Index>(row)) = train_scores[row];
  }

  const Eigen::MatrixXd gram =
      x.transpose() * x +
      ridge_lambda * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim),
                                               static_cast<Eigen::Index>(dim));
  const Eigen::VectorXd w = gram.ldlt().solve(x.transpose() * y);

  std::vector<double> predictions;
  predictions.reserve(candidates.size());
  for (const std::string& key : candidates) {
    const auto features = predictor_features(key, spec);
    double value = w(static_cast<Eigen::Index>(dim - 1));
    for (std::size_t col = 0; col < features.size(); ++col) {
      value += features[col] * w(static_cast<Eigen::Index>(col));
    }
    predictions.push_back(value);
  }
  return predictions;
}

SearchResult run_predictor(const space::SearchSpaceSpec& spec, Evaluator& evaluator,
                           SearchBudget budget, std::uint64_t seed,
                           const PredictorConfig& config) {
  if (budget.evaluations < 1) throw UsageError("budget must be >= 1");
  SearchResult result;
  result.sampler = "predictor";
  result.seed = seed;
  Rng rng(seed, streams::kArchSample);

  std::vector<std::string> universe = candidate_universe(spec, evaluator);
  const std::int64_t pool_target = std::clamp<std::int64_t>(
      std::llround(config.pool_fraction * static_cast<double>(universe.size())), 1,
      budget.evaluations);

  // Uniform pool without replacement: partial Fisher-Yates over the universe.
  for (std::int64_t i = 0; i < pool_target; ++i) {
    const std::size_t j = static_cast<std::size_t>(i) +
                          rng.next_below(universe.size() - static_cast<std::size_t>(i));
    std::swap(universe[static_cast<std::size_t>(i)], universe[j]);
  }

  std::vector<std::string> observed_keys;
  std::vector<double> observed_scores;
  std::unordered_set<std::string> seen;
  std::int64_t step = 0;
  auto consume = [&](const std::string& key) {
    const double score = evaluator.evaluate(key);
    record(result, ++step, key, score, evaluator.direction());
    observed_keys.push_back(key);
    observed_scores.push_back(score);
    seen.insert(key);
  };

  for (std::int64_t i = 0; i < pool_target; ++i) consume(universe[static_cast<std::size_t>(i)]);

  while (step < budget.evaluations) {
    std::vector<std::string> candidates;
    for (const std::string& key : universe) {
      if (!seen.contains(key)) candidates.push_back(key);
    }
    if (candidates.empty()) break;

    const std::vector<double> predicted = predictor_fit_predict(
        observed_keys, observed_scores, candidates, spec, config.ridge_lambda);

    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    const bool higher = evaluator.direction() == MetricDirection::kHigherBetter;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (predicted[a] != predicted[b]) {
        return higher ? predicted[a] > predicted[b] : predicted[a] < predicted[b];
      }
      return candidates[a] < candidates[b];
    });

    const std::int64_t take = std::min<std::int64_t>(
        config.per_iteration, budget.evaluations - step);
    for (std::int64_t i = 0; i < take && i < static_cast<std::int64_t>(order.size()); ++i) {
      consume(candidates[order[static_cast<std::size_t>(i)]]);
    }
  }

  result.evaluations_used = step;
  return result;
}

// ---------------------------------------------------------------------------
// Softmax-relaxed cell.

namespace {

enum class Act { kIdentity, kSigmoid, kTanh, kRelu };

Act act_from_name(const std::string& name) {
  if (name == "identity") return Act::kIdentity;
  if (name == "sigmoid") return Act::kSigmoid;
  if (name == "tanh") return Act::kTanh;
  if (name == "relu") return Act::kRelu;
  throw UsageError("relaxed cell has no activation named '" + name + "'");
}

Eigen::MatrixXd apply_act(Act act, const Eigen::MatrixXd& u) {
  switch (act) {
    case Act::kIdentity:
      return u;
    case Act::kSigmoid:
      return ((-u.array()).exp() + 1.0).inverse().matrix();
    case Act::kTanh:
      return u.array().tanh().matrix();
    case Act::kRelu:
      return u.cwiseMax(0.0);
  }
  return u;
}

Eigen::ArrayXXd act_derivative(Act act, const Eigen::MatrixXd& u, const Eigen::MatrixXd& c) {
  switch (act) {
    case Act::kIdentity:
      return Eigen::ArrayXXd::Ones(u.rows(), u.cols());
    case Act::kSigmoid:
      return c.array() * (1.0 - c.array());
    case Act::kTanh:
      return 1.0 - c.array().square();
    case Act::kRelu:
      return (u.array() > 0.0).cast<double>();
  }
  return Eigen::ArrayXXd::Ones(u.rows(), u.cols());
}

struct SoftStep {
  std::vector<int> tokens;
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd z0, c0;
  // Per node i (1-based), per predecessor j: pre-activation, per-op output,
  // and the op-mixed output.
  std::vector<std::vector<Eigen::MatrixXd>> pre;
  std::vector<std::vector<std::vector<Eigen::MatrixXd>>> op_out;
  std::vector<std::vector<Eigen::MatrixXd>> mixed;
  std::vector<Eigen::MatrixXd> node_out;  // c_1..c_n
  Eigen::MatrixXd h;
  Eigen::MatrixXd probs;
};

struct SoftContext {
  std::vector<Act> acts;                       // one per op index
  std::vector<std::vector<double>> edge_probs;  // per node
  std::vector<std::vector<double>> op_probs;
};

SoftContext make_context(const space::RelaxationParams& alpha,
                         const supernet::SharedParams& params) {
  SoftContext context;
  for (int o = 0; o < params.ops.size(); ++o) {
    context.acts.push_back(act_from_name(params.ops.name(o)));
  }
  for (const auto& logits : alpha.alpha_edge) {
    context.edge_probs.push_back(space::mixture_probs(logits));
  }
  for (const auto& logits : alpha.alpha_op) {
    context.op_probs.push_back(space::mixture_probs(logits));
  }
  return context;
}

double soft_run(const SoftContext& context, const supernet::SharedParams& params,
                const supernet::Sequences& data, std::span<const int> rows,
                std::vector<SoftStep>* trace) {
  if (rows.empty()) throw UsageError("empty batch");
  const int batch = static_cast<int>(rows.size());
  const int steps = static_cast<int>(data[static_cast<std::size_t>(rows[0])].size()) - 1;
  const int n = params.node_count;
  const int n_ops = params.ops.size();
  const double inv_count = 1.0 / (static_cast<double>(batch) * static_cast<double>(steps));

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(params.hidden, batch);
  double loss = 0.0;

  for (int t = 0; t < steps; ++t) {
    SoftStep step;
    step.tokens.resize(static_cast<std::size_t>(batch));
    step.inputs.resize(params.emb, batch);
    for (int b = 0; b < batch; ++b) {
      const auto& seq = data[static_cast<std::size_t>(rows[static_cast<std::size_t>(b)])];
      step.tokens[static_cast<std::size_t>(b)] = seq[static_cast<std::size_t>(t)];
      step.inputs.col(b) = params.embedding.col(seq[static_cast<std::size_t>(t)]);
    }
    step.z0 = params.w_x * step.inputs + params.w_h * h;
    step.c0 = step.z0.array().tanh().matrix();

    step.pre.resize(static_cast<std::size_t>(n));
    step.op_out.resize(static_cast<std::size_t>(n));
    step.mixed.resize(static_cast<std::size_t>(n));
    step.node_out.resize(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) {
      const auto& q = context.edge_probs[static_cast<std::size_t>(i - 1)];
      const auto& p = context.op_probs[static_cast<std::size_t>(i - 1)];
      Eigen::MatrixXd node = Eigen::MatrixXd::Zero(params.hidden, batch);
      auto& pre_i = step.pre[static_cast<std::size_t>(i - 1)];
      auto& op_out_i = step.op_out[static_cast<std::size_t>(i - 1)];
      auto& mixed_i = step.mixed[static_cast<std::size_t>(i - 1)];
      pre_i.resize(static_cast<std::size_t>(i));
      op_out_i.resize(static_cast<std::size_t>(i));
      mixed_i.resize(static_cast<std::size_t>(i));
      for (int j = 0; j < i; ++j) {
        const Eigen::MatrixXd& source =
            j == 0 ? step.c0 : step.node_out[static_cast<std::size_t>(j - 1)];
        const int slot = supernet::SharedParams::edge_slot(i, j);
        pre_i[static_cast<std::size_t>(j)] =
            params.edges[static_cast<std::size_t>(slot)] * source;
        op_out_i[static_cast<std::size_t>(j)].resize(static_cast<std::size_t>(n_ops));
        Eigen::MatrixXd mix = Eigen::MatrixXd::Zero(params.hidden, batch);
        for (int o = 0; o < n_ops; ++o) {
          op_out_i[static_cast<std::size_t>(j)][static_cast<std::size_t>(o)] = apply_act(
              context.acts[static_cast<std::size_t>(o)], pre_i[static_cast<std::size_t>(j)]);
          mix += p[static_cast<std::size_t>(o)] *
                 op_out_i[static_cast<std::size_t>(j)][static_cast<std::size_t>(o)];
        }
        mixed_i[static_cast<std::size_t>(j)] = std::move(mix);
        node += q[static_cast<std::size_t>(j)] * mixed_i[static_cast<std::size_t>(j)];
      }
      step.node_out[static_cast<std::size_t>(i - 1)] = std::move(node);
    }

    step.h = step.node_out[0];
    for (int i = 2; i <= n; ++i) step.h += step.node_out[static_cast<std::size_t>(i - 1)];
    step.h /= static_cast<double>(n);

    Eigen::MatrixXd logits = params.readout * step.h;
    logits.colwise() += params.readout_bias.col(0);
    step.probs.resize(logits.rows(), logits.cols());
    for (int b = 0; b < batch; ++b) {
      const auto& seq = data[static_cast<std::size_t>(rows[static_cast<std::size_t>(b)])];
      const int target = seq[static_cast<std::size_t>(t) + 1];
      const double max_logit = logits.col(b).maxCoeff();
      const Eigen::ArrayXd shifted = logits.col(b).array() - max_logit;
      const Eigen::ArrayXd exps = shifted.exp();
      const double total = exps.sum();
      step.probs.col(b) = (exps / total).matrix();
      loss -= (shifted(target) - std::log(total)) * inv_count;
    }

    h = step.h;
    if (trace) trace->push_back(std::move(step));
  }
  return loss;
}

}  // namespace

SoftGradients::SoftGradients(const supernet::SharedParams& params,
                             const space::SearchSpaceSpec& spec)
    : weights(params), alpha(space::RelaxationParams::zeros(spec)) {}

double soft_forward(const space::RelaxationParams& alpha, const supernet::SharedParams& params,
                    const supernet::Sequences& data, std::span<const int> rows) {
  return soft_run(make_context(alpha, params), params, data, rows, nullptr);
}

double soft_forward_backward(const space::RelaxationParams& alpha,
                             const supernet::SharedParams& params,
                             const supernet::Sequences& data, std::span<const int> rows,
                             SoftGradients& grads) {
  const SoftContext context = make_context(alpha, params);
  std::vector<SoftStep> trace;
  const double loss = soft_run(context, params, data, rows, &trace);

  grads.weights.set_zero();
  for (auto& v : grads.alpha.alpha_edge) std::fill(v.begin(), v.end(), 0.0);
  for (auto& v : grads.alpha.alpha_op) std::fill(v.begin(), v.end(), 0.0);

  const int batch = static_cast<int>(rows.size());
  const int steps = static_cast<int>(trace.size());
  const int n = params.node_count;
  const int n_ops = params.ops.size();
  const double inv_count = 1.0 / (static_cast<double>(batch) * static_cast<double>(steps));

  // Accumulated d loss / d q and d loss / d p, before the softmax jacobian.
  std::vector<std::vector<double>> dq(context.edge_probs.size()), dp(context.op_probs.size());
  for (std::size_t i = 0; i < dq.size(); ++i) dq[i].assign(context.edge_probs[i].size(), 0.0);
  for (std::size_t i = 0; i < dp.size(); ++i) dp[i].assign(context.op_probs[i].size(), 0.0);

  Eigen::MatrixXd dh_next = Eigen::MatrixXd::Zero(params.hidden, batch);
  for (int t = steps - 1; t >= 0; --t) {
    const SoftStep& step = trace[static_cast<std::size_t>(t)];

    Eigen::MatrixXd dlogits = step.probs;
    for (int b = 0; b < batch; ++b) {
      const auto& seq = data[static_cast<std::size_t>(rows[static_cast<std::size_t>(b)])];
      dlogits(seq[static_cast<std::size_t>(t) + 1], b) -= 1.0;
    }
    dlogits *= inv_count;

    grads.weights.readout += dlogits * step.h.transpose();
    grads.weights.readout_bias.col(0) += dlogits.rowwise().sum();
    const Eigen::MatrixXd dh = params.readout.transpose() * dlogits + dh_next;

    std::vector<Eigen::MatrixXd> dnode(static_cast<std::size_t>(n),
                                       Eigen::MatrixXd::Zero(params.hidden, batch));
    const Eigen::MatrixXd dh_per_node = dh / static_cast<double>(n);
    for (int i = 1; i <= n; ++i) dnode[static_cast<std::size_t>(i - 1)] = dh_per_node;
    Eigen::MatrixXd dc0 = Eigen::MatrixXd::Zero(params.hidden, batch);

    for (int i = n; i >= 1; --i) {
      const auto& q = context.edge_probs[static_cast<std::size_t>(i - 1)];
      const auto& p = context.op_probs[static_cast<std::size_t>(i - 1)];
      const Eigen::MatrixXd& dci = dnode[static_cast<std::size_t>(i - 1)];
      for (int j = 0; j < i; ++j) {
        const auto& pre = step.pre[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j)];
        const auto& outs =
            step.op_out[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j)];
        const auto& mixed =
            step.mixed[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j)];

        dq[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j)] +=
            (dci.array() * mixed.array()).sum();

        const Eigen::MatrixXd dmix = q[static_cast<std::size_t>(j)] * dci;
        Eigen::ArrayXXd act_mix = Eigen::ArrayXXd::Zero(params.hidden, batch);
        for (int o = 0; o < n_ops; ++o) {
          dp[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(o)] +=
              (dmix.array() * outs[static_cast<std::size_t>(o)].array()).sum();
          act_mix += p[static_cast<std::size_t>(o)] *
                     act_derivative(context.acts[static_cast<std::size_t>(o)], pre,
                                    outs[static_cast<std::size_t>(o)]);
        }
        const Eigen::MatrixXd du = (act_mix * dmix.array()).matrix();
        const Eigen::MatrixXd& source =
            j == 0 ? step.c0 : step.node_out[static_cast<std::size_t>(j - 1)];
        const int slot = supernet::SharedParams::edge_slot(i, j);
        grads.weights.edges[static_cast<std::size_t>(slot)] += du * source.transpose();
        const Eigen::MatrixXd dsource =
            params.edges[static_cast<std::size_t>(slot)].transpose() * du;
        if (j == 0) {
          dc0 += dsource;
        } else {
          dnode[static_cast<std::size_t>(j - 1)] += dsource;
        }
      }
    }

    const Eigen::MatrixXd dz0 = ((1.0 - step.c0.array().square()) * dc0.array()).matrix();
    grads.weights.w_x += dz0 * step.inputs.transpose();
    const Eigen::MatrixXd h_prev = t > 0 ? trace[static_cast<std::size_t>(t) - 1].h
                                         : Eigen::MatrixXd::Zero(params.hidden, batch);
    grads.weights.w_h += dz0 * h_prev.transpose();
    const Eigen::MatrixXd dinputs = params.w_x.transpose() * dz0;
    for (int b = 0; b < batch; ++b) {
      grads.weights.embedding.col(step.tokens[static_cast<std::size_t>(b)]) += dinputs.col(b);
    }
    dh_next = params.w_h.transpose() * dz0;
  }

  // Softmax jacobian: d alpha_k = p_k (d p_k - sum_l p_l d p_l).
  auto through_softmax = [](const std::vector<double>& probs, const std::vector<double>& dprobs,
                            std::vector<double>& dlogits) {
    double dot = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) dot += probs[k] * dprobs[k];
    for (std::size_t k = 0; k < probs.size(); ++k) dlogits[k] = probs[k] * (dprobs[k] - dot);
  };
  for (std::size_t i = 0; i < dq.size(); ++i) {
    through_softmax(context.edge_probs[i], dq[i], grads.alpha.alpha_edge[i]);
    through_softmax(context.op_probs[i], dp[i], grads.alpha.alpha_op[i]);
  }
  return loss;
}

space::ChainArch discretize(const space::RelaxationParams& alpha,
                            const space::SearchSpaceSpec& spec,
                            std::vector<std::string>* tie_events) {
  space::ChainArch arch;
  arch.decisions.resize(static_cast<std::size_t>(spec.node_count));
  auto argmax = [&](const std::vector<double>& logits, const char* what, int node) {
    int best = 0;
    bool tied = false;
    for (std::size_t k = 1; k < logits.size(); ++k) {
      if (logits[k] > logits[static_cast<std::size_t>(best)]) {
        best = static_cast<int>(k);
        tied = false;
      } else if (logits[k] == logits[static_cast<std::size_t>(best)]) {
        tied = true;
      }
    }
    if (tied && tie_events) {
      tie_events->push_back("argmax tie on " + std::string(what) + " of node " +
                            std::to_string(node) + "; kept lowest index");
    }
    return best;
  };
  for (int i = 0; i < spec.node_count; ++i) {
    arch.decisions[static_cast<std::size_t>(i)].predecessor =
        argmax(alpha.alpha_edge[static_cast<std::size_t>(i)], "edge", i + 1);
    arch.decisions[static_cast<std::size_t>(i)].op =
        argmax(alpha.alpha_op[static_cast<std::size_t>(i)], "op", i + 1);
  }
  return arch;
}

SearchResult run_relaxation(const space::SearchSpaceSpec& spec,
                            const supernet::SyntheticTask& task,
                            const supernet::TrainConfig& train_config, int budget_epochs,
                            std::uint64_t seed, const RelaxationConfig& config) {
  if (spec.family != space::Family::kChainRecurrent) {
    throw UsageError("the relaxation sampler needs a chain-recurrent supernet");
  }
  if (budget_epochs < 1) throw UsageError("budget must be >= 1");
  train_config.validate();

  SearchResult result;
  result.sampler = "relaxation";
  result.seed = seed;

  supernet::SharedParams params(spec, train_config, task.vocab_size());
  Rng init_rng(seed, streams::kInit);
  params.init_uniform(init_rng, params.default_init_range());
  space::RelaxationParams alpha = space::RelaxationParams::zeros(spec);
  SoftGradients grads(params, spec);

  Rng batch_rng(seed, streams::kBatchOrder);

  // Validation batches cycle in file order; the training split is shuffled.
  std::vector<std::vector<int>> valid_batches;
  {
    const int n_valid = static_cast<int>(task.valid().size());
    for (int start = 0; start < n_valid; start += train_config.batch_size) {
      std::vector<int> rows;
      for (int r = start; r < std::min(start + train_config.batch_size, n_valid); ++r) {
        rows.push_back(r);
      }
      valid_batches.push_back(std::move(rows));
    }
  }
  std::size_t valid_cursor = 0;

  std::vector<int> train_order(task.train().size());
  std::iota(train_order.begin(), train_order.end(), 0);
  const std::vector<int> all_valid = [&] {
    std::vector<int> rows(task.valid().size());
    std::iota(rows.begin(), rows.end(), 0);
    return rows;
  }();

  bool failed = false;
  for (int epoch = 1; epoch <= budget_epochs && !failed; ++epoch) {
    for (int i = static_cast<int>(train_order.size()) - 1; i > 0; --i) {
      const int j = static_cast<int>(batch_rng.next_below(static_cast<std::uint64_t>(i) + 1));
      std::swap(train_order[static_cast<std::size_t>(i)], train_order[static_cast<std::size_t>(j)]);
    }
    for (std::size_t start = 0; start < train_order.size();
         start += static_cast<std::size_t>(train_config.batch_size)) {
      const std::size_t end = std::min(train_order.size(),
                                       start + static_cast<std::size_t>(train_config.batch_size));
      std::vector<int> rows(train_order.begin() + static_cast<std::ptrdiff_t>(start),
                            train_order.begin() + static_cast<std::ptrdiff_t>(end));

      // Weight step on the training split, alpha fixed.
      double loss = soft_forward_backward(alpha, params, task.train(), rows, grads);
      if (!std::isfinite(loss)) {
        failed = true;
        break;
      }
      {
        std::vector<std::pair<Eigen::MatrixXd*, const Eigen::MatrixXd*>> slots = {
            {&params.embedding, &grads.weights.embedding},
            {&params.w_x, &grads.weights.w_x},
            {&params.w_h, &grads.weights.w_h},
            {&params.readout, &grads.weights.readout},
            {&params.readout_bias, &grads.weights.readout_bias},
        };
        for (std::size_t s = 0; s < params.edges.size(); ++s) {
          slots.emplace_back(&params.edges[s], &grads.weights.edges[s]);
        }
        double sq_norm = 0.0;
        for (auto& [param, grad] : slots) sq_norm += grad->squaredNorm();
        const double norm = std::sqrt(sq_norm);
        const double scale = norm > train_config.gradient_clip
                                 ? train_config.gradient_clip / norm
                                 : 1.0;
        for (auto& [param, grad] : slots) {
          *param -= (train_config.learning_rate * scale) * *grad;
        }
      }

      // Alpha step on the validation split, weights fixed.
      loss = soft_forward_backward(alpha, params, task.valid(), valid_batches[valid_cursor],
                                   grads);
      valid_cursor = (valid_cursor + 1) % valid_batches.size();
      if (!std::isfinite(loss)) {
        failed = true;
        break;
      }
      for (std::size_t i = 0; i < alpha.alpha_edge.size(); ++i) {
        for (std::size_t k = 0; k < alpha.alpha_edge[i].size(); ++k) {
          alpha.alpha_edge[i][k] -= config.alpha_learning_rate * grads.alpha.alpha_edge[i][k];
        }
        for (std::size_t k = 0; k < alpha.alpha_op[i].size(); ++k) {
          alpha.alpha_op[i][k] -= config.alpha_learning_rate * grads.alpha.alpha_op[i][k];
        }
      }
    }

    const space::ChainArch current = discretize(alpha, spec);
    const double valid_loss =
        failed ? std::numeric_limits<double>::quiet_NaN()
               : soft_forward(alpha, params, task.valid(), all_valid);
    result.history.push_back(
        {epoch, space::canonical_encoding(current, spec), std::exp(valid_loss)});
  }

  result.evaluations_used = static_cast<std::int64_t>(result.history.size());
  if (failed) {
    result.events.push_back("diverged; run marked failed");
    result.best_key = result.history.empty() ? "" : result.history.back().key;
    result.best_score = std::numeric_limits<double>::quiet_NaN();
    return result;
  }

  const space::ChainArch chosen = discretize(alpha, spec, &result.events);
  result.best_key = space::canonical_encoding(chosen, spec);
  const supernet::EvalResult standalone =
      supernet::train_standalone(chosen, spec, task, train_config, seed);
  if (standalone.failed) {
    result.events.push_back("standalone evaluation of the chosen architecture diverged");
    result.best_score = std::numeric_limits<double>::quiet_NaN();
  } else {
    result.best_score = standalone.ppl;
  }
  return result;
}

}  // namespace naseval::samplers
