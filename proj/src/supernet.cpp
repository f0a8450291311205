#include "naseval/supernet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "naseval/errors.hpp"
#include "naseval/stats.hpp"

namespace naseval::supernet {

namespace {

enum class Act { kIdentity, kSigmoid, kTanh, kRelu };

Act act_from_name(const std::string& name) {
  if (name == "identity") return Act::kIdentity;
  if (name == "sigmoid") return Act::kSigmoid;
  if (name == "tanh") return Act::kTanh;
  if (name == "relu") return Act::kRelu;
  throw UsageError("supernet cell has no activation named '" + name + "'");
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

// Derivative in terms of pre-activation u and output c.
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

std::vector<Act> resolve_acts(const space::ChainArch& arch, const space::OpSet& ops) {
  std::vector<Act> acts;
  acts.reserve(arch.decisions.size());
  for (const auto& d : arch.decisions) acts.push_back(act_from_name(ops.name(d.op)));
  return acts;
}

struct StepTrace {
  std::vector<int> tokens;                // per batch row
  Eigen::MatrixXd inputs;                 // emb x B
  std::vector<Eigen::MatrixXd> pre;       // node 0..n pre-activations (z0, u_i)
  std::vector<Eigen::MatrixXd> out;       // node 0..n outputs (c_i)
  Eigen::MatrixXd h;                      // hidden x B
  Eigen::MatrixXd probs;                  // vocab x B softmax
};

// Recurrent pass shared by forward and forward_backward. Fills `trace`
// when a backward pass will follow.
double run_cell(const space::ChainArch& arch, const std::vector<Act>& acts,
                const SharedParams& params, const Sequences& data, std::span<const int> rows,
                std::vector<StepTrace>* trace) {
  if (rows.empty()) throw UsageError("empty batch");
  const int batch = static_cast<int>(rows.size());
  const int steps = static_cast<int>(data[static_cast<std::size_t>(rows[0])].size()) - 1;
  const int n = params.node_count;
  if (static_cast<int>(arch.decisions.size()) != n) {
    throw UsageError("architecture does not match the parameter store's node count");
  }

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(params.hidden, batch);
  double loss = 0.0;
  const double inv_count = 1.0 / (static_cast<double>(batch) * static_cast<double>(steps));

  for (int t = 0; t < steps; ++t) {
    StepTrace step;
    step.tokens.resize(static_cast<std::size_t>(batch));
    step.inputs.resize(params.emb, batch);
    for (int b = 0; b < batch; ++b) {
      const auto& seq = data[static_cast<std::size_t>(rows[static_cast<std::size_t>(b)])];
      step.tokens[static_cast<std::size_t>(b)] = seq[static_cast<std::size_t>(t)];
      step.inputs.col(b) = params.embedding.col(seq[static_cast<std::size_t>(t)]);
    }

    step.pre.resize(static_cast<std::size_t>(n) + 1);
    step.out.resize(static_cast<std::size_t>(n) + 1);
    step.pre[0] = params.w_x * step.inputs + params.w_h * h;
    step.out[0] = step.pre[0].array().tanh().matrix();
    for (int i = 1; i <= n; ++i) {
      const int pred = arch.decisions[static_cast<std::size_t>(i - 1)].predecessor;
      step.pre[static_cast<std::size_t>(i)] =
          params.edges[static_cast<std::size_t>(SharedParams::edge_slot(i, pred))] *
          step.out[static_cast<std::size_t>(pred)];
      step.out[static_cast<std::size_t>(i)] =
          apply_act(acts[static_cast<std::size_t>(i - 1)], step.pre[static_cast<std::size_t>(i)]);
    }
    step.h = step.out[1];
    for (int i = 2; i <= n; ++i) step.h += step.out[static_cast<std::size_t>(i)];
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

void backprop(const space::ChainArch& arch, const std::vector<Act>& acts,
              const SharedParams& params, const Sequences& data, std::span<const int> rows,
              const std::vector<StepTrace>& trace, Gradients& grads) {
  const int batch = static_cast<int>(rows.size());
  const int steps = static_cast<int>(trace.size());
  const int n = params.node_count;
  const double inv_count = 1.0 / (static_cast<double>(batch) * static_cast<double>(steps));

  Eigen::MatrixXd dh_next = Eigen::MatrixXd::Zero(params.hidden, batch);
  for (int t = steps - 1; t >= 0; --t) {
    const StepTrace& step = trace[static_cast<std::size_t>(t)];

    Eigen::MatrixXd dlogits = step.probs;
    for (int b = 0; b < batch; ++b) {
      const auto& seq = data[static_cast<std::size_t>(rows[static_cast<std::size_t>(b)])];
      dlogits(seq[static_cast<std::size_t>(t) + 1], b) -= 1.0;
    }
    dlogits *= inv_count;

    grads.readout += dlogits * step.h.transpose();
    grads.readout_bias.col(0) += dlogits.rowwise().sum();
    Eigen::MatrixXd dh = params.readout.transpose() * dlogits + dh_next;

    std::vector<Eigen::MatrixXd> dout(static_cast<std::size_t>(n) + 1,
                                      Eigen::MatrixXd::Zero(params.hidden, batch));
    const Eigen::MatrixXd dh_per_node = dh / static_cast<double>(n);
    for (int i = 1; i <= n; ++i) dout[static_cast<std::size_t>(i)] = dh_per_node;

    for (int i = n; i >= 1; --i) {
      const int pred = arch.decisions[static_cast<std::size_t>(i - 1)].predecessor;
      const int slot = SharedParams::edge_slot(i, pred);
      const Eigen::MatrixXd du =
          (act_derivative(acts[static_cast<std::size_t>(i - 1)],
                          step.pre[static_cast<std::size_t>(i)],
                          step.out[static_cast<std::size_t>(i)]) *
           dout[static_cast<std::size_t>(i)].array())
              .matrix();
      grads.edges[static_cast<std::size_t>(slot)] +=
          du * step.out[static_cast<std::size_t>(pred)].transpose();
      dout[static_cast<std::size_t>(pred)] +=
          params.edges[static_cast<std::size_t>(slot)].transpose() * du;
    }

    const Eigen::MatrixXd dz0 =
        ((1.0 - step.out[0].array().square()) * dout[0].array()).matrix();
    grads.w_x += dz0 * step.inputs.transpose();
    const Eigen::MatrixXd h_prev =
        t > 0 ? trace[static_cast<std::size_t>(t) - 1].h
              : Eigen::MatrixXd::Zero(params.hidden, batch);
    grads.w_h += dz0 * h_prev.transpose();
    const Eigen::MatrixXd dinputs = params.w_x.transpose() * dz0;
    for (int b = 0; b < batch; ++b) {
      grads.embedding.col(step.tokens[static_cast<std::size_t>(b)]) += dinputs.col(b);
    }
    dh_next = params.w_h.transpose() * dz0;
  }
}

// Global-norm clipping followed by an SGD step over the listed matrices.
void sgd_step(std::vector<std::pair<Eigen::MatrixXd*, const Eigen::MatrixXd*>>& slots, double lr,
              double clip) {
  double sq_norm = 0.0;
  for (auto& [param, grad] : slots) sq_norm += grad->squaredNorm();
  const double norm = std::sqrt(sq_norm);
  const double scale = norm > clip ? clip / norm : 1.0;
  for (auto& [param, grad] : slots) *param -= (lr * scale) * *grad;
}

std::vector<std::pair<Eigen::MatrixXd*, const Eigen::MatrixXd*>> active_slots(
    SharedParams& params, Gradients& grads, const space::ChainArch& arch) {
  std::vector<std::pair<Eigen::MatrixXd*, const Eigen::MatrixXd*>> slots = {
      {&params.embedding, &grads.embedding},
      {&params.w_x, &grads.w_x},
      {&params.w_h, &grads.w_h},
      {&params.readout, &grads.readout},
      {&params.readout_bias, &grads.readout_bias},
  };
  for (const space::Edge& e : space::active_edges(arch)) {
    const int slot = SharedParams::edge_slot(e.target, e.predecessor);
    slots.emplace_back(&params.edges[static_cast<std::size_t>(slot)],
                       &grads.edges[static_cast<std::size_t>(slot)]);
  }
  return slots;
}

std::vector<std::vector<int>> epoch_batches(int n_rows, int batch_size, Rng& rng) {
  std::vector<int> order(static_cast<std::size_t>(n_rows));
  std::iota(order.begin(), order.end(), 0);
  // Fisher-Yates with the owned stream.
  for (int i = n_rows - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  std::vector<std::vector<int>> batches;
  for (int start = 0; start < n_rows; start += batch_size) {
    const int end = std::min(start + batch_size, n_rows);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

std::vector<int> all_rows(const Sequences& data) {
  std::vector<int> rows(data.size());
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

std::vector<int> checkpoint_epochs_for(const TrainConfig& config) {
  std::vector<int> epochs;
  for (int e = config.eval_every; e <= config.epochs; e += config.eval_every) epochs.push_back(e);
  if (epochs.empty() || epochs.back() != config.epochs) epochs.push_back(config.epochs);
  return epochs;
}

// Dense ranking of values (ascending = better), ties broken by key text.
std::vector<int> dense_ranks(const std::vector<std::string>& keys,
                             const std::vector<double>& values) {
  std::vector<int> order(keys.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double va = values[static_cast<std::size_t>(a)];
    const double vb = values[static_cast<std::size_t>(b)];
    if (va != vb) return va < vb;
    return keys[static_cast<std::size_t>(a)] < keys[static_cast<std::size_t>(b)];
  });
  std::vector<int> ranks(keys.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    ranks[static_cast<std::size_t>(order[r])] = static_cast<int>(r) + 1;
  }
  return ranks;
}

}  // namespace

void TrainConfig::validate() const {
  if (hidden_size < 1 || embedding_size < 1 || batch_size < 1) {
    throw UsageError("train config sizes must be positive");
  }
  if (epochs < 1) throw UsageError("train config epochs must be >= 1");
  if (!(learning_rate > 0.0) || !(gradient_clip > 0.0)) {
    throw UsageError("learning rate and gradient clip must be positive");
  }
  if (eval_every < 1) throw UsageError("eval_every must be >= 1");
}

SharedParams::SharedParams(const space::SearchSpaceSpec& spec, const TrainConfig& config,
                           int vocab_size)
    : node_count(spec.node_count), vocab(vocab_size), hidden(config.hidden_size),
      emb(config.embedding_size), ops(spec.ops) {
  config.validate();
  if (spec.family != space::Family::kChainRecurrent) {
    throw UsageError("the supernet covers chain-recurrent spaces only");
  }
  embedding = Eigen::MatrixXd::Zero(emb, vocab);
  w_x = Eigen::MatrixXd::Zero(hidden, emb);
  w_h = Eigen::MatrixXd::Zero(hidden, hidden);
  edges.assign(static_cast<std::size_t>(node_count) * (node_count + 1) / 2,
               Eigen::MatrixXd::Zero(hidden, hidden));
  readout = Eigen::MatrixXd::Zero(vocab, hidden);
  readout_bias = Eigen::MatrixXd::Zero(vocab, 1);
}

int SharedParams::edge_slot(int target, int predecessor) {
  return (target - 1) * target / 2 + predecessor;
}

void SharedParams::init_uniform(Rng& rng, double range,
                                const std::vector<space::Edge>* subset) {
  auto fill = [&](Eigen::MatrixXd& m) {
    double* data = m.data();
    for (Eigen::Index k = 0; k < m.size(); ++k) {
      data[k] = (2.0 * rng.next_double() - 1.0) * range;
    }
  };
  fill(embedding);
  fill(w_x);
  fill(w_h);
  if (subset) {
    std::vector<int> slots;
    slots.reserve(subset->size());
    for (const space::Edge& e : *subset) slots.push_back(edge_slot(e.target, e.predecessor));
    std::sort(slots.begin(), slots.end());
    for (int slot : slots) fill(edges[static_cast<std::size_t>(slot)]);
  } else {
    for (auto& edge : edges) fill(edge);
  }
  fill(readout);
}

double SharedParams::default_init_range() const { return 1.0 / std::sqrt(static_cast<double>(hidden)); }

bool SharedParams::all_finite() const {
  auto ok = [](const Eigen::MatrixXd& m) { return m.allFinite(); };
  if (!ok(embedding) || !ok(w_x) || !ok(w_h) || !ok(readout) || !ok(readout_bias)) {
    return false;
  }
  for (const auto& edge : edges) {
    if (!ok(edge)) return false;
  }
  return true;
}

Gradients::Gradients(const SharedParams& params) {
  embedding = Eigen::MatrixXd::Zero(params.embedding.rows(), params.embedding.cols());
  w_x = Eigen::MatrixXd::Zero(params.w_x.rows(), params.w_x.cols());
  w_h = Eigen::MatrixXd::Zero(params.w_h.rows(), params.w_h.cols());
  readout = Eigen::MatrixXd::Zero(params.readout.rows(), params.readout.cols());
  readout_bias = Eigen::MatrixXd::Zero(params.readout_bias.rows(), 1);
  edges.assign(params.edges.size(),
               Eigen::MatrixXd::Zero(params.hidden, params.hidden));
}

void Gradients::set_zero() {
  embedding.setZero();
  w_x.setZero();
  w_h.setZero();
  readout.setZero();
  readout_bias.setZero();
  for (auto& edge : edges) edge.setZero();
}

double forward(const space::ChainArch& arch, const SharedParams& params, const Sequences& data,
               std::span<const int> rows) {
  return run_cell(arch, resolve_acts(arch, params.ops), params, data, rows, nullptr);
}

double forward_backward(const space::ChainArch& arch, const SharedParams& params,
                        const Sequences& data, std::span<const int> rows, Gradients& grads) {
  const std::vector<Act> acts = resolve_acts(arch, params.ops);
  std::vector<StepTrace> trace;
  trace.reserve(data[0].size());
  const double loss = run_cell(arch, acts, params, data, rows, &trace);
  grads.set_zero();
  backprop(arch, acts, params, data, rows, trace, grads);
  return loss;
}

namespace {

EvalResult evaluate_on(const space::ChainArch& arch, const SharedParams& params,
                       const space::SearchSpaceSpec& spec, const Sequences& split, int epoch) {
  const std::vector<int> rows = all_rows(split);
  EvalResult result;
  result.loss = forward(arch, params, split, rows);
  result.ppl = std::exp(result.loss);
  result.arch_key = space::canonical_encoding(arch, spec);
  result.epoch = epoch;
  result.failed = !std::isfinite(result.loss);
  return result;
}

}  // namespace

EvalResult evaluate(const space::ChainArch& arch, const SharedParams& params,
                    const space::SearchSpaceSpec& spec, const SyntheticTask& task, int epoch) {
  return evaluate_on(arch, params, spec, task.valid(), epoch);
}

EvalResult evaluate_test(const space::ChainArch& arch, const SharedParams& params,
                         const space::SearchSpaceSpec& spec, const SyntheticTask& task,
                         int epoch) {
  return evaluate_on(arch, params, spec, task.test(), epoch);
}

StandaloneRun train_standalone_run(const space::ChainArch& arch,
                                   const space::SearchSpaceSpec& spec, const SyntheticTask& task,
                                   const TrainConfig& config, std::uint64_t seed) {
  config.validate();
  space::validate(arch, spec);

  SharedParams params(spec, config, task.vocab_size());
  const std::vector<space::Edge> active = space::active_edges(arch);
  Rng init_rng(seed, streams::kInit);
  params.init_uniform(init_rng, params.default_init_range(), &active);

  Gradients grads(params);
  Rng batch_rng(seed, streams::kBatchOrder);
  const std::vector<int> checkpoints = checkpoint_epochs_for(config);

  StandaloneRun run;
  bool failed = false;
  for (int epoch = 1; epoch <= config.epochs && !failed; ++epoch) {
    for (const auto& rows :
         epoch_batches(static_cast<int>(task.train().size()), config.batch_size, batch_rng)) {
      const double loss = forward_backward(arch, params, task.train(), rows, grads);
      if (!std::isfinite(loss)) {
        failed = true;
        break;
      }
      auto slots = active_slots(params, grads, arch);
      sgd_step(slots, config.learning_rate, config.gradient_clip);
    }
    if (!failed && std::find(checkpoints.begin(), checkpoints.end(), epoch) != checkpoints.end()) {
      EvalResult eval = evaluate(arch, params, spec, task, epoch);
      failed = failed || eval.failed;
      run.checkpoints.emplace_back(epoch, std::move(eval));
    }
  }

  if (failed || !params.all_finite()) {
    run.final_eval.failed = true;
    run.final_eval.arch_key = space::canonical_encoding(arch, spec);
    run.final_eval.loss = std::numeric_limits<double>::quiet_NaN();
    run.final_eval.ppl = std::numeric_limits<double>::quiet_NaN();
    run.final_eval.epoch = config.epochs;
    run.final_test_eval = run.final_eval;
    return run;
  }
  run.final_eval = run.checkpoints.back().second;
  run.final_test_eval = evaluate_test(arch, params, spec, task, config.epochs);
  return run;
}

EvalResult train_standalone(const space::ChainArch& arch, const space::SearchSpaceSpec& spec,
                            const SyntheticTask& task, const TrainConfig& config,
                            std::uint64_t seed) {
  return train_standalone_run(arch, spec, task, config, seed).final_eval;
}

WeightSharingRun train_weight_sharing(const space::SearchSpaceSpec& spec,
                                      const SyntheticTask& task, const TrainConfig& config,
                                      std::uint64_t seed,
                                      const std::vector<space::ChainArch>* candidates) {
  config.validate();
  if (!candidates) {
    // Uniform per-node sampling covers the space, but cardinality must not
    // overflow downstream bookkeeping.
    (void)space::cardinality(spec);
  } else if (candidates->empty()) {
    throw UsageError("candidate subset must not be empty");
  }

  WeightSharingRun run{SharedParams(spec, config, task.vocab_size()), {}, false};
  Rng init_rng(seed, streams::kInit);
  run.params.init_uniform(init_rng, run.params.default_init_range());

  Gradients grads(run.params);
  Rng batch_rng(seed, streams::kBatchOrder);
  Rng arch_rng(seed, streams::kArchSample);

  for (int epoch = 1; epoch <= config.epochs && !run.failed; ++epoch) {
    for (const auto& rows :
         epoch_batches(static_cast<int>(task.train().size()), config.batch_size, batch_rng)) {
      space::ChainArch arch =
          candidates ? (*candidates)[static_cast<std::size_t>(
                           arch_rng.next_below(candidates->size()))]
                     : space::sample_uniform(spec, arch_rng);
      run.sampling_log.push_back(space::canonical_encoding(arch, spec));
      const double loss = forward_backward(arch, run.params, task.train(), rows, grads);
      if (!std::isfinite(loss)) {
        run.failed = true;
        break;
      }
      auto slots = active_slots(run.params, grads, arch);
      sgd_step(slots, config.learning_rate, config.gradient_clip);
    }
  }
  run.failed = run.failed || !run.params.all_finite();
  return run;
}

std::vector<std::pair<space::ChainArch, EvalResult>> ws_ranking(
    const SharedParams& shared, const space::SearchSpaceSpec& spec, const SyntheticTask& task) {
  std::vector<std::pair<space::ChainArch, EvalResult>> ranking;
  for (const space::ChainArch& arch : space::enumerate_space(spec)) {
    ranking.emplace_back(arch, evaluate(arch, shared, spec, task, 0));
  }
  std::sort(ranking.begin(), ranking.end(), [](const auto& a, const auto& b) {
    if (a.second.loss != b.second.loss) return a.second.loss < b.second.loss;
    return a.second.arch_key < b.second.arch_key;
  });
  return ranking;
}

SweepResult sweep_standalone(const space::SearchSpaceSpec& spec, const SyntheticTask& task,
                             const TrainConfig& config, std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw UsageError("need at least one seed");
  const std::vector<space::ChainArch> archs = space::enumerate_space(spec);

  SweepResult sweep;
  sweep.seeds.assign(seeds.begin(), seeds.end());
  sweep.checkpoint_epochs = checkpoint_epochs_for(config);
  const std::size_t n_checkpoints = sweep.checkpoint_epochs.size();

  for (const space::ChainArch& arch : archs) {
    sweep.keys.push_back(space::canonical_encoding(arch, spec));
    std::vector<double> ppl_sums(n_checkpoints, 0.0);
    std::vector<int> good(n_checkpoints, 0);
    std::vector<double> finals, test_finals;
    for (const std::uint64_t seed : seeds) {
      const StandaloneRun run = train_standalone_run(arch, spec, task, config, seed);
      if (run.final_eval.failed) {
        ++sweep.failed_runs;
        finals.push_back(std::numeric_limits<double>::quiet_NaN());
        test_finals.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      finals.push_back(run.final_eval.ppl);
      test_finals.push_back(run.final_test_eval.ppl);
      for (std::size_t c = 0; c < n_checkpoints; ++c) {
        ppl_sums[c] += run.checkpoints[c].second.ppl;
        ++good[c];
      }
    }
    std::vector<double> means(n_checkpoints, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t c = 0; c < n_checkpoints; ++c) {
      if (good[c] > 0) means[c] = ppl_sums[c] / good[c];
    }
    sweep.mean_ppl.push_back(std::move(means));
    sweep.per_seed_final_ppl.push_back(std::move(finals));
    sweep.per_seed_test_ppl.push_back(std::move(test_finals));
  }
  return sweep;
}

oracle::BenchmarkTable table_from_sweep(const SweepResult& sweep,
                                        const space::SearchSpaceSpec& spec, int* failed_archs,
                                        bool use_test_metric) {
  std::vector<oracle::TabularRecord> records;
  int dropped = 0;
  for (std::size_t a = 0; a < sweep.keys.size(); ++a) {
    const auto& per_seed =
        use_test_metric ? sweep.per_seed_test_ppl[a] : sweep.per_seed_final_ppl[a];
    std::vector<double> good;
    for (double ppl : per_seed) {
      if (std::isfinite(ppl)) good.push_back(ppl);
    }
    if (good.empty()) {
      ++dropped;
      continue;
    }
    const stats::AggregateReport agg =
        stats::aggregate(good, MetricDirection::kLowerBetter);
    records.push_back({sweep.keys[a], agg.mean, agg.std_dev, agg.n});
  }
  if (failed_archs) *failed_archs = dropped;
  return oracle::BenchmarkTable(spec, MetricKind::kPerplexity, MetricDirection::kLowerBetter,
                                std::move(records));
}

oracle::BenchmarkTable ground_truth_table(const space::SearchSpaceSpec& spec,
                                          const SyntheticTask& task, const TrainConfig& config,
                                          std::span<const std::uint64_t> seeds,
                                          int* failed_runs) {
  const SweepResult sweep = sweep_standalone(spec, task, config, seeds);
  if (failed_runs) *failed_runs = sweep.failed_runs;
  return table_from_sweep(sweep, spec);
}

RankTrajectory trajectory_from_sweep(const SweepResult& sweep) {
  RankTrajectory trajectory;
  trajectory.checkpoint_epochs = sweep.checkpoint_epochs;

  // Architectures with no surviving seed are dropped from every column.
  std::vector<std::size_t> kept;
  for (std::size_t a = 0; a < sweep.keys.size(); ++a) {
    if (std::isfinite(sweep.mean_ppl[a].back())) {
      kept.push_back(a);
      trajectory.keys.push_back(sweep.keys[a]);
    }
  }

  const std::size_t n_checkpoints = sweep.checkpoint_epochs.size();
  trajectory.ranks.assign(trajectory.keys.size(), std::vector<int>(n_checkpoints, 0));
  for (std::size_t c = 0; c < n_checkpoints; ++c) {
    std::vector<double> column;
    column.reserve(kept.size());
    for (std::size_t a : kept) column.push_back(sweep.mean_ppl[a][c]);
    const std::vector<int> ranks = dense_ranks(trajectory.keys, column);
    for (std::size_t a = 0; a < kept.size(); ++a) trajectory.ranks[a][c] = ranks[a];
  }

  std::vector<double> first(trajectory.keys.size()), last(trajectory.keys.size());
  for (std::size_t a = 0; a < trajectory.keys.size(); ++a) {
    first[a] = trajectory.ranks[a].front();
    last[a] = trajectory.ranks[a].back();
  }
  trajectory.tau_first_last =
      trajectory.keys.size() >= 2 ? stats::kendall_tau(first, last).tau : 1.0;
  return trajectory;
}

RankTrajectory rank_trajectory(const space::SearchSpaceSpec& spec, const SyntheticTask& task,
                               const TrainConfig& config, std::span<const std::uint64_t> seeds) {
  return trajectory_from_sweep(sweep_standalone(spec, task, config, seeds));
}

}  // namespace naseval::supernet
