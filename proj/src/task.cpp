#include "naseval/task.hpp"

#include <cmath>
#include <set>

#include "naseval/errors.hpp"

namespace naseval::supernet {

void TaskSpec::validate() const {
  if (vocab_size < 2) throw UsageError("task vocab_size must be >= 2");
  if (sequence_length < 1) throw UsageError("task sequence_length must be >= 1");
  if (order < 1 || order > 4) throw UsageError("task order must be in [1, 4]");
  if (!(noise >= 0.0 && noise < 1.0)) throw UsageError("task noise must be in [0, 1)");
  if (train_sequences < 1 || valid_sequences < 1 || test_sequences < 1) {
    throw UsageError("task split sizes must be >= 1");
  }
}

SyntheticTask::SyntheticTask(const TaskSpec& spec) : spec_(spec) {
  spec_.validate();

  std::size_t states = 1;
  for (int k = 0; k < spec_.order; ++k) states *= static_cast<std::size_t>(spec_.vocab_size);
  transition_.resize(states);
  Rng automaton_rng(spec_.seed, streams::kTaskAutomaton);
  for (auto& next : transition_) {
    next = static_cast<int>(automaton_rng.next_below(static_cast<std::uint64_t>(spec_.vocab_size)));
  }

  // Later splits reject any sequence an earlier split already holds, so the
  // splits stay disjoint; the automaton is near-deterministic and collisions
  // are common otherwise.
  std::set<std::vector<int>> taken;
  auto fill = [&](std::vector<std::vector<int>>& split, int count, std::uint64_t stream) {
    Rng rng(spec_.seed, stream);
    split.reserve(static_cast<std::size_t>(count));
    const long attempts_cap = 1000L * count;
    long attempts = 0;
    for (int s = 0; s < count; ++s) {
      std::vector<int> sequence;
      do {
        if (++attempts > attempts_cap) {
          throw UsageError("task space too small for disjoint splits; raise vocab_size, "
                           "sequence_length or noise");
        }
        sequence = generate_sequence(rng);
      } while (taken.contains(sequence));
      split.push_back(std::move(sequence));
    }
    for (const auto& sequence : split) taken.insert(sequence);
  };
  fill(train_, spec_.train_sequences, streams::kTaskTrain);
  fill(valid_, spec_.valid_sequences, streams::kTaskValid);
  fill(test_, spec_.test_sequences, streams::kTaskTest);
}

std::vector<int> SyntheticTask::generate_sequence(Rng& rng) const {
  const int total = spec_.sequence_length + 1;
  std::vector<int> tokens;
  tokens.reserve(static_cast<std::size_t>(total));
  for (int k = 0; k < spec_.order && k < total; ++k) {
    tokens.push_back(static_cast<int>(rng.next_below(static_cast<std::uint64_t>(spec_.vocab_size))));
  }
  while (static_cast<int>(tokens.size()) < total) {
    std::size_t state = 0;
    for (int k = spec_.order; k >= 1; --k) {
      state = state * static_cast<std::size_t>(spec_.vocab_size) +
              static_cast<std::size_t>(tokens[tokens.size() - static_cast<std::size_t>(k)]);
    }
    int next = transition_[state];
    if (rng.next_double() < spec_.noise) {
      next = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(spec_.vocab_size)));
    }
    tokens.push_back(next);
  }
  return tokens;
}

double SyntheticTask::unigram_baseline_loss() const {
  std::vector<double> counts(static_cast<std::size_t>(spec_.vocab_size), 0.0);
  double total = 0.0;
  for (const auto& seq : valid_) {
    for (std::size_t t = 1; t < seq.size(); ++t) {
      counts[static_cast<std::size_t>(seq[t])] += 1.0;
      total += 1.0;
    }
  }
  double entropy = 0.0;
  for (double c : counts) {
    if (c > 0.0) {
      const double p = c / total;
      entropy -= p * std::log(p);
    }
  }
  return entropy;
}

}  // namespace naseval::supernet
