#pragma once

#include <cstdint>
#include <vector>

#include "naseval/rng.hpp"

namespace naseval::supernet {

/// Synthetic next-token task: a seeded deterministic automaton over the
/// vocabulary emits the next token from the last `order` tokens, corrupted
/// by uniform noise with probability `noise`. Splits are generated from
/// disjoint streams of the task seed.
struct TaskSpec {
  int vocab_size = 8;
  int sequence_length = 20;  // prediction steps per sequence
  int order = 2;
  double noise = 0.1;
  int train_sequences = 256;
  int valid_sequences = 64;
  int test_sequences = 64;
  std::uint64_t seed = 11;

  void validate() const;
};

class SyntheticTask {
 public:
  explicit SyntheticTask(const TaskSpec& spec);

  const TaskSpec& spec() const { return spec_; }
  int vocab_size() const { return spec_.vocab_size; }
  int sequence_length() const { return spec_.sequence_length; }

  /// Sequences of length sequence_length + 1; position t is the input for
  /// predicting position t + 1.
  const std::vector<std::vector<int>>& train() const { return train_; }
  const std::vector<std::vector<int>>& valid() const { return valid_; }
  const std::vector<std::vector<int>>& test() const { return test_; }

  /// Cross-entropy of the valid split under its own empirical unigram
  /// distribution; the floor any memoryless predictor can reach.
  double unigram_baseline_loss() const;

 private:
  std::vector<int> generate_sequence(Rng& rng) const;

  TaskSpec spec_;
  std::vector<int> transition_;  // state -> next token, state = base-V window
  std::vector<std::vector<int>> train_, valid_, test_;
};

}  // namespace naseval::supernet
