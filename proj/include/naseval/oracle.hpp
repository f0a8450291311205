#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "naseval/metric.hpp"
#include "naseval/rng.hpp"
#include "naseval/space.hpp"

namespace naseval::oracle {

/// One ground-truth row: canonical key, mean metric over the training
/// repetitions, sample std across them, and the repetition count.
struct TabularRecord {
  std::string key;
  double mean = 0.0;
  double std_dev = 0.0;
  int runs = 1;
};

struct SpaceStats {
  double mean = 0.0;
  double std_dev = 0.0;  // population std over record means
  double best = 0.0;
};

/// Extra header fields carried by a saved table (provenance only; the
/// loader ignores fields it does not know).
struct TableProvenance {
  std::string tool_version;
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
};

/// Immutable tabular benchmark with precomputed dense ranks (1 = best,
/// ties broken by key text).
class BenchmarkTable {
 public:
  BenchmarkTable(space::SearchSpaceSpec spec, MetricKind metric, MetricDirection direction,
                 std::vector<TabularRecord> records);

  /// Reads the JSON-Lines format: one header object followed by one record
  /// object per line. Throws ParseError (with line number), DuplicateKeyError
  /// or InvalidArchError.
  static BenchmarkTable load(const std::filesystem::path& path);

  /// Writes the table back out, header first, records sorted by key.
  /// Output bytes are a pure function of the table and the provenance.
  void save(const std::filesystem::path& path, const TableProvenance& provenance = {}) const;

  const space::SearchSpaceSpec& spec() const { return spec_; }
  MetricKind metric() const { return metric_; }
  MetricDirection direction() const { return direction_; }
  std::size_t size() const { return records_.size(); }

  /// Keys sorted lexicographically; the uniform-sampling universe for
  /// table-backed spaces.
  const std::vector<std::string>& keys() const { return keys_; }

  const TabularRecord& query(const std::string& key) const;
  const TabularRecord& query(const space::ChainArch& arch) const;

  /// Dense rank of a key, 1 = best under the metric direction.
  int rank_of(const std::string& key) const;
  int rank_of(const space::ChainArch& arch) const;

  /// The rank-1 record.
  const TabularRecord& best() const;

  /// Key at a given rank (1-based).
  const std::string& key_at_rank(int rank) const;

  /// Unweighted mean / population std / best over the record means.
  SpaceStats space_stats() const;

  /// One draw from Normal(mean, std) of the record, clamped to the metric's
  /// valid range. Deterministic given the generator state.
  double sample_noisy(const std::string& key, Rng& rng) const;

 private:
  space::SearchSpaceSpec spec_;
  MetricKind metric_;
  MetricDirection direction_;
  std::vector<TabularRecord> records_;              // sorted by key
  std::vector<std::string> keys_;                   // sorted
  std::unordered_map<std::string, int> index_;      // key -> records_ index
  std::vector<int> rank_;                           // records_ index -> rank
  std::vector<int> rank_to_index_;                  // rank-1 -> records_ index
};

}  // namespace naseval::oracle
