#include "naseval/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "naseval/errors.hpp"

namespace naseval::oracle {

using nlohmann::json;

namespace {

constexpr double kMinPerplexity = 1e-12;  // "greater than zero" clamp floor

void validate_record(const TabularRecord& record, const space::SearchSpaceSpec& spec,
                     MetricKind metric) {
  if (spec.family == space::Family::kChainRecurrent) {
    space::decode_chain(record.key, spec);
  } else {
    space::decode_graph(record.key, spec);
  }
  if (!std::isfinite(record.mean)) throw ParseError("record mean not finite: " + record.key);
  if (!(record.std_dev >= 0.0)) throw ParseError("record std must be >= 0: " + record.key);
  if (record.runs < 1) throw ParseError("record runs must be >= 1: " + record.key);
  if (metric == MetricKind::kAccuracy && (record.mean < 0.0 || record.mean > 1.0)) {
    throw ParseError("accuracy mean outside [0, 1]: " + record.key);
  }
  if (metric == MetricKind::kPerplexity && record.mean <= 0.0) {
    throw ParseError("perplexity mean must be > 0: " + record.key);
  }
}

}  // namespace

BenchmarkTable::BenchmarkTable(space::SearchSpaceSpec spec, MetricKind metric,
                               MetricDirection direction, std::vector<TabularRecord> records)
    : spec_(std::move(spec)), metric_(metric), direction_(direction),
      records_(std::move(records)) {
  if (records_.empty()) throw UsageError("benchmark table must not be empty");

  std::sort(records_.begin(), records_.end(),
            [](const TabularRecord& a, const TabularRecord& b) { return a.key < b.key; });
  keys_.reserve(records_.size());
  index_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    validate_record(records_[i], spec_, metric_);
    keys_.push_back(records_[i].key);
    if (!index_.emplace(records_[i].key, static_cast<int>(i)).second) {
      throw DuplicateKeyError("duplicate key: " + records_[i].key);
    }
  }

  // Dense ranks, 1 = best; equal means fall back to key order (records_ is
  // already key-sorted, so the sort below is stable in that order).
  std::vector<int> order(records_.size());
  std::iota(order.begin(), order.end(), 0);
  const bool higher = direction_ == MetricDirection::kHigherBetter;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double ma = records_[static_cast<std::size_t>(a)].mean;
    const double mb = records_[static_cast<std::size_t>(b)].mean;
    return higher ? ma > mb : ma < mb;
  });
  rank_.assign(records_.size(), 0);
  rank_to_index_ = order;
  for (std::size_t r = 0; r < order.size(); ++r) {
    rank_[static_cast<std::size_t>(order[r])] = static_cast<int>(r) + 1;
  }
}

BenchmarkTable BenchmarkTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open benchmark table: " + path.string());

  std::string line;
  int line_no = 0;
  auto next_json = [&](json& out) -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        out = json::parse(line);
      } catch (const json::exception& e) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
      return true;
    }
    return false;
  };

  json header;
  if (!next_json(header)) throw ParseError(path.string() + ": empty table file");

  space::SearchSpaceSpec spec;
  MetricKind metric;
  MetricDirection direction;
  try {
    spec.family = space::family_from_string(header.at("family").get<std::string>());
    spec.node_count = header.at("node_count").get<int>();
    spec.ops = space::OpSet(header.at("ops").get<std::vector<std::string>>());
    metric = metric_kind_from_string(header.at("metric").get<std::string>());
    direction = direction_from_string(header.at("direction").get<std::string>());
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ":1: bad header: " + e.what());
  }

  std::vector<TabularRecord> records;
  json row;
  while (next_json(row)) {
    TabularRecord record;
    try {
      record.key = row.at("key").get<std::string>();
      record.mean = row.at("mean").get<double>();
      record.std_dev = row.at("std").get<double>();
      record.runs = row.at("runs").get<int>();
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    records.push_back(std::move(record));
  }
  if (records.empty()) throw ParseError(path.string() + ": table has a header but no records");

  try {
    return BenchmarkTable(std::move(spec), metric, direction, std::move(records));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void BenchmarkTable::save(const std::filesystem::path& path,
                          const TableProvenance& provenance) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write benchmark table: " + path.string());

  json header;
  header["family"] = space::to_string(spec_.family);
  header["node_count"] = spec_.node_count;
  header["ops"] = spec_.ops.names();
  header["metric"] = to_string(metric_);
  header["direction"] = to_string(direction_);
  if (!provenance.tool_version.empty()) header["tool_version"] = provenance.tool_version;
  if (!provenance.config_hash.empty()) header["config_hash"] = provenance.config_hash;
  if (!provenance.seeds.empty()) header["seeds"] = provenance.seeds;
  out << header.dump() << '\n';

  for (const TabularRecord& record : records_) {
    json row;
    row["key"] = record.key;
    row["mean"] = record.mean;
    row["std"] = record.std_dev;
    row["runs"] = record.runs;
    out << row.dump() << '\n';
  }
}

const TabularRecord& BenchmarkTable::query(const std::string& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) throw NotFoundError("key not in table: " + key);
  return records_[static_cast<std::size_t>(it->second)];
}

const TabularRecord& BenchmarkTable::query(const space::ChainArch& arch) const {
  return query(space::canonical_encoding(arch, spec_));
}

int BenchmarkTable::rank_of(const std::string& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) throw NotFoundError("key not in table: " + key);
  return rank_[static_cast<std::size_t>(it->second)];
}

int BenchmarkTable::rank_of(const space::ChainArch& arch) const {
  return rank_of(space::canonical_encoding(arch, spec_));
}

const TabularRecord& BenchmarkTable::best() const {
  return records_[static_cast<std::size_t>(rank_to_index_[0])];
}

const std::string& BenchmarkTable::key_at_rank(int rank) const {
  if (rank < 1 || rank > static_cast<int>(records_.size())) {
    throw UsageError("rank outside [1, " + std::to_string(records_.size()) + "]");
  }
  return records_[static_cast<std::size_t>(rank_to_index_[static_cast<std::size_t>(rank - 1)])]
      .key;
}

SpaceStats BenchmarkTable::space_stats() const {
  SpaceStats stats;
  double sum = 0.0;
  for (const TabularRecord& record : records_) sum += record.mean;
  stats.mean = sum / static_cast<double>(records_.size());
  double ss = 0.0;
  for (const TabularRecord& record : records_) {
    ss += (record.mean - stats.mean) * (record.mean - stats.mean);
  }
  stats.std_dev = std::sqrt(ss / static_cast<double>(records_.size()));
  stats.best = best().mean;
  return stats;
}

double BenchmarkTable::sample_noisy(const std::string& key, Rng& rng) const {
  const TabularRecord& record = query(key);
  double draw = record.mean + record.std_dev * rng.next_normal();
  if (metric_ == MetricKind::kAccuracy) {
    draw = std::clamp(draw, 0.0, 1.0);
  } else {
    draw = std::max(draw, kMinPerplexity);
  }
  return draw;
}

}  // namespace naseval::oracle
