// Regenerates the bundled fixtures under data/. Both outputs are pure
// functions of the checked-in presets and the seeds below, so reruns are
// byte-identical.
//
//   data/reduced_rnn32.jsonl   ground-truth table of the 2-node recurrent
//                              space (32 architectures x 3 seeds), produced
//                              by the standalone training sweep
//   data/nasbench_sample.jsonl synthetic 300-row sample in the graph table
//                              format (schema stand-in for converted
//                              external benchmark data)

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "naseval/cli.hpp"
#include "naseval/oracle.hpp"
#include "naseval/rng.hpp"
#include "naseval/space.hpp"
#include "naseval/supernet.hpp"

using namespace naseval;

namespace {

void make_reduced_rnn_table(const std::filesystem::path& preset,
                            const std::filesystem::path& out) {
  const cli::ExperimentConfig config = cli::ExperimentConfig::from_file(preset);
  const space::SearchSpaceSpec spec = config.space_spec();
  const supernet::SyntheticTask task(config.task_spec());
  const auto seeds = config.seeds();
  int failed = 0;
  const oracle::BenchmarkTable table = supernet::ground_truth_table(
      spec, task, config.train_config("train"), seeds, &failed);

  oracle::TableProvenance provenance;
  provenance.tool_version = cli::kToolVersion;
  provenance.config_hash = config.hash();
  provenance.seeds = seeds;
  table.save(out, provenance);
  std::printf("%s: %zu records, %d failed runs\n", out.string().c_str(), table.size(), failed);
}

// Synthetic accuracy model over 7-vertex cells: favors 3x3 convolutions and
// deeper paths, penalizes pooling-heavy cells, plus per-cell jitter.
void make_graph_sample(const std::filesystem::path& out) {
  space::SearchSpaceSpec spec;
  spec.family = space::Family::kGraphCnn;
  spec.node_count = 7;
  spec.ops = space::OpSet::graph();

  Rng rng(2718281828, 0);
  std::set<std::string> seen;
  std::vector<oracle::TabularRecord> records;
  const int target = 300;

  while (static_cast<int>(records.size()) < target) {
    space::GraphArch arch;
    arch.vertex_count = 7;
    arch.upper_bits.assign(21, 0);
    int edge_count = 0;
    for (auto& bit : arch.upper_bits) {
      bit = rng.next_double() < 0.30 ? 1 : 0;
      edge_count += bit;
    }
    if (edge_count < 3 || edge_count > 9) continue;
    arch.ops.resize(5);
    for (int& op : arch.ops) op = static_cast<int>(rng.next_below(3));
    try {
      space::validate(arch, spec);
    } catch (const InvalidArchError&) {
      continue;
    }
    const std::string key = space::canonical_encoding(arch, spec);
    if (!seen.insert(key).second) continue;

    int conv3 = 0, pool = 0;
    for (int op : arch.ops) {
      if (op == 0) ++conv3;
      if (op == 2) ++pool;
    }
    // Longest input-to-output path.
    std::vector<int> depth(7, -1);
    depth[0] = 0;
    for (int j = 1; j < 7; ++j) {
      for (int i = 0; i < j; ++i) {
        if (depth[i] >= 0 && arch.edge(i, j)) depth[j] = std::max(depth[j], depth[i] + 1);
      }
    }
    const double mean = 0.880 + 0.018 * conv3 / 5.0 + 0.020 * depth[6] / 6.0 -
                        0.035 * pool / 5.0 + 0.008 * (edge_count - 3) / 6.0 +
                        0.012 * (rng.next_double() - 0.5);
    const double std_dev = 0.002 + 0.004 * rng.next_double();
    records.push_back({key, std::min(std::max(mean, 0.80), 0.95), std_dev, 3});
  }

  const oracle::BenchmarkTable table(spec, MetricKind::kAccuracy,
                                     MetricDirection::kHigherBetter, std::move(records));
  oracle::TableProvenance provenance;
  provenance.tool_version = cli::kToolVersion;
  provenance.config_hash = "synthetic-graph-sample-v1";
  table.save(out, provenance);
  std::printf("%s: %zu records\n", out.string().c_str(), table.size());
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path root = argc > 1 ? argv[1] : ".";
  std::filesystem::create_directories(root / "data");
  make_reduced_rnn_table(root / "presets" / "reduced-rnn-gt.json",
                         root / "data" / "reduced_rnn32.jsonl");
  make_graph_sample(root / "data" / "nasbench_sample.jsonl");
  return 0;
}
