#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "naseval/rng.hpp"

namespace naseval::space {

enum class Family { kChainRecurrent, kGraphCnn };

std::string to_string(Family family);
Family family_from_string(std::string_view s);

/// Ordered operation vocabulary. The construction order is the index
/// encoding and never changes afterwards.
class OpSet {
 public:
  explicit OpSet(std::vector<std::string> names);

  static OpSet recurrent();  // identity, sigmoid, tanh, relu
  static OpSet graph();      // conv3x3, conv1x1, max3x3

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int index) const;
  int index_of(std::string_view name) const;  // -1 when absent
  const std::vector<std::string>& names() const { return names_; }

  bool operator==(const OpSet&) const = default;

 private:
  std::vector<std::string> names_;
};

struct SearchSpaceSpec {
  Family family = Family::kChainRecurrent;
  int node_count = 2;
  OpSet ops = OpSet::recurrent();
  std::uint64_t enumeration_limit = 1000000;
};

/// One chain decision: which earlier node feeds this one, and with which op.
struct Decision {
  int predecessor = 0;
  int op = 0;
  bool operator==(const Decision&) const = default;
};

/// Chain-recurrent architecture: decision i (0-based) configures
/// intermediate node i+1; node 0 is the cell input node.
struct ChainArch {
  std::vector<Decision> decisions;
  bool operator==(const ChainArch&) const = default;
};

/// DAG architecture over v vertices: vertex 0 is the input, vertex v-1 the
/// output, internal vertices carry one op each. Adjacency is stored as the
/// strictly upper triangle, row-major.
struct GraphArch {
  int vertex_count = 0;
  std::vector<std::uint8_t> upper_bits;
  std::vector<int> ops;

  bool edge(int from, int to) const;
  bool operator==(const GraphArch&) const = default;
};

struct Edge {
  int target = 0;
  int predecessor = 0;
  auto operator<=>(const Edge&) const = default;
};

/// Per-node relaxation logits: alpha_op[i] ranges over the op set and
/// alpha_edge[i] over the candidate predecessors [0, i] of node i+1.
struct RelaxationParams {
  std::vector<std::vector<double>> alpha_edge;
  std::vector<std::vector<double>> alpha_op;

  static RelaxationParams zeros(const SearchSpaceSpec& spec);
};

/// n! * |ops|^n for the chain family. The graph family has no closed form
/// here; its size comes from a loaded table.
std::uint64_t cardinality(const SearchSpaceSpec& spec);

void validate(const ChainArch& arch, const SearchSpaceSpec& spec);
void validate(const GraphArch& arch, const SearchSpaceSpec& spec);

/// All chain architectures, sorted by canonical encoding. Refuses spaces
/// larger than spec.enumeration_limit.
std::vector<ChainArch> enumerate_space(const SearchSpaceSpec& spec);

/// Uniform draw over the chain space: per node, predecessor uniform over
/// [0, i-1] and op uniform over the op set, independently.
ChainArch sample_uniform(const SearchSpaceSpec& spec, Rng& rng);

std::string canonical_encoding(const ChainArch& arch, const SearchSpaceSpec& spec);
std::string canonical_encoding(const GraphArch& arch, const SearchSpaceSpec& spec);

ChainArch decode_chain(std::string_view key, const SearchSpaceSpec& spec);
GraphArch decode_graph(std::string_view key, const SearchSpaceSpec& spec);

/// Stable softmax of a logit vector; entries in (0, 1), summing to 1.
std::vector<double> mixture_probs(std::span<const double> logits);

/// All edges the architecture activates, sorted. Every intermediate node
/// output feeds the cell output, so this is exactly the chosen edge set.
std::vector<Edge> active_edges(const ChainArch& arch);

/// Edges the output of `node` depends on: its own incoming edge plus,
/// transitively, those of its ancestors. Sorted.
std::vector<Edge> upstream_edges(const ChainArch& arch, int node);

}  // namespace naseval::space
