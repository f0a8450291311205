#include "naseval/space.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_set>

#include "naseval/errors.hpp"

namespace naseval::space {

std::string to_string(Family family) {
  return family == Family::kChainRecurrent ? "chain-recurrent" : "graph-cnn";
}

Family family_from_string(std::string_view s) {
  if (s == "chain-recurrent") return Family::kChainRecurrent;
  if (s == "graph-cnn") return Family::kGraphCnn;
  throw ParseError("unknown search-space family: " + std::string(s));
}

OpSet::OpSet(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw UsageError("op set must not be empty");
  std::unordered_set<std::string_view> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw UsageError("op names must be non-empty");
    if (n.find(' ') != std::string::npos || n.find('|') != std::string::npos) {
      throw UsageError("op name contains a separator character: " + n);
    }
    if (!seen.insert(n).second) throw UsageError("duplicate op name: " + n);
  }
}

OpSet OpSet::recurrent() { return OpSet({"identity", "sigmoid", "tanh", "relu"}); }

OpSet OpSet::graph() { return OpSet({"conv3x3", "conv1x1", "max3x3"}); }

const std::string& OpSet::name(int index) const {
  if (index < 0 || index >= size()) throw UsageError("op index out of range");
  return names_[static_cast<std::size_t>(index)];
}

int OpSet::index_of(std::string_view name) const {
  for (int i = 0; i < size(); ++i) {
    if (names_[static_cast<std::size_t>(i)] == name) return i;
  }
  return -1;
}

bool GraphArch::edge(int from, int to) const {
  if (from >= to) return false;
  // Row-major offset into the strictly upper triangle.
  const int row_start = from * vertex_count - from * (from + 1) / 2 - from - 1;
  return upper_bits[static_cast<std::size_t>(row_start + to)] != 0;
}

RelaxationParams RelaxationParams::zeros(const SearchSpaceSpec& spec) {
  RelaxationParams params;
  params.alpha_edge.resize(static_cast<std::size_t>(spec.node_count));
  params.alpha_op.resize(static_cast<std::size_t>(spec.node_count));
  for (int i = 0; i < spec.node_count; ++i) {
    params.alpha_edge[static_cast<std::size_t>(i)].assign(static_cast<std::size_t>(i + 1), 0.0);
    params.alpha_op[static_cast<std::size_t>(i)].assign(static_cast<std::size_t>(spec.ops.size()),
                                                        0.0);
  }
  return params;
}

std::uint64_t cardinality(const SearchSpaceSpec& spec) {
  if (spec.family != Family::kChainRecurrent) {
    throw UsageError("cardinality is only defined for the chain-recurrent family; "
                     "graph-cnn sizes come from a loaded table");
  }
  if (spec.node_count < 1) throw UsageError("node_count must be >= 1");
  unsigned __int128 count = 1;
  for (int i = 1; i <= spec.node_count; ++i) {
    count *= static_cast<unsigned __int128>(i);                // predecessor choices
    count *= static_cast<unsigned __int128>(spec.ops.size());  // op choices
    if (count > static_cast<unsigned __int128>(UINT64_MAX)) {
      throw SpaceTooLargeError("cardinality exceeds 2^64 for node_count=" +
                               std::to_string(spec.node_count));
    }
  }
  return static_cast<std::uint64_t>(count);
}

void validate(const ChainArch& arch, const SearchSpaceSpec& spec) {
  if (spec.family != Family::kChainRecurrent) {
    throw InvalidArchError("chain architecture given for a non-chain space");
  }
  if (static_cast<int>(arch.decisions.size()) != spec.node_count) {
    throw InvalidArchError("expected " + std::to_string(spec.node_count) + " decisions, got " +
                           std::to_string(arch.decisions.size()));
  }
  for (int i = 0; i < spec.node_count; ++i) {
    const Decision& d = arch.decisions[static_cast<std::size_t>(i)];
    if (d.predecessor < 0 || d.predecessor > i) {
      throw InvalidArchError("node " + std::to_string(i + 1) + " predecessor " +
                             std::to_string(d.predecessor) + " outside [0, " + std::to_string(i) +
                             "]");
    }
    if (d.op < 0 || d.op >= spec.ops.size()) {
      throw InvalidArchError("node " + std::to_string(i + 1) + " op index out of range");
    }
  }
}

void validate(const GraphArch& arch, const SearchSpaceSpec& spec) {
  if (spec.family != Family::kGraphCnn) {
    throw InvalidArchError("graph architecture given for a non-graph space");
  }
  const int v = arch.vertex_count;
  if (v < 2 || v > spec.node_count) {
    throw InvalidArchError("vertex count " + std::to_string(v) + " outside [2, " +
                           std::to_string(spec.node_count) + "]");
  }
  if (static_cast<int>(arch.upper_bits.size()) != v * (v - 1) / 2) {
    throw InvalidArchError("adjacency bit count does not match vertex count");
  }
  if (static_cast<int>(arch.ops.size()) != v - 2) {
    throw InvalidArchError("need one op per internal vertex");
  }
  for (int op : arch.ops) {
    if (op < 0 || op >= spec.ops.size()) throw InvalidArchError("graph op index out of range");
  }

  // Reachability both ways; every internal vertex must sit on an
  // input-to-output path.
  std::vector<char> from_input(static_cast<std::size_t>(v), 0);
  from_input[0] = 1;
  for (int j = 1; j < v; ++j) {
    for (int i = 0; i < j; ++i) {
      if (from_input[static_cast<std::size_t>(i)] && arch.edge(i, j)) {
        from_input[static_cast<std::size_t>(j)] = 1;
        break;
      }
    }
  }
  std::vector<char> to_output(static_cast<std::size_t>(v), 0);
  to_output[static_cast<std::size_t>(v - 1)] = 1;
  for (int i = v - 2; i >= 0; --i) {
    for (int j = i + 1; j < v; ++j) {
      if (to_output[static_cast<std::size_t>(j)] && arch.edge(i, j)) {
        to_output[static_cast<std::size_t>(i)] = 1;
        break;
      }
    }
  }
  if (!from_input[static_cast<std::size_t>(v - 1)]) {
    throw InvalidArchError("no path from input to output");
  }
  for (int i = 1; i < v - 1; ++i) {
    if (!from_input[static_cast<std::size_t>(i)] || !to_output[static_cast<std::size_t>(i)]) {
      throw InvalidArchError("internal vertex " + std::to_string(i) +
                             " not on any input-to-output path");
    }
  }
}

std::vector<ChainArch> enumerate_space(const SearchSpaceSpec& spec) {
  const std::uint64_t count = cardinality(spec);
  if (count > spec.enumeration_limit) {
    throw SpaceTooLargeError("space of cardinality " + std::to_string(count) +
                             " exceeds enumeration limit " +
                             std::to_string(spec.enumeration_limit));
  }

  std::vector<ChainArch> archs;
  archs.reserve(static_cast<std::size_t>(count));
  ChainArch current;
  current.decisions.assign(static_cast<std::size_t>(spec.node_count), Decision{});
  // Mixed-radix sweep over (predecessor, op) digits.
  for (;;) {
    archs.push_back(current);
    int i = spec.node_count - 1;
    for (; i >= 0; --i) {
      Decision& d = current.decisions[static_cast<std::size_t>(i)];
      if (d.op + 1 < spec.ops.size()) {
        ++d.op;
        break;
      }
      d.op = 0;
      if (d.predecessor + 1 <= i) {
        ++d.predecessor;
        break;
      }
      d.predecessor = 0;
    }
    if (i < 0) break;
  }

  std::sort(archs.begin(), archs.end(), [&](const ChainArch& a, const ChainArch& b) {
    return canonical_encoding(a, spec) < canonical_encoding(b, spec);
  });
  return archs;
}

ChainArch sample_uniform(const SearchSpaceSpec& spec, Rng& rng) {
  if (spec.family != Family::kChainRecurrent) {
    throw UsageError("uniform chain sampling needs a chain-recurrent spec; graph-cnn "
                     "spaces are sampled from an attached table's keys");
  }
  ChainArch arch;
  arch.decisions.resize(static_cast<std::size_t>(spec.node_count));
  for (int i = 0; i < spec.node_count; ++i) {
    Decision& d = arch.decisions[static_cast<std::size_t>(i)];
    d.predecessor = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i + 1)));
    d.op = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(spec.ops.size())));
  }
  return arch;
}

std::string canonical_encoding(const ChainArch& arch, const SearchSpaceSpec& spec) {
  validate(arch, spec);
  std::string key;
  for (std::size_t i = 0; i < arch.decisions.size(); ++i) {
    if (i > 0) key += ' ';
    key += std::to_string(arch.decisions[i].predecessor);
    key += ' ';
    key += spec.ops.name(arch.decisions[i].op);
  }
  return key;
}

std::string canonical_encoding(const GraphArch& arch, const SearchSpaceSpec& spec) {
  validate(arch, spec);
  std::string key;
  key.reserve(arch.upper_bits.size() + 1 + arch.ops.size() * 8);
  for (std::uint8_t bit : arch.upper_bits) key += bit ? '1' : '0';
  key += '|';
  for (std::size_t i = 0; i < arch.ops.size(); ++i) {
    if (i > 0) key += ' ';
    key += spec.ops.name(arch.ops[i]);
  }
  return key;
}

ChainArch decode_chain(std::string_view key, const SearchSpaceSpec& spec) {
  std::istringstream in{std::string(key)};
  ChainArch arch;
  std::string pred_token, op_token;
  while (in >> pred_token) {
    if (!(in >> op_token)) throw ParseError("chain key has a predecessor without an op: " +
                                            std::string(key));
    Decision d;
    try {
      std::size_t used = 0;
      d.predecessor = std::stoi(pred_token, &used);
      if (used != pred_token.size()) throw std::invalid_argument(pred_token);
    } catch (const std::exception&) {
      throw ParseError("bad predecessor token '" + pred_token + "' in key: " + std::string(key));
    }
    d.op = spec.ops.index_of(op_token);
    if (d.op < 0) throw ParseError("unknown op '" + op_token + "' in key: " + std::string(key));
    arch.decisions.push_back(d);
  }
  validate(arch, spec);
  return arch;
}

GraphArch decode_graph(std::string_view key, const SearchSpaceSpec& spec) {
  const std::size_t bar = key.find('|');
  if (bar == std::string_view::npos) throw ParseError("graph key missing '|' separator");
  const std::string_view bits = key.substr(0, bar);

  // v(v-1)/2 bits determine v.
  int v = 2;
  while (static_cast<std::size_t>(v) * (v - 1) / 2 < bits.size()) ++v;
  if (static_cast<std::size_t>(v) * (v - 1) / 2 != bits.size()) {
    throw ParseError("adjacency bit count is not triangular: " + std::string(key));
  }

  GraphArch arch;
  arch.vertex_count = v;
  arch.upper_bits.reserve(bits.size());
  for (char c : bits) {
    if (c != '0' && c != '1') throw ParseError("bad adjacency bit in key: " + std::string(key));
    arch.upper_bits.push_back(c == '1' ? 1 : 0);
  }

  std::istringstream in{std::string(key.substr(bar + 1))};
  std::string op_token;
  while (in >> op_token) {
    const int op = spec.ops.index_of(op_token);
    if (op < 0) throw ParseError("unknown op '" + op_token + "' in key: " + std::string(key));
    arch.ops.push_back(op);
  }
  validate(arch, spec);
  return arch;
}

std::vector<double> mixture_probs(std::span<const double> logits) {
  if (logits.empty()) throw UsageError("mixture_probs: empty logit vector");
  double max_logit = logits[0];
  for (double l : logits) {
    if (!std::isfinite(l)) throw UsageError("mixture_probs: non-finite logit");
    max_logit = std::max(max_logit, l);
  }
  std::vector<double> probs(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - max_logit);
    total += probs[i];
  }
  for (double& p : probs) p /= total;
  return probs;
}

std::vector<Edge> active_edges(const ChainArch& arch) {
  std::vector<Edge> edges;
  edges.reserve(arch.decisions.size());
  for (std::size_t i = 0; i < arch.decisions.size(); ++i) {
    edges.push_back({static_cast<int>(i) + 1, arch.decisions[i].predecessor});
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

std::vector<Edge> upstream_edges(const ChainArch& arch, int node) {
  if (node < 1 || node > static_cast<int>(arch.decisions.size())) {
    throw UsageError("upstream_edges: node outside [1, n]");
  }
  std::vector<Edge> edges;
  int current = node;
  while (current >= 1) {
    const int pred = arch.decisions[static_cast<std::size_t>(current - 1)].predecessor;
    edges.push_back({current, pred});
    current = pred;
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

}  // namespace naseval::space
