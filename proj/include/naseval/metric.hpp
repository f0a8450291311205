#pragma once

#include <string>
#include <string_view>

#include "naseval/errors.hpp"

namespace naseval {

enum class MetricDirection { kHigherBetter, kLowerBetter };

/// Metric family; decides the clamping range of simulated noisy draws.
enum class MetricKind { kAccuracy, kPerplexity };

inline std::string to_string(MetricDirection d) {
  return d == MetricDirection::kHigherBetter ? "higher-better" : "lower-better";
}

inline std::string to_string(MetricKind k) {
  return k == MetricKind::kAccuracy ? "accuracy" : "perplexity";
}

inline MetricDirection direction_from_string(std::string_view s) {
  if (s == "higher-better") return MetricDirection::kHigherBetter;
  if (s == "lower-better") return MetricDirection::kLowerBetter;
  throw ParseError("unknown metric direction: " + std::string(s));
}

inline MetricKind metric_kind_from_string(std::string_view s) {
  if (s == "accuracy") return MetricKind::kAccuracy;
  if (s == "perplexity") return MetricKind::kPerplexity;
  throw ParseError("unknown metric kind: " + std::string(s));
}

/// True when `candidate` is a strictly better score than `incumbent`.
inline bool improves(double candidate, double incumbent, MetricDirection d) {
  return d == MetricDirection::kHigherBetter ? candidate > incumbent : candidate < incumbent;
}

}  // namespace naseval
