#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "naseval/metric.hpp"

namespace naseval::stats {

/// Summary of one sample group: mean, sample standard deviation (n-1
/// denominator) and group size.
struct SampleSummary {
  double mean = 0.0;
  double std_dev = 0.0;
  int n = 0;
};

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_two_sided = 1.0;
};

/// Inputs of the probability-to-surpass-random metric: the best rank a
/// search found (1 = best), the total number of architectures, and the
/// number of uniform draws the competing random policy gets.
struct RankQuery {
  std::int64_t rank = 1;
  std::int64_t total = 1;
  std::int64_t budget = 1;
};

struct CorrelationReport {
  double tau = 0.0;
  std::int64_t concordant = 0;
  std::int64_t discordant = 0;
  std::int64_t ties = 0;  // pairs tied in either input; concordant+discordant+ties = n(n-1)/2
  std::int64_t n_items = 0;
};

struct AggregateReport {
  double mean = 0.0;
  double std_dev = 0.0;  // sample std; 0 when n == 1
  double best = 0.0;
  int n = 0;
};

/// Regularized incomplete beta I_x(a, b), continued fraction evaluated with
/// Lentz's method (per-step tolerance 1e-12, at most 300 iterations).
double regularized_incomplete_beta(double x, double a, double b);

/// Student-t CDF for real degrees of freedom, absolute accuracy ~1e-10.
double student_t_cdf(double x, double df);

/// Tie-aware Kendall tau-b over paired scores, exact O(n^2) pair counting.
/// Equals tau-a when neither input has ties.
CorrelationReport kendall_tau(std::span<const double> a, std::span<const double> b);

/// Kendall tau between two rankings given as best-first key lists. The key
/// sets must match exactly.
CorrelationReport kendall_tau(const std::vector<std::string>& order_a,
                              const std::vector<std::string>& order_b);

/// Welch's two-sample t-test from summary statistics. Degenerate case with
/// both deviations zero: p = 1 if means are equal, else p = 0.
WelchResult welch_t(const SampleSummary& a, const SampleSummary& b);

/// Probability that none of `budget` uniform draws outranks rank `r`:
/// (1 - r/r_max)^budget.
double p_surpass_random(const RankQuery& q);

/// Mean / sample std / best of a score list under the metric direction.
AggregateReport aggregate(std::span<const double> values, MetricDirection direction);

}  // namespace naseval::stats
