#include "naseval/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "naseval/errors.hpp"

namespace naseval::stats {

namespace {

// Continued fraction for the regularized incomplete beta, modified Lentz.
// Standard even/odd term pair per iteration.
double beta_continued_fraction(double x, double a, double b) {
  constexpr double kTiny = 1e-300;
  constexpr double kTol = 1e-12;
  constexpr int kMaxIter = 300;

  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;

  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + num * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;

    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + num * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kTol) return h;
  }
  return h;  // converged to working precision for all df/x used here
}

double sample_mean(std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

}  // namespace

double regularized_incomplete_beta(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw UsageError("incomplete beta requires a > 0 and b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw UsageError("incomplete beta requires x in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;

  const double ln_front = a * std::log(x) + b * std::log1p(-x) -
                          (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(ln_front) * beta_continued_fraction(x, a, b) / a;
  }
  return 1.0 - std::exp(ln_front) * beta_continued_fraction(1.0 - x, b, a) / b;
}

double student_t_cdf(double x, double df) {
  if (!(df > 0.0) || !std::isfinite(df)) throw UsageError("t CDF requires df > 0");
  if (std::isnan(x)) throw UsageError("t CDF requires finite x");
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  const double ib = regularized_incomplete_beta(df / (x * x + df), 0.5 * df, 0.5);
  return x >= 0.0 ? 1.0 - 0.5 * ib : 0.5 * ib;
}

CorrelationReport kendall_tau(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw UsageError("kendall_tau: input lengths differ");
  if (a.size() < 2) throw UsageError("kendall_tau: need at least 2 items");

  const std::int64_t n = static_cast<std::int64_t>(a.size());
  std::int64_t concordant = 0, discordant = 0;
  std::int64_t tie_a = 0, tie_b = 0, tie_both = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = i + 1; j < n; ++j) {
      const double da = a[i] - a[j];
      const double db = b[i] - b[j];
      if (da == 0.0 && db == 0.0) {
        ++tie_both;
      } else if (da == 0.0) {
        ++tie_a;
      } else if (db == 0.0) {
        ++tie_b;
      } else if (da * db > 0.0) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }

  const std::int64_t total = n * (n - 1) / 2;
  // sqrt of the integer product: exact when both factors are equal, so
  // tau(a, a) is exactly 1 for tie-free inputs.
  const double denom = std::sqrt(static_cast<double>((total - (tie_a + tie_both)) *
                                                     (total - (tie_b + tie_both))));
  CorrelationReport report;
  report.concordant = concordant;
  report.discordant = discordant;
  report.ties = tie_a + tie_b + tie_both;
  report.n_items = n;
  report.tau = denom > 0.0 ? static_cast<double>(concordant - discordant) / denom : 0.0;
  return report;
}

CorrelationReport kendall_tau(const std::vector<std::string>& order_a,
                              const std::vector<std::string>& order_b) {
  if (order_a.size() != order_b.size()) throw UsageError("kendall_tau: rankings differ in size");
  std::unordered_map<std::string, std::int64_t> pos_b;
  pos_b.reserve(order_b.size());
  for (std::size_t i = 0; i < order_b.size(); ++i) {
    if (!pos_b.emplace(order_b[i], static_cast<std::int64_t>(i)).second) {
      throw UsageError("kendall_tau: duplicate key in ranking: " + order_b[i]);
    }
  }
  std::vector<double> ranks_a(order_a.size()), ranks_b(order_a.size());
  for (std::size_t i = 0; i < order_a.size(); ++i) {
    auto it = pos_b.find(order_a[i]);
    if (it == pos_b.end()) throw UsageError("kendall_tau: key sets differ at: " + order_a[i]);
    ranks_a[i] = static_cast<double>(i);
    ranks_b[i] = static_cast<double>(it->second);
  }
  return kendall_tau(ranks_a, ranks_b);
}

WelchResult welch_t(const SampleSummary& a, const SampleSummary& b) {
  if (a.n < 2 || b.n < 2) throw UsageError("welch_t: each group needs n >= 2");
  if (a.std_dev < 0.0 || b.std_dev < 0.0) throw UsageError("welch_t: negative std");

  const double va = a.std_dev * a.std_dev / a.n;
  const double vb = b.std_dev * b.std_dev / b.n;
  WelchResult result;
  if (va + vb == 0.0) {
    // Degenerate convention: no spread at all.
    result.df = static_cast<double>(a.n + b.n - 2);
    if (a.mean == b.mean) {
      result.t = 0.0;
      result.p_two_sided = 1.0;
    } else {
      result.t = a.mean > b.mean ? std::numeric_limits<double>::infinity()
                                 : -std::numeric_limits<double>::infinity();
      result.p_two_sided = 0.0;
    }
    return result;
  }

  result.t = (a.mean - b.mean) / std::sqrt(va + vb);
  result.df = (va + vb) * (va + vb) / (va * va / (a.n - 1) + vb * vb / (b.n - 1));
  result.p_two_sided = 2.0 * student_t_cdf(-std::fabs(result.t), result.df);
  return result;
}

double p_surpass_random(const RankQuery& q) {
  if (q.total < 1 || q.rank < 1 || q.rank > q.total) {
    throw UsageError("p_surpass_random: need 1 <= rank <= total");
  }
  if (q.budget < 1) throw UsageError("p_surpass_random: budget >= 1 required");
  const double survive = 1.0 - static_cast<double>(q.rank) / static_cast<double>(q.total);
  return std::pow(survive, static_cast<double>(q.budget));
}

AggregateReport aggregate(std::span<const double> values, MetricDirection direction) {
  if (values.empty()) throw UsageError("aggregate: empty input");
  AggregateReport report;
  report.n = static_cast<int>(values.size());
  report.mean = sample_mean(values);
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - report.mean) * (v - report.mean);
    report.std_dev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  report.best = values[0];
  for (double v : values.subspan(1)) {
    if (improves(v, report.best, direction)) report.best = v;
  }
  return report;
}

}  // namespace naseval::stats
