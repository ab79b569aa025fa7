#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "slegff/rng.hpp"

namespace slegff {

// Mergeable sufficient statistics (count, sum, sum of squares). Worker shards
// accumulate these and are merged in shard order, so results do not depend on
// scheduling.
struct Accumulator {
  std::uint64_t n = 0;
  double sum = 0.0;
  double sum_sq = 0.0;

  void add(double x) {
    ++n;
    sum += x;
    sum_sq += x * x;
  }
  void merge(const Accumulator& o) {
    n += o.n;
    sum += o.sum;
    sum_sq += o.sum_sq;
  }
  double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
  double variance() const;  // unbiased
  double stderr_mean() const;
};

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  double r_squared = 0.0;
};

// Ordinary least squares y = a + b x; slope_stderr from residuals, or from
// supplied per-point standard errors (propagated, not residual-based).
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);
LineFit fit_line_weighted(const std::vector<double>& x,
                          const std::vector<double>& y,
                          const std::vector<double>& y_stderr);

// Two-sample Kolmogorov-Smirnov: statistic and asymptotic p-value.
struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return lo <= v && v <= hi; }
  bool overlaps(const Interval& o) const { return lo <= o.hi && o.lo <= hi; }
};

// Central interval of the given level from a sample of statistic values.
Interval percentile_interval(std::vector<double> samples, double level);

// Percentile bootstrap over groups (e.g. chains): `stat` receives a multiset
// of group indices drawn with replacement and returns the statistic.
template <class Stat>
Interval bootstrap_groups(RandomStream rng, std::size_t n_groups, int n_boot,
                          double level, Stat&& stat) {
  std::vector<double> vals;
  vals.reserve(n_boot);
  std::vector<std::uint32_t> idx(n_groups);
  for (int b = 0; b < n_boot; ++b) {
    for (auto& i : idx)
      i = static_cast<std::uint32_t>(rng.uniform() * static_cast<double>(n_groups));
    vals.push_back(stat(idx));
  }
  return percentile_interval(std::move(vals), level);
}

}  // namespace slegff
