#pragma once

// Chain quality metrics: autocorrelation, effective sample size, histogram
// HPD sets for scalar samples, and agreement between per-chain mean curves.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "ctbuq/errors.hpp"

namespace ctbuq {

namespace detail {

inline std::vector<double> centered(std::span<const double> x, double& gamma0) {
  for (double v : x) {
    if (!std::isfinite(v)) throw InvalidArgument("chain contains non-finite values");
  }
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / double(x.size());
  std::vector<double> c(x.size());
  gamma0 = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    c[t] = x[t] - mean;
    gamma0 += c[t] * c[t];
  }
  gamma0 /= double(x.size());
  // Relative test so that affine images of a constant chain are caught too.
  const double scale = std::max(std::abs(mean), 1e-300);
  if (!(gamma0 > 1e-28 * scale * scale) || gamma0 == 0.0) throw UndefinedStatistic("constant chain");
  return c;
}

inline double autocov(const std::vector<double>& c, std::size_t lag) {
  double acc = 0.0;
  for (std::size_t t = 0; t + lag < c.size(); ++t) acc += c[t] * c[t + lag];
  return acc / double(c.size());
}

}  // namespace detail

/// rho(l) = gamma(l) / gamma(0), l = 0..max_lag, with the biased (1/n) autocovariance.
inline std::vector<double> acf(std::span<const double> x, std::size_t max_lag) {
  require(x.size() >= 2, "acf: chain needs at least 2 values");
  require(max_lag < x.size(), "acf: max_lag must be smaller than the chain length");
  double g0 = 0.0;
  const auto c = detail::centered(x, g0);
  std::vector<double> rho(max_lag + 1);
  rho[0] = 1.0;
  for (std::size_t l = 1; l <= max_lag; ++l) rho[l] = detail::autocov(c, l) / g0;
  return rho;
}

/// First lag with |rho| < threshold, if any.
inline std::optional<std::size_t> first_lag_below(std::span<const double> rho, double threshold = 0.05) {
  for (std::size_t l = 0; l < rho.size(); ++l) {
    if (std::abs(rho[l]) < threshold) return l;
  }
  return std::nullopt;
}

/// n / (1 + 2 sum rho(l)), truncated by Geyer's initial positive sequence:
/// pairs rho(2m) + rho(2m+1) are summed while they stay positive.
inline double ess(std::span<const double> x) {
  require(x.size() >= 4, "ess: chain needs at least 4 values");
  double g0 = 0.0;
  const auto c = detail::centered(x, g0);
  const std::size_t n = x.size();
  double tau = -1.0;
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    const double r0 = m == 0 ? 1.0 : detail::autocov(c, 2 * m) / g0;
    const double r1 = detail::autocov(c, 2 * m + 1) / g0;
    const double pair = r0 + r1;
    if (pair <= 0.0) break;
    tau += 2.0 * pair;
  }
  const double e = double(n) / std::max(tau, 1e-300);
  return std::min(e, double(n));
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct HpdResult {
  std::vector<Interval> intervals;
  double threshold = 0.0;  ///< density level c_HPD
  double mass = 0.0;       ///< fraction of samples inside the union

  double total_length() const {
    double s = 0.0;
    for (const auto& i : intervals) s += i.length();
    return s;
  }
  bool contains(double v) const {
    return std::any_of(intervals.begin(), intervals.end(), [&](const Interval& i) { return i.contains(v); });
  }
};

/// Histogram HPD set with ceil(sqrt(n)) equal bins over the sample range.
/// Bins are admitted in decreasing count order until `level` of the samples
/// is covered; bins tied with the last admitted one are admitted as well.
/// An excluded run between admitted bins is filled in when every bin in it
/// lies within `bridge_sd` Poisson standard deviations of the cut count, so
/// counting noise at the threshold does not split a mode. Zero disables this.
/// With `refine`, each resulting run keeps its share of `level` (in proportion
/// to its sample count) and is narrowed to the shortest window of sorted
/// samples inside it holding that share, so endpoints are not limited to the
/// bin grid. Without it the bin-interval union is returned.
inline HpdResult hpd_1d(std::span<const double> samples, double level, double bridge_sd = 3.0,
                        bool refine = true) {
  require(samples.size() >= 100, "hpd_1d: need at least 100 samples");
  require(level > 0.0 && level < 1.0, "hpd_1d: level must lie in (0, 1)");
  require(bridge_sd >= 0.0, "hpd_1d: bridge_sd must be nonnegative");
  const std::size_t n = samples.size();
  const auto [mn_it, mx_it] = std::minmax_element(samples.begin(), samples.end());
  const double lo = *mn_it, hi = *mx_it;
  for (double v : samples) require(std::isfinite(v), "hpd_1d: non-finite sample");
  HpdResult res;
  if (hi == lo) {
    res.intervals.push_back({lo, hi});
    res.mass = 1.0;
    res.threshold = double(n);
    return res;
  }
  const std::size_t nb = std::size_t(std::ceil(std::sqrt(double(n))));
  const double w = (hi - lo) / double(nb);
  std::vector<std::size_t> counts(nb, 0);
  for (double v : samples) counts[std::min(nb - 1, std::size_t((v - lo) / w))]++;

  std::vector<std::size_t> order(nb);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
  const double need = level * double(n);
  double acc = 0.0;
  std::size_t cut = 0;
  for (std::size_t k : order) {
    acc += double(counts[k]);
    cut = counts[k];
    if (acc >= need) break;
  }
  std::vector<char> in(nb, 0);
  for (std::size_t k = 0; k < nb; ++k) in[k] = counts[k] >= cut && counts[k] > 0;

  const double floor_count = double(cut) - bridge_sd * std::sqrt(double(cut));
  for (std::size_t k = 0; k < nb;) {
    if (in[k]) {
      ++k;
      continue;
    }
    std::size_t e = k;
    bool noise = bridge_sd > 0.0;
    for (; e < nb && !in[e]; ++e) noise = noise && double(counts[e]) >= floor_count;
    if (k > 0 && e < nb && noise) std::fill(in.begin() + long(k), in.begin() + long(e), 1);
    k = e;
  }

  auto bin_of = [&](double v) { return std::min(nb - 1, std::size_t((v - lo) / w)); };
  struct Run {
    std::size_t k, e, count;
  };
  std::vector<Run> runs;
  std::size_t covered = 0;
  for (std::size_t k = 0; k < nb;) {
    if (!in[k]) {
      ++k;
      continue;
    }
    Run r{k, k, 0};
    while (r.e < nb && in[r.e]) r.count += counts[r.e++];
    covered += r.count;
    runs.push_back(r);
    k = r.e;
  }
  res.threshold = double(cut) / (double(n) * w);
  if (!refine) {
    for (const Run& r : runs) res.intervals.push_back({lo + double(r.k) * w, r.e == nb ? hi : lo + double(r.e) * w});
    res.mass = double(covered) / double(n);
    return res;
  }
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  std::size_t kept = 0;
  for (const Run& r : runs) {
    const auto first = std::partition_point(sorted.begin(), sorted.end(), [&](double v) { return bin_of(v) < r.k; });
    const std::size_t i0 = std::size_t(first - sorted.begin());
    const auto t = std::size_t(std::ceil(need * double(r.count) / double(covered)));
    if (t == 0) continue;
    std::size_t best = i0;
    for (std::size_t i = i0; i + t <= i0 + r.count; ++i)
      if (sorted[i + t - 1] - sorted[i] < sorted[best + t - 1] - sorted[best]) best = i;
    res.intervals.push_back({sorted[best], sorted[best + t - 1]});
    kept += t;
  }
  res.mass = double(kept) / double(n);
  return res;
}

/// Max over chain pairs of the sup distance between their curves.
inline double multi_chain_mean_check(const std::vector<std::vector<double>>& curves) {
  require(curves.size() >= 2, "multi_chain_mean_check: need at least 2 chains");
  const std::size_t m = curves.front().size();
  for (const auto& c : curves) require(c.size() == m, "multi_chain_mean_check: curves use different angle grids");
  double best = 0.0;
  for (std::size_t a = 0; a < curves.size(); ++a) {
    for (std::size_t b = a + 1; b < curves.size(); ++b) {
      for (std::size_t k = 0; k < m; ++k) best = std::max(best, std::abs(curves[a][k] - curves[b][k]));
    }
  }
  return best;
}

}  // namespace ctbuq
