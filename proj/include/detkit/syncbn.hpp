#pragma once

// Desk-scale synchronized batch-norm statistics checker. Shows that per-device
// moments diverge from whole-batch moments and that aggregating sum /
// sum-of-squares / count across devices recovers the whole-batch statistics.
// Accumulation is compensated (double-double) so partition invariance holds to
// 1e-9 relative even at offset ~1e8 with tiny variance.

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace detkit::syncbn {

namespace detail {

// Double-double arithmetic: an unevaluated sum hi + lo with |lo| <= ulp(hi)/2.
struct DD {
  double hi = 0.0;
  double lo = 0.0;
};

inline DD two_sum(double a, double b) {
  const double s = a + b;
  const double bb = s - a;
  const double err = (a - (s - bb)) + (b - bb);
  return DD{s, err};
}

inline DD quick_two_sum(double a, double b) {
  const double s = a + b;
  return DD{s, b - (s - a)};
}

inline DD two_prod(double a, double b) {
  const double p = a * b;
  return DD{p, std::fma(a, b, -p)};
}

inline DD dd_add(const DD& a, const DD& b) {
  DD s = two_sum(a.hi, b.hi);
  s.lo += a.lo + b.lo;
  return quick_two_sum(s.hi, s.lo);
}

inline DD dd_add(const DD& a, double b) {
  DD s = two_sum(a.hi, b);
  s.lo += a.lo;
  return quick_two_sum(s.hi, s.lo);
}

inline DD dd_sub(const DD& a, const DD& b) { return dd_add(a, DD{-b.hi, -b.lo}); }

inline DD dd_mul(const DD& a, const DD& b) {
  DD p = two_prod(a.hi, b.hi);
  p.lo += a.hi * b.lo + a.lo * b.hi;
  return quick_two_sum(p.hi, p.lo);
}

inline DD dd_div(const DD& a, double b) {
  const double q1 = a.hi / b;
  const DD p = two_prod(q1, b);
  const double q2 = ((a.hi - p.hi) - p.lo + a.lo) / b;
  return quick_two_sum(q1, q2);
}

/// Compensated running moments: sum of x, sum of x^2, count.
struct MomentSums {
  DD sum{};
  DD sumsq{};
  std::size_t count = 0;

  void add(double x) {
    sum = dd_add(sum, x);
    sumsq = dd_add(sumsq, two_prod(x, x));
    ++count;
  }
  void merge(const MomentSums& o) {
    sum = dd_add(sum, o.sum);
    sumsq = dd_add(sumsq, o.sumsq);
    count += o.count;
  }
};

}  // namespace detail

/// One feature channel's activations on one device.
struct DeviceShard {
  std::string device_id;
  std::vector<double> values;
};

/// Population moments of a batch (biased variance, as BN defines it).
struct BnStats {
  std::size_t count = 0;
  double mean = 0.0;
  double variance = 0.0;
};

namespace detail {

inline BnStats finalize(const MomentSums& m) {
  const double n = static_cast<double>(m.count);
  const DD mean = dd_div(m.sum, n);
  const DD ex2 = dd_div(m.sumsq, n);
  const DD var = dd_sub(ex2, dd_mul(mean, mean));
  double v = var.hi + var.lo;
  if (v < 0.0) v = 0.0;  // cancellation guard
  return BnStats{m.count, mean.hi + mean.lo, v};
}

inline MomentSums accumulate(const std::vector<double>& values) {
  MomentSums m;
  for (double x : values) m.add(x);
  return m;
}

}  // namespace detail

/// Mean and population variance of one shard alone.
inline BnStats local_stats(const DeviceShard& shard) {
  if (shard.values.empty()) throw std::invalid_argument("local_stats: empty shard");
  return detail::finalize(detail::accumulate(shard.values));
}

/// Whole-batch statistics recovered by aggregating per-shard sums; equals the
/// statistics of the concatenation of all shards.
inline BnStats sync_stats(const std::vector<DeviceShard>& shards) {
  detail::MomentSums total;
  for (const auto& s : shards) total.merge(detail::accumulate(s.values));
  if (total.count == 0) throw std::invalid_argument("sync_stats: no values in any shard");
  return detail::finalize(total);
}

struct DeviceGap {
  std::string device_id;
  std::size_t count = 0;
  double local_mean = 0.0;
  double local_variance = 0.0;
  double mean_abs_gap = 0.0;
  double var_abs_gap = 0.0;
  /// Relative gaps are absent when the sync value is exactly 0.
  std::optional<double> mean_rel_gap;
  std::optional<double> var_rel_gap;
};

struct DivergenceReport {
  BnStats sync;
  std::vector<DeviceGap> devices;
  double max_abs_gap = 0.0;
  std::string max_gap_device;
  std::string max_gap_stat;  // "mean" or "variance"
};

/// Per-device |local - sync| gaps for mean and variance, max gap highlighted.
inline DivergenceReport divergence_report(const std::vector<DeviceShard>& shards) {
  DivergenceReport report;
  report.sync = sync_stats(shards);
  for (const auto& s : shards) {
    if (s.values.empty()) continue;
    const BnStats local = local_stats(s);
    DeviceGap gap;
    gap.device_id = s.device_id;
    gap.count = local.count;
    gap.local_mean = local.mean;
    gap.local_variance = local.variance;
    gap.mean_abs_gap = std::abs(local.mean - report.sync.mean);
    gap.var_abs_gap = std::abs(local.variance - report.sync.variance);
    if (report.sync.mean != 0.0) gap.mean_rel_gap = gap.mean_abs_gap / std::abs(report.sync.mean);
    if (report.sync.variance != 0.0)
      gap.var_rel_gap = gap.var_abs_gap / std::abs(report.sync.variance);
    if (gap.mean_abs_gap >= report.max_abs_gap) {
      report.max_abs_gap = gap.mean_abs_gap;
      report.max_gap_device = gap.device_id;
      report.max_gap_stat = "mean";
    }
    if (gap.var_abs_gap >= report.max_abs_gap) {
      report.max_abs_gap = gap.var_abs_gap;
      report.max_gap_device = gap.device_id;
      report.max_gap_stat = "variance";
    }
    report.devices.push_back(std::move(gap));
  }
  return report;
}

}  // namespace detkit::syncbn
