#pragma once

// Test-only oracles, kept independent of the implementation paths they check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "detkit/eval.hpp"

namespace oracles {

// Beta(a,b) density via lgamma.
inline double beta_pdf(double x, double a, double b) {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  const double log_norm = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  return std::exp(log_norm + (a - 1.0) * std::log(x) + (b - 1.0) * std::log(1.0 - x));
}

// Composite Simpson quadrature of the Beta density over [lo, hi].
inline double beta_mass(double lo, double hi, double a, double b, int intervals = 200000) {
  if (intervals % 2 != 0) ++intervals;
  const double h = (hi - lo) / intervals;
  double sum = beta_pdf(lo, a, b) + beta_pdf(hi, a, b);
  for (int i = 1; i < intervals; ++i)
    sum += beta_pdf(lo + i * h, a, b) * (i % 2 == 1 ? 4.0 : 2.0);
  return sum * h / 3.0;
}

// Exhaustive PR-curve AP: precision/recall recomputed from scratch at every
// prefix of the score-sorted detections.
inline double ap_exhaustive(std::vector<detkit::eval::ScoredFlag> dets, std::size_t num_gt,
                            detkit::eval::ApMode mode) {
  std::stable_sort(dets.begin(), dets.end(),
                   [](const auto& a, const auto& b) { return a.score > b.score; });
  const std::size_t n = dets.size();
  if (num_gt == 0 || n == 0) return 0.0;

  std::vector<double> prec(n), rec(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t tp = 0;
    for (std::size_t i = 0; i <= k; ++i)
      if (dets[i].tp) ++tp;
    prec[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    rec[k] = static_cast<double>(tp) / static_cast<double>(num_gt);
  }

  const auto max_prec_at_recall = [&](double r) {
    double best = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      if (rec[k] >= r) best = std::max(best, prec[k]);
    return best;
  };

  if (mode == detkit::eval::ApMode::voc07_11point) {
    double total = 0.0;
    for (int k = 0; k <= 10; ++k) total += max_prec_at_recall(static_cast<double>(k) / 10.0);
    return total / 11.0;
  }

  std::vector<double> levels = rec;
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  double area = 0.0, prev = 0.0;
  for (double r : levels) {
    if (r <= prev) continue;
    area += (r - prev) * max_prec_at_recall(r);
    prev = r;
  }
  return area;
}

// Welford one-pass moments over the concatenation, in extended precision.
// Numerically stable without any sum-of-squares, so it is a genuinely
// independent check for the compensated aggregation.
struct WelfordStats {
  std::size_t count = 0;
  double mean = 0.0;
  double variance = 0.0;  // population
};

inline WelfordStats welford(const std::vector<double>& values) {
  long double mean = 0.0L, m2 = 0.0L;
  std::size_t n = 0;
  for (double x : values) {
    ++n;
    const long double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }
  WelfordStats s;
  s.count = n;
  s.mean = static_cast<double>(mean);
  s.variance = n ? static_cast<double>(m2 / n) : 0.0;
  return s;
}

// Central finite differences of f at z, step scaled per component.
template <typename F>
inline std::vector<double> central_diff(const F& f, std::vector<double> z, double h = 1e-5) {
  std::vector<double> g(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double step = h * std::max(1.0, std::abs(z[i]));
    const double orig = z[i];
    z[i] = orig + step;
    const double fp = f(z);
    z[i] = orig - step;
    const double fm = f(z);
    z[i] = orig;
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

// Scalar reference RGB<->HSV, written with the sector-index formulation.
struct RefHsv {
  double h, s, v;
};

inline RefHsv ref_rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max(r, std::max(g, b));
  const double mn = std::min(r, std::min(g, b));
  RefHsv out{0.0, 0.0, mx};
  const double delta = mx - mn;
  if (mx > 0.0) out.s = delta / mx;
  if (delta == 0.0) return out;
  if (mx == r)
    out.h = (g - b) / delta;
  else if (mx == g)
    out.h = 2.0 + (b - r) / delta;
  else
    out.h = 4.0 + (r - g) / delta;
  out.h *= 60.0;
  if (out.h < 0.0) out.h += 360.0;
  return out;
}

inline void ref_hsv_to_rgb(const RefHsv& hsv, double& r, double& g, double& b) {
  if (hsv.s == 0.0) {
    r = g = b = hsv.v;
    return;
  }
  double h = hsv.h / 60.0;
  if (h >= 6.0) h -= 6.0;
  const int i = static_cast<int>(std::floor(h));
  const double f = h - i;
  const double p = hsv.v * (1.0 - hsv.s);
  const double q = hsv.v * (1.0 - hsv.s * f);
  const double t = hsv.v * (1.0 - hsv.s * (1.0 - f));
  switch (i) {
    case 0: r = hsv.v; g = t; b = p; break;
    case 1: r = q; g = hsv.v; b = p; break;
    case 2: r = p; g = hsv.v; b = t; break;
    case 3: r = p; g = q; b = hsv.v; break;
    case 4: r = t; g = p; b = hsv.v; break;
    default: r = hsv.v; g = p; b = q; break;
  }
}

// Neumaier-compensated sum: correctly rounded for the magnitudes used here.
inline double compensated_sum(const std::vector<double>& xs) {
  double sum = 0.0, comp = 0.0;
  for (double x : xs) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
      comp += (sum - t) + x;
    else
      comp += (x - t) + sum;
    sum = t;
  }
  return sum + comp;
}

}  // namespace oracles
