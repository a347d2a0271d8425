#pragma once

// Visually coherent image mixup for detection: blend two images at natural
// scale on a max-size canvas (no resizing, both anchored top-left) and merge
// their label arrays with per-object loss weights lambda and 1-lambda.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "detkit/core.hpp"

namespace detkit::mixup {

/// Beta distribution parameters for the blending ratio. Detection mixup
/// wants alpha and beta at least 1; below that most draws are near 0 or 1
/// and the blended image degenerates to noise on top of one source.
struct BetaParams {
  double alpha = 1.5;
  double beta = 1.5;
};

inline bool meets_detection_policy(const BetaParams& p) {
  return p.alpha >= 1.0 && p.beta >= 1.0;
}

struct MixupConfig {
  BetaParams dist{};
  /// When present, overrides sampling. 0 and 1 are allowed for degenerate tests.
  std::optional<double> fixed_ratio;
  /// Labels with resulting weight strictly below this are dropped.
  /// At the default 0 nothing is dropped; weight-0 labels are retained.
  double min_weight = 0.0;
};

namespace detail {

/// Gamma(shape, 1) via Marsaglia-Tsang squeeze; shape < 1 boosted through
/// Gamma(shape+1) * U^(1/shape).
inline double sample_gamma(double shape, Rng& rng) {
  if (!(shape > 0.0) || !std::isfinite(shape))
    throw std::invalid_argument("sample_gamma: shape must be positive");
  if (shape < 1.0) {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    return sample_gamma(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = rng.normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace detail

/// One draw from Beta(alpha, beta), computed as X/(X+Y) with X,Y ~ Gamma.
inline double sample_beta(const BetaParams& p, Rng& rng) {
  if (!(p.alpha > 0.0) || !(p.beta > 0.0))
    throw std::invalid_argument("sample_beta: alpha and beta must be positive");
  const double x = detail::sample_gamma(p.alpha, rng);
  const double y = detail::sample_gamma(p.beta, rng);
  return x / (x + y);
}

/// Geometry-preserved blend: canvas is max(h) x max(w), zero-filled; region
/// covered by `a` receives +lambda*a, region covered by `b` receives
/// +(1-lambda)*b. Neither input is scaled or cropped.
inline ImageBuffer mix_images(const ImageBuffer& a, const ImageBuffer& b, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("mix_images: lambda outside [0,1]");
  const double lam_b = 1.0 - lambda;
  const int h = std::max(a.height(), b.height());
  const int w = std::max(a.width(), b.width());
  std::vector<double> data(static_cast<std::size_t>(h) * w * ImageBuffer::kChannels, 0.0);
  const auto idx = [w](int y, int x, int c) {
    return (static_cast<std::size_t>(y) * w + x) * ImageBuffer::kChannels + c;
  };
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x)
      for (int c = 0; c < ImageBuffer::kChannels; ++c)
        data[idx(y, x, c)] += lambda * a.at(y, x, c);
  for (int y = 0; y < b.height(); ++y)
    for (int x = 0; x < b.width(); ++x)
      for (int c = 0; c < ImageBuffer::kChannels; ++c)
        data[idx(y, x, c)] += lam_b * b.at(y, x, c);
  return ImageBuffer(h, w, std::move(data));
}

struct MixResult {
  Sample sample;
  double lambda = 0.0;
};

/// Mix two samples: pixels via mix_images, labels concatenated with weights
/// scaled by lambda (a's) and 1-lambda (b's), boxes untouched. Returns the
/// realized lambda for logging.
inline MixResult mix_samples(const Sample& a, const Sample& b, const MixupConfig& cfg, Rng& rng) {
  if (cfg.fixed_ratio && !(*cfg.fixed_ratio >= 0.0 && *cfg.fixed_ratio <= 1.0))
    throw std::invalid_argument("mix_samples: fixed_ratio outside [0,1]");
  if (!(cfg.min_weight >= 0.0 && cfg.min_weight < 1.0))
    throw std::invalid_argument("mix_samples: min_weight outside [0,1)");
  const double lambda = cfg.fixed_ratio ? *cfg.fixed_ratio : sample_beta(cfg.dist, rng);
  const double lam_b = 1.0 - lambda;

  Sample out{mix_images(a.image, b.image, lambda), {}};
  out.labels.reserve(a.labels.size() + b.labels.size());
  for (const auto& l : a.labels) {
    ObjectLabel n = l;
    n.weight = l.weight * lambda;
    if (!(n.weight < cfg.min_weight)) out.labels.push_back(n);
  }
  for (const auto& l : b.labels) {
    ObjectLabel n = l;
    n.weight = l.weight * lam_b;
    if (!(n.weight < cfg.min_weight)) out.labels.push_back(n);
  }
  return MixResult{std::move(out), lambda};
}

}  // namespace detkit::mixup
