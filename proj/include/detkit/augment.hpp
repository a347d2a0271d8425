#pragma once

// Data-preprocessing suite for detection training: constrained random crop,
// random expansion, random resize with random interpolation, color jitter,
// and policy composition. The single-stage policy runs the full geometric
// suite; the multi-stage policy never crops or expands (proposal sampling
// already substitutes for it) and only resizes + flips.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

#include "detkit/core.hpp"

namespace detkit::augment {

enum class Interp { nearest, bilinear, bicubic, area, lanczos, random };

inline const char* to_string(Interp k) {
  switch (k) {
    case Interp::nearest: return "nearest";
    case Interp::bilinear: return "bilinear";
    case Interp::bicubic: return "bicubic";
    case Interp::area: return "area";
    case Interp::lanczos: return "lanczos";
    case Interp::random: return "random";
  }
  return "?";
}

namespace detail {

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

inline int clamp_index(int i, int n) { return std::clamp(i, 0, n - 1); }

// Keys cubic kernel, a = -0.5 (Catmull-Rom). Exactly (0,1,0,0) at t = 0.
inline double cubic_weight(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

inline double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = 3.141592653589793238462643383279502884 * x;
  return std::sin(px) / px;
}

inline double lanczos_weight(double x) {
  if (std::abs(x) >= 3.0) return 0.0;
  return sinc(x) * sinc(x / 3.0);
}

}  // namespace detail

/// Resample to target_h x target_w with the given kernel. Sampling is
/// half-pixel aligned; bicubic and lanczos outputs are clamped back to [0,1].
inline ImageBuffer resize_image(const ImageBuffer& src, int target_h, int target_w, Interp kernel) {
  if (target_h < 1 || target_w < 1)
    throw std::invalid_argument("resize_image: targets must be >= 1");
  if (kernel == Interp::random)
    throw std::invalid_argument("resize_image: kernel must be concrete");
  const int sh = src.height(), sw = src.width();
  const double scale_y = static_cast<double>(sh) / target_h;
  const double scale_x = static_cast<double>(sw) / target_w;
  std::vector<double> out(static_cast<std::size_t>(target_h) * target_w * ImageBuffer::kChannels);
  const auto oidx = [target_w](int y, int x, int c) {
    return (static_cast<std::size_t>(y) * target_w + x) * ImageBuffer::kChannels + c;
  };

  switch (kernel) {
    case Interp::nearest: {
      for (int y = 0; y < target_h; ++y) {
        const int sy = detail::clamp_index(static_cast<int>((y + 0.5) * scale_y), sh);
        for (int x = 0; x < target_w; ++x) {
          const int sx = detail::clamp_index(static_cast<int>((x + 0.5) * scale_x), sw);
          for (int c = 0; c < ImageBuffer::kChannels; ++c)
            out[oidx(y, x, c)] = src.at(sy, sx, c);
        }
      }
      break;
    }
    case Interp::bilinear: {
      for (int y = 0; y < target_h; ++y) {
        const double fy = (y + 0.5) * scale_y - 0.5;
        const int y0 = static_cast<int>(std::floor(fy));
        const double ty = fy - y0;
        const int ya = detail::clamp_index(y0, sh), yb = detail::clamp_index(y0 + 1, sh);
        for (int x = 0; x < target_w; ++x) {
          const double fx = (x + 0.5) * scale_x - 0.5;
          const int x0 = static_cast<int>(std::floor(fx));
          const double tx = fx - x0;
          const int xa = detail::clamp_index(x0, sw), xb = detail::clamp_index(x0 + 1, sw);
          for (int c = 0; c < ImageBuffer::kChannels; ++c) {
            const double top = (1.0 - tx) * src.at(ya, xa, c) + tx * src.at(ya, xb, c);
            const double bot = (1.0 - tx) * src.at(yb, xa, c) + tx * src.at(yb, xb, c);
            out[oidx(y, x, c)] = (1.0 - ty) * top + ty * bot;
          }
        }
      }
      break;
    }
    case Interp::bicubic:
    case Interp::lanczos: {
      const int taps = kernel == Interp::bicubic ? 2 : 3;  // support radius in samples
      for (int y = 0; y < target_h; ++y) {
        const double fy = (y + 0.5) * scale_y - 0.5;
        const int y0 = static_cast<int>(std::floor(fy));
        for (int x = 0; x < target_w; ++x) {
          const double fx = (x + 0.5) * scale_x - 0.5;
          const int x0 = static_cast<int>(std::floor(fx));
          double wy[6], wx[6];
          double wsum_y = 0.0, wsum_x = 0.0;
          for (int k = -taps + 1; k <= taps; ++k) {
            const double wyk = kernel == Interp::bicubic ? detail::cubic_weight(fy - (y0 + k))
                                                         : detail::lanczos_weight(fy - (y0 + k));
            const double wxk = kernel == Interp::bicubic ? detail::cubic_weight(fx - (x0 + k))
                                                         : detail::lanczos_weight(fx - (x0 + k));
            wy[k + taps - 1] = wyk;
            wx[k + taps - 1] = wxk;
            wsum_y += wyk;
            wsum_x += wxk;
          }
          for (int c = 0; c < ImageBuffer::kChannels; ++c) {
            double acc = 0.0;
            for (int ky = -taps + 1; ky <= taps; ++ky) {
              const int sy = detail::clamp_index(y0 + ky, sh);
              double row = 0.0;
              for (int kx = -taps + 1; kx <= taps; ++kx)
                row += wx[kx + taps - 1] * src.at(sy, detail::clamp_index(x0 + kx, sw), c);
              acc += wy[ky + taps - 1] * row;
            }
            out[oidx(y, x, c)] = detail::clamp01(acc / (wsum_y * wsum_x));
          }
        }
      }
      break;
    }
    case Interp::area: {
      for (int y = 0; y < target_h; ++y) {
        const double sy0 = y * scale_y, sy1 = (y + 1) * scale_y;
        for (int x = 0; x < target_w; ++x) {
          const double sx0 = x * scale_x, sx1 = (x + 1) * scale_x;
          for (int c = 0; c < ImageBuffer::kChannels; ++c) {
            double acc = 0.0, total = 0.0;
            for (int sy = static_cast<int>(std::floor(sy0)); sy < sy1 && sy < sh; ++sy) {
              const double ch_y = std::min(sy1, sy + 1.0) - std::max(sy0, static_cast<double>(sy));
              if (ch_y <= 0.0) continue;
              for (int sx = static_cast<int>(std::floor(sx0)); sx < sx1 && sx < sw; ++sx) {
                const double ch_x = std::min(sx1, sx + 1.0) - std::max(sx0, static_cast<double>(sx));
                if (ch_x <= 0.0) continue;
                acc += ch_y * ch_x * src.at(sy, sx, c);
                total += ch_y * ch_x;
              }
            }
            out[oidx(y, x, c)] = total > 0.0 ? acc / total : 0.0;
          }
        }
      }
      break;
    }
    case Interp::random:
      break;  // rejected above
  }
  return ImageBuffer(target_h, target_w, std::move(out));
}

/// Resample image and scale boxes by (target_w/w, target_h/h). `random`
/// draws a concrete kernel uniformly per call.
inline Sample random_resize(const Sample& s, int target_h, int target_w, Interp interp, Rng& rng) {
  Interp kernel = interp;
  if (kernel == Interp::random) {
    static constexpr std::array<Interp, 5> kAll = {Interp::nearest, Interp::bilinear,
                                                   Interp::bicubic, Interp::area, Interp::lanczos};
    kernel = kAll[rng.uniform_int(kAll.size())];
  }
  const double sx = static_cast<double>(target_w) / s.image.width();
  const double sy = static_cast<double>(target_h) / s.image.height();
  const double tw = target_w, th = target_h;
  Sample out{resize_image(s.image, target_h, target_w, kernel), s.labels};
  // scaling can overshoot the canvas by an ulp; clamp back inside
  for (auto& l : out.labels)
    l.bbox = BBox{std::clamp(l.bbox.xmin * sx, 0.0, tw), std::clamp(l.bbox.ymin * sy, 0.0, th),
                  std::clamp(l.bbox.xmax * sx, 0.0, tw), std::clamp(l.bbox.ymax * sy, 0.0, th)};
  return out;
}

/// Place the image on a larger fill-colored canvas at a uniform integer
/// offset; boxes translate with it.
inline Sample random_expand(const Sample& s, double max_ratio, std::array<double, 3> fill,
                            Rng& rng) {
  if (!(max_ratio >= 1.0)) throw std::invalid_argument("random_expand: max_ratio must be >= 1");
  for (double f : fill)
    if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument("random_expand: fill outside [0,1]");
  const double ratio = rng.uniform(1.0, max_ratio);
  const int h = s.image.height(), w = s.image.width();
  const int nh = static_cast<int>(std::ceil(ratio * h));
  const int nw = static_cast<int>(std::ceil(ratio * w));
  const int dx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(nw - w) + 1));
  const int dy = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(nh - h) + 1));

  std::vector<double> data(static_cast<std::size_t>(nh) * nw * ImageBuffer::kChannels);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = fill[i % 3];
  ImageBuffer canvas(nh, nw, std::move(data));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ImageBuffer::kChannels; ++c)
        canvas.at(y + dy, x + dx, c) = s.image.at(y, x, c);

  Sample out{std::move(canvas), s.labels};
  for (auto& l : out.labels)
    l.bbox = BBox{l.bbox.xmin + dx, l.bbox.ymin + dy, l.bbox.xmax + dx, l.bbox.ymax + dy};
  return out;
}

/// SSD-style crop sampler constraint. min_iou absent means unconstrained.
struct CropConstraint {
  std::optional<double> min_iou;
  double min_scale = 0.3;  // fraction of source area
  double max_scale = 1.0;
  std::pair<double, double> aspect_range{0.5, 2.0};
  int max_trials = 50;

  void validate() const {
    if (min_iou && !(*min_iou >= 0.0 && *min_iou <= 1.0))
      throw std::invalid_argument("CropConstraint: min_iou outside [0,1]");
    if (!(min_scale > 0.0 && min_scale <= max_scale && max_scale <= 1.0))
      throw std::invalid_argument("CropConstraint: scale range invalid");
    if (!(aspect_range.first > 0.0 && aspect_range.first <= aspect_range.second))
      throw std::invalid_argument("CropConstraint: aspect range invalid");
    if (max_trials < 1) throw std::invalid_argument("CropConstraint: max_trials must be >= 1");
  }
};

/// Constrained random crop. Pixel-aligned windows; labels whose box center
/// lies inside the window are kept, translated and clipped. Falls back to the
/// unchanged input after max_trials failures.
inline Sample random_crop(const Sample& s, const CropConstraint& c, Rng& rng) {
  c.validate();
  const int h = s.image.height(), w = s.image.width();
  const double src_area = static_cast<double>(h) * w;

  for (int trial = 0; trial < c.max_trials; ++trial) {
    const double area = rng.uniform(c.min_scale, c.max_scale) * src_area;
    const double aspect = rng.uniform(c.aspect_range.first, c.aspect_range.second);
    const int cw = static_cast<int>(std::lround(std::sqrt(area * aspect)));
    const int ch = static_cast<int>(std::lround(std::sqrt(area / aspect)));
    if (cw < 1 || ch < 1 || cw > w || ch > h) continue;
    const int x0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(w - cw) + 1));
    const int y0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(h - ch) + 1));
    const BBox crop{static_cast<double>(x0), static_cast<double>(y0),
                    static_cast<double>(x0 + cw), static_cast<double>(y0 + ch)};

    if (c.min_iou && !s.labels.empty()) {
      bool satisfied = false;
      for (const auto& l : s.labels)
        if (iou(l.bbox, crop) >= *c.min_iou) {
          satisfied = true;
          break;
        }
      if (!satisfied) continue;
    }

    std::vector<ObjectLabel> kept;
    for (const auto& l : s.labels) {
      const double cx = 0.5 * (l.bbox.xmin + l.bbox.xmax);
      const double cy = 0.5 * (l.bbox.ymin + l.bbox.ymax);
      if (cx < crop.xmin || cx >= crop.xmax || cy < crop.ymin || cy >= crop.ymax) continue;
      BBox moved{l.bbox.xmin - x0, l.bbox.ymin - y0, l.bbox.xmax - x0, l.bbox.ymax - y0};
      const auto clipped = clip_bbox(moved, cw, ch);
      if (!clipped) continue;
      ObjectLabel n = l;
      n.bbox = *clipped;
      kept.push_back(n);
    }

    ImageBuffer img(ch, cw);
    for (int y = 0; y < ch; ++y)
      for (int x = 0; x < cw; ++x)
        for (int cc = 0; cc < ImageBuffer::kChannels; ++cc)
          img.at(y, x, cc) = s.image.at(y + y0, x + x0, cc);
    return Sample{std::move(img), std::move(kept)};
  }
  return s;
}

struct ColorJitterConfig {
  double brightness_delta = 0.0;                    // additive, drawn from [-d, +d]
  std::pair<double, double> contrast_range{1.0, 1.0};
  std::pair<double, double> saturation_range{1.0, 1.0};
  double hue_delta = 0.0;                           // degrees, drawn from [-d, +d]

  void validate() const {
    if (!(brightness_delta >= 0.0)) throw std::invalid_argument("ColorJitterConfig: brightness_delta < 0");
    if (!(contrast_range.first > 0.0 && contrast_range.first <= contrast_range.second))
      throw std::invalid_argument("ColorJitterConfig: contrast range invalid");
    if (!(saturation_range.first > 0.0 && saturation_range.first <= saturation_range.second))
      throw std::invalid_argument("ColorJitterConfig: saturation range invalid");
    if (!(hue_delta >= 0.0)) throw std::invalid_argument("ColorJitterConfig: hue_delta < 0");
  }
};

namespace detail {

constexpr double kLumaR = 0.299, kLumaG = 0.587, kLumaB = 0.114;

inline double luma(double r, double g, double b) {
  return kLumaR * r + kLumaG * g + kLumaB * b;
}

struct Hsv {
  double h;  // degrees in [0, 360)
  double s;
  double v;
};

inline Hsv rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  double h = 0.0;
  if (d > 0.0) {
    if (mx == r)
      h = 60.0 * std::fmod((g - b) / d + 6.0, 6.0);
    else if (mx == g)
      h = 60.0 * ((b - r) / d + 2.0);
    else
      h = 60.0 * ((r - g) / d + 4.0);
  }
  const double s = mx > 0.0 ? d / mx : 0.0;
  return Hsv{h, s, mx};
}

inline std::array<double, 3> hsv_to_rgb(const Hsv& hsv) {
  const double c = hsv.v * hsv.s;
  const double hp = hsv.h / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0.0, g = 0.0, b = 0.0;
  if (hp < 1.0) { r = c; g = x; }
  else if (hp < 2.0) { r = x; g = c; }
  else if (hp < 3.0) { g = c; b = x; }
  else if (hp < 4.0) { g = x; b = c; }
  else if (hp < 5.0) { r = x; b = c; }
  else { r = c; b = x; }
  const double m = hsv.v - c;
  return {r + m, g + m, b + m};
}

}  // namespace detail

/// Photometric jitter in fixed order brightness -> contrast -> saturation ->
/// hue, one random magnitude per stage, final clamp to [0,1]. Contrast scales
/// around the per-image mean luma; saturation blends toward per-pixel luma
/// (weights 0.299/0.587/0.114); hue rotates in HSV space.
inline ImageBuffer color_jitter(const ImageBuffer& img, const ColorJitterConfig& c, Rng& rng) {
  c.validate();
  const double delta_b = rng.uniform(-c.brightness_delta, c.brightness_delta);
  const double f_contrast = rng.uniform(c.contrast_range.first, c.contrast_range.second);
  const double f_sat = rng.uniform(c.saturation_range.first, c.saturation_range.second);
  const double theta = rng.uniform(-c.hue_delta, c.hue_delta);

  std::vector<double> buf = img.data();
  const std::size_t pixels = buf.size() / 3;

  if (c.brightness_delta > 0.0)
    for (double& v : buf) v += delta_b;

  if (!(c.contrast_range.first == 1.0 && c.contrast_range.second == 1.0)) {
    double mean_luma = 0.0;
    for (std::size_t i = 0; i < pixels; ++i)
      mean_luma += detail::luma(buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]);
    mean_luma /= static_cast<double>(pixels);
    for (double& v : buf) v = (v - mean_luma) * f_contrast + mean_luma;
  }

  if (!(c.saturation_range.first == 1.0 && c.saturation_range.second == 1.0)) {
    for (std::size_t i = 0; i < pixels; ++i) {
      const double l = detail::luma(buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]);
      for (int ch = 0; ch < 3; ++ch) buf[3 * i + ch] = l + (buf[3 * i + ch] - l) * f_sat;
    }
  }

  if (c.hue_delta > 0.0) {
    // HSV needs in-range colors; clamp before converting.
    for (double& v : buf) v = detail::clamp01(v);
    for (std::size_t i = 0; i < pixels; ++i) {
      detail::Hsv hsv = detail::rgb_to_hsv(buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]);
      hsv.h = std::fmod(hsv.h + theta, 360.0);
      if (hsv.h < 0.0) hsv.h += 360.0;
      if (hsv.h >= 360.0) hsv.h = 0.0;
      const auto rgb = detail::hsv_to_rgb(hsv);
      for (int ch = 0; ch < 3; ++ch) buf[3 * i + ch] = rgb[ch];
    }
  }

  for (double& v : buf) v = detail::clamp01(v);
  return ImageBuffer(img.height(), img.width(), std::move(buf));
}

// ---- policy composition ----

enum class PipelineKind { single_stage, multi_stage };

struct JitterStep {
  ColorJitterConfig cfg;
};
struct ExpandStep {
  double max_ratio = 4.0;
  std::array<double, 3> fill{0.5, 0.5, 0.5};
};
struct CropStep {
  CropConstraint constraint;
  /// When non-empty, min_iou is drawn from these per application (SSD style).
  std::vector<std::optional<double>> iou_choices;
};
struct ResizeStep {
  int target_h = 416;
  int target_w = 416;
  Interp interp = Interp::random;
};
struct ShortSideResizeStep {
  int short_side = 600;
  int long_cap = 1000;
};
struct HflipStep {};

using TransformOp =
    std::variant<JitterStep, ExpandStep, CropStep, ResizeStep, ShortSideResizeStep, HflipStep>;

struct TransformStep {
  TransformOp op;
  double probability = 1.0;
};

/// Ordered, probability-gated transform list. Multi-stage policies reject
/// crop and expansion at construction.
class AugmentPolicy {
 public:
  AugmentPolicy(PipelineKind kind, std::vector<TransformStep> steps)
      : kind_(kind), steps_(std::move(steps)) {
    for (const auto& s : steps_) {
      if (!(s.probability >= 0.0 && s.probability <= 1.0))
        throw std::invalid_argument("AugmentPolicy: probability outside [0,1]");
      if (kind_ == PipelineKind::multi_stage &&
          (std::holds_alternative<CropStep>(s.op) || std::holds_alternative<ExpandStep>(s.op)))
        throw std::invalid_argument("AugmentPolicy: multi-stage pipelines never crop or expand");
    }
  }

  PipelineKind kind() const { return kind_; }
  const std::vector<TransformStep>& steps() const { return steps_; }

  static AugmentPolicy single_stage_default() {
    ColorJitterConfig jitter;
    jitter.brightness_delta = 0.125;
    jitter.contrast_range = {0.5, 1.5};
    jitter.saturation_range = {0.5, 1.5};
    jitter.hue_delta = 18.0;
    CropStep crop;
    crop.iou_choices = {std::nullopt, 0.1, 0.3, 0.5, 0.7, 0.9};
    return AugmentPolicy(PipelineKind::single_stage,
                         {TransformStep{JitterStep{jitter}, 1.0},
                          TransformStep{ExpandStep{}, 0.5},
                          TransformStep{std::move(crop), 1.0},
                          TransformStep{ResizeStep{416, 416, Interp::random}, 1.0},
                          TransformStep{HflipStep{}, 0.5}});
  }

  static AugmentPolicy multi_stage_default() {
    return AugmentPolicy(PipelineKind::multi_stage,
                         {TransformStep{ShortSideResizeStep{600, 1000}, 1.0},
                          TransformStep{HflipStep{}, 0.5}});
  }

 private:
  PipelineKind kind_;
  std::vector<TransformStep> steps_;
};

namespace detail {

inline Sample apply_op(const Sample& s, const TransformOp& op, Rng& rng) {
  return std::visit(
      [&](const auto& step) -> Sample {
        using T = std::decay_t<decltype(step)>;
        if constexpr (std::is_same_v<T, JitterStep>) {
          return Sample{color_jitter(s.image, step.cfg, rng), s.labels};
        } else if constexpr (std::is_same_v<T, ExpandStep>) {
          return random_expand(s, step.max_ratio, step.fill, rng);
        } else if constexpr (std::is_same_v<T, CropStep>) {
          CropConstraint c = step.constraint;
          if (!step.iou_choices.empty())
            c.min_iou = step.iou_choices[rng.uniform_int(step.iou_choices.size())];
          return random_crop(s, c, rng);
        } else if constexpr (std::is_same_v<T, ResizeStep>) {
          return random_resize(s, step.target_h, step.target_w, step.interp, rng);
        } else if constexpr (std::is_same_v<T, ShortSideResizeStep>) {
          const int h = s.image.height(), w = s.image.width();
          const int shorter = std::min(h, w), longer = std::max(h, w);
          double scale = static_cast<double>(step.short_side) / shorter;
          if (scale * longer > step.long_cap)
            scale = static_cast<double>(step.long_cap) / longer;
          const int th = std::max(1, static_cast<int>(std::lround(h * scale)));
          const int tw = std::max(1, static_cast<int>(std::lround(w * scale)));
          return random_resize(s, th, tw, Interp::bilinear, rng);
        } else {
          static_assert(std::is_same_v<T, HflipStep>);
          return hflip(s);
        }
      },
      op);
}

}  // namespace detail

/// Apply the policy's transforms in declared order, each gated by its
/// probability. One gate draw per step regardless of outcome.
inline Sample apply_policy(const Sample& s, const AugmentPolicy& p, Rng& rng) {
  Sample out = s;
  for (const auto& step : p.steps()) {
    const double gate = rng.uniform();
    if (gate < step.probability) out = detail::apply_op(out, step.op, rng);
  }
  return out;
}

}  // namespace detkit::augment
