#pragma once

// Shared raster/geometry domain types and their primitive operations.
// Everything here is a pure function on owned values; randomized callers
// receive an explicit Rng so results are reproducible per seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace detkit {

/// Deterministic toolkit-wide PRNG: xoshiro256++ seeded via splitmix64.
/// Same seed + same call sequence gives the same outputs everywhere.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "xoshiro256++";

  explicit Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased uniform integer in [0, n). Rejection sampling, n > 0.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
    const std::uint64_t threshold = (-n) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  /// Standard normal draw (Box-Muller, one value per call).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
  }

  /// Child generator for stream `n`, derived from the original seed only.
  /// Forked generators are independent of how much the parent was consumed.
  Rng fork(std::uint64_t n) const { return Rng(mix(seed_, n)); }

  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a ^ (b * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
    return splitmix64(x) ^ splitmix64(x);
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

  std::uint64_t seed_;
  std::uint64_t state_[4];
};

/// Owned H x W x 3 raster of unit-interval intensities, row-major.
/// Quantization to 8-bit happens only at the I/O boundary.
class ImageBuffer {
 public:
  static constexpr int kChannels = 3;

  ImageBuffer(int height, int width, double fill = 0.0)
      : height_(height), width_(width) {
    check_dims(height, width);
    if (!(fill >= 0.0 && fill <= 1.0))
      throw std::invalid_argument("ImageBuffer: fill intensity outside [0,1]");
    data_.assign(static_cast<std::size_t>(height) * width * kChannels, fill);
  }

  ImageBuffer(int height, int width, std::vector<double> data)
      : height_(height), width_(width), data_(std::move(data)) {
    check_dims(height, width);
    if (data_.size() != static_cast<std::size_t>(height) * width * kChannels)
      throw std::invalid_argument("ImageBuffer: data length != H*W*3");
    for (double v : data_)
      if (!(v >= 0.0 && v <= 1.0))
        throw std::invalid_argument("ImageBuffer: intensity outside [0,1]");
  }

  int height() const { return height_; }
  int width() const { return width_; }

  double at(int y, int x, int c) const { return data_[index(y, x, c)]; }
  double& at(int y, int x, int c) { return data_[index(y, x, c)]; }

  const std::vector<double>& data() const { return data_; }

  bool same_shape(const ImageBuffer& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

 private:
  static void check_dims(int h, int w) {
    if (h < 1 || w < 1) throw std::invalid_argument("ImageBuffer: dimensions must be >= 1");
  }
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
  }

  int height_;
  int width_;
  std::vector<double> data_;
};

/// Axis-aligned box, continuous pixel coordinates, origin top-left.
/// Valid boxes have strictly positive area.
struct BBox {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }
  bool valid() const { return xmin < xmax && ymin < ymax; }
};

inline bool operator==(const BBox& a, const BBox& b) {
  return a.xmin == b.xmin && a.ymin == b.ymin && a.xmax == b.xmax && a.ymax == b.ymax;
}

/// Box plus class id and mixup loss weight in [0,1].
struct ObjectLabel {
  BBox bbox;
  int class_id = 0;
  double weight = 1.0;
};

/// One image with its labels; the unit every augmentation consumes and produces.
struct Sample {
  ImageBuffer image;
  std::vector<ObjectLabel> labels;
};

/// Intersection over union. 0 for disjoint boxes, 1 iff identical.
inline double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin);
  const double ih = std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return inter / uni;
}

/// Clamp a box to [0,width] x [0,height]; nullopt when no positive area survives.
inline std::optional<BBox> clip_bbox(const BBox& b, double width, double height) {
  if (width < 1.0 || height < 1.0)
    throw std::invalid_argument("clip_bbox: canvas must be at least 1x1");
  BBox r{std::clamp(b.xmin, 0.0, width), std::clamp(b.ymin, 0.0, height),
         std::clamp(b.xmax, 0.0, width), std::clamp(b.ymax, 0.0, height)};
  if (!r.valid()) return std::nullopt;
  return r;
}

/// Mirror a box inside a canvas of width `w`: x spans reflect, y is untouched.
inline BBox hflip_bbox(const BBox& b, double w) {
  return BBox{w - b.xmax, b.ymin, w - b.xmin, b.ymax};
}

/// Horizontal flip of pixels and boxes. Label order and weights are preserved.
inline Sample hflip(const Sample& s) {
  const int h = s.image.height();
  const int w = s.image.width();
  ImageBuffer img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ImageBuffer::kChannels; ++c)
        img.at(y, x, c) = s.image.at(y, w - 1 - x, c);
  std::vector<ObjectLabel> labels = s.labels;
  for (auto& l : labels) l.bbox = hflip_bbox(l.bbox, static_cast<double>(w));
  return Sample{std::move(img), std::move(labels)};
}

}  // namespace detkit
