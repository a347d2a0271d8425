#pragma once

// Sliding-patch robustness harness: paste an out-of-context object patch at
// every grid position of a scene, record its ground-truth box per frame, and
// score detector output for patch recall and original-object disappearance.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "detkit/augment.hpp"
#include "detkit/core.hpp"
#include "detkit/eval.hpp"

namespace detkit::elephant {

struct PatchSpec {
  ImageBuffer patch;
  /// Per-pixel blend weights matching the (unscaled) patch; hard paste when absent.
  std::optional<std::vector<double>> alpha_mask;
  int stride_x = 0;  // 0 = half the scaled patch width
  int stride_y = 0;  // 0 = half the scaled patch height
  double scale = 1.0;
};

struct AdversarialFrame {
  int frame_id = 0;
  ImageBuffer image;
  BBox patch_bbox;
  int patch_class_id = 0;
};

/// Frame ground truth without pixels, as stored in generation manifests.
struct FrameGroundTruth {
  int frame_id = 0;
  BBox patch_bbox;
};

/// An object on the unmodified scene (annotation or clean-scene detection).
struct SceneObject {
  BBox bbox;
  int class_id = 0;
};

using DetectionsByFrame = std::map<int, std::vector<eval::DetectionRecord>>;

namespace detail {

struct PreparedPatch {
  ImageBuffer patch;
  std::optional<std::vector<double>> alpha;
  int stride_x;
  int stride_y;
};

inline PreparedPatch prepare(const ImageBuffer& scene, const PatchSpec& spec) {
  if (!(spec.scale > 0.0)) throw std::invalid_argument("generate_frames: scale must be positive");
  if (spec.alpha_mask &&
      spec.alpha_mask->size() != static_cast<std::size_t>(spec.patch.height()) * spec.patch.width())
    throw std::invalid_argument("generate_frames: alpha mask does not match patch dimensions");

  const bool rescale = spec.scale != 1.0;
  const int th = std::max(1, static_cast<int>(std::lround(spec.scale * spec.patch.height())));
  const int tw = std::max(1, static_cast<int>(std::lround(spec.scale * spec.patch.width())));

  PreparedPatch out{rescale ? augment::resize_image(spec.patch, th, tw, augment::Interp::bilinear)
                            : spec.patch,
                    std::nullopt, 0, 0};
  if (spec.alpha_mask) {
    if (rescale) {
      // Resize the mask with the same kernel by packing it into a gray raster.
      std::vector<double> gray(spec.alpha_mask->size() * 3);
      for (std::size_t i = 0; i < spec.alpha_mask->size(); ++i)
        gray[3 * i] = gray[3 * i + 1] = gray[3 * i + 2] =
            std::clamp((*spec.alpha_mask)[i], 0.0, 1.0);
      const ImageBuffer mask_img(spec.patch.height(), spec.patch.width(), std::move(gray));
      const ImageBuffer resized = augment::resize_image(mask_img, th, tw, augment::Interp::bilinear);
      std::vector<double> scaled(static_cast<std::size_t>(th) * tw);
      for (int y = 0; y < th; ++y)
        for (int x = 0; x < tw; ++x)
          scaled[static_cast<std::size_t>(y) * tw + x] = resized.at(y, x, 0);
      out.alpha = std::move(scaled);
    } else {
      out.alpha = *spec.alpha_mask;
    }
  }
  if (out.patch.height() > scene.height() || out.patch.width() > scene.width())
    throw std::domain_error("generate_frames: scaled patch larger than scene");

  out.stride_x = spec.stride_x > 0 ? spec.stride_x : std::max(1, out.patch.width() / 2);
  out.stride_y = spec.stride_y > 0 ? spec.stride_y : std::max(1, out.patch.height() / 2);
  return out;
}

}  // namespace detail

/// Number of grid placements where the patch fully fits.
inline std::size_t frame_count(int scene_w, int scene_h, int patch_w, int patch_h, int stride_x,
                               int stride_y) {
  if (stride_x < 1 || stride_y < 1) throw std::invalid_argument("frame_count: strides must be >= 1");
  if (patch_w > scene_w || patch_h > scene_h) return 0;
  return (static_cast<std::size_t>(scene_w - patch_w) / stride_x + 1) *
         (static_cast<std::size_t>(scene_h - patch_h) / stride_y + 1);
}

/// Stream frames in grid order (x fastest) to avoid holding them all.
inline void for_each_frame(const ImageBuffer& scene, const PatchSpec& spec, int patch_class_id,
                           const std::function<void(AdversarialFrame&&)>& fn) {
  const detail::PreparedPatch prep = detail::prepare(scene, spec);
  const int ph = prep.patch.height(), pw = prep.patch.width();
  int frame_id = 0;
  for (int y0 = 0; y0 + ph <= scene.height(); y0 += prep.stride_y) {
    for (int x0 = 0; x0 + pw <= scene.width(); x0 += prep.stride_x) {
      ImageBuffer img = scene;
      for (int y = 0; y < ph; ++y) {
        for (int x = 0; x < pw; ++x) {
          const double m =
              prep.alpha ? (*prep.alpha)[static_cast<std::size_t>(y) * pw + x] : 1.0;
          for (int c = 0; c < ImageBuffer::kChannels; ++c) {
            const double blended =
                m * prep.patch.at(y, x, c) + (1.0 - m) * img.at(y0 + y, x0 + x, c);
            img.at(y0 + y, x0 + x, c) = std::clamp(blended, 0.0, 1.0);
          }
        }
      }
      const BBox box{static_cast<double>(x0), static_cast<double>(y0),
                     static_cast<double>(x0 + pw), static_cast<double>(y0 + ph)};
      fn(AdversarialFrame{frame_id++, std::move(img), box, patch_class_id});
    }
  }
}

/// All frames collected; one per grid position stepping by (stride_x, stride_y).
inline std::vector<AdversarialFrame> generate_frames(const ImageBuffer& scene,
                                                     const PatchSpec& spec, int patch_class_id) {
  std::vector<AdversarialFrame> frames;
  for_each_frame(scene, spec, patch_class_id,
                 [&](AdversarialFrame&& f) { frames.push_back(std::move(f)); });
  return frames;
}

/// Percentage of frames with at least one patch-class detection matching the
/// pasted box at IoU >= threshold.
inline double patch_recall(const std::vector<FrameGroundTruth>& frames, int patch_class_id,
                           const DetectionsByFrame& dets, const eval::EvalConfig& cfg) {
  cfg.validate();
  if (frames.empty()) throw std::invalid_argument("patch_recall: no frames");
  std::size_t matched = 0;
  for (const auto& f : frames) {
    const auto it = dets.find(f.frame_id);
    if (it == dets.end()) continue;
    for (const auto& d : it->second) {
      if (d.class_id != patch_class_id) continue;
      if (iou(d.bbox, f.patch_bbox) >= cfg.iou_threshold) {
        ++matched;
        break;
      }
    }
  }
  return 100.0 * static_cast<double>(matched) / static_cast<double>(frames.size());
}

/// Percentage of (clean object, frame) pairs where no detection of the
/// object's class matches it at IoU >= threshold. When exclude_occluded_iou
/// is set, objects overlapping the pasted patch at least that much are left
/// out of both numerator and denominator for that frame.
inline double disappearance_rate(const std::vector<SceneObject>& clean_objects,
                                 const std::vector<FrameGroundTruth>& frames,
                                 const DetectionsByFrame& dets, const eval::EvalConfig& cfg,
                                 std::optional<double> exclude_occluded_iou = std::nullopt) {
  cfg.validate();
  if (clean_objects.empty()) throw std::invalid_argument("disappearance_rate: no clean objects");
  if (frames.empty()) throw std::invalid_argument("disappearance_rate: no frames");
  std::size_t disappeared = 0;
  std::size_t counted = 0;
  static const std::vector<eval::DetectionRecord> kNone;
  for (const auto& f : frames) {
    const auto it = dets.find(f.frame_id);
    const auto& frame_dets = it == dets.end() ? kNone : it->second;
    for (const auto& obj : clean_objects) {
      if (exclude_occluded_iou && iou(obj.bbox, f.patch_bbox) >= *exclude_occluded_iou) continue;
      ++counted;
      bool found = false;
      for (const auto& d : frame_dets) {
        if (d.class_id != obj.class_id) continue;
        if (iou(d.bbox, obj.bbox) >= cfg.iou_threshold) {
          found = true;
          break;
        }
      }
      if (!found) ++disappeared;
    }
  }
  if (counted == 0) throw std::domain_error("disappearance_rate: every object excluded as occluded");
  return 100.0 * static_cast<double>(disappeared) / static_cast<double>(counted);
}

}  // namespace detkit::elephant
