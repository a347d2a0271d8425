#pragma once

// Detection evaluation: score-ordered greedy IoU matching against ground
// truth, precision/recall, VOC-style average precision (11-point and
// all-points) and per-class delta reports. Difficult ground truths are
// invisible to matching and excluded from recall denominators.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "detkit/core.hpp"

namespace detkit::eval {

/// Scored, classed box produced by an external detector.
struct DetectionRecord {
  std::string image_id;
  BBox bbox;
  int class_id = 0;
  double score = 0.0;
};

struct GroundTruthRecord {
  std::string image_id;
  BBox bbox;
  int class_id = 0;
  bool difficult = false;
};

enum class ApMode { voc07_11point, voc_all_points };

inline const char* to_string(ApMode m) {
  return m == ApMode::voc07_11point ? "voc07_11point" : "voc_all_points";
}

struct EvalConfig {
  double iou_threshold = 0.5;
  ApMode ap_mode = ApMode::voc07_11point;
  /// 0 = infer the vocabulary from the records; otherwise ids must be < this.
  int num_classes = 0;

  void validate() const {
    if (!(iou_threshold > 0.0 && iou_threshold < 1.0))
      throw std::invalid_argument("EvalConfig: iou_threshold outside (0,1)");
    if (num_classes < 0) throw std::invalid_argument("EvalConfig: negative num_classes");
  }
};

/// Greedy one-to-one matching per (image, class). Detections are processed in
/// descending score order (ties broken by input order); each takes the
/// unmatched non-difficult ground truth with highest IoU >= threshold.
/// Returns TP flags parallel to the input detections.
inline std::vector<char> match_detections(const std::vector<DetectionRecord>& dets,
                                          const std::vector<GroundTruthRecord>& gts,
                                          double iou_threshold) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

  std::map<std::pair<std::string, int>, std::vector<std::size_t>> gt_groups;
  for (std::size_t i = 0; i < gts.size(); ++i)
    if (!gts[i].difficult) gt_groups[{gts[i].image_id, gts[i].class_id}].push_back(i);

  std::vector<char> gt_used(gts.size(), 0);
  std::vector<char> tp(dets.size(), 0);
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const DetectionRecord& d = dets[order[rank]];
    const auto it = gt_groups.find({d.image_id, d.class_id});
    if (it == gt_groups.end()) continue;
    double best_iou = 0.0;
    std::size_t best_gt = gts.size();
    for (std::size_t gi : it->second) {
      if (gt_used[gi]) continue;
      const double v = iou(d.bbox, gts[gi].bbox);
      if (v > best_iou) {
        best_iou = v;
        best_gt = gi;
      }
    }
    if (best_gt < gts.size() && best_iou >= iou_threshold) {
      gt_used[best_gt] = 1;
      tp[order[rank]] = 1;
    }
  }
  return tp;
}

/// One detection's score with its matched/unmatched outcome.
struct ScoredFlag {
  double score = 0.0;
  bool tp = false;
};

/// VOC average precision from scored TP/FP flags and the number of
/// (non-difficult) ground truths. AP is 0 when num_gt is 0.
inline double average_precision(std::vector<ScoredFlag> dets, std::size_t num_gt, ApMode mode) {
  std::stable_sort(dets.begin(), dets.end(),
                   [](const ScoredFlag& a, const ScoredFlag& b) { return a.score > b.score; });
  const std::size_t n = dets.size();
  std::vector<double> precision(n), recall(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (dets[i].tp) ++tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = num_gt == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(num_gt);
  }
  if (num_gt == 0 || n == 0) return 0.0;

  if (mode == ApMode::voc07_11point) {
    double total = 0.0;
    for (int k = 0; k <= 10; ++k) {
      const double r = static_cast<double>(k) / 10.0;
      double best = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (recall[i] >= r) best = std::max(best, precision[i]);
      total += best;
    }
    return total / 11.0;
  }

  // All-points: area under the right-monotonized PR curve.
  std::vector<double> mono = precision;
  for (std::size_t i = n - 1; i-- > 0;) mono[i] = std::max(mono[i], mono[i + 1]);
  double area = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (recall[i] > prev_recall) {
      area += (recall[i] - prev_recall) * mono[i];
      prev_recall = recall[i];
    }
  }
  return area;
}

struct ClassAp {
  int class_id = 0;
  std::size_t num_gt = 0;  // non-difficult ground truths
  std::size_t num_dets = 0;
  double ap = 0.0;
};

struct EvalResult {
  double map = 0.0;
  std::vector<ClassAp> per_class;  // classes with >= 1 ground-truth record
};

/// AP per class over classes owning at least one ground-truth record; mAP is
/// their unweighted mean. Detections for classes without any GT are ignored.
inline EvalResult mean_ap(const std::vector<DetectionRecord>& dets,
                          const std::vector<GroundTruthRecord>& gts, const EvalConfig& cfg) {
  cfg.validate();
  for (const auto& g : gts)
    if (g.class_id < 0 || (cfg.num_classes > 0 && g.class_id >= cfg.num_classes))
      throw std::domain_error("mean_ap: ground-truth class id outside vocabulary");
  for (const auto& d : dets)
    if (d.class_id < 0 || (cfg.num_classes > 0 && d.class_id >= cfg.num_classes))
      throw std::domain_error("mean_ap: detection class id outside vocabulary");

  const std::vector<char> tp = match_detections(dets, gts, cfg.iou_threshold);

  std::map<int, ClassAp> classes;
  for (const auto& g : gts) {
    ClassAp& c = classes[g.class_id];
    c.class_id = g.class_id;
    if (!g.difficult) ++c.num_gt;
  }
  std::map<int, std::vector<ScoredFlag>> flags;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto it = classes.find(dets[i].class_id);
    if (it == classes.end()) continue;
    ++it->second.num_dets;
    flags[dets[i].class_id].push_back(ScoredFlag{dets[i].score, tp[i] != 0});
  }

  EvalResult result;
  double sum = 0.0;
  for (auto& [cid, c] : classes) {
    // a class whose ground truths are all difficult and which drew no
    // detections has nothing to score; it is absent from the summary
    if (c.num_gt == 0 && c.num_dets == 0) continue;
    c.ap = average_precision(flags[cid], c.num_gt, cfg.ap_mode);
    sum += c.ap;
    result.per_class.push_back(c);
  }
  if (result.per_class.empty()) throw std::domain_error("mean_ap: no ground-truth classes");
  result.map = sum / static_cast<double>(result.per_class.size());
  return result;
}

/// Mean of mean_ap over IoU thresholds 0.50:0.05:0.95 (the COCO-style scalar).
inline double coco_map(const std::vector<DetectionRecord>& dets,
                       const std::vector<GroundTruthRecord>& gts, EvalConfig cfg) {
  double sum = 0.0;
  for (int k = 0; k < 10; ++k) {
    cfg.iou_threshold = static_cast<double>(50 + 5 * k) / 100.0;
    sum += mean_ap(dets, gts, cfg).map;
  }
  return sum / 10.0;
}

struct ClassDelta {
  int class_id = 0;
  double ap_a = 0.0;
  double ap_b = 0.0;
  double delta = 0.0;  // ap_b - ap_a
};

/// Signed per-class AP differences (b - a), sorted ascending by delta.
inline std::vector<ClassDelta> per_class_delta(const std::vector<ClassAp>& a,
                                               const std::vector<ClassAp>& b) {
  std::map<int, double> bmap;
  for (const auto& c : b) bmap[c.class_id] = c.ap;
  if (a.size() != b.size()) throw std::domain_error("per_class_delta: class set mismatch");
  std::vector<ClassDelta> out;
  out.reserve(a.size());
  for (const auto& c : a) {
    const auto it = bmap.find(c.class_id);
    if (it == bmap.end()) throw std::domain_error("per_class_delta: class set mismatch");
    out.push_back(ClassDelta{c.class_id, c.ap, it->second, it->second - c.ap});
  }
  std::stable_sort(out.begin(), out.end(), [](const ClassDelta& x, const ClassDelta& y) {
    if (x.delta != y.delta) return x.delta < y.delta;
    return x.class_id < y.class_id;
  });
  return out;
}

}  // namespace detkit::eval
