#pragma once

// Learning-rate schedules (step / cosine / constant with linear warmup) as
// evaluable specs, plus the random-shape batch planner for single-stage
// detectors (square sizes, multiples of the network stride).

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "detkit/core.hpp"

namespace detkit::schedule {

enum class LrMode { constant, step, cosine };

inline const char* to_string(LrMode m) {
  switch (m) {
    case LrMode::constant: return "constant";
    case LrMode::step: return "step";
    case LrMode::cosine: return "cosine";
  }
  return "?";
}

/// A total function from iteration index to learning rate, iteration-indexed.
/// Warmup ramps linearly from 0 over [0, W); the decay mode owns [W, T].
struct LrSchedule {
  double base_lr = 0.0;
  long long total_iters = 1;
  long long warmup_iters = 0;
  LrMode mode = LrMode::cosine;
  std::vector<long long> step_milestones;
  double step_factor = 0.1;

  void validate() const {
    if (!(base_lr > 0.0)) throw std::invalid_argument("LrSchedule: base_lr must be positive");
    if (total_iters < 1) throw std::invalid_argument("LrSchedule: total_iters must be >= 1");
    if (warmup_iters < 0 || warmup_iters >= total_iters)
      throw std::invalid_argument("LrSchedule: warmup_iters must satisfy 0 <= W < T");
    if (!(step_factor > 0.0 && step_factor < 1.0))
      throw std::invalid_argument("LrSchedule: step_factor outside (0,1)");
    long long prev = -1;
    for (long long m : step_milestones) {
      if (m <= prev) throw std::invalid_argument("LrSchedule: milestones must be strictly increasing");
      if (m < warmup_iters || m >= total_iters)
        throw std::invalid_argument("LrSchedule: milestone outside [W, T)");
      prev = m;
    }
  }
};

/// Learning rate at iteration t, 0 <= t <= T.
inline double lr_at(const LrSchedule& s, long long t) {
  s.validate();
  if (t < 0 || t > s.total_iters)
    throw std::domain_error("lr_at: iteration outside [0, total_iters]");
  if (t < s.warmup_iters)
    return s.base_lr * static_cast<double>(t) / static_cast<double>(s.warmup_iters);
  switch (s.mode) {
    case LrMode::constant:
      return s.base_lr;
    case LrMode::cosine: {
      // Decay domain re-based to [W, T] so warmup hands over at exactly base_lr.
      const double progress = static_cast<double>(t - s.warmup_iters) /
                              static_cast<double>(s.total_iters - s.warmup_iters);
      return s.base_lr * 0.5 * (1.0 + std::cos(3.141592653589793238462643383279502884 * progress));
    }
    case LrMode::step: {
      double lr = s.base_lr;
      for (long long m : s.step_milestones)
        if (m <= t) lr *= s.step_factor;
      return lr;
    }
  }
  throw std::logic_error("lr_at: unreachable");
}

/// Rows at t = 0, every, 2*every, ..., plus the final T.
inline std::vector<std::pair<long long, double>> emit_schedule_table(const LrSchedule& s,
                                                                     long long every) {
  s.validate();
  if (every < 1) throw std::invalid_argument("emit_schedule_table: every must be >= 1");
  std::vector<std::pair<long long, double>> rows;
  for (long long t = 0; t < s.total_iters; t += every) rows.emplace_back(t, lr_at(s, t));
  rows.emplace_back(s.total_iters, lr_at(s, s.total_iters));
  return rows;
}

/// Per-batch square training sizes; every size is a multiple of stride.
struct ShapePlan {
  int stride = 32;
  int min_size = 320;
  int max_size = 608;
  std::vector<int> sizes;  // one entry per batch
};

/// Every multiple of stride in [min_size, max_size].
inline std::vector<int> shape_candidates(int stride, int min_size, int max_size) {
  if (stride < 1) throw std::invalid_argument("shape_candidates: stride must be >= 1");
  if (min_size > max_size) throw std::invalid_argument("shape_candidates: min_size > max_size");
  if (min_size % stride != 0 || max_size % stride != 0)
    throw std::domain_error("shape_candidates: sizes must be multiples of stride");
  if (min_size < stride) throw std::invalid_argument("shape_candidates: min_size below one stride");
  std::vector<int> out;
  for (int v = min_size; v <= max_size; v += stride) out.push_back(v);
  return out;
}

/// Independent uniform draw from the candidate set per batch, seeded.
inline ShapePlan plan_shapes(int stride, int min_size, int max_size, std::size_t num_batches,
                             Rng& rng) {
  const std::vector<int> candidates = shape_candidates(stride, min_size, max_size);
  ShapePlan plan{stride, min_size, max_size, {}};
  plan.sizes.reserve(num_batches);
  for (std::size_t i = 0; i < num_batches; ++i)
    plan.sizes.push_back(candidates[rng.uniform_int(candidates.size())]);
  return plan;
}

}  // namespace detkit::schedule
