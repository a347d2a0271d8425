#pragma once

// Classification-head target construction and losses: softmax, cross-entropy
// and label smoothing for softmax heads (one-hot -> 1-eps / eps/(K-1)) and
// sigmoid heads (per-class binary targets, upper/lower limits corrected).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace detkit::targets {

/// Probability vector over K classes: entries in [0,1], summing to 1 within 1e-9.
class ClassDistribution {
 public:
  explicit ClassDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw std::invalid_argument("ClassDistribution: empty");
    double sum = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("ClassDistribution: entry outside [0,1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("ClassDistribution: entries do not sum to 1");
  }

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  const std::vector<double>& probs() const { return probs_; }

 private:
  std::vector<double> probs_;
};

struct SmoothingConfig {
  double epsilon = 0.1;
  int num_classes = 2;
};

/// p_i = exp(z_i - max z) / sum_j exp(z_j - max z). The shift is a
/// stabilization detail only; results match the unshifted form to ~1e-12.
inline ClassDistribution softmax(const std::vector<double>& logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
  for (double z : logits)
    if (!std::isfinite(z)) throw std::domain_error("softmax: non-finite logit");
  const double zmax = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - zmax);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return ClassDistribution(std::move(p));
}

/// L = -sum_i q_i ln p_i, natural log. `p` is the predicted distribution,
/// `q` the ground truth.
inline double cross_entropy(const ClassDistribution& p, const ClassDistribution& q) {
  if (p.size() != q.size()) throw std::invalid_argument("cross_entropy: size mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (q[i] == 0.0) continue;
    if (p[i] == 0.0) throw std::domain_error("cross_entropy: q_i > 0 where p_i = 0");
    loss -= q[i] * std::log(p[i]);
  }
  return loss;
}

/// -sum_i q_i ln q_i with 0*ln 0 = 0.
inline double entropy(const ClassDistribution& q) {
  double h = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i)
    if (q[i] > 0.0) h -= q[i] * std::log(q[i]);
  return h;
}

/// q_y = 1-eps, q_i = eps/(K-1) elsewhere.
inline ClassDistribution smooth_onehot(int y, const SmoothingConfig& cfg) {
  if (cfg.num_classes < 2) throw std::invalid_argument("smooth_onehot: K must be >= 2");
  if (!(cfg.epsilon >= 0.0 && cfg.epsilon < 1.0))
    throw std::invalid_argument("smooth_onehot: epsilon outside [0,1)");
  if (y < 0 || y >= cfg.num_classes) throw std::domain_error("smooth_onehot: class index out of range");
  std::vector<double> q(static_cast<std::size_t>(cfg.num_classes),
                        cfg.epsilon / (cfg.num_classes - 1));
  q[static_cast<std::size_t>(y)] = 1.0 - cfg.epsilon;
  return ClassDistribution(std::move(q));
}

/// Negative-side rule for sigmoid smoothing. The K=2 reading of the smoothing
/// equation maps 0 to eps; the alternative spreads eps over K-1 classes.
enum class NegativeMode { epsilon, epsilon_over_k_minus_1 };

/// Correct the limits of {0,1} sigmoid targets: 1 -> 1-eps, 0 -> eps
/// (or eps/(K-1) under NegativeMode::epsilon_over_k_minus_1).
inline std::vector<double> smooth_sigmoid_targets(const std::vector<double>& targets,
                                                  double epsilon,
                                                  NegativeMode mode = NegativeMode::epsilon,
                                                  int num_classes = 2) {
  if (!(epsilon >= 0.0 && epsilon < 1.0))
    throw std::invalid_argument("smooth_sigmoid_targets: epsilon outside [0,1)");
  if (num_classes < 2) throw std::invalid_argument("smooth_sigmoid_targets: K must be >= 2");
  const double negative =
      mode == NegativeMode::epsilon ? epsilon : epsilon / (num_classes - 1);
  std::vector<double> out(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] == 1.0)
      out[i] = 1.0 - epsilon;
    else if (targets[i] == 0.0)
      out[i] = negative;
    else
      throw std::domain_error("smooth_sigmoid_targets: entry not in {0,1}");
  }
  return out;
}

/// Model confidence proxy: max(logits) - min(logits).
inline double confidence_gap(const std::vector<double>& logits) {
  if (logits.size() < 2) throw std::invalid_argument("confidence_gap: need K >= 2");
  const auto [mn, mx] = std::minmax_element(logits.begin(), logits.end());
  return *mx - *mn;
}

/// d/dz of cross_entropy(softmax(z), q), which is softmax(z) - q.
inline std::vector<double> cross_entropy_softmax_gradient(const std::vector<double>& logits,
                                                          const ClassDistribution& q) {
  if (logits.size() != q.size())
    throw std::invalid_argument("cross_entropy_softmax_gradient: size mismatch");
  const ClassDistribution p = softmax(logits);
  std::vector<double> g(logits.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = p[i] - q[i];
  return g;
}

}  // namespace detkit::targets
