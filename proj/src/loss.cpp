#include "csal/loss.hpp"

#include "csal/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace csal {

LossWeights LossWeights::for_levels(std::size_t levels) {
  LossWeights w;
  if (levels == 0 || levels > w.per_level.size()) {
    throw std::invalid_argument("no default loss weights for " + std::to_string(levels) + " levels");
  }
  w.per_level.erase(w.per_level.begin(), w.per_level.end() - static_cast<long>(levels));
  return w;
}

void LossWeights::validate() const {
  if (per_level.empty()) throw std::invalid_argument("loss weights: no per-level weights");
  for (double v : per_level) {
    if (!(v > 0.0)) throw std::invalid_argument("loss weights must be positive");
  }
  if (!(final_p > 0.0)) throw std::invalid_argument("loss weights must be positive");
}

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

double pixel_bce(double p, double y) {
  const double q = clamp_prob(p);
  return -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
}

void check_weights(const RealMap& m) {
  for (double v : m.values) {
    if (!(v >= 1.0)) {
      throw std::invalid_argument("weight map contains value " + std::to_string(v) +
                                  " below 1 (corrupt weight map)");
    }
  }
}

}  // namespace

double bce(const SaliencyMap& pred, const BinaryMask& y) {
  require_same_size(pred, y, "bce");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += pixel_bce(pred.values[i], y.values[i]);
  return total;
}

double contour_loss(const SaliencyMap& pred, const BinaryMask& y, const RealMap& m) {
  require_same_size(pred, y, "contour_loss");
  require_same_size(pred, m, "contour_loss");
  check_weights(m);
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += m.values[i] * pixel_bce(pred.values[i], y.values[i]);
  return total;
}

double combine_terms(std::span<const double> level_terms, std::optional<double> final_term,
                     const LossWeights& w) {
  if (level_terms.size() != w.per_level.size()) {
    throw std::invalid_argument("combine_terms: " + std::to_string(level_terms.size()) +
                                " level terms but " + std::to_string(w.per_level.size()) + " weights");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < level_terms.size(); ++i) total += w.per_level[i] * level_terms[i];
  if (final_term) total += w.final_p * *final_term;
  return total;
}

template <typename T>
LossTargets<T> LossTargets<T>::from_masks(std::span<const BinaryMask> masks) {
  if (masks.empty()) throw std::invalid_argument("loss targets: empty batch");
  LossTargets t;
  t.batch = masks.size();
  t.height = masks[0].height;
  t.width = masks[0].width;
  t.labels.reserve(t.batch * t.height * t.width);
  for (const auto& m : masks) {
    require_same_size(masks[0], m, "loss targets");
    for (auto v : m.values) t.labels.push_back(static_cast<T>(v));
  }
  return t;
}

template <typename T>
LossTargets<T> LossTargets<T>::from_masks(std::span<const BinaryMask> masks,
                                          std::span<const RealMap> weight_maps) {
  LossTargets t = from_masks(masks);
  if (weight_maps.size() != masks.size()) {
    throw std::invalid_argument("loss targets: " + std::to_string(masks.size()) + " masks but " +
                                std::to_string(weight_maps.size()) + " weight maps");
  }
  t.weights.reserve(t.labels.size());
  for (std::size_t n = 0; n < masks.size(); ++n) {
    require_same_size(masks[n], weight_maps[n], "loss targets");
    check_weights(weight_maps[n]);
    for (double v : weight_maps[n].values) t.weights.push_back(static_cast<T>(v));
  }
  return t;
}

template <typename T>
TensorPtr<T> pixel_loss(Graph<T>& g, const TensorPtr<T>& pred, const LossTargets<T>& targets, T scale) {
  require_nchw(*pred, "pixel_loss");
  if (pred->dim(0) != targets.batch || pred->dim(1) != 1 || pred->dim(2) != targets.height ||
      pred->dim(3) != targets.width) {
    throw ShapeError("pixel_loss: prediction " + to_string(pred->shape()) + " does not match targets " +
                     to_string({targets.batch, 1, targets.height, targets.width}));
  }
  const T lo = static_cast<T>(kProbClamp);
  const T hi = T{1} - lo;
  auto ps = pred->data();
  const bool weighted = !targets.weights.empty();
  T total{0};
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const T q = std::clamp(ps[i], lo, hi);
    const T y = targets.labels[i];
    const T term = -(y * std::log(q) + (T{1} - y) * std::log(T{1} - q));
    total += weighted ? targets.weights[i] * term : term;
  }
  auto out = make_tensor<T>({1}, scale * total);
  out->set_requires_grad(pred->requires_grad());
  // Targets are copied so the closure does not outlive the caller's buffers.
  g.record("pixel_loss", out, [pred, out, targets, scale, lo, hi] {
    const T gout = out->grad()[0] * scale;
    auto ps = pred->data();
    auto dp = pred->grad();
    const bool weighted = !targets.weights.empty();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const T q = std::clamp(ps[i], lo, hi);
      const T y = targets.labels[i];
      T d = -(y / q) + (T{1} - y) / (T{1} - q);
      if (weighted) d *= targets.weights[i];
      dp[i] += gout * d;
    }
  });
  return out;
}

template <typename T>
CombinedLoss<T> combined_loss(Graph<T>& g, const PredictionSet<T>& preds, std::span<const BinaryMask> masks,
                              const LossWeights& w, bool use_contour, const WeightMapConfig& wcfg) {
  if (preds.hierarchical.empty()) throw std::invalid_argument("combined_loss: no predictions");
  w.validate();
  if (preds.hierarchical.size() != w.per_level.size()) {
    throw std::invalid_argument("combined_loss: " + std::to_string(preds.hierarchical.size()) +
                                " outputs but " + std::to_string(w.per_level.size()) + " weights");
  }
  LossTargets<T> targets;
  if (use_contour) {
    std::vector<RealMap> maps;
    maps.reserve(masks.size());
    for (const auto& m : masks) maps.push_back(contour_weight_map(m, wcfg));
    targets = LossTargets<T>::from_masks(masks, maps);
  } else {
    targets = LossTargets<T>::from_masks(masks);
  }
  const T scale = T{1} / static_cast<T>(masks.size());

  CombinedLoss<T> result;
  std::vector<TensorPtr<T>> terms;
  std::vector<T> weights;
  for (std::size_t i = 0; i < preds.hierarchical.size(); ++i) {
    auto term = pixel_loss(g, preds.hierarchical[i], targets, scale);
    result.level_terms.push_back(term);
    terms.push_back(term);
    weights.push_back(static_cast<T>(w.per_level[i]));
  }
  if (preds.final) {
    result.final_term = pixel_loss(g, preds.final, targets, scale);
    terms.push_back(result.final_term);
    weights.push_back(static_cast<T>(w.final_p));
  }
  result.total = weighted_sum(g, terms, weights);
  return result;
}

template struct LossTargets<float>;
template struct LossTargets<double>;
template TensorPtr<float> pixel_loss(Graph<float>&, const TensorPtr<float>&, const LossTargets<float>&, float);
template TensorPtr<double> pixel_loss(Graph<double>&, const TensorPtr<double>&, const LossTargets<double>&,
                                      double);
template CombinedLoss<float> combined_loss(Graph<float>&, const PredictionSet<float>&, std::span<const BinaryMask>,
                                           const LossWeights&, bool, const WeightMapConfig&);
template CombinedLoss<double> combined_loss(Graph<double>&, const PredictionSet<double>&,
                                            std::span<const BinaryMask>, const LossWeights&, bool,
                                            const WeightMapConfig&);

}  // namespace csal
