#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "csal/graph.hpp"
#include "csal/maps.hpp"
#include "csal/morphology.hpp"
#include "csal/tensor.hpp"

namespace csal {

/// Predictions are clamped to [kProbClamp, 1 - kProbClamp] before taking logs.
inline constexpr double kProbClamp = 1e-7;

/// Weights of the hierarchical outputs, ordered coarsest level first
/// (P_L, ..., P_1), plus the weight of the attention-guided output P.
struct LossWeights {
  std::vector<double> per_level{0.3, 0.4, 0.6, 0.8, 1.0};
  double final_p = 1.0;

  /// The five-level defaults truncated to the finest `levels` outputs.
  static LossWeights for_levels(std::size_t levels);
  void validate() const;
};

/// Per-pixel binary cross entropy summed over the map.
double bce(const SaliencyMap& pred, const BinaryMask& y);

/// Cross entropy weighted per pixel by `m`. Throws if any weight is below 1.
double contour_loss(const SaliencyMap& pred, const BinaryMask& y, const RealMap& m);

/// sum_i per_level[i] * level_terms[i] (+ final_p * final_term).
double combine_terms(std::span<const double> level_terms, std::optional<double> final_term,
                     const LossWeights& w);

/// Labels and optional per-pixel weights for a batch, flattened N x H x W.
template <typename T>
struct LossTargets {
  std::size_t batch = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<T> labels;
  std::vector<T> weights;  // empty: plain cross entropy

  static LossTargets from_masks(std::span<const BinaryMask> masks);
  /// Adds weight maps, validating that every weight is >= 1.
  static LossTargets from_masks(std::span<const BinaryMask> masks, std::span<const RealMap> weight_maps);
};

/// scale * sum over batch and pixels of w * BCE(pred, label) for a
/// N x 1 x H x W prediction. The clamp is treated as identity in the backward
/// pass, so the gradient through a sigmoid head is scale * w * (P - Y).
template <typename T>
TensorPtr<T> pixel_loss(Graph<T>& g, const TensorPtr<T>& pred, const LossTargets<T>& targets, T scale);

/// Hierarchical outputs (coarsest first) and the optional guided output P.
template <typename T>
struct PredictionSet {
  std::vector<TensorPtr<T>> hierarchical;
  TensorPtr<T> final;
};

template <typename T>
struct CombinedLoss {
  TensorPtr<T> total;
  std::vector<TensorPtr<T>> level_terms;
  TensorPtr<T> final_term;
};

/// Weighted multi-output objective, averaged over the batch. With
/// `use_contour`, one weight map per sample is built from its mask and shared
/// by every output.
template <typename T>
CombinedLoss<T> combined_loss(Graph<T>& g, const PredictionSet<T>& preds, std::span<const BinaryMask> masks,
                              const LossWeights& w, bool use_contour, const WeightMapConfig& wcfg = {});

}  // namespace csal
