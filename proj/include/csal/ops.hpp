#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "csal/graph.hpp"
#include "csal/tensor.hpp"

namespace csal {

/// Convolution parameters: weight OutC x InC x KH x KW and bias OutC.
template <typename T>
struct LayerParams {
  TensorPtr<T> weight;
  TensorPtr<T> bias;

  static LayerParams zeros(std::size_t out_channels, std::size_t in_channels,
                           std::size_t kernel_h, std::size_t kernel_w);

  std::size_t out_channels() const { return weight->dim(0); }
  std::size_t in_channels() const { return weight->dim(1); }
  std::size_t kernel_h() const { return weight->dim(2); }
  std::size_t kernel_w() const { return weight->dim(3); }
};

/// He-style uniform init, U(-sqrt(6/fan_in), sqrt(6/fan_in)), with zero bias.
/// Draws come straight from the 64-bit engine so streams are portable.
template <typename T>
void init_he_uniform(LayerParams<T>& p, std::mt19937_64& rng);

struct ConvOptions {
  std::size_t stride = 1;
  /// Explicit zero padding; std::nullopt means "same" (kernel dims must be odd).
  std::optional<std::size_t> padding;
};

template <typename T>
TensorPtr<T> conv2d(Graph<T>& g, const TensorPtr<T>& x, const LayerParams<T>& p,
                    ConvOptions opts = {});

template <typename T>
TensorPtr<T> relu(Graph<T>& g, const TensorPtr<T>& x);

/// Branches on sign so neither tail overflows.
template <typename T>
T stable_sigmoid(T x);

template <typename T>
TensorPtr<T> sigmoid(Graph<T>& g, const TensorPtr<T>& x);

/// Adaptive pooling: output cell (i, j) covers rows
/// [floor(i*H/out_h), ceil((i+1)*H/out_h)) and the analogous columns.
template <typename T>
TensorPtr<T> maxpool2d(Graph<T>& g, const TensorPtr<T>& x, std::size_t out_h, std::size_t out_w);

template <typename T>
TensorPtr<T> avgpool2d(Graph<T>& g, const TensorPtr<T>& x, std::size_t out_h, std::size_t out_w);

/// Bilinear resampling with half-pixel centres (align_corners = false).
template <typename T>
TensorPtr<T> upsample_bilinear(Graph<T>& g, const TensorPtr<T>& x, std::size_t out_h,
                               std::size_t out_w);

template <typename T>
TensorPtr<T> concat_channels(Graph<T>& g, const std::vector<TensorPtr<T>>& xs);

template <typename T>
TensorPtr<T> add(Graph<T>& g, const TensorPtr<T>& a, const TensorPtr<T>& b);

/// x (N x C x H x W) times a single-channel map (N x 1 x H x W) broadcast over C.
template <typename T>
TensorPtr<T> mul_broadcast_channel(Graph<T>& g, const TensorPtr<T>& x, const TensorPtr<T>& map);

/// Scalar tensor holding the sum of all entries.
template <typename T>
TensorPtr<T> sum(Graph<T>& g, const TensorPtr<T>& x);

/// Scalar: sum_k weights[k] * terms[k], each term a scalar tensor.
template <typename T>
TensorPtr<T> weighted_sum(Graph<T>& g, const std::vector<TensorPtr<T>>& terms,
                          const std::vector<T>& weights);

/// Bilinear interpolation taps for one axis; shared with tests of resampling.
struct LinearTap {
  std::size_t lo;
  std::size_t hi;
  double frac;
};
std::vector<LinearTap> bilinear_taps(std::size_t in, std::size_t out);

/// [begin, end) of adaptive pooling window `i` for an axis of length `in` split into `out`.
std::pair<std::size_t, std::size_t> adaptive_window(std::size_t i, std::size_t in, std::size_t out);

}  // namespace csal
