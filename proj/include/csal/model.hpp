#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "csal/attention.hpp"
#include "csal/graph.hpp"
#include "csal/loss.hpp"
#include "csal/ops.hpp"
#include "csal/tensor.hpp"

namespace csal {

/// Network geometry. Level i (1-based) runs at input_size / 2^(i-1); vectors
/// are indexed from the finest level.
struct ModelConfig {
  std::size_t levels = 4;
  std::size_t input_size = 64;
  std::vector<std::size_t> encoder_channels{16, 32, 64, 128};
  std::vector<std::size_t> decoder_channels{16, 16, 32, 32};
  /// Width of the upsampled features U_i.
  std::size_t head_channels = 8;
  bool hgam_enabled = false;
  std::size_t msg_channels = 32;
  AttentionConfig attention;

  /// 5 levels at 224 with VGG-16 stage widths. Constructible, not pretrained.
  static ModelConfig paper_scale();
  /// 3 levels at 16 pixels, narrow; used for end-to-end gradient checks.
  static ModelConfig tiny();

  void validate() const;
  std::size_t grid(std::size_t level) const { return input_size >> level; }
};

template <typename T>
struct ResidualBlockParams {
  LayerParams<T> conv1;
  LayerParams<T> conv2;
  std::optional<LayerParams<T>> skip;  // 1x1 projection when widths differ
};

enum class ParamGroup { encoder, rest };

template <typename T>
struct NamedParam {
  std::string name;
  TensorPtr<T> tensor;
  ParamGroup group;
};

template <typename T>
struct ModelParams {
  std::vector<std::array<LayerParams<T>, 2>> encoder;
  std::vector<ResidualBlockParams<T>> decoder;
  std::vector<LayerParams<T>> u_heads;
  std::vector<LayerParams<T>> p_heads;
  std::vector<HgamParams<T>> hgam;  // empty when attention is disabled
  std::optional<LayerParams<T>> final_u;
  std::optional<LayerParams<T>> final_p;

  /// Zero-valued parameters with the shapes implied by `cfg`.
  static ModelParams zeros(const ModelConfig& cfg);
  /// Seeded He init. Baseline layers draw from one stream and attention layers
  /// from another, so toggling attention leaves the baseline init unchanged.
  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);

  /// Stable, ordered parameter listing (used by optimizer and checkpoints).
  std::vector<NamedParam<T>> named() const;
  std::size_t count() const;
};

/// Copies parameter values between precisions (names and order must match).
template <typename To, typename From>
void copy_values(const ModelParams<From>& src, ModelParams<To>& dst);

template <typename T>
struct NetworkActivations {
  std::vector<TensorPtr<T>> encoded;    // E_1..E_L
  std::vector<TensorPtr<T>> residual;   // Res_1..Res_L
  std::vector<TensorPtr<T>> upsampled;  // U_1..U_L
  std::vector<TensorPtr<T>> guided;     // Res^G_1..Res^G_L when attention is on
  std::vector<HgamState<T>> hgam;       // per level, finest first
  PredictionSet<T> predictions;         // hierarchical coarsest first, final = P

  /// P when attention is on, otherwise P_1.
  const TensorPtr<T>& output() const;
};

template <typename T>
std::vector<TensorPtr<T>> encode(Graph<T>& g, const TensorPtr<T>& img, const ModelParams<T>& p,
                                 const ModelConfig& cfg);

template <typename T>
TensorPtr<T> residual_block(Graph<T>& g, const TensorPtr<T>& x, const ResidualBlockParams<T>& p);

template <typename T>
std::vector<TensorPtr<T>> decode(Graph<T>& g, const std::vector<TensorPtr<T>>& encoded, const ModelParams<T>& p,
                                 const ModelConfig& cfg);

/// U_i and P_i for every level; the returned predictions are coarsest first.
template <typename T>
std::pair<std::vector<TensorPtr<T>>, std::vector<TensorPtr<T>>> heads(Graph<T>& g,
                                                                      const std::vector<TensorPtr<T>>& residual,
                                                                      const ModelParams<T>& p,
                                                                      const ModelConfig& cfg);

template <typename T>
NetworkActivations<T> forward(Graph<T>& g, const TensorPtr<T>& img, const ModelParams<T>& p,
                              const ModelConfig& cfg);

}  // namespace csal
