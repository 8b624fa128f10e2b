#pragma once

#include <cstddef>

#include "csal/graph.hpp"
#include "csal/ops.hpp"
#include "csal/tensor.hpp"

namespace csal {

struct AttentionConfig {
  double lambda = 0.1;
  double epsilon = 1e-5;

  void validate() const;
};

/// Global-contrast attention.
///
/// Each channel is standardized over its spatial extent with population
/// statistics, (f - mean) / sqrt(var + epsilon); an exactly constant channel
/// contributes 0. The standardized channels are averaged into one plane,
/// rectified, and offset by lambda, so every output value is >= lambda.
/// There are no learned parameters. Input N x C x H x W, output N x 1 x H x W.
template <typename T>
TensorPtr<T> global_contrast_attention(Graph<T>& g, const TensorPtr<T>& f, const AttentionConfig& cfg);

/// Parameters of one hierarchical attention level.
///
/// pooled_max / pooled_avg act on the pooled upsampled feature U_i, compress
/// is a 1x1 reduction of E_i, top_down turns the coarser message (or, at the
/// topmost level, the max-pooled E_top) into the fourth branch, and fuse merges
/// the four branches into the level message.
template <typename T>
struct HgamParams {
  LayerParams<T> pooled_max;
  LayerParams<T> pooled_avg;
  LayerParams<T> compress;
  LayerParams<T> top_down;
  LayerParams<T> fuse;

  static HgamParams zeros(std::size_t u_channels, std::size_t e_channels, std::size_t msg_channels,
                          bool topmost);
};

template <typename T>
struct HgamState {
  TensorPtr<T> message;    // N x C_msg x h_i x w_i
  TensorPtr<T> attention;  // N x 1 x h_i x w_i
};

/// One level of the top-down attention chain. `prev_message` is the message of
/// the next-coarser level and must be null exactly when `topmost` is set.
template <typename T>
HgamState<T> hgam_step(Graph<T>& g, const TensorPtr<T>& e_i, const TensorPtr<T>& u_i,
                       const TensorPtr<T>& prev_message, bool topmost, const HgamParams<T>& params,
                       const AttentionConfig& cfg);

/// Attention-guided feature: the single attention channel scales every channel of res_i.
template <typename T>
TensorPtr<T> guide(Graph<T>& g, const TensorPtr<T>& res_i, const TensorPtr<T>& attention);

}  // namespace csal
