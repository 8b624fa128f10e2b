#include "csal/attention.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace csal {

void AttentionConfig::validate() const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("attention lambda must be >= 0");
  if (!(epsilon > 0.0)) throw std::invalid_argument("attention epsilon must be > 0");
}

template <typename T>
TensorPtr<T> global_contrast_attention(Graph<T>& g, const TensorPtr<T>& f, const AttentionConfig& cfg) {
  cfg.validate();
  require_nchw(*f, "global_contrast_attention");
  const std::size_t N = f->dim(0), C = f->dim(1), plane = f->dim(2) * f->dim(3);
  if (plane == 0 || C == 0) throw ShapeError("global_contrast_attention: empty input " + to_string(f->shape()));

  // Standardized channels and 1/sqrt(var + eps) per (n, c), kept for backward.
  auto z = std::make_shared<std::vector<T>>(f->size());
  auto inv_std = std::make_shared<std::vector<T>>(N * C);
  auto fs = f->data();
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const T* src = fs.data() + nc * plane;
    T* dst = z->data() + nc * plane;
    double mean = 0.0;
    for (std::size_t i = 0; i < plane; ++i) mean += src[i];
    mean /= static_cast<double>(plane);
    double var = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = src[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(plane);
    const double inv = 1.0 / std::sqrt(var + cfg.epsilon);
    (*inv_std)[nc] = static_cast<T>(inv);
    const bool constant = std::all_of(src, src + plane, [&](T v) { return v == src[0]; });
    for (std::size_t i = 0; i < plane; ++i) {
      dst[i] = constant ? T{0} : static_cast<T>((src[i] - mean) * inv);
    }
  }

  auto out = make_tensor<T>({N, 1, f->dim(2), f->dim(3)});
  out->set_requires_grad(f->requires_grad());
  // Pre-activation channel average, needed for the rectifier's backward.
  auto avg = std::make_shared<std::vector<T>>(N * plane);
  const T lambda = static_cast<T>(cfg.lambda);
  const T inv_c = T{1} / static_cast<T>(C);
  auto ys = out->data();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      T acc{0};
      for (std::size_t c = 0; c < C; ++c) acc += (*z)[(n * C + c) * plane + i];
      const T a = acc * inv_c;
      (*avg)[n * plane + i] = a;
      ys[n * plane + i] = (a > T{0} ? a : T{0}) + lambda;
    }
  }

  g.record("global_contrast_attention", out, [f, out, z, inv_std, avg, N, C, plane, inv_c] {
    auto dy = out->grad();
    auto df = f->grad();
    std::vector<T> gz(plane);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t base = (n * C + c) * plane;
        double mean_g = 0.0;
        double mean_gz = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
          const T a = (*avg)[n * plane + i];
          gz[i] = a > T{0} ? dy[n * plane + i] * inv_c : T{0};
          mean_g += gz[i];
          mean_gz += static_cast<double>(gz[i]) * (*z)[base + i];
        }
        mean_g /= static_cast<double>(plane);
        mean_gz /= static_cast<double>(plane);
        const T inv = (*inv_std)[n * C + c];
        for (std::size_t i = 0; i < plane; ++i) {
          df[base + i] += inv * static_cast<T>(gz[i] - mean_g - (*z)[base + i] * mean_gz);
        }
      }
    }
  });
  return out;
}

template <typename T>
HgamParams<T> HgamParams<T>::zeros(std::size_t u_channels, std::size_t e_channels, std::size_t msg_channels,
                                   bool topmost) {
  HgamParams p;
  p.pooled_max = LayerParams<T>::zeros(msg_channels, u_channels, 3, 3);
  p.pooled_avg = LayerParams<T>::zeros(msg_channels, u_channels, 3, 3);
  p.compress = LayerParams<T>::zeros(msg_channels, e_channels, 1, 1);
  p.top_down = LayerParams<T>::zeros(msg_channels, topmost ? e_channels : msg_channels, 3, 3);
  p.fuse = LayerParams<T>::zeros(msg_channels, 4 * msg_channels, 1, 1);
  return p;
}

template <typename T>
HgamState<T> hgam_step(Graph<T>& g, const TensorPtr<T>& e_i, const TensorPtr<T>& u_i,
                       const TensorPtr<T>& prev_message, bool topmost, const HgamParams<T>& params,
                       const AttentionConfig& cfg) {
  require_nchw(*e_i, "hgam_step");
  require_nchw(*u_i, "hgam_step");
  const std::size_t h = e_i->dim(2), w = e_i->dim(3);
  if (topmost && prev_message) throw std::invalid_argument("hgam_step: topmost level takes no previous message");
  if (!topmost && !prev_message) throw std::invalid_argument("hgam_step: missing previous message below the top level");

  auto h1 = conv2d(g, maxpool2d(g, u_i, h, w), params.pooled_max);
  auto h2 = conv2d(g, avgpool2d(g, u_i, h, w), params.pooled_avg);
  auto h3 = conv2d(g, e_i, params.compress);
  TensorPtr<T> h4;
  if (topmost) {
    auto pooled = maxpool2d(g, e_i, std::max<std::size_t>(1, h / 2), std::max<std::size_t>(1, w / 2));
    h4 = upsample_bilinear(g, relu(g, conv2d(g, pooled, params.top_down)), h, w);
  } else {
    require_nchw(*prev_message, "hgam_step");
    if (2 * prev_message->dim(2) != h || 2 * prev_message->dim(3) != w) {
      throw ShapeError("hgam_step: previous message " + to_string(prev_message->shape()) +
                       " does not upsample by 2 onto the level grid " + std::to_string(h) + "x" +
                       std::to_string(w));
    }
    h4 = relu(g, conv2d(g, upsample_bilinear(g, prev_message, h, w), params.top_down));
  }
  HgamState<T> state;
  state.message = conv2d(g, concat_channels<T>(g, {h1, h2, h3, h4}), params.fuse);
  state.attention = global_contrast_attention(g, state.message, cfg);
  return state;
}

template <typename T>
TensorPtr<T> guide(Graph<T>& g, const TensorPtr<T>& res_i, const TensorPtr<T>& attention) {
  return mul_broadcast_channel(g, res_i, attention);
}

#define CSAL_INSTANTIATE_ATTENTION(T)                                                                \
  template TensorPtr<T> global_contrast_attention(Graph<T>&, const TensorPtr<T>&, const AttentionConfig&); \
  template struct HgamParams<T>;                                                                     \
  template HgamState<T> hgam_step(Graph<T>&, const TensorPtr<T>&, const TensorPtr<T>&,              \
                                  const TensorPtr<T>&, bool, const HgamParams<T>&,                   \
                                  const AttentionConfig&);                                           \
  template TensorPtr<T> guide(Graph<T>&, const TensorPtr<T>&, const TensorPtr<T>&);

CSAL_INSTANTIATE_ATTENTION(float)
CSAL_INSTANTIATE_ATTENTION(double)

}  // namespace csal
