#include "csal/model.hpp"

#include <random>
#include <stdexcept>

namespace csal {

ModelConfig ModelConfig::paper_scale() {
  ModelConfig cfg;
  cfg.levels = 5;
  cfg.input_size = 224;
  cfg.encoder_channels = {64, 128, 256, 512, 512};
  cfg.decoder_channels = {64, 64, 128, 128, 256};
  cfg.head_channels = 32;
  cfg.msg_channels = 32;
  return cfg;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig cfg;
  cfg.levels = 3;
  cfg.input_size = 16;
  cfg.encoder_channels = {4, 6, 8};
  cfg.decoder_channels = {4, 4, 6};
  cfg.head_channels = 3;
  cfg.msg_channels = 4;
  return cfg;
}

void ModelConfig::validate() const {
  if (levels < 2) throw std::invalid_argument("model needs at least 2 levels");
  if (encoder_channels.size() != levels || decoder_channels.size() != levels) {
    throw std::invalid_argument("model: expected " + std::to_string(levels) +
                                " encoder and decoder widths");
  }
  const std::size_t step = std::size_t{1} << (levels - 1);
  if (input_size == 0 || input_size % step != 0) {
    throw std::invalid_argument("model: input size " + std::to_string(input_size) +
                                " not divisible by " + std::to_string(step));
  }
  for (auto c : encoder_channels) {
    if (c == 0) throw std::invalid_argument("model: zero encoder width");
  }
  for (auto c : decoder_channels) {
    if (c == 0) throw std::invalid_argument("model: zero decoder width");
  }
  if (head_channels == 0 || msg_channels == 0) throw std::invalid_argument("model: zero head width");
  attention.validate();
}

namespace {

template <typename T>
void push(std::vector<NamedParam<T>>& out, const std::string& name, const LayerParams<T>& p, ParamGroup group) {
  out.push_back({name + ".weight", p.weight, group});
  out.push_back({name + ".bias", p.bias, group});
}

constexpr std::uint64_t kAttentionStreamSalt = 0x9E3779B97F4A7C15ULL;

}  // namespace

template <typename T>
ModelParams<T> ModelParams<T>::zeros(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p;
  const std::size_t L = cfg.levels;
  std::size_t in = 3;
  for (std::size_t i = 0; i < L; ++i) {
    const std::size_t c = cfg.encoder_channels[i];
    p.encoder.push_back({LayerParams<T>::zeros(c, in, 3, 3), LayerParams<T>::zeros(c, c, 3, 3)});
    in = c;
  }
  for (std::size_t i = 0; i < L; ++i) {
    const std::size_t out = cfg.decoder_channels[i];
    const std::size_t block_in = cfg.encoder_channels[i] + (i + 1 < L ? cfg.decoder_channels[i + 1] : 0);
    ResidualBlockParams<T> block;
    block.conv1 = LayerParams<T>::zeros(out, block_in, 3, 3);
    block.conv2 = LayerParams<T>::zeros(out, out, 3, 3);
    if (block_in != out) block.skip = LayerParams<T>::zeros(out, block_in, 1, 1);
    p.decoder.push_back(std::move(block));
  }
  for (std::size_t i = 0; i < L; ++i) {
    p.u_heads.push_back(LayerParams<T>::zeros(cfg.head_channels, cfg.decoder_channels[i], 3, 3));
    p.p_heads.push_back(LayerParams<T>::zeros(1, cfg.head_channels, 3, 3));
  }
  if (cfg.hgam_enabled) {
    for (std::size_t i = 0; i < L; ++i) {
      p.hgam.push_back(HgamParams<T>::zeros(cfg.head_channels, cfg.encoder_channels[i], cfg.msg_channels,
                                            i + 1 == L));
    }
    p.final_u = LayerParams<T>::zeros(cfg.head_channels, cfg.decoder_channels[0], 3, 3);
    p.final_p = LayerParams<T>::zeros(1, cfg.head_channels, 3, 3);
  }
  return p;
}

template <typename T>
ModelParams<T> ModelParams<T>::init(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p = zeros(cfg);
  std::mt19937_64 base(seed);
  for (auto& level : p.encoder) {
    for (auto& layer : level) init_he_uniform(layer, base);
  }
  for (auto& block : p.decoder) {
    init_he_uniform(block.conv1, base);
    init_he_uniform(block.conv2, base);
    if (block.skip) init_he_uniform(*block.skip, base);
  }
  for (auto& h : p.u_heads) init_he_uniform(h, base);
  for (auto& h : p.p_heads) init_he_uniform(h, base);

  std::mt19937_64 attn(seed ^ kAttentionStreamSalt);
  for (auto& level : p.hgam) {
    for (auto* layer : {&level.pooled_max, &level.pooled_avg, &level.compress, &level.top_down, &level.fuse}) {
      init_he_uniform(*layer, attn);
    }
  }
  if (p.final_u) init_he_uniform(*p.final_u, attn);
  if (p.final_p) init_he_uniform(*p.final_p, attn);
  return p;
}

template <typename T>
std::vector<NamedParam<T>> ModelParams<T>::named() const {
  std::vector<NamedParam<T>> out;
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    const std::string base = "encoder." + std::to_string(i + 1);
    push(out, base + ".conv1", encoder[i][0], ParamGroup::encoder);
    push(out, base + ".conv2", encoder[i][1], ParamGroup::encoder);
  }
  for (std::size_t i = 0; i < decoder.size(); ++i) {
    const std::string base = "decoder." + std::to_string(i + 1);
    push(out, base + ".conv1", decoder[i].conv1, ParamGroup::rest);
    push(out, base + ".conv2", decoder[i].conv2, ParamGroup::rest);
    if (decoder[i].skip) push(out, base + ".skip", *decoder[i].skip, ParamGroup::rest);
  }
  for (std::size_t i = 0; i < u_heads.size(); ++i) {
    push(out, "head." + std::to_string(i + 1) + ".u", u_heads[i], ParamGroup::rest);
    push(out, "head." + std::to_string(i + 1) + ".p", p_heads[i], ParamGroup::rest);
  }
  for (std::size_t i = 0; i < hgam.size(); ++i) {
    const std::string base = "hgam." + std::to_string(i + 1);
    push(out, base + ".pooled_max", hgam[i].pooled_max, ParamGroup::rest);
    push(out, base + ".pooled_avg", hgam[i].pooled_avg, ParamGroup::rest);
    push(out, base + ".compress", hgam[i].compress, ParamGroup::rest);
    push(out, base + ".top_down", hgam[i].top_down, ParamGroup::rest);
    push(out, base + ".fuse", hgam[i].fuse, ParamGroup::rest);
  }
  if (final_u) push(out, "final.u", *final_u, ParamGroup::rest);
  if (final_p) push(out, "final.p", *final_p, ParamGroup::rest);
  return out;
}

template <typename T>
std::size_t ModelParams<T>::count() const {
  std::size_t total = 0;
  for (const auto& np : named()) total += np.tensor->size();
  return total;
}

template <typename To, typename From>
void copy_values(const ModelParams<From>& src, ModelParams<To>& dst) {
  const auto s = src.named();
  const auto d = dst.named();
  if (s.size() != d.size()) throw std::invalid_argument("copy_values: parameter lists differ in length");
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (s[k].name != d[k].name || s[k].tensor->shape() != d[k].tensor->shape()) {
      throw std::invalid_argument("copy_values: parameter mismatch at " + s[k].name);
    }
    auto from = s[k].tensor->data();
    auto to = d[k].tensor->data();
    for (std::size_t i = 0; i < from.size(); ++i) to[i] = static_cast<To>(from[i]);
  }
}

template <typename T>
const TensorPtr<T>& NetworkActivations<T>::output() const {
  return predictions.final ? predictions.final : predictions.hierarchical.back();
}

template <typename T>
std::vector<TensorPtr<T>> encode(Graph<T>& g, const TensorPtr<T>& img, const ModelParams<T>& p,
                                 const ModelConfig& cfg) {
  require_nchw(*img, "encode");
  if (img->dim(1) != 3 || img->dim(2) != cfg.input_size || img->dim(3) != cfg.input_size) {
    throw ShapeError("encode: expected N x 3 x " + std::to_string(cfg.input_size) + " x " +
                     std::to_string(cfg.input_size) + " input, got " + to_string(img->shape()));
  }
  std::vector<TensorPtr<T>> features;
  TensorPtr<T> x = img;
  for (std::size_t i = 0; i < cfg.levels; ++i) {
    if (i > 0) x = maxpool2d(g, x, cfg.grid(i), cfg.grid(i));
    x = relu(g, conv2d(g, x, p.encoder[i][0]));
    x = relu(g, conv2d(g, x, p.encoder[i][1]));
    features.push_back(x);
  }
  return features;
}

template <typename T>
TensorPtr<T> residual_block(Graph<T>& g, const TensorPtr<T>& x, const ResidualBlockParams<T>& p) {
  auto h = relu(g, conv2d(g, x, p.conv1));
  h = conv2d(g, h, p.conv2);
  auto shortcut = p.skip ? conv2d(g, x, *p.skip) : x;
  return relu(g, add(g, h, shortcut));
}

template <typename T>
std::vector<TensorPtr<T>> decode(Graph<T>& g, const std::vector<TensorPtr<T>>& encoded, const ModelParams<T>& p,
                                 const ModelConfig& cfg) {
  if (encoded.size() != cfg.levels) throw ShapeError("decode: wrong number of encoded levels");
  std::vector<TensorPtr<T>> residual(cfg.levels);
  const std::size_t top = cfg.levels - 1;
  residual[top] = residual_block(g, encoded[top], p.decoder[top]);
  for (std::size_t i = top; i-- > 0;) {
    auto up = upsample_bilinear(g, residual[i + 1], cfg.grid(i), cfg.grid(i));
    residual[i] = residual_block(g, concat_channels<T>(g, {up, encoded[i]}), p.decoder[i]);
  }
  return residual;
}

template <typename T>
std::pair<std::vector<TensorPtr<T>>, std::vector<TensorPtr<T>>> heads(Graph<T>& g,
                                                                      const std::vector<TensorPtr<T>>& residual,
                                                                      const ModelParams<T>& p,
                                                                      const ModelConfig& cfg) {
  std::vector<TensorPtr<T>> upsampled(cfg.levels);
  std::vector<TensorPtr<T>> preds;
  for (std::size_t i = 0; i < cfg.levels; ++i) {
    auto full = upsample_bilinear(g, residual[i], cfg.input_size, cfg.input_size);
    upsampled[i] = relu(g, conv2d(g, full, p.u_heads[i]));
  }
  for (std::size_t i = cfg.levels; i-- > 0;) {
    preds.push_back(sigmoid(g, conv2d(g, upsampled[i], p.p_heads[i])));
  }
  return {upsampled, preds};
}

template <typename T>
NetworkActivations<T> forward(Graph<T>& g, const TensorPtr<T>& img, const ModelParams<T>& p,
                              const ModelConfig& cfg) {
  cfg.validate();
  NetworkActivations<T> act;
  act.encoded = encode(g, img, p, cfg);
  act.residual = decode(g, act.encoded, p, cfg);
  auto [upsampled, preds] = heads(g, act.residual, p, cfg);
  act.upsampled = std::move(upsampled);
  act.predictions.hierarchical = std::move(preds);
  if (!cfg.hgam_enabled) return act;
  if (p.hgam.size() != cfg.levels || !p.final_u || !p.final_p) {
    throw std::invalid_argument("forward: attention enabled but parameters were built without it");
  }

  act.hgam.resize(cfg.levels);
  act.guided.resize(cfg.levels);
  TensorPtr<T> message;
  for (std::size_t i = cfg.levels; i-- > 0;) {
    const bool topmost = i + 1 == cfg.levels;
    act.hgam[i] = hgam_step(g, act.encoded[i], act.upsampled[i], message, topmost, p.hgam[i], cfg.attention);
    message = act.hgam[i].message;
    act.guided[i] = guide(g, act.residual[i], act.hgam[i].attention);
  }
  auto full = upsample_bilinear(g, act.guided[0], cfg.input_size, cfg.input_size);
  auto u = relu(g, conv2d(g, full, *p.final_u));
  act.predictions.final = sigmoid(g, conv2d(g, u, *p.final_p));
  return act;
}

#define CSAL_INSTANTIATE_MODEL(T)                                                                         \
  template struct ModelParams<T>;                                                                         \
  template struct NetworkActivations<T>;                                                                  \
  template std::vector<TensorPtr<T>> encode(Graph<T>&, const TensorPtr<T>&, const ModelParams<T>&,       \
                                            const ModelConfig&);                                          \
  template TensorPtr<T> residual_block(Graph<T>&, const TensorPtr<T>&, const ResidualBlockParams<T>&);   \
  template std::vector<TensorPtr<T>> decode(Graph<T>&, const std::vector<TensorPtr<T>>&,                 \
                                            const ModelParams<T>&, const ModelConfig&);                   \
  template std::pair<std::vector<TensorPtr<T>>, std::vector<TensorPtr<T>>> heads(                        \
      Graph<T>&, const std::vector<TensorPtr<T>>&, const ModelParams<T>&, const ModelConfig&);           \
  template NetworkActivations<T> forward(Graph<T>&, const TensorPtr<T>&, const ModelParams<T>&,          \
                                         const ModelConfig&);

CSAL_INSTANTIATE_MODEL(float)
CSAL_INSTANTIATE_MODEL(double)

template void copy_values(const ModelParams<float>&, ModelParams<double>&);
template void copy_values(const ModelParams<double>&, ModelParams<float>&);
template void copy_values(const ModelParams<float>&, ModelParams<float>&);
template void copy_values(const ModelParams<double>&, ModelParams<double>&);

}  // namespace csal
