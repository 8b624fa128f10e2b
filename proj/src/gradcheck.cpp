#include "csal/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "csal/attention.hpp"
#include "csal/data.hpp"
#include "csal/loss.hpp"
#include "csal/model.hpp"
#include "csal/morphology.hpp"
#include "csal/ops.hpp"

namespace csal {

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / scale;
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

TensorPtr<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  auto t = make_tensor<double>(std::move(shape));
  for (auto& v : t->data()) v = uniform(rng, lo, hi);
  t->set_requires_grad(true);
  return t;
}

// Magnitudes bounded away from zero so ReLU kinks are out of reach of the step.
TensorPtr<double> away_from_zero(Shape shape, std::mt19937_64& rng) {
  auto t = random_tensor(std::move(shape), rng);
  for (auto& v : t->data()) v = (v < 0 ? -1.0 : 1.0) * (0.1 + std::abs(v));
  return t;
}

// Distinct values at least 0.04 apart so no max-pooling window holds a near tie.
TensorPtr<double> well_separated(Shape shape, std::mt19937_64& rng) {
  auto t = random_tensor(std::move(shape), rng);
  std::vector<std::size_t> rank(t->size());
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  for (std::size_t i = rank.size(); i > 1; --i) std::swap(rank[i - 1], rank[rng() % i]);
  for (std::size_t i = 0; i < rank.size(); ++i) (*t)[i] = 0.05 * static_cast<double>(rank[i]) + uniform(rng, 0, 0.01);
  return t;
}

LayerParams<double> random_layer(std::size_t out, std::size_t in, std::size_t k, std::mt19937_64& rng) {
  auto p = LayerParams<double>::zeros(out, in, k, k);
  for (auto& v : p.weight->data()) v = uniform(rng, -0.5, 0.5);
  for (auto& v : p.bias->data()) v = uniform(rng, -0.2, 0.2);
  return p;
}

void randomize(HgamParams<double>& p, std::mt19937_64& rng) {
  for (auto* layer : {&p.pooled_max, &p.pooled_avg, &p.compress, &p.top_down, &p.fuse}) {
    for (auto& v : layer->weight->data()) v = uniform(rng, -0.5, 0.5);
    for (auto& v : layer->bias->data()) v = uniform(rng, -0.2, 0.2);
  }
}

BinaryMask random_blob_mask(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  BinaryMask m(h, w);
  const double cy = uniform(rng, 0.3, 0.7) * static_cast<double>(h);
  const double cx = uniform(rng, 0.3, 0.7) * static_cast<double>(w);
  const double r = uniform(rng, 0.2, 0.35) * static_cast<double>(std::min(h, w));
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double dy = static_cast<double>(y) + 0.5 - cy, dx = static_cast<double>(x) + 0.5 - cx;
      m(y, x) = dy * dy + dx * dx <= r * r ? 1 : 0;
    }
  }
  return m;
}

TensorPtr<double> project(Graph<double>& g, const TensorPtr<double>& y, const std::vector<double>& r) {
  auto out = make_tensor<double>({1});
  double acc = 0.0;
  for (std::size_t i = 0; i < y->size(); ++i) acc += r[i] * (*y)[i];
  (*out)[0] = acc;
  out->set_requires_grad(y->requires_grad());
  g.record("project", out, [y, out, r] {
    const double s = out->grad()[0];
    auto gy = y->grad();
    for (std::size_t i = 0; i < gy.size(); ++i) gy[i] += s * r[i];
  });
  return out;
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n <= k) return idx;
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng() % (n - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckRow check_gradients(const std::string& name, const std::vector<TensorPtr<double>>& inputs, const GraphFn& fn,
                             std::mt19937_64& rng, const GradCheckOptions& opts) {
  for (const auto& x : inputs) x->set_requires_grad(true);
  std::vector<double> r;
  {
    Graph<double> probe(false);
    const auto y = fn(probe, inputs);
    r.resize(y->size());
    for (auto& v : r) v = uniform(rng, -1.0, 1.0);
  }
  const auto objective = [&] {
    Graph<double> g(false);
    const auto y = fn(g, inputs);
    double acc = 0.0;
    for (std::size_t i = 0; i < y->size(); ++i) acc += r[i] * (*y)[i];
    return acc;
  };

  for (const auto& x : inputs) x->drop_grad();
  Graph<double> g;
  g.backward(project(g, fn(g, inputs), r));

  GradCheckRow row{name, 0, 0.0};
  for (const auto& x : inputs) {
    const std::vector<double> analytic(x->grad().begin(), x->grad().end());
    for (std::size_t i : sample_indices(x->size(), opts.coords_per_input, rng)) {
      const double saved = (*x)[i];
      (*x)[i] = saved + opts.step;
      const double up = objective();
      (*x)[i] = saved - opts.step;
      const double down = objective();
      (*x)[i] = saved;
      const double numeric = (up - down) / (2.0 * opts.step);
      row.max_rel_error = std::max(row.max_rel_error, relative_error(analytic[i], numeric));
      ++row.checked;
    }
  }
  return row;
}

namespace {

GradCheckRow check_model(const std::string& name, bool attention, std::mt19937_64& rng, const GradCheckOptions& opts) {
  ModelConfig cfg = ModelConfig::tiny();
  cfg.hgam_enabled = attention;
  const auto params = ModelParams<double>::init(cfg, opts.seed);
  // Nonzero biases so every bias path is exercised away from zero.
  for (const auto& p : params.named()) {
    if (p.name.ends_with(".bias")) {
      for (auto& v : p.tensor->data()) v = uniform(rng, -0.05, 0.05);
    }
  }

  DatasetSpec spec;
  spec.count = 1;
  spec.base_size = cfg.input_size;
  spec.crop_size = cfg.input_size;
  spec.seed = opts.seed;
  std::mt19937_64 unused(0);
  const Sample sample = augment(generate_sample(spec, Split::train, 0), false, unused, spec);
  const std::vector<Sample> batch{sample};
  const std::vector<BinaryMask> masks{sample.mask};
  const auto image = images_to_tensor<double>(batch);
  const LossWeights weights = LossWeights::for_levels(cfg.levels);

  const auto loss_value = [&](Graph<double>& g) {
    const auto acts = forward(g, image, params, cfg);
    return combined_loss(g, acts.predictions, std::span<const BinaryMask>(masks), weights, true).total;
  };

  const auto named = params.named();
  for (const auto& p : named) p.tensor->drop_grad();
  {
    Graph<double> g;
    g.backward(loss_value(g));
  }

  std::size_t total = 0;
  for (const auto& p : named) total += p.tensor->size();
  GradCheckRow row{name, 0, 0.0};
  for (std::size_t flat : sample_indices(total, opts.model_params, rng)) {
    std::size_t k = 0;
    while (flat >= named[k].tensor->size()) flat -= named[k++].tensor->size();
    auto& t = *named[k].tensor;
    const double analytic = t.grad()[flat];
    const double saved = t[flat];
    const auto eval = [&] {
      Graph<double> g(false);
      return (*loss_value(g))[0];
    };
    t[flat] = saved + opts.step;
    const double up = eval();
    t[flat] = saved - opts.step;
    const double down = eval();
    t[flat] = saved;
    row.max_rel_error = std::max(row.max_rel_error, relative_error(analytic, (up - down) / (2.0 * opts.step)));
    ++row.checked;
  }
  return row;
}

}  // namespace

std::vector<GradCheckRow> run_gradient_suite(const GradCheckOptions& opts) {
  std::mt19937_64 rng(opts.seed);
  std::vector<GradCheckRow> rows;
  const auto layer_inputs = [](const LayerParams<double>& p) { return std::vector{p.weight, p.bias}; };

  {
    auto conv = random_layer(4, 3, 3, rng);
    auto in = layer_inputs(conv);
    in.insert(in.begin(), random_tensor({2, 3, 6, 5}, rng));
    rows.push_back(check_gradients("conv2d 3x3", in, [](Graph<double>& g, const auto& v) {
      return conv2d(g, v[0], LayerParams<double>{v[1], v[2]});
    }, rng, opts));
  }
  {
    auto conv = random_layer(3, 2, 3, rng);
    auto in = layer_inputs(conv);
    in.insert(in.begin(), random_tensor({2, 2, 7, 6}, rng));
    rows.push_back(check_gradients("conv2d 3x3 stride 2", in, [](Graph<double>& g, const auto& v) {
      return conv2d(g, v[0], LayerParams<double>{v[1], v[2]}, ConvOptions{2, 1});
    }, rng, opts));
  }
  {
    auto conv = random_layer(5, 4, 1, rng);
    auto in = layer_inputs(conv);
    in.insert(in.begin(), random_tensor({2, 4, 4, 3}, rng));
    rows.push_back(check_gradients("conv2d 1x1", in, [](Graph<double>& g, const auto& v) {
      return conv2d(g, v[0], LayerParams<double>{v[1], v[2]});
    }, rng, opts));
  }
  rows.push_back(check_gradients("relu", {away_from_zero({2, 3, 4, 4}, rng)},
                                 [](Graph<double>& g, const auto& v) { return relu(g, v[0]); }, rng, opts));
  rows.push_back(check_gradients("sigmoid", {random_tensor({2, 2, 4, 4}, rng, -4.0, 4.0)},
                                 [](Graph<double>& g, const auto& v) { return sigmoid(g, v[0]); }, rng, opts));
  rows.push_back(check_gradients("maxpool2d", {well_separated({2, 2, 7, 6}, rng)},
                                 [](Graph<double>& g, const auto& v) { return maxpool2d(g, v[0], 3, 4); }, rng, opts));
  rows.push_back(check_gradients("avgpool2d", {random_tensor({2, 2, 7, 6}, rng)},
                                 [](Graph<double>& g, const auto& v) { return avgpool2d(g, v[0], 3, 4); }, rng, opts));
  rows.push_back(check_gradients("upsample_bilinear", {random_tensor({2, 2, 3, 4}, rng)},
                                 [](Graph<double>& g, const auto& v) { return upsample_bilinear(g, v[0], 7, 9); },
                                 rng, opts));
  rows.push_back(check_gradients(
      "concat_channels", {random_tensor({2, 1, 3, 3}, rng), random_tensor({2, 3, 3, 3}, rng),
                          random_tensor({2, 2, 3, 3}, rng)},
      [](Graph<double>& g, const auto& v) { return concat_channels(g, v); }, rng, opts));
  rows.push_back(check_gradients("add", {random_tensor({2, 3, 4, 4}, rng), random_tensor({2, 3, 4, 4}, rng)},
                                 [](Graph<double>& g, const auto& v) { return add(g, v[0], v[1]); }, rng, opts));
  rows.push_back(check_gradients(
      "mul_broadcast_channel", {random_tensor({2, 3, 4, 5}, rng), random_tensor({2, 1, 4, 5}, rng)},
      [](Graph<double>& g, const auto& v) { return mul_broadcast_channel(g, v[0], v[1]); }, rng, opts));
  rows.push_back(check_gradients("sum", {random_tensor({2, 3, 4, 4}, rng)},
                                 [](Graph<double>& g, const auto& v) { return sum(g, v[0]); }, rng, opts));
  rows.push_back(check_gradients(
      "weighted_sum", {random_tensor({1}, rng), random_tensor({1}, rng), random_tensor({1}, rng)},
      [](Graph<double>& g, const auto& v) { return weighted_sum<double>(g, v, {0.4, 0.6, 1.0}); }, rng, opts));

  {
    const std::vector<BinaryMask> masks{random_blob_mask(10, 10, rng), random_blob_mask(10, 10, rng)};
    const auto plain = std::make_shared<LossTargets<double>>(LossTargets<double>::from_masks(masks));
    std::vector<RealMap> maps;
    for (const auto& m : masks) maps.push_back(contour_weight_map(m, WeightMapConfig{}));
    const auto weighted = std::make_shared<LossTargets<double>>(LossTargets<double>::from_masks(masks, maps));
    rows.push_back(check_gradients("pixel_loss", {random_tensor({2, 1, 10, 10}, rng, 0.05, 0.95)},
                                   [plain](Graph<double>& g, const auto& v) {
                                     return pixel_loss(g, v[0], *plain, 0.5);
                                   }, rng, opts));
    rows.push_back(check_gradients("pixel_loss weighted", {random_tensor({2, 1, 10, 10}, rng, 0.05, 0.95)},
                                   [weighted](Graph<double>& g, const auto& v) {
                                     return pixel_loss(g, v[0], *weighted, 0.5);
                                   }, rng, opts));
  }

  const AttentionConfig attn;
  rows.push_back(check_gradients("global_contrast_attention", {random_tensor({2, 3, 5, 5}, rng)},
                                 [attn](Graph<double>& g, const auto& v) {
                                   return global_contrast_attention(g, v[0], attn);
                                 }, rng, opts));
  {
    auto top = HgamParams<double>::zeros(3, 5, 4, true);
    randomize(top, rng);
    auto in = std::vector{random_tensor({2, 5, 4, 4}, rng), random_tensor({2, 3, 16, 16}, rng)};
    for (auto* l : {&top.pooled_max, &top.pooled_avg, &top.compress, &top.top_down, &top.fuse}) {
      in.push_back(l->weight);
      in.push_back(l->bias);
    }
    rows.push_back(check_gradients("hgam_step top", in, [top, attn](Graph<double>& g, const auto& v) {
      auto s = hgam_step(g, v[0], v[1], TensorPtr<double>{}, true, top, attn);
      return concat_channels<double>(g, {s.message, s.attention});
    }, rng, opts));
  }
  {
    auto lower = HgamParams<double>::zeros(3, 4, 4, false);
    randomize(lower, rng);
    auto in = std::vector{random_tensor({2, 4, 6, 6}, rng), random_tensor({2, 3, 12, 12}, rng),
                          random_tensor({2, 4, 3, 3}, rng)};
    for (auto* l : {&lower.pooled_max, &lower.pooled_avg, &lower.compress, &lower.top_down, &lower.fuse}) {
      in.push_back(l->weight);
      in.push_back(l->bias);
    }
    rows.push_back(check_gradients("hgam_step", in, [lower, attn](Graph<double>& g, const auto& v) {
      auto s = hgam_step(g, v[0], v[1], v[2], false, lower, attn);
      return concat_channels<double>(g, {s.message, s.attention});
    }, rng, opts));
  }
  {
    ResidualBlockParams<double> block{random_layer(4, 3, 3, rng), random_layer(4, 4, 3, rng), random_layer(4, 3, 1, rng)};
    auto in = std::vector{random_tensor({2, 3, 5, 5}, rng), block.conv1.weight, block.conv1.bias,
                          block.conv2.weight, block.skip->weight};
    rows.push_back(check_gradients("residual_block", in, [block](Graph<double>& g, const auto& v) {
      return residual_block(g, v[0], block);
    }, rng, opts));
  }

  rows.push_back(check_model("model end-to-end", false, rng, opts));
  rows.push_back(check_model("model end-to-end with attention", true, rng, opts));
  return rows;
}

}  // namespace csal
