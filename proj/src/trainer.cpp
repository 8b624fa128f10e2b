#include "csal/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>

#include "csal/graph.hpp"

namespace csal {

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::B: return "B";
    case Ablation::BC: return "B+C";
    case Ablation::BH: return "B+H";
    case Ablation::BCH: return "B+C+H";
  }
  return "?";
}

Ablation parse_ablation(const std::string& s) {
  for (auto a : {Ablation::B, Ablation::BC, Ablation::BH, Ablation::BCH}) {
    if (to_string(a) == s) return a;
  }
  throw std::invalid_argument("unknown ablation '" + s + "' (expected B, B+C, B+H or B+C+H)");
}

bool uses_contour(Ablation a) { return a == Ablation::BC || a == Ablation::BCH; }
bool uses_hgam(Ablation a) { return a == Ablation::BH || a == Ablation::BCH; }

TrainConfig TrainConfig::desk_scale() {
  TrainConfig cfg;
  cfg.lr = 3e-6;
  cfg.encoder_lr_scale = 1.0;
  return cfg;
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be non-negative");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw std::invalid_argument("weight decay must be non-negative");
  if (encoder_lr_scale < 0.0) throw std::invalid_argument("encoder lr scale must be non-negative");
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (lr_step_epochs == 0) throw std::invalid_argument("lr step must be positive");
  if (!(lr_decay > 0.0) || lr_decay > 1.0) throw std::invalid_argument("lr decay must be in (0, 1]");
  if (loss_weights) loss_weights->validate();
  contour.validate();
  metrics.validate();
}

double TrainConfig::effective_lr(std::size_t epoch, ParamGroup group) const {
  const double base = lr * std::pow(lr_decay, static_cast<double>(epoch / lr_step_epochs));
  return group == ParamGroup::encoder ? base * encoder_lr_scale : base;
}

template <typename T>
void sgd_step(const std::vector<NamedParam<T>>& params, SgdState<T>& state, const TrainConfig& cfg,
              std::size_t epoch) {
  if (state.velocity.empty()) {
    state.velocity.reserve(params.size());
    for (const auto& p : params) state.velocity.emplace_back(p.tensor->size(), T(0));
  }
  if (state.velocity.size() != params.size()) throw std::invalid_argument("optimizer state does not match parameters");
  for (const auto& p : params) {
    if (!p.tensor->has_grad()) throw std::logic_error("parameter " + p.name + " has no gradient");
  }
  const T momentum = static_cast<T>(cfg.momentum);
  const T decay = static_cast<T>(cfg.weight_decay);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& w = *params[k].tensor;
    auto& v = state.velocity[k];
    if (v.size() != w.size()) throw std::invalid_argument("optimizer state size mismatch for " + params[k].name);
    const T lr = static_cast<T>(cfg.effective_lr(epoch, params[k].group));
    auto g = w.grad();
    auto x = w.data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = momentum * v[i] + g[i] + decay * x[i];
      x[i] -= lr * v[i];
    }
    w.zero_grad();
  }
}

template <typename T>
std::vector<SaliencyMap> to_saliency_maps(const Tensor<T>& t) {
  require_nchw(t, "saliency output");
  if (t.dim(1) != 1) throw ShapeError("saliency output must have one channel, got " + to_string(t.shape()));
  const std::size_t n = t.dim(0), h = t.dim(2), w = t.dim(3);
  std::vector<SaliencyMap> maps;
  maps.reserve(n);
  for (std::size_t b = 0; b < n; ++b) {
    SaliencyMap m(h, w);
    for (std::size_t i = 0; i < h * w; ++i) m.values[i] = static_cast<double>(t[b * h * w + i]);
    maps.push_back(std::move(m));
  }
  return maps;
}

template <typename T>
std::vector<SaliencyMap> predict(const ModelParams<T>& params, const ModelConfig& cfg, std::span<const Sample> samples,
                                 std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  std::vector<SaliencyMap> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const auto chunk = samples.subspan(start, std::min(batch_size, samples.size() - start));
    Graph<T> g(false);
    const auto acts = forward(g, images_to_tensor<T>(chunk), params, cfg);
    auto maps = to_saliency_maps(*acts.output());
    for (auto& m : maps) out.push_back(std::move(m));
  }
  return out;
}

template <typename T>
std::vector<RealMap> attention_maps(const ModelParams<T>& params, const ModelConfig& cfg, const Sample& sample) {
  if (!cfg.hgam_enabled) throw std::invalid_argument("attention maps need a model with attention enabled");
  Graph<T> g(false);
  const auto acts = forward(g, images_to_tensor<T>(std::span<const Sample>(&sample, 1)), params, cfg);
  std::vector<RealMap> maps;
  for (const auto& state : acts.hgam) {
    const auto up = upsample_bilinear(g, state.attention, cfg.input_size, cfg.input_size);
    RealMap m(cfg.input_size, cfg.input_size);
    for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = static_cast<double>((*up)[i]);
    maps.push_back(std::move(m));
  }
  return maps;
}

ModelConfig configure_for(const ModelConfig& model, Ablation a) {
  ModelConfig m = model;
  m.hgam_enabled = uses_hgam(a);
  return m;
}

namespace {

constexpr std::uint64_t kShuffleSalt = 0x53485546464c45ULL;
constexpr std::uint64_t kAugmentSalt = 0x4155474d454e54ULL;

std::string first_non_finite(const NetworkActivations<float>& acts, const CombinedLoss<float>& loss) {
  const auto check = [](const std::vector<TensorPtr<float>>& list, const char* name) -> std::string {
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (list[i] && !list[i]->all_finite()) return std::string(name) + "[" + std::to_string(i + 1) + "]";
    }
    return {};
  };
  for (const auto& [list, name] : {std::pair{&acts.encoded, "encoded"}, std::pair{&acts.residual, "residual"},
                                   std::pair{&acts.upsampled, "upsampled"}, std::pair{&acts.guided, "guided"}}) {
    if (auto s = check(*list, name); !s.empty()) return s;
  }
  for (std::size_t i = 0; i < acts.hgam.size(); ++i) {
    if (!acts.hgam[i].message->all_finite()) return "hgam_message[" + std::to_string(i + 1) + "]";
    if (!acts.hgam[i].attention->all_finite()) return "attention[" + std::to_string(i + 1) + "]";
  }
  if (auto s = check(acts.predictions.hierarchical, "prediction"); !s.empty()) return s;
  if (acts.predictions.final && !acts.predictions.final->all_finite()) return "final_prediction";
  if (auto s = check(loss.level_terms, "level_loss"); !s.empty()) return s;
  return "total_loss";
}

std::vector<BinaryMask> masks_of(std::span<const Sample> s) {
  std::vector<BinaryMask> m;
  m.reserve(s.size());
  for (const auto& x : s) m.push_back(x.mask);
  return m;
}

}  // namespace

TrainResult train(const ModelConfig& model, const Dataset& data, const DatasetSpec& dspec, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  dspec.validate();
  const ModelConfig mcfg = configure_for(model, cfg.ablation);
  mcfg.validate();
  if (mcfg.input_size != dspec.crop_size) {
    throw std::invalid_argument("model input size " + std::to_string(mcfg.input_size) + " does not match crop size " +
                                std::to_string(dspec.crop_size));
  }
  if (data.train.empty()) throw std::invalid_argument("training split is empty");
  if (data.test.empty()) throw std::invalid_argument("test split is empty");
  const LossWeights weights = cfg.loss_weights.value_or(LossWeights::for_levels(mcfg.levels));
  if (weights.per_level.size() != mcfg.levels) {
    throw std::invalid_argument("loss weights list " + std::to_string(weights.per_level.size()) +
                                " levels, model has " + std::to_string(mcfg.levels));
  }

  TrainResult result;
  result.model = mcfg;
  auto params = ModelParams<float>::init(mcfg, cfg.seed);
  result.initial = ModelParams<float>::zeros(mcfg);
  copy_values(params, result.initial);
  const auto named = params.named();

  std::mt19937_64 eval_rng(0);
  std::vector<Sample> eval_samples;
  eval_samples.reserve(data.test.size());
  for (const auto& s : data.test) eval_samples.push_back(augment(s, false, eval_rng, dspec));
  const auto eval_masks = masks_of(eval_samples);

  std::mt19937_64 shuffle_rng(cfg.seed ^ kShuffleSalt);
  std::mt19937_64 augment_rng(cfg.seed ^ kAugmentSalt);
  std::vector<std::size_t> order(data.train.size());
  SgdState<float> opt;
  double best_f = -1.0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(shuffle_rng, i)]);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<Sample> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(augment(data.train[order[i]], true, augment_rng, dspec));
      const auto masks = masks_of(batch);

      Graph<float> g;
      const auto acts = forward(g, images_to_tensor<float>(batch), params, mcfg);
      const auto loss = combined_loss(g, acts.predictions, std::span<const BinaryMask>(masks), weights,
                                      uses_contour(cfg.ablation), cfg.contour);
      const double value = static_cast<double>((*loss.total)[0]);
      if (!std::isfinite(value)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                            std::to_string(batches + 1) + "; first non-finite tensor: " +
                            first_non_finite(acts, loss));
      }
      g.backward(loss.total);
      sgd_step(named, opt, cfg, epoch);
      loss_sum += value;
      ++batches;
    }

    const auto preds = predict(params, mcfg, std::span<const Sample>(eval_samples), cfg.batch_size);
    const auto report = evaluate(preds, eval_masks, cfg.metrics);
    HistoryRow row{epoch + 1, loss_sum / static_cast<double>(batches), report.max_fbeta, report.mae,
                   report.boundary_mae};
    result.history.push_back(row);
    if (report.max_fbeta > best_f) {
      best_f = report.max_fbeta;
      result.best_epoch = epoch + 1;
      result.best = ModelParams<float>::zeros(mcfg);
      copy_values(params, result.best);
    }
    if (on_epoch) on_epoch(row);
  }
  result.final = std::move(params);
  if (cfg.epochs == 0) {
    result.best = ModelParams<float>::zeros(mcfg);
    copy_values(result.initial, result.best);
  }
  return result;
}

void write_history(const std::filesystem::path& path, const std::vector<HistoryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,loss,max_fbeta,mae,boundary_mae\n" << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.loss << ',' << r.max_fbeta << ',' << r.mae << ',' << r.boundary_mae << '\n';
  }
}

#define CSAL_INSTANTIATE_TRAINER(T)                                                                               \
  template void sgd_step<T>(const std::vector<NamedParam<T>>&, SgdState<T>&, const TrainConfig&, std::size_t);   \
  template std::vector<SaliencyMap> to_saliency_maps<T>(const Tensor<T>&);                                        \
  template std::vector<SaliencyMap> predict<T>(const ModelParams<T>&, const ModelConfig&, std::span<const Sample>, \
                                               std::size_t);                                                  \
  template std::vector<RealMap> attention_maps<T>(const ModelParams<T>&, const ModelConfig&, const Sample&);

CSAL_INSTANTIATE_TRAINER(float)
CSAL_INSTANTIATE_TRAINER(double)

}  // namespace csal
