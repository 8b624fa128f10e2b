#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "csal/data.hpp"
#include "csal/loss.hpp"
#include "csal/metrics.hpp"
#include "csal/model.hpp"
#include "csal/morphology.hpp"

namespace csal {

/// B: baseline. C: contour-weighted loss. H: hierarchical attention.
enum class Ablation { B, BC, BH, BCH };

std::string to_string(Ablation a);
Ablation parse_ablation(const std::string& s);
bool uses_contour(Ablation a);
bool uses_hgam(Ablation a);

struct TrainConfig {
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double encoder_lr_scale = 0.05;
  std::size_t batch_size = 8;
  std::size_t epochs = 40;
  std::size_t lr_step_epochs = 10;
  double lr_decay = 0.5;
  std::uint64_t seed = 1;
  Ablation ablation = Ablation::B;
  /// Defaults to LossWeights::for_levels(model levels).
  std::optional<LossWeights> loss_weights;
  WeightMapConfig contour;
  MetricsConfig metrics;

  /// Settings used for the synthetic-data experiments: the loss is summed
  /// over pixels and the encoder starts from scratch, so the step is smaller
  /// and the encoder trains at the full rate.
  static TrainConfig desk_scale();

  void validate() const;
  /// lr * decay^floor(epoch / step), times the encoder scale for encoder parameters.
  double effective_lr(std::size_t epoch, ParamGroup group) const;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Momentum buffers, one per parameter in named() order.
template <typename T>
struct SgdState {
  std::vector<std::vector<T>> velocity;
};

/// v <- momentum * v + g + weight_decay * w;  w <- w - lr_eff * v; then zero g.
template <typename T>
void sgd_step(const std::vector<NamedParam<T>>& params, SgdState<T>& state, const TrainConfig& cfg,
              std::size_t epoch);

struct HistoryRow {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean batch loss over the epoch
  double max_fbeta = 0.0;
  double mae = 0.0;
  double boundary_mae = 0.0;
};

struct TrainResult {
  ModelConfig model;
  ModelParams<float> initial;
  ModelParams<float> final;
  ModelParams<float> best;
  std::size_t best_epoch = 0;
  std::vector<HistoryRow> history;
};

using EpochCallback = std::function<void(const HistoryRow&)>;

/// Full training run: seeded shuffling and augmentation, combined loss chosen
/// by the ablation, per-epoch evaluation on `data.test`. The best max-F-beta
/// parameters are retained. Throws TrainingError on a non-finite loss.
TrainResult train(const ModelConfig& model, const Dataset& data, const DatasetSpec& dspec, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Model configuration with attention toggled for the ablation.
ModelConfig configure_for(const ModelConfig& model, Ablation a);

/// Inference output (P, or P_1 without attention) for each sample, batched.
template <typename T>
std::vector<SaliencyMap> predict(const ModelParams<T>& params, const ModelConfig& cfg, std::span<const Sample> samples,
                                 std::size_t batch_size = 8);

template <typename T>
std::vector<SaliencyMap> to_saliency_maps(const Tensor<T>& t);

/// Attention maps H^Atten_1..H^Atten_L of one sample, bilinearly resampled
/// to the input resolution. Requires a model with attention enabled.
template <typename T>
std::vector<RealMap> attention_maps(const ModelParams<T>& params, const ModelConfig& cfg, const Sample& sample);

void write_history(const std::filesystem::path& path, const std::vector<HistoryRow>& rows);

}  // namespace csal
