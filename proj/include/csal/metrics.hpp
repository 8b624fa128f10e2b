#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "csal/maps.hpp"

namespace csal {

struct MetricsConfig {
  double beta_sq = 0.3;
  std::vector<int> thresholds = all_byte_thresholds();
  std::size_t boundary_band_radius = 2;

  static std::vector<int> all_byte_thresholds();
  void validate() const;
};

struct PrPoint {
  int threshold;
  double precision;
  double recall;
};

struct EvalReport {
  std::vector<PrPoint> pr_curve;
  int best_threshold = 0;
  double max_fbeta = 0.0;
  double mae = 0.0;
  double boundary_mae = 0.0;
  std::size_t sample_count = 0;
};

struct Confusion {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

// Precision/recall pool pixel counts over every sample (micro average). A
// prediction counts as positive when round(255 * v) >= t. With no predicted
// positives precision is 1; with no ground-truth positives recall is 1.

Confusion confusion_at_threshold(std::span<const SaliencyMap> preds, std::span<const BinaryMask> gts, int t);
std::pair<double, double> pr_at_threshold(std::span<const SaliencyMap> preds, std::span<const BinaryMask> gts, int t);

/// One entry per configured threshold, from a single pass over the pixels.
std::vector<PrPoint> pr_curve(std::span<const SaliencyMap> preds, std::span<const BinaryMask> gts,
                              const MetricsConfig& cfg = {});

/// (1 + b2) P R / (b2 P + R), 0 when both vanish.
double fbeta(double precision, double recall, double beta_sq);

/// Best threshold and its F-beta; ties resolve to the lowest threshold.
std::pair<int, double> max_fbeta(std::span<const SaliencyMap> preds, std::span<const BinaryMask> gts,
                                 const MetricsConfig& cfg = {});

/// Mean over samples of the per-image mean absolute error, on continuous values.
double mae(std::span<const SaliencyMap> preds, std::span<const BinaryMask> gts);

/// MAE restricted to each mask's dilate - erode band (square element of side
/// 2 * radius + 1). Samples with an empty band are skipped; throws if all are empty.
double boundary_mae(std::span<const SaliencyMap> preds, std::span<const BinaryMask> gts,
                    const MetricsConfig& cfg = {});

/// Rounds every value to the 8-bit grid (byte / 255), as if written to disk.
SaliencyMap quantize_map(const SaliencyMap& m);

/// All metrics on byte-quantized predictions, so evaluating saved maps
/// reproduces the in-memory report exactly.
EvalReport evaluate(std::span<const SaliencyMap> preds, std::span<const BinaryMask> gts,
                    const MetricsConfig& cfg = {});

/// pr_curve.csv and report.txt.
void write_report(const std::filesystem::path& dir, const EvalReport& report);

}  // namespace csal
