#include "csal/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>
#include <string>

#include "csal/image_io.hpp"
#include "csal/morphology.hpp"

namespace csal {

std::vector<int> MetricsConfig::all_byte_thresholds() {
  std::vector<int> t(256);
  for (int i = 0; i < 256; ++i) t[static_cast<std::size_t>(i)] = i;
  return t;
}

void MetricsConfig::validate() const {
  if (!(beta_sq > 0.0)) throw std::invalid_argument("beta^2 must be positive");
  if (thresholds.empty()) throw std::invalid_argument("no thresholds configured");
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) throw std::invalid_argument("thresholds must be sorted");
  for (int t : thresholds) {
    if (t < 0 || t > 255) throw std::invalid_argument("threshold out of range: " + std::to_string(t));
  }
}

namespace {

void check_pairs(std::span<const SaliencyMap> preds, std::span<const BinaryMask> gts) {
  if (preds.empty()) throw std::invalid_argument("metrics: empty prediction list");
  if (preds.size() != gts.size()) {
    throw std::invalid_argument("metrics: " + std::to_string(preds.size()) + " predictions but " +
                                std::to_string(gts.size()) + " ground truths");
  }
  for (std::size_t i = 0; i < preds.size(); ++i) require_same_size(preds[i], gts[i], "metrics");
}

// Neumaier compensated summation.
class Accumulator {
 public:
  void add(double v) {
    const double t = sum_ + v;
    comp_ += std::abs(sum_) >= std::abs(v) ? (sum_ - t) + v : (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

std::pair<double, double> ratios(const Confusion& c) {
  const double precision = (c.tp + c.fp) == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  const double recall = (c.tp + c.fn) == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return {precision, recall};
}

}  // namespace

Confusion confusion_at_threshold(std::span<const SaliencyMap> preds, std::span<const BinaryMask> gts, int t) {
  check_pairs(preds, gts);
  if (t < 0 || t > 255) throw std::invalid_argument("threshold out of range: " + std::to_string(t));
  Confusion c;
  for (std::size_t n = 0; n < preds.size(); ++n) {
    for (std::size_t i = 0; i < preds[n].size(); ++i) {
      const bool positive = quantize_byte(preds[n].values[i]) >= t;
      const bool truth = gts[n].values[i] != 0;
      if (positive && truth) ++c.tp;
      else if (positive) ++c.fp;
      else if (truth) ++c.fn;
      else ++c.tn;
    }
  }
  return c;
}

std::pair<double, double> pr_at_threshold(std::span<const SaliencyMap> preds, std::span<const BinaryMask> gts, int t) {
  return ratios(confusion_at_threshold(preds, gts, t));
}

std::vector<PrPoint> pr_curve(std::span<const SaliencyMap> preds, std::span<const BinaryMask> gts,
                              const MetricsConfig& cfg) {
  check_pairs(preds, gts);
  cfg.validate();
  // Histograms of quantized predictions split by ground truth.
  std::array<std::uint64_t, 257> fg{}, bg{};
  for (std::size_t n = 0; n < preds.size(); ++n) {
    for (std::size_t i = 0; i < preds[n].size(); ++i) {
      const auto b = quantize_byte(preds[n].values[i]);
      (gts[n].values[i] ? fg : bg)[b] += 1;
    }
  }
  // Suffix sums: count of bytes >= t.
  std::array<std::uint64_t, 258> fg_ge{}, bg_ge{};
  for (int t = 256; t >= 0; --t) {
    fg_ge[static_cast<std::size_t>(t)] = fg_ge[static_cast<std::size_t>(t) + 1] + fg[static_cast<std::size_t>(t)];
    bg_ge[static_cast<std::size_t>(t)] = bg_ge[static_cast<std::size_t>(t) + 1] + bg[static_cast<std::size_t>(t)];
  }
  const std::uint64_t total_fg = fg_ge[0];
  std::vector<PrPoint> curve;
  curve.reserve(cfg.thresholds.size());
  for (int t : cfg.thresholds) {
    Confusion c;
    c.tp = fg_ge[static_cast<std::size_t>(t)];
    c.fp = bg_ge[static_cast<std::size_t>(t)];
    c.fn = total_fg - c.tp;
    const auto [p, r] = ratios(c);
    curve.push_back({t, p, r});
  }
  return curve;
}

double fbeta(double precision, double recall, double beta_sq) {
  const double denom = beta_sq * precision + recall;
  if (denom <= 0.0) return 0.0;
  return (1.0 + beta_sq) * precision * recall / denom;
}

std::pair<int, double> max_fbeta(std::span<const SaliencyMap> preds, std::span<const BinaryMask> gts,
                                 const MetricsConfig& cfg) {
  const auto curve = pr_curve(preds, gts, cfg);
  int best_t = curve.front().threshold;
  double best = -1.0;
  for (const auto& pt : curve) {
    const double f = fbeta(pt.precision, pt.recall, cfg.beta_sq);
    if (f > best) {
      best = f;
      best_t = pt.threshold;
    }
  }
  return {best_t, best};
}

double mae(std::span<const SaliencyMap> preds, std::span<const BinaryMask> gts) {
  check_pairs(preds, gts);
  Accumulator across;
  for (std::size_t n = 0; n < preds.size(); ++n) {
    Accumulator within;
    for (std::size_t i = 0; i < preds[n].size(); ++i) within.add(std::abs(preds[n].values[i] - gts[n].values[i]));
    across.add(within.value() / static_cast<double>(preds[n].size()));
  }
  return across.value() / static_cast<double>(preds.size());
}

double boundary_mae(std::span<const SaliencyMap> preds, std::span<const BinaryMask> gts, const MetricsConfig& cfg) {
  check_pairs(preds, gts);
  const StructuringElement se{2 * cfg.boundary_band_radius + 1};
  Accumulator across;
  std::size_t used = 0;
  for (std::size_t n = 0; n < preds.size(); ++n) {
    const BinaryMask band = morphological_gradient(gts[n], se);
    const std::size_t pixels = band.count();
    if (pixels == 0) continue;
    Accumulator within;
    for (std::size_t i = 0; i < band.size(); ++i) {
      if (band.values[i]) within.add(std::abs(preds[n].values[i] - gts[n].values[i]));
    }
    across.add(within.value() / static_cast<double>(pixels));
    ++used;
  }
  if (used == 0) throw std::invalid_argument("boundary_mae: every ground truth has an empty boundary band");
  return across.value() / static_cast<double>(used);
}

SaliencyMap quantize_map(const SaliencyMap& m) {
  SaliencyMap out(m.height, m.width);
  for (std::size_t i = 0; i < m.size(); ++i) out.values[i] = quantize_byte(m.values[i]) / 255.0;
  return out;
}

EvalReport evaluate(std::span<const SaliencyMap> preds, std::span<const BinaryMask> gts, const MetricsConfig& cfg) {
  check_pairs(preds, gts);
  std::vector<SaliencyMap> q;
  q.reserve(preds.size());
  for (const auto& p : preds) q.push_back(quantize_map(p));
  EvalReport report;
  report.sample_count = preds.size();
  report.pr_curve = pr_curve(q, gts, cfg);
  std::tie(report.best_threshold, report.max_fbeta) = max_fbeta(q, gts, cfg);
  report.mae = mae(q, gts);
  report.boundary_mae = boundary_mae(q, gts, cfg);
  return report;
}

void write_report(const std::filesystem::path& dir, const EvalReport& report) {
  std::filesystem::create_directories(dir);
  std::ofstream curve(dir / "pr_curve.csv");
  if (!curve) throw std::runtime_error("cannot write " + (dir / "pr_curve.csv").string());
  curve << "threshold,precision,recall\n" << std::setprecision(17);
  for (const auto& pt : report.pr_curve) curve << pt.threshold << ',' << pt.precision << ',' << pt.recall << '\n';
  std::ofstream txt(dir / "report.txt");
  if (!txt) throw std::runtime_error("cannot write " + (dir / "report.txt").string());
  txt << std::setprecision(17) << "max_fbeta=" << report.max_fbeta << '\n'
      << "best_threshold=" << report.best_threshold << '\n'
      << "mae=" << report.mae << '\n'
      << "boundary_mae=" << report.boundary_mae << '\n'
      << "samples=" << report.sample_count << '\n';
}

}  // namespace csal
