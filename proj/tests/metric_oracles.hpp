#pragma once

#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "csal/maps.hpp"
#include "test_support.hpp"

namespace csal::oracle {

struct Batch {
  std::vector<SaliencyMap> preds;
  std::vector<BinaryMask> gts;
};

inline Batch random_batch(std::mt19937_64& rng, std::size_t n, std::size_t h, std::size_t w) {
  Batch b;
  for (std::size_t i = 0; i < n; ++i) {
    b.preds.push_back(test::random_saliency(h, w, rng));
    b.gts.push_back(test::random_mask(h, w, rng, test::uniform(rng, 0.1, 0.7)));
  }
  return b;
}

// Per-pixel enumeration with the empty-denominator conventions spelled out.
inline std::pair<double, double> pr_oracle(const Batch& b, int t) {
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t s = 0; s < b.preds.size(); ++s) {
    for (std::size_t i = 0; i < b.preds[s].size(); ++i) {
      const bool pos = std::lround(255.0 * b.preds[s].values[i]) >= t;
      const bool gt = b.gts[s].values[i] == 1;
      tp += pos && gt;
      fp += pos && !gt;
      fn += !pos && gt;
    }
  }
  const double p = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double r = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  return {p, r};
}

inline std::pair<int, double> fbeta_oracle(const Batch& b, double beta_sq) {
  int best_t = 0;
  double best = -1;
  for (int t = 0; t <= 255; ++t) {
    const auto [p, r] = pr_oracle(b, t);
    const double f = (p == 0 && r == 0) ? 0.0 : (1 + beta_sq) * p * r / (beta_sq * p + r);
    if (f > best) {
      best = f;
      best_t = t;
    }
  }
  return {best_t, best};
}

inline double mae_oracle(const Batch& b) {
  double total = 0;
  for (std::size_t s = 0; s < b.preds.size(); ++s) {
    double e = 0;
    for (std::size_t i = 0; i < b.preds[s].size(); ++i) e += std::abs(b.preds[s].values[i] - b.gts[s].values[i]);
    total += e / static_cast<double>(b.preds[s].size());
  }
  return total / static_cast<double>(b.preds.size());
}

// Band computed by brute-force windows: a pixel is in the band when its
// (2r+1)^2 window holds a 1 (zero padded) and a 0 (one padded).
inline double boundary_oracle(const Batch& b, long r) {
  double total = 0;
  std::size_t used = 0;
  for (std::size_t s = 0; s < b.preds.size(); ++s) {
    const auto& g = b.gts[s];
    const long H = static_cast<long>(g.height), W = static_cast<long>(g.width);
    double e = 0;
    std::size_t n = 0;
    for (long i = 0; i < H; ++i) {
      for (long j = 0; j < W; ++j) {
        bool any_one = false, any_zero = false;
        for (long dy = -r; dy <= r; ++dy)
          for (long dx = -r; dx <= r; ++dx) {
            const long y = i + dy, x = j + dx;
            if (y < 0 || y >= H || x < 0 || x >= W) continue;
            any_one = any_one || g(y, x);
            any_zero = any_zero || !g(y, x);
          }
        if (any_one && any_zero) {
          e += std::abs(b.preds[s](i, j) - g(i, j));
          ++n;
        }
      }
    }
    if (n) {
      total += e / static_cast<double>(n);
      ++used;
    }
  }
  return total / static_cast<double>(used);
}

}  // namespace csal::oracle
