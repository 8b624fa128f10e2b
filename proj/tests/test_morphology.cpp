#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "csal/morphology.hpp"
#include "test_support.hpp"

namespace csal {
namespace {

using test::random_mask;

// Window simulation with an explicit out-of-image value.
BinaryMask window_oracle(const BinaryMask& m, long r, bool want_all, std::uint8_t pad) {
  BinaryMask out(m.height, m.width);
  const long H = static_cast<long>(m.height), W = static_cast<long>(m.width);
  for (long i = 0; i < H; ++i) {
    for (long j = 0; j < W; ++j) {
      bool any = false, all = true;
      for (long dy = -r; dy <= r; ++dy) {
        for (long dx = -r; dx <= r; ++dx) {
          const long y = i + dy, x = j + dx;
          const std::uint8_t v = (y < 0 || y >= H || x < 0 || x >= W) ? pad : m(y, x);
          any = any || v;
          all = all && v;
        }
      }
      out(i, j) = want_all ? all : any;
    }
  }
  return out;
}

std::vector<std::vector<double>> kernel_oracle(int size, double sigma) {
  std::vector<std::vector<double>> k(size, std::vector<double>(size));
  const int r = size / 2;
  double total = 0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) total += k[dy + r][dx + r] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
  for (auto& row : k)
    for (auto& v : row) v /= total;
  return k;
}

// blur(k * (dilate - erode)) + 1, each stage written out by hand.
RealMap weight_oracle(const BinaryMask& y, const WeightMapConfig& cfg) {
  const long r = static_cast<long>(cfg.se_size / 2);
  const BinaryMask d = window_oracle(y, r, false, 0);
  const BinaryMask e = window_oracle(y, r, true, 1);
  const auto kern = kernel_oracle(static_cast<int>(cfg.gauss_size), cfg.gauss_sigma);
  const long gr = static_cast<long>(cfg.gauss_size / 2);
  const long H = static_cast<long>(y.height), W = static_cast<long>(y.width);
  RealMap out(y.height, y.width);
  for (long i = 0; i < H; ++i) {
    for (long j = 0; j < W; ++j) {
      double acc = 0;
      for (long dy = -gr; dy <= gr; ++dy) {
        for (long dx = -gr; dx <= gr; ++dx) {
          const long a = i + dy, b = j + dx;
          if (a < 0 || a >= H || b < 0 || b >= W) continue;
          acc += kern[dy + gr][dx + gr] * cfg.k * (d(a, b) - e(a, b));
        }
      }
      out(i, j) = acc + 1.0;
    }
  }
  return out;
}

// Chebyshev distance from (i, j) to the nearest pixel whose 3x3 neighbourhood
// holds both labels.
long distance_to_transition(const BinaryMask& m, long i, long j) {
  const long H = static_cast<long>(m.height), W = static_cast<long>(m.width);
  long best = 1 << 20;
  for (long a = 0; a < H; ++a) {
    for (long b = 0; b < W; ++b) {
      bool edge = false;
      for (long dy = -1; dy <= 1 && !edge; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          const long y = a + dy, x = b + dx;
          if (y >= 0 && y < H && x >= 0 && x < W && m(y, x) != m(a, b)) edge = true;
        }
      if (edge) best = std::min(best, std::max(std::abs(a - i), std::abs(b - j)));
    }
  }
  return best;
}

TEST(Dilate, Examples) {
  const StructuringElement s{5};
  EXPECT_EQ(dilate(BinaryMask(7, 7, 0), s), BinaryMask(7, 7, 0));
  EXPECT_EQ(dilate(BinaryMask(7, 7, 1), s), BinaryMask(7, 7, 1));

  BinaryMask m(7, 7);
  m(3, 3) = 1;
  BinaryMask expect(7, 7);
  for (int i = 1; i <= 5; ++i)
    for (int j = 1; j <= 5; ++j) expect(i, j) = 1;
  EXPECT_EQ(dilate(m, s), expect);
}

TEST(Erode, Examples) {
  const StructuringElement s{5};
  EXPECT_EQ(erode(BinaryMask(7, 7, 1), s), BinaryMask(7, 7, 1));
  EXPECT_EQ(erode(BinaryMask(7, 7, 0), s), BinaryMask(7, 7, 0));
  BinaryMask m(7, 7);
  m(3, 3) = 1;
  EXPECT_EQ(erode(m, s), BinaryMask(7, 7, 0));
}

TEST(Morphology, MatchesWindowOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t h = 1 + rng() % 12, w = 1 + rng() % 12, size = 1 + 2 * (rng() % 3);
    const auto m = random_mask(h, w, rng, 0.6);
    const long r = static_cast<long>(size / 2);
    EXPECT_EQ(dilate(m, StructuringElement{size}), window_oracle(m, r, false, 0));
    EXPECT_EQ(erode(m, StructuringElement{size}), window_oracle(m, r, true, 1));
  }
}

TEST(Morphology, RejectsEvenStructuringElement) {
  EXPECT_THROW(dilate(BinaryMask(4, 4), StructuringElement{4}), std::invalid_argument);
  EXPECT_THROW(erode(BinaryMask(4, 4), StructuringElement{0}), std::invalid_argument);
}

TEST(Morphology, Duality) {
  std::mt19937_64 rng(6);
  const StructuringElement s{5};
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = random_mask(3 + rng() % 14, 3 + rng() % 14, rng, 0.5);
    EXPECT_EQ(dilate(m, s), complement(erode(complement(m), s)));
    EXPECT_EQ(erode(m, s), complement(dilate(complement(m), s)));
  }
}

TEST(Morphology, Monotonicity) {
  std::mt19937_64 rng(7);
  const StructuringElement s{3};
  for (int trial = 0; trial < 50; ++trial) {
    const auto small = random_mask(12, 10, rng, 0.4);
    auto big = small;
    for (auto& v : big.values)
      if (test::uniform(rng) < 0.3) v = 1;
    const auto ds = dilate(small, s), db = dilate(big, s);
    const auto es = erode(small, s), eb = erode(big, s);
    for (std::size_t i = 0; i < small.size(); ++i) {
      EXPECT_LE(ds.values[i], db.values[i]);
      EXPECT_LE(es.values[i], eb.values[i]);
    }
  }
}

TEST(Morphology, GradientBandHugsTransitions) {
  std::mt19937_64 rng(8);
  for (std::size_t size : {3u, 5u, 7u}) {
    const StructuringElement s{size};
    for (int trial = 0; trial < 20; ++trial) {
      const auto m = trial % 2 ? random_mask(14, 14, rng, 0.5) : test::disc_mask(14, 14, 6.5, 7.0, 4.0);
      const auto band = morphological_gradient(m, s);
      for (long i = 0; i < 14; ++i) {
        for (long j = 0; j < 14; ++j) {
          const auto v = band(i, j);
          ASSERT_TRUE(v == 0 || v == 1);
          if (v) EXPECT_LE(distance_to_transition(m, i, j), static_cast<long>(s.radius()));
        }
      }
    }
  }
}

TEST(GaussianKernel, MatchesFormula) {
  const auto k = gaussian_kernel(5, 1.0);
  const auto oracle = kernel_oracle(5, 1.0);
  ASSERT_EQ(k.size(), 25u);
  double total = 0;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      EXPECT_NEAR(k[i * 5 + j], oracle[i][j], 1e-15);
      total += k[i * 5 + j];
    }
  EXPECT_NEAR(total, 1.0, 1e-15);
  EXPECT_THROW(gaussian_kernel(4, 1.0), std::invalid_argument);
  EXPECT_THROW(gaussian_kernel(5, 0.0), std::invalid_argument);
}

TEST(GaussianBlur, Examples) {
  EXPECT_EQ(gaussian_blur(RealMap(6, 6, 0.0), 5, 1.0), RealMap(6, 6, 0.0));

  const RealMap c(11, 11, 2.5);
  const auto b = gaussian_blur(c, 5, 1.0);
  for (int i = 2; i < 9; ++i)
    for (int j = 2; j < 9; ++j) EXPECT_NEAR(b(i, j), 2.5, 1e-14);
  EXPECT_LT(b(0, 0), 2.5);

  RealMap impulse(9, 9);
  impulse(4, 4) = 1.0;
  const auto out = gaussian_blur(impulse, 5, 1.0);
  const auto k = kernel_oracle(5, 1.0);
  for (int i = 0; i < 9; ++i) {
    for (int j = 0; j < 9; ++j) {
      const bool inside = std::abs(i - 4) <= 2 && std::abs(j - 4) <= 2;
      EXPECT_NEAR(out(i, j), inside ? k[i - 2][j - 2] : 0.0, 1e-15);
    }
  }
}

TEST(ContourWeightMap, UniformMasksGiveOnes) {
  EXPECT_EQ(contour_weight_map(BinaryMask(9, 9, 0)), RealMap(9, 9, 1.0));
  EXPECT_EQ(contour_weight_map(BinaryMask(9, 9, 1)), RealMap(9, 9, 1.0));
}

TEST(ContourWeightMap, HalfPlaneMatchesPipelineOracle) {
  BinaryMask y(8, 8);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 4; ++j) y(i, j) = 1;
  const WeightMapConfig cfg;
  const auto w = contour_weight_map(y, cfg);
  const auto oracle = weight_oracle(y, cfg);
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(w.values[i], oracle.values[i], 1e-12);

  // Band covers columns 2..5; the blur spreads it to every column of an 8-wide image.
  const auto band = morphological_gradient(y, StructuringElement{5});
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) EXPECT_EQ(band(i, j), (j >= 2 && j <= 5) ? 1 : 0);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) EXPECT_GT(w(i, j), 1.0);
}

TEST(ContourWeightMap, MatchesOracleOnRandomMasks) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    WeightMapConfig cfg;
    cfg.k = test::uniform(rng, 0.5, 8.0);
    cfg.se_size = 1 + 2 * (rng() % 3);
    cfg.gauss_size = 1 + 2 * (rng() % 3);
    cfg.gauss_sigma = test::uniform(rng, 0.5, 2.0);
    const auto y = random_mask(10, 13, rng, 0.5);
    const auto w = contour_weight_map(y, cfg);
    const auto oracle = weight_oracle(y, cfg);
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(w.values[i], oracle.values[i], 1e-12);
  }
}

TEST(ContourWeightMap, BoundsAndSupport) {
  std::mt19937_64 rng(10);
  const WeightMapConfig cfg;
  const long support = static_cast<long>(cfg.support_radius());
  ASSERT_EQ(support, 4);
  for (int trial = 0; trial < 30; ++trial) {
    const auto y = trial % 3 == 0 ? random_mask(24, 24, rng, 0.1)
                                  : test::disc_mask(24, 24, test::uniform(rng, 4, 20), test::uniform(rng, 4, 20),
                                                    test::uniform(rng, 2, 9));
    const auto w = contour_weight_map(y, cfg);
    for (long i = 0; i < 24; ++i) {
      for (long j = 0; j < 24; ++j) {
        const double v = w(i, j);
        EXPECT_GE(v, 1.0);
        EXPECT_LE(v, cfg.k + 1.0);
        if (distance_to_transition(y, i, j) > support) EXPECT_EQ(v, 1.0);
      }
    }
  }
}

TEST(WeightMapConfig, Validation) {
  WeightMapConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.k = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.gauss_size = 6;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.gauss_sigma = -1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace csal
