#include "csal/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace csal {

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
}

BinaryMask binarize(const RealMap& m, double threshold) {
  BinaryMask out(m.height, m.width);
  for (std::size_t i = 0; i < m.size(); ++i) out.values[i] = m.values[i] >= threshold ? 1 : 0;
  return out;
}

RealMap to_real(const BinaryMask& m) {
  RealMap out(m.height, m.width);
  for (std::size_t i = 0; i < m.size(); ++i) out.values[i] = m.values[i];
  return out;
}

void StructuringElement::validate() const {
  if (size == 0 || size % 2 == 0) {
    throw std::invalid_argument("structuring element size must be odd and >= 1, got " +
                                std::to_string(size));
  }
}

void WeightMapConfig::validate() const {
  if (!(k > 0.0)) throw std::invalid_argument("weight map k must be positive");
  if (!(gauss_sigma > 0.0)) throw std::invalid_argument("gaussian sigma must be positive");
  StructuringElement{se_size}.validate();
  if (gauss_size == 0 || gauss_size % 2 == 0) {
    throw std::invalid_argument("gaussian size must be odd, got " + std::to_string(gauss_size));
  }
}

namespace {

// Separable square-window filter. `any` selects OR (dilation) vs AND (erosion);
// `pad` is the value assumed outside the image.
BinaryMask square_filter(const BinaryMask& m, std::size_t radius, bool any, std::uint8_t pad) {
  const std::size_t H = m.height, W = m.width;
  auto window = [&](auto get, std::size_t len, std::size_t i) {
    const long lo = static_cast<long>(i) - static_cast<long>(radius);
    const long hi = static_cast<long>(i) + static_cast<long>(radius);
    for (long j = lo; j <= hi; ++j) {
      const std::uint8_t v = (j < 0 || j >= static_cast<long>(len)) ? pad : get(static_cast<std::size_t>(j));
      if (any && v) return std::uint8_t{1};
      if (!any && !v) return std::uint8_t{0};
    }
    return any ? std::uint8_t{0} : std::uint8_t{1};
  };
  BinaryMask rows(H, W);
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t c = 0; c < W; ++c) {
      rows(r, c) = window([&](std::size_t j) { return m(r, j); }, W, c);
    }
  }
  BinaryMask out(H, W);
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t c = 0; c < W; ++c) {
      out(r, c) = window([&](std::size_t j) { return rows(j, c); }, H, r);
    }
  }
  return out;
}

}  // namespace

BinaryMask dilate(const BinaryMask& m, const StructuringElement& s) {
  s.validate();
  return square_filter(m, s.radius(), true, 0);
}

BinaryMask erode(const BinaryMask& m, const StructuringElement& s) {
  s.validate();
  return square_filter(m, s.radius(), false, 1);
}

BinaryMask complement(const BinaryMask& m) {
  BinaryMask out(m.height, m.width);
  for (std::size_t i = 0; i < m.size(); ++i) out.values[i] = m.values[i] ? 0 : 1;
  return out;
}

BinaryMask morphological_gradient(const BinaryMask& m, const StructuringElement& s) {
  const BinaryMask d = dilate(m, s);
  const BinaryMask e = erode(m, s);
  BinaryMask out(m.height, m.width);
  for (std::size_t i = 0; i < m.size(); ++i) out.values[i] = static_cast<std::uint8_t>(d.values[i] - e.values[i]);
  return out;
}

std::vector<double> gaussian_kernel(std::size_t size, double sigma) {
  if (size == 0 || size % 2 == 0) throw std::invalid_argument("gaussian size must be odd");
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian sigma must be positive");
  const long r = static_cast<long>(size / 2);
  std::vector<double> k(size * size);
  double total = 0.0;
  for (long dy = -r; dy <= r; ++dy) {
    for (long dx = -r; dx <= r; ++dx) {
      const double v = std::exp(-static_cast<double>(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      k[static_cast<std::size_t>((dy + r) * static_cast<long>(size) + (dx + r))] = v;
      total += v;
    }
  }
  for (auto& v : k) v /= total;
  return k;
}

RealMap gaussian_blur(const RealMap& x, std::size_t size, double sigma) {
  const auto kernel = gaussian_kernel(size, sigma);
  const long r = static_cast<long>(size / 2);
  const long H = static_cast<long>(x.height), W = static_cast<long>(x.width);
  RealMap out(x.height, x.width);
  for (long i = 0; i < H; ++i) {
    for (long j = 0; j < W; ++j) {
      double acc = 0.0;
      for (long dy = -r; dy <= r; ++dy) {
        const long y = i + dy;
        if (y < 0 || y >= H) continue;
        for (long dx = -r; dx <= r; ++dx) {
          const long xx = j + dx;
          if (xx < 0 || xx >= W) continue;
          const double v = x.values[static_cast<std::size_t>(y * W + xx)];
          if (v == 0.0) continue;
          acc += kernel[static_cast<std::size_t>((dy + r) * static_cast<long>(size) + (dx + r))] * v;
        }
      }
      out.values[static_cast<std::size_t>(i * W + j)] = acc;
    }
  }
  return out;
}

RealMap contour_weight_map(const BinaryMask& y, const WeightMapConfig& cfg) {
  cfg.validate();
  const BinaryMask band = morphological_gradient(y, StructuringElement{cfg.se_size});
  RealMap scaled(y.height, y.width);
  for (std::size_t i = 0; i < band.size(); ++i) scaled.values[i] = cfg.k * band.values[i];
  RealMap w = gaussian_blur(scaled, cfg.gauss_size, cfg.gauss_sigma);
  // The kernel sums to 1 only up to rounding; keep the k + 1 ceiling exact.
  for (auto& v : w.values) v = std::min(v, cfg.k) + 1.0;
  return w;
}

}  // namespace csal
