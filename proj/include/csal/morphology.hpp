#pragma once

#include <cstddef>
#include <vector>

#include "csal/maps.hpp"

namespace csal {

/// Full square of ones with odd side length.
struct StructuringElement {
  std::size_t size = 5;

  std::size_t radius() const { return size / 2; }
  void validate() const;
};

struct WeightMapConfig {
  double k = 5.0;
  std::size_t se_size = 5;
  std::size_t gauss_size = 5;
  double gauss_sigma = 1.0;

  void validate() const;
  /// Chebyshev distance from a mask transition beyond which weights are exactly 1.
  std::size_t support_radius() const { return (se_size - 1) / 2 + (gauss_size - 1) / 2; }
};

/// Zero padding outside the image.
BinaryMask dilate(const BinaryMask& m, const StructuringElement& s);

/// One padding outside the image, so objects touching the frame keep no
/// phantom band along the border.
BinaryMask erode(const BinaryMask& m, const StructuringElement& s);

BinaryMask complement(const BinaryMask& m);

/// dilate(m) - erode(m): a band of width 2 * radius around every 0/1 transition.
BinaryMask morphological_gradient(const BinaryMask& m, const StructuringElement& s);

/// Normalized size x size Gaussian kernel, row-major.
std::vector<double> gaussian_kernel(std::size_t size, double sigma);

/// Zero-padded convolution with gaussian_kernel(size, sigma).
RealMap gaussian_blur(const RealMap& x, std::size_t size, double sigma);

/// Boundary-emphasis weights: blur(k * (dilate(y) - erode(y))) + 1.
RealMap contour_weight_map(const BinaryMask& y, const WeightMapConfig& cfg = {});

}  // namespace csal
