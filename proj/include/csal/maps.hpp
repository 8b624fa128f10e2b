#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace csal {

/// H x W mask with every value exactly 0 or 1.
struct BinaryMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> values;

  BinaryMask() = default;
  BinaryMask(std::size_t h, std::size_t w, std::uint8_t fill = 0)
      : height(h), width(w), values(h * w, fill) {}

  std::uint8_t& operator()(std::size_t r, std::size_t c) { return values[r * width + c]; }
  std::uint8_t operator()(std::size_t r, std::size_t c) const { return values[r * width + c]; }
  std::size_t size() const { return values.size(); }
  std::size_t count() const;
  bool operator==(const BinaryMask&) const = default;
};

/// H x W map of reals. Used for saliency predictions in [0, 1] and for weight maps.
struct RealMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  RealMap() = default;
  RealMap(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * width + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * width + c]; }
  std::size_t size() const { return values.size(); }
  bool operator==(const RealMap&) const = default;
};

using SaliencyMap = RealMap;

/// Planar RGB image, channel-major (3 x H x W), values in [0, 1].
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  RgbImage() = default;
  RgbImage(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(3 * h * w, fill) {}

  double& operator()(std::size_t ch, std::size_t r, std::size_t c) {
    return values[(ch * height + r) * width + c];
  }
  double operator()(std::size_t ch, std::size_t r, std::size_t c) const {
    return values[(ch * height + r) * width + c];
  }
  bool operator==(const RgbImage&) const = default;
};

/// Binarizes a real map at >= threshold.
BinaryMask binarize(const RealMap& m, double threshold = 0.5);
RealMap to_real(const BinaryMask& m);

template <typename A, typename B>
void require_same_size(const A& a, const B& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw std::invalid_argument(std::string(what) + ": size mismatch " + std::to_string(a.height) +
                                "x" + std::to_string(a.width) + " vs " + std::to_string(b.height) +
                                "x" + std::to_string(b.width));
  }
}

}  // namespace csal
