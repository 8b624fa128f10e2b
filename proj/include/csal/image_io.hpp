#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "csal/maps.hpp"

namespace csal {

class ImageFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit raster as stored in binary netpbm files; RGB samples are interleaved.
struct ByteImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> bytes;
};

/// round(255 * v), clamped to [0, 255].
std::uint8_t quantize_byte(double v);

/// P5 (channels = 1) or P6 (channels = 3), maxval 255. Comments are accepted
/// between header tokens.
ByteImage decode_netpbm(std::span<const std::uint8_t> file);
std::vector<std::uint8_t> encode_netpbm(const ByteImage& img);

ByteImage read_netpbm(const std::filesystem::path& path);
void write_netpbm(const std::filesystem::path& path, const ByteImage& img);

/// Grayscale mask, binarized at byte >= 128.
BinaryMask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const BinaryMask& m);

/// Grayscale saliency, byte / 255 on read and round(255 * v) on write.
SaliencyMap read_saliency(const std::filesystem::path& path);
void write_saliency(const std::filesystem::path& path, const SaliencyMap& m);

RgbImage read_rgb(const std::filesystem::path& path);
void write_rgb(const std::filesystem::path& path, const RgbImage& img);

}  // namespace csal
