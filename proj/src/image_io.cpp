#include "csal/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace csal {

std::uint8_t quantize_byte(double v) {
  const double scaled = std::round(255.0 * v);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

namespace {

class HeaderParser {
 public:
  explicit HeaderParser(std::span<const std::uint8_t> file) : file_(file) {}

  std::size_t number(const char* what) {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < file_.size() && std::isdigit(file_[pos_])) {
      value = value * 10 + static_cast<std::size_t>(file_[pos_] - '0');
      if (value > (1u << 24)) throw ImageFormatError(std::string("netpbm ") + what + " too large");
      ++pos_;
      ++digits;
    }
    if (digits == 0) throw ImageFormatError(std::string("malformed netpbm header: expected ") + what);
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t payload_start() {
    if (pos_ >= file_.size() || !std::isspace(file_[pos_])) {
      throw ImageFormatError("malformed netpbm header: missing whitespace before raster");
    }
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < file_.size()) {
      if (std::isspace(file_[pos_])) {
        ++pos_;
      } else if (file_[pos_] == '#') {
        while (pos_ < file_.size() && file_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> file_;
  std::size_t pos_ = 2;
};

}  // namespace

ByteImage decode_netpbm(std::span<const std::uint8_t> file) {
  if (file.size() < 2 || file[0] != 'P' || (file[1] != '5' && file[1] != '6')) {
    throw ImageFormatError("not a binary netpbm file (expected P5 or P6)");
  }
  ByteImage img;
  img.channels = file[1] == '5' ? 1 : 3;
  HeaderParser header(file);
  img.width = header.number("width");
  img.height = header.number("height");
  const std::size_t maxval = header.number("maxval");
  if (maxval != 255) throw ImageFormatError("unsupported netpbm maxval " + std::to_string(maxval));
  if (img.width == 0 || img.height == 0) throw ImageFormatError("netpbm image has zero size");
  const std::size_t start = header.payload_start();
  const std::size_t expected = img.width * img.height * img.channels;
  if (file.size() - start < expected) {
    throw ImageFormatError("truncated netpbm payload: expected " + std::to_string(expected) + " bytes, got " +
                           std::to_string(file.size() - start));
  }
  img.bytes.assign(file.begin() + static_cast<long>(start), file.begin() + static_cast<long>(start + expected));
  return img;
}

std::vector<std::uint8_t> encode_netpbm(const ByteImage& img) {
  if (img.channels != 1 && img.channels != 3) throw ImageFormatError("netpbm supports 1 or 3 channels");
  if (img.bytes.size() != img.width * img.height * img.channels) {
    throw ImageFormatError("image buffer does not match its dimensions");
  }
  const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.bytes.begin(), img.bytes.end());
  return out;
}

ByteImage read_netpbm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_netpbm(bytes);
  } catch (const ImageFormatError& e) {
    throw ImageFormatError(path.string() + ": " + e.what());
  }
}

void write_netpbm(const std::filesystem::path& path, const ByteImage& img) {
  const auto bytes = encode_netpbm(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

namespace {

ByteImage read_gray(const std::filesystem::path& path) {
  ByteImage img = read_netpbm(path);
  if (img.channels != 1) throw ImageFormatError(path.string() + ": expected a P5 graymap");
  return img;
}

}  // namespace

BinaryMask read_mask(const std::filesystem::path& path) {
  const ByteImage img = read_gray(path);
  BinaryMask m(img.height, img.width);
  for (std::size_t i = 0; i < m.size(); ++i) m.values[i] = img.bytes[i] >= 128 ? 1 : 0;
  return m;
}

void write_mask(const std::filesystem::path& path, const BinaryMask& m) {
  ByteImage img{m.height, m.width, 1, {}};
  img.bytes.reserve(m.size());
  for (auto v : m.values) img.bytes.push_back(v ? 255 : 0);
  write_netpbm(path, img);
}

SaliencyMap read_saliency(const std::filesystem::path& path) {
  const ByteImage img = read_gray(path);
  SaliencyMap m(img.height, img.width);
  for (std::size_t i = 0; i < m.size(); ++i) m.values[i] = img.bytes[i] / 255.0;
  return m;
}

void write_saliency(const std::filesystem::path& path, const SaliencyMap& m) {
  ByteImage img{m.height, m.width, 1, {}};
  img.bytes.reserve(m.size());
  for (double v : m.values) img.bytes.push_back(quantize_byte(v));
  write_netpbm(path, img);
}

RgbImage read_rgb(const std::filesystem::path& path) {
  const ByteImage img = read_netpbm(path);
  if (img.channels != 3) throw ImageFormatError(path.string() + ": expected a P6 pixmap");
  RgbImage out(img.height, img.width);
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      for (std::size_t ch = 0; ch < 3; ++ch) out(ch, r, c) = img.bytes[(r * img.width + c) * 3 + ch] / 255.0;
    }
  }
  return out;
}

void write_rgb(const std::filesystem::path& path, const RgbImage& img) {
  ByteImage out{img.height, img.width, 3, std::vector<std::uint8_t>(img.height * img.width * 3)};
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      for (std::size_t ch = 0; ch < 3; ++ch) out.bytes[(r * img.width + c) * 3 + ch] = quantize_byte(img(ch, r, c));
    }
  }
  write_netpbm(path, out);
}

}  // namespace csal
