#include "csal/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "csal/image_io.hpp"
#include "csal/morphology.hpp"
#include "csal/ops.hpp"

namespace csal {

const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

void DatasetSpec::validate() const {
  if (count == 0) throw std::invalid_argument("dataset count must be >= 1");
  if (crop_size == 0 || crop_size > base_size) {
    throw std::invalid_argument("crop size " + std::to_string(crop_size) + " must be in [1, base size " +
                                std::to_string(base_size) + "]");
  }
  if (base_size < 16) throw std::invalid_argument("base size below 16 cannot hold 2%-40% shapes with a boundary band");
  if (!(min_contrast > 0.0 && min_contrast <= max_contrast && max_contrast <= 1.0)) {
    throw std::invalid_argument("contrast range must satisfy 0 < min <= max <= 1");
  }
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit(rng); }

struct Point {
  double x, y;
};

enum class Family { ellipse, polygon, annulus };

struct Shape2D {
  Family family = Family::ellipse;
  Point center{};
  double rx = 1, ry = 1, angle = 0;  // ellipse / annulus outer
  double inner = 0;                  // annulus inner radius ratio
  std::vector<Point> vertices;       // polygon, counter-clockwise

  bool contains(double x, double y) const {
    if (family == Family::polygon) {
      for (std::size_t i = 0; i < vertices.size(); ++i) {
        const Point& a = vertices[i];
        const Point& b = vertices[(i + 1) % vertices.size()];
        if ((b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x) < 0.0) return false;
      }
      return true;
    }
    const double dx = x - center.x, dy = y - center.y;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (c * dx + s * dy) / rx;
    const double v = (-s * dx + c * dy) / ry;
    const double r2 = u * u + v * v;
    if (r2 > 1.0) return false;
    return family != Family::annulus || r2 >= inner * inner;
  }
};

Shape2D random_shape(std::mt19937_64& rng, double size, double area_fraction, bool touch_edge) {
  Shape2D sh;
  sh.family = static_cast<Family>(uniform_index(rng, 3));
  if (touch_edge) {
    const std::size_t side = uniform_index(rng, 4);
    const double along = uniform(rng, 0.2, 0.8) * size;
    const double inset = uniform(rng, 0.0, 0.08) * size;
    sh.center = side == 0 ? Point{along, inset}
              : side == 1 ? Point{along, size - inset}
              : side == 2 ? Point{inset, along}
                          : Point{size - inset, along};
  } else {
    sh.center = {uniform(rng, 0.2, 0.8) * size, uniform(rng, 0.2, 0.8) * size};
  }
  const double area = area_fraction * size * size;
  const double aspect = uniform(rng, 0.5, 1.0);
  sh.angle = uniform(rng, 0.0, std::numbers::pi);
  switch (sh.family) {
    case Family::ellipse: {
      sh.rx = std::sqrt(area / (std::numbers::pi * aspect));
      sh.ry = aspect * sh.rx;
      break;
    }
    case Family::annulus: {
      sh.inner = uniform(rng, 0.35, 0.65);
      sh.rx = std::sqrt(area / (std::numbers::pi * aspect * (1.0 - sh.inner * sh.inner)));
      sh.ry = aspect * sh.rx;
      break;
    }
    case Family::polygon: {
      const std::size_t k = 3 + uniform_index(rng, 5);
      std::vector<double> angles(k);
      for (auto& a : angles) a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      std::sort(angles.begin(), angles.end());
      // Vertices on a rotated ellipse in angular order form a convex polygon.
      std::vector<Point> unit_pts;
      for (double a : angles) unit_pts.push_back({std::cos(a), aspect * std::sin(a)});
      double unit_area = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        const Point& p = unit_pts[i];
        const Point& q = unit_pts[(i + 1) % k];
        unit_area += 0.5 * (p.x * q.y - q.x * p.y);
      }
      unit_area = std::max(unit_area, 0.05);
      const double scale = std::sqrt(area / unit_area);
      const double c = std::cos(sh.angle), s = std::sin(sh.angle);
      for (const auto& p : unit_pts) {
        sh.vertices.push_back({sh.center.x + scale * (c * p.x - s * p.y), sh.center.y + scale * (s * p.x + c * p.y)});
      }
      break;
    }
  }
  return sh;
}

// Fraction of 4x4 sub-samples of each pixel inside the shape.
RealMap coverage(const Shape2D& sh, std::size_t size) {
  RealMap cov(size, size);
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      int inside = 0;
      for (int sy = 0; sy < 4; ++sy) {
        for (int sx = 0; sx < 4; ++sx) {
          inside += sh.contains(static_cast<double>(c) + (sx + 0.5) / 4.0, static_cast<double>(r) + (sy + 0.5) / 4.0);
        }
      }
      cov(r, c) = inside / 16.0;
    }
  }
  return cov;
}

// Bilinearly interpolated random lattice, values in [-1, 1].
RealMap value_noise(std::mt19937_64& rng, std::size_t size, std::size_t cells) {
  std::vector<double> lattice((cells + 1) * (cells + 1));
  for (auto& v : lattice) v = uniform(rng, -1.0, 1.0);
  RealMap out(size, size);
  for (std::size_t r = 0; r < size; ++r) {
    const double fy = (static_cast<double>(r) + 0.5) / static_cast<double>(size) * static_cast<double>(cells);
    const auto y0 = std::min(static_cast<std::size_t>(fy), cells - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t c = 0; c < size; ++c) {
      const double fx = (static_cast<double>(c) + 0.5) / static_cast<double>(size) * static_cast<double>(cells);
      const auto x0 = std::min(static_cast<std::size_t>(fx), cells - 1);
      const double tx = fx - static_cast<double>(x0);
      auto at = [&](std::size_t y, std::size_t x) { return lattice[y * (cells + 1) + x]; };
      out(r, c) = (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
                  ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1));
    }
  }
  return out;
}

bool has_boundary_band(const BinaryMask& m) {
  const BinaryMask band = morphological_gradient(m, StructuringElement{5});
  return band.count() > 0;
}

std::optional<Sample> attempt(const DatasetSpec& spec, std::mt19937_64& rng) {
  const std::size_t S = spec.base_size;
  const double size = static_cast<double>(S);
  Sample s{RgbImage(S, S), BinaryMask(S, S)};

  std::array<double, 3> c0{}, c1{};
  for (auto& v : c0) v = uniform(rng, 0.15, 0.85);
  for (auto& v : c1) v = uniform(rng, 0.15, 0.85);
  const double theta = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const RealMap bg_noise = value_noise(rng, S, 6);
  const double gx = std::cos(theta), gy = std::sin(theta);
  for (std::size_t r = 0; r < S; ++r) {
    for (std::size_t c = 0; c < S; ++c) {
      const double u = ((static_cast<double>(c) / size - 0.5) * gx + (static_cast<double>(r) / size - 0.5) * gy) /
                           std::numbers::sqrt2 +
                       0.5;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        s.image(ch, r, c) = std::clamp((1 - u) * c0[ch] + u * c1[ch] + 0.08 * bg_noise(r, c), 0.0, 1.0);
      }
    }
  }

  const std::size_t shapes = 1 + uniform_index(rng, 3);
  for (std::size_t k = 0; k < shapes; ++k) {
    const double area = uniform(rng, 0.03, 0.22);
    const bool touch = unit(rng) < 0.25;
    const Shape2D sh = random_shape(rng, size, area, touch);
    const RealMap cov = coverage(sh, S);
    const BinaryMask own = binarize(cov, 0.5);
    const double frac = foreground_fraction(own);
    if (frac < 0.02 || frac > 0.40) return std::nullopt;

    const double contrast = uniform(rng, spec.min_contrast, spec.max_contrast);
    const auto cr = std::min<std::size_t>(S - 1, static_cast<std::size_t>(std::clamp(sh.center.y, 0.0, size - 1)));
    const auto cc = std::min<std::size_t>(S - 1, static_cast<std::size_t>(std::clamp(sh.center.x, 0.0, size - 1)));
    std::array<double, 3> fg{};
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double base = s.image(ch, cr, cc);
      const double sign = (rng() >> 63) ? 1.0 : -1.0;
      double v = base + sign * contrast;
      if (v < 0.0 || v > 1.0) v = base - sign * contrast;
      fg[ch] = std::clamp(v, 0.0, 1.0);
    }
    const RealMap fg_noise = value_noise(rng, S, 10);
    for (std::size_t r = 0; r < S; ++r) {
      for (std::size_t c = 0; c < S; ++c) {
        const double a = cov(r, c);
        if (a <= 0.0) continue;
        for (std::size_t ch = 0; ch < 3; ++ch) {
          const double f = std::clamp(fg[ch] + 0.04 * fg_noise(r, c), 0.0, 1.0);
          s.image(ch, r, c) = (1 - a) * s.image(ch, r, c) + a * f;
        }
        if (own(r, c)) s.mask(r, c) = 1;
      }
    }
  }
  const double total = foreground_fraction(s.mask);
  if (total < 0.02 || total > 0.8 || !has_boundary_band(s.mask)) return std::nullopt;
  return s;
}

std::uint64_t stream_seed(std::uint64_t seed, Split split, std::size_t index) {
  const std::uint64_t split_key = split == Split::train ? 0x7472616eULL : 0x74657374ULL;
  return splitmix64(splitmix64(seed ^ splitmix64(split_key)) + index);
}

}  // namespace

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  return static_cast<std::size_t>(rng() % n);
}

double foreground_fraction(const BinaryMask& m) {
  if (m.size() == 0) return 0.0;
  return static_cast<double>(m.count()) / static_cast<double>(m.size());
}

Sample generate_sample(const DatasetSpec& spec, Split split, std::size_t index) {
  spec.validate();
  std::mt19937_64 rng(stream_seed(spec.seed, split, index));
  for (int tries = 0; tries < 200; ++tries) {
    if (auto s = attempt(spec, rng)) return std::move(*s);
  }
  throw std::runtime_error("could not generate sample " + std::to_string(index) +
                           " satisfying the shape constraints at base size " + std::to_string(spec.base_size));
}

std::vector<Sample> generate(const DatasetSpec& spec, Split split) {
  spec.validate();
  std::vector<Sample> out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) out.push_back(generate_sample(spec, split, i));
  return out;
}

RgbImage resize_bilinear(const RgbImage& img, std::size_t h, std::size_t w) {
  if (img.height == h && img.width == w) return img;
  const auto rows = bilinear_taps(img.height, h);
  const auto cols = bilinear_taps(img.width, w);
  RgbImage out(h, w);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    for (std::size_t r = 0; r < h; ++r) {
      const auto& ty = rows[r];
      for (std::size_t c = 0; c < w; ++c) {
        const auto& tx = cols[c];
        const double top = (1 - tx.frac) * img(ch, ty.lo, tx.lo) + tx.frac * img(ch, ty.lo, tx.hi);
        const double bottom = (1 - tx.frac) * img(ch, ty.hi, tx.lo) + tx.frac * img(ch, ty.hi, tx.hi);
        out(ch, r, c) = (1 - ty.frac) * top + ty.frac * bottom;
      }
    }
  }
  return out;
}

BinaryMask resize_nearest(const BinaryMask& m, std::size_t h, std::size_t w) {
  if (m.height == h && m.width == w) return m;
  BinaryMask out(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    const auto sr = std::min(m.height - 1, (2 * r + 1) * m.height / (2 * h));
    for (std::size_t c = 0; c < w; ++c) {
      const auto sc = std::min(m.width - 1, (2 * c + 1) * m.width / (2 * w));
      out(r, c) = m(sr, sc);
    }
  }
  return out;
}

Sample flip_horizontal(const Sample& s) {
  Sample out = s;
  const std::size_t H = s.mask.height, W = s.mask.width;
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t c = 0; c < W; ++c) {
      out.mask(r, c) = s.mask(r, W - 1 - c);
      for (std::size_t ch = 0; ch < 3; ++ch) out.image(ch, r, c) = s.image(ch, r, W - 1 - c);
    }
  }
  return out;
}

Sample crop(const Sample& s, std::size_t top, std::size_t left, std::size_t size) {
  if (top + size > s.mask.height || left + size > s.mask.width) throw std::invalid_argument("crop outside image");
  Sample out{RgbImage(size, size), BinaryMask(size, size)};
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      out.mask(r, c) = s.mask(top + r, left + c);
      for (std::size_t ch = 0; ch < 3; ++ch) out.image(ch, r, c) = s.image(ch, top + r, left + c);
    }
  }
  return out;
}

Sample augment(const Sample& s, bool train, std::mt19937_64& rng, const DatasetSpec& spec) {
  if (!train) {
    return {resize_bilinear(s.image, spec.crop_size, spec.crop_size),
            resize_nearest(s.mask, spec.crop_size, spec.crop_size)};
  }
  Sample resized{resize_bilinear(s.image, spec.base_size, spec.base_size),
                 resize_nearest(s.mask, spec.base_size, spec.base_size)};
  const bool flip = (rng() >> 63) != 0;
  const std::size_t range = spec.base_size - spec.crop_size + 1;
  const std::size_t top = uniform_index(rng, range);
  const std::size_t left = uniform_index(rng, range);
  if (flip) resized = flip_horizontal(resized);
  return crop(resized, top, left, spec.crop_size);
}

std::string sample_id(std::size_t index) {
  std::ostringstream os;
  os << std::setw(6) << std::setfill('0') << index;
  return os.str();
}

void write_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "masks");
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw std::runtime_error("cannot write " + (dir / "manifest.csv").string());
  manifest << "id,split,foreground_fraction\n";
  std::size_t id = 0;
  for (Split split : {Split::train, Split::test}) {
    const auto& samples = split == Split::train ? data.train : data.test;
    for (const auto& s : samples) {
      const std::string name = sample_id(id++);
      write_rgb(dir / "images" / (name + ".ppm"), s.image);
      write_mask(dir / "masks" / (name + ".pgm"), s.mask);
      manifest << name << ',' << to_string(split) << ',' << std::fixed << std::setprecision(6)
               << foreground_fraction(s.mask) << '\n';
    }
  }
}

Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.csv");
  if (!manifest) throw std::runtime_error("cannot open " + (dir / "manifest.csv").string());
  std::string line;
  std::getline(manifest, line);
  if (line != "id,split,foreground_fraction") throw std::runtime_error("unexpected manifest header: " + line);
  Dataset data;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id, split;
    std::getline(row, id, ',');
    std::getline(row, split, ',');
    Sample s{read_rgb(dir / "images" / (id + ".ppm")), read_mask(dir / "masks" / (id + ".pgm"))};
    require_same_size(s.image, s.mask, "dataset sample");
    if (split == "train") {
      data.train.push_back(std::move(s));
    } else if (split == "test") {
      data.test.push_back(std::move(s));
    } else {
      throw std::runtime_error("manifest row " + id + " has unknown split " + split);
    }
  }
  return data;
}

template <typename T>
TensorPtr<T> images_to_tensor(std::span<const Sample> samples) {
  if (samples.empty()) throw ShapeError("images_to_tensor: empty batch");
  const std::size_t H = samples[0].image.height, W = samples[0].image.width;
  auto t = make_tensor<T>({samples.size(), 3, H, W});
  auto out = t->data();
  std::size_t k = 0;
  for (const auto& s : samples) {
    if (s.image.height != H || s.image.width != W) throw ShapeError("images_to_tensor: mixed image sizes");
    for (double v : s.image.values) out[k++] = static_cast<T>(v);
  }
  return t;
}

template TensorPtr<float> images_to_tensor(std::span<const Sample>);
template TensorPtr<double> images_to_tensor(std::span<const Sample>);

}  // namespace csal
