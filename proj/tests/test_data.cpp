#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "csal/checkpoint.hpp"
#include "csal/data.hpp"
#include "csal/image_io.hpp"
#include "csal/morphology.hpp"
#include "test_support.hpp"

namespace csal {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("csal_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

DatasetSpec small_spec(std::size_t count, std::uint64_t seed = 3) {
  DatasetSpec spec;
  spec.count = count;
  spec.seed = seed;
  return spec;
}

TEST(Generate, Deterministic) {
  const auto spec = small_spec(8);
  const auto a = generate(spec), b = generate(spec);
  ASSERT_EQ(a.size(), 8u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].mask, b[i].mask);
    EXPECT_EQ(a[i].mask, generate_sample(spec, Split::train, i).mask);
  }
  const auto other = generate(small_spec(8, 4));
  EXPECT_NE(a[0].image, other[0].image);
}

TEST(Generate, RejectsImpossibleSpecs) {
  EXPECT_THROW(generate(small_spec(0)), std::invalid_argument);
  auto spec = small_spec(1);
  spec.crop_size = 80;
  EXPECT_THROW(generate(spec), std::invalid_argument);
  spec = small_spec(1);
  spec.min_contrast = 0.9;
  spec.max_contrast = 0.5;
  EXPECT_THROW(generate(spec), std::invalid_argument);
}

TEST(Generate, PropertySweep) {
  const auto spec = small_spec(100, 7);
  const auto samples = generate(spec);
  std::size_t edge_touching = 0;
  for (const auto& s : samples) {
    ASSERT_EQ(s.mask.height, spec.base_size);
    ASSERT_EQ(s.image.height, spec.base_size);
    for (auto v : s.mask.values) ASSERT_TRUE(v == 0 || v == 1);
    for (double v : s.image.values) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
    const double frac = foreground_fraction(s.mask);
    EXPECT_GE(frac, 0.02);
    EXPECT_LE(frac, 0.8);
    EXPECT_GT(morphological_gradient(s.mask, StructuringElement{5}).count(), 0u);
    const auto w = contour_weight_map(s.mask);
    EXPECT_TRUE(std::any_of(w.values.begin(), w.values.end(), [](double v) { return v > 1.0; }));
    bool touches = false;
    for (std::size_t k = 0; k < spec.base_size; ++k) {
      touches = touches || s.mask(0, k) || s.mask(spec.base_size - 1, k) || s.mask(k, 0) ||
                s.mask(k, spec.base_size - 1);
    }
    edge_touching += touches;
  }
  EXPECT_GT(edge_touching, 0u);
  EXPECT_LT(edge_touching, samples.size());
}

TEST(Generate, SplitsAreDisjoint) {
  const auto spec = small_spec(20);
  const auto train = generate(spec, Split::train);
  const auto test = generate(spec, Split::test);
  for (const auto& a : train)
    for (const auto& b : test) EXPECT_NE(a.image, b.image);
}

TEST(Augment, EvalIsDeterministicResize) {
  const auto spec = small_spec(1);
  const auto s = generate(spec)[0];
  std::mt19937_64 r1(1), r2(99);
  const auto a = augment(s, false, r1, spec), b = augment(s, false, r2, spec);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(a.mask.height, spec.crop_size);
  EXPECT_EQ(r1(), std::mt19937_64(1)());
}

TEST(Augment, FlipIsInvolution) {
  const auto s = generate(small_spec(1))[0];
  const auto twice = flip_horizontal(flip_horizontal(s));
  EXPECT_EQ(twice.image, s.image);
  EXPECT_EQ(twice.mask, s.mask);
  const auto once = flip_horizontal(s);
  EXPECT_EQ(once.mask(5, 0), s.mask(5, s.mask.width - 1));
}

TEST(Augment, TrainMatchesReferenceSequence) {
  const auto spec = small_spec(3);
  const auto samples = generate(spec);
  std::mt19937_64 rng(2024), reference(2024);
  const std::size_t range = spec.base_size - spec.crop_size + 1;
  std::set<std::pair<std::size_t, std::size_t>> offsets;
  int flips = 0;
  for (int k = 0; k < 30; ++k) {
    const auto& s = samples[k % 3];
    const auto got = augment(s, true, rng, spec);
    const bool flip = (reference() >> 63) != 0;
    const std::size_t top = reference() % range, left = reference() % range;
    Sample expect{resize_bilinear(s.image, spec.base_size, spec.base_size),
                  resize_nearest(s.mask, spec.base_size, spec.base_size)};
    if (flip) expect = flip_horizontal(expect);
    expect = crop(expect, top, left, spec.crop_size);
    EXPECT_EQ(got.image, expect.image);
    EXPECT_EQ(got.mask, expect.mask);
    for (auto v : got.mask.values) ASSERT_TRUE(v == 0 || v == 1);
    offsets.insert({top, left});
    flips += flip;
  }
  EXPECT_GT(offsets.size(), 10u);
  EXPECT_GT(flips, 0);
  EXPECT_LT(flips, 30);
}

TEST(Resize, NearestKeepsBinarityAndBilinearKeepsConstants) {
  std::mt19937_64 rng(60);
  const auto m = test::random_mask(9, 7, rng);
  const auto r = resize_nearest(m, 20, 13);
  for (auto v : r.values) EXPECT_TRUE(v == 0 || v == 1);
  EXPECT_EQ(resize_nearest(m, 9, 7), m);
  const RgbImage flat(5, 6, 0.25);
  for (double v : resize_bilinear(flat, 11, 3).values) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(Tensorize, StacksChannelsMajor) {
  const auto samples = generate(small_spec(2));
  const auto t = images_to_tensor<double>(samples);
  ASSERT_EQ(t->shape(), (Shape{2, 3, 72, 72}));
  EXPECT_EQ(t->at(1, 2, 5, 7), samples[1].image(2, 5, 7));
}

TEST(Netpbm, HeaderFixture) {
  std::string file = "P5\n4 4\n255\n";
  for (int i = 0; i < 16; ++i) file.push_back(static_cast<char>(i * 16));
  const auto img = decode_netpbm(bytes_of(file));
  EXPECT_EQ(img.height, 4u);
  EXPECT_EQ(img.width, 4u);
  EXPECT_EQ(img.channels, 1u);
  EXPECT_EQ(img.bytes[5], 80);
  EXPECT_EQ(encode_netpbm(img), bytes_of(file));

  std::string commented = "P5\n# made by hand\n4 4\n# depth\n255\n";
  commented += file.substr(11);
  EXPECT_EQ(decode_netpbm(bytes_of(commented)).bytes, img.bytes);
}

TEST(Netpbm, StructuredErrors) {
  EXPECT_THROW(decode_netpbm(bytes_of("P2\n1 1\n255\n0")), ImageFormatError);
  EXPECT_THROW(decode_netpbm(bytes_of("P5\n2 2\n255\nab")), ImageFormatError);
  EXPECT_THROW(decode_netpbm(bytes_of("P5\n1 1\n65535\n\1\1")), ImageFormatError);
  EXPECT_THROW(decode_netpbm(bytes_of("P5\n1 x\n255\n\1")), ImageFormatError);
  EXPECT_THROW(decode_netpbm(bytes_of("")), ImageFormatError);
}

TEST(Netpbm, QuantizationRule) {
  EXPECT_EQ(quantize_byte(0.5), 128);
  EXPECT_EQ(quantize_byte(-1.0), 0);
  EXPECT_EQ(quantize_byte(2.0), 255);
  TempDir dir;
  SaliencyMap m(1, 2);
  m(0, 0) = 0.5;
  m(0, 1) = 1.0;
  write_saliency(dir.path() / "s.pgm", m);
  const auto back = read_saliency(dir.path() / "s.pgm");
  EXPECT_EQ(back(0, 0), 128.0 / 255.0);
  EXPECT_EQ(back(0, 1), 1.0);
}

TEST(Netpbm, RoundTrips) {
  TempDir dir;
  std::mt19937_64 rng(61);
  const auto m = test::random_mask(13, 9, rng);
  write_mask(dir.path() / "m.pgm", m);
  EXPECT_EQ(read_mask(dir.path() / "m.pgm"), m);

  RgbImage img(5, 4);
  for (auto& v : img.values) v = static_cast<double>(rng() % 256) / 255.0;
  write_rgb(dir.path() / "i.ppm", img);
  const auto back = read_rgb(dir.path() / "i.ppm");
  for (std::size_t i = 0; i < img.values.size(); ++i) EXPECT_NEAR(back.values[i], img.values[i], 1e-15);

  // Masks binarize at 128 on read.
  ByteImage gray{1, 3, 1, {127, 128, 255}};
  write_netpbm(dir.path() / "g.pgm", gray);
  const auto bm = read_mask(dir.path() / "g.pgm");
  EXPECT_EQ(bm.values, (std::vector<std::uint8_t>{0, 1, 1}));
  EXPECT_THROW(read_mask(dir.path() / "i.ppm"), ImageFormatError);
  EXPECT_THROW(read_mask(dir.path() / "missing.pgm"), std::runtime_error);
}

TEST(DatasetIo, RoundTripAndManifest) {
  TempDir dir;
  const auto spec = small_spec(3);
  Dataset data{generate(spec, Split::train), generate(spec, Split::test)};
  data.test.resize(2);
  write_dataset(dir.path(), data);
  EXPECT_TRUE(fs::exists(dir.path() / "images" / "000000.ppm"));
  EXPECT_TRUE(fs::exists(dir.path() / "masks" / "000004.pgm"));
  std::ifstream manifest(dir.path() / "manifest.csv");
  std::string header, first;
  std::getline(manifest, header);
  std::getline(manifest, first);
  EXPECT_EQ(header, "id,split,foreground_fraction");
  EXPECT_EQ(first.substr(0, 13), "000000,train,");

  const auto back = read_dataset(dir.path());
  ASSERT_EQ(back.train.size(), 3u);
  ASSERT_EQ(back.test.size(), 2u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.train[i].mask, data.train[i].mask);
    for (std::size_t k = 0; k < data.train[i].image.values.size(); ++k)
      ASSERT_NEAR(back.train[i].image.values[k], data.train[i].image.values[k], 0.5 / 255 + 1e-12);
  }
  EXPECT_EQ(back.test[1].mask, data.test[1].mask);
  EXPECT_EQ(sample_id(42), "000042");
}

TEST(Checkpoint, RoundTrip) {
  ModelConfig cfg = ModelConfig::tiny();
  cfg.hgam_enabled = true;
  const auto params = ModelParams<float>::init(cfg, 5);
  TempDir dir;
  write_checkpoint(dir.path() / "m.ckpt", to_records(cfg, params));
  ModelConfig loaded_cfg;
  const auto loaded = from_records<float>(read_checkpoint(dir.path() / "m.ckpt"), loaded_cfg);
  EXPECT_EQ(loaded_cfg.levels, cfg.levels);
  EXPECT_EQ(loaded_cfg.input_size, cfg.input_size);
  EXPECT_EQ(loaded_cfg.encoder_channels, cfg.encoder_channels);
  EXPECT_EQ(loaded_cfg.hgam_enabled, true);
  EXPECT_EQ(loaded_cfg.attention.lambda, cfg.attention.lambda);
  const auto a = params.named(), b = loaded.named();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].name, b[k].name);
    EXPECT_EQ(test::values(*a[k].tensor), test::values(*b[k].tensor));
  }
}

TEST(Checkpoint, RejectsCorruption) {
  const std::vector<CheckpointRecord> recs{{"w", {2, 1}, {1.5f, -2.0f}}};
  auto bytes = encode_checkpoint(recs);
  ASSERT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "CSKT");
  const auto back = decode_checkpoint(bytes);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].values, recs[0].values);

  auto wrong_version = bytes;
  wrong_version[4] = 2;
  EXPECT_THROW(decode_checkpoint(wrong_version), FormatError);
  auto wrong_magic = bytes;
  wrong_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(wrong_magic), FormatError);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_checkpoint(truncated), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_checkpoint(trailing), FormatError);
}

TEST(Checkpoint, RejectsMismatchedParameters) {
  const auto cfg = ModelConfig::tiny();
  auto recs = to_records(cfg, ModelParams<float>::init(cfg, 1));
  for (auto& r : recs) {
    if (!r.name.starts_with("meta.")) {
      r.values.pop_back();
      r.dims.back() -= 1;
      break;
    }
  }
  ModelConfig out;
  EXPECT_THROW(from_records<float>(recs, out), FormatError);
}

}  // namespace
}  // namespace csal
