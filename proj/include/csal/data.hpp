#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "csal/maps.hpp"
#include "csal/tensor.hpp"

namespace csal {

struct Sample {
  RgbImage image;
  BinaryMask mask;
};

enum class Split { train, test };

const char* to_string(Split s);

/// Synthetic salient-object scenes: 1-3 ellipses, convex polygons or annuli
/// over a gradient-plus-noise background.
struct DatasetSpec {
  std::size_t count = 100;
  std::size_t base_size = 72;
  std::size_t crop_size = 64;
  std::uint64_t seed = 1;
  double min_contrast = 0.2;
  double max_contrast = 0.8;

  void validate() const;
};

/// Deterministic per (seed, split, index). Train and test draw from disjoint
/// seed streams.
std::vector<Sample> generate(const DatasetSpec& spec, Split split = Split::train);

/// One sample of the stream; generate() is this for index 0..count-1.
Sample generate_sample(const DatasetSpec& spec, Split split, std::size_t index);

double foreground_fraction(const BinaryMask& m);

RgbImage resize_bilinear(const RgbImage& img, std::size_t h, std::size_t w);
BinaryMask resize_nearest(const BinaryMask& m, std::size_t h, std::size_t w);
Sample flip_horizontal(const Sample& s);
Sample crop(const Sample& s, std::size_t top, std::size_t left, std::size_t size);

/// Uniform integer in [0, n) from one engine draw.
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n);

/// Train: resize to base_size, flip with probability 1/2, random crop to
/// crop_size. Draw order is flip, crop row, crop column. Eval: resize to
/// crop_size, no randomness.
Sample augment(const Sample& s, bool train, std::mt19937_64& rng, const DatasetSpec& spec);

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

/// images/NNNNNN.ppm, masks/NNNNNN.pgm and manifest.csv (id,split,foreground_fraction).
/// Train samples take the first ids.
void write_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& dir);

std::string sample_id(std::size_t index);

/// Stacks images into an N x 3 x H x W tensor.
template <typename T>
TensorPtr<T> images_to_tensor(std::span<const Sample> samples);

}  // namespace csal
