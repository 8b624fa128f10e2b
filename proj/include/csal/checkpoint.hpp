#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "csal/model.hpp"

namespace csal {

// Layout, all integers little-endian:
//   "CSKT" | u32 version | u32 record count |
//   per record: u32 name length | UTF-8 name | u32 rank | u32 dims[rank] | f32 values[prod(dims)]
inline constexpr char kCheckpointMagic[4] = {'C', 'S', 'K', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointRecord {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path);

/// Model parameters plus "meta.*" records describing the configuration.
template <typename T>
std::vector<CheckpointRecord> to_records(const ModelConfig& cfg, const ModelParams<T>& params);

/// Rebuilds configuration and parameters; throws FormatError on any mismatch.
template <typename T>
ModelParams<T> from_records(const std::vector<CheckpointRecord>& records, ModelConfig& cfg);

}  // namespace csal
