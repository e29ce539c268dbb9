#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyclesense/nn/tape.hpp"
#include "cyclesense/nn/tensor.hpp"

namespace cyclesense::nn {

inline constexpr char kCheckpointMagic[4] = {'C', 'S', 'N', 'W'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

/// Layout (little-endian): "CSNW", u16 version, u32 count, then per tensor
/// u32 name length, name bytes, u32 rank, rank x u64 extents, float32 values.
void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

/// Every parameter and buffer of the set, in insertion order.
void save_parameters(const std::filesystem::path& path, const ParameterSet<float>& params);

/// Loads values by name. Every parameter of the set must be present with the
/// same shape; extra entries in the file are an error as well.
void load_parameters(const std::filesystem::path& path, ParameterSet<float>& params);

}  // namespace cyclesense::nn
