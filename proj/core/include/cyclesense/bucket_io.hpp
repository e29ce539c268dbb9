#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "cyclesense/preprocess.hpp"
#include "cyclesense/seed.hpp"
#include "cyclesense/spectral.hpp"

namespace cyclesense {

inline constexpr std::uint16_t kBucketFileVersion = 1;

class BucketFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Contents of a CSNB file. Ride ids are not stored, only their hashes; on
/// read, LabeledBucket::ride_id holds the hash as 16 hex digits.
struct BucketFile {
  FrequencySpec spec;
  std::vector<LabeledBucket> buckets;
  std::vector<std::uint64_t> ride_hashes;
  std::vector<SensorTensorSet> tensors;
};

/// Layout (little-endian): "CSNB", u16 version, u64 bucket count, u16 f,
/// u16 T, then per bucket u64 ride hash, u32 index, u8 label, 100x8 float32
/// samples (sample-major), accel 3*f*T*2, gyro 3*f*T*2 and gps 2*T float32.
void write_bucket_file(const std::filesystem::path& path, std::span<const LabeledBucket> buckets,
                       const FrequencySpec& spec, SpectralMode mode = SpectralMode::Dft);
BucketFile read_bucket_file(const std::filesystem::path& path);

/// Tensor dataset view of a bucket file, tagged with `split`.
TensorDataset to_tensor_dataset(const BucketFile& file, std::string split);

}  // namespace cyclesense
