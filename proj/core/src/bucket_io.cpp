#include "cyclesense/bucket_io.hpp"

#include <cstdio>
#include <fstream>

#include "binary_io.hpp"

namespace cyclesense {

using detail::read_le;
using detail::write_le;

void write_bucket_file(const std::filesystem::path& path, std::span<const LabeledBucket> buckets,
                       const FrequencySpec& spec, SpectralMode mode) {
  spec.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw BucketFileError("cannot open " + path.string() + " for writing");
  out.write("CSNB", 4);
  write_le<std::uint16_t>(out, kBucketFileVersion);
  write_le<std::uint64_t>(out, buckets.size());
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(spec.f));
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(spec.windows()));
  for (const auto& b : buckets) {
    write_le<std::uint64_t>(out, fnv1a64(b.ride_id));
    write_le<std::uint32_t>(out, b.bucket_index);
    write_le<std::uint8_t>(out, b.label);
    for (float v : b.samples) write_le<float>(out, v);
    const auto tensors = bucket_to_tensors(b, spec, mode);
    for (const auto* t : {&tensors.accel, &tensors.gyro, &tensors.gps}) {
      for (float v : t->values()) write_le<float>(out, v);
    }
  }
  if (!out) throw BucketFileError("write failed for " + path.string());
}

BucketFile read_bucket_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BucketFileError("cannot open bucket file " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != "CSNB") {
    throw BucketFileError(path.string() + " is not a CSNB bucket file");
  }
  try {
    BucketFile file;
    const auto version = read_le<std::uint16_t>(in, "version");
    if (version != kBucketFileVersion) throw BucketFileError("unsupported bucket file version " + std::to_string(version));
    const auto count = read_le<std::uint64_t>(in, "bucket count");
    file.spec.f = read_le<std::uint16_t>(in, "f");
    const auto windows = read_le<std::uint16_t>(in, "T");
    file.spec.validate();
    if (windows != file.spec.windows()) throw BucketFileError("header T does not match f");
    for (std::uint64_t i = 0; i < count; ++i) {
      LabeledBucket b;
      const auto hash = read_le<std::uint64_t>(in, "ride hash");
      b.bucket_index = read_le<std::uint32_t>(in, "bucket index");
      b.label = read_le<std::uint8_t>(in, "label");
      for (auto& v : b.samples) v = read_le<float>(in, "samples");
      char hex[17];
      std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(hash));
      b.ride_id = hex;
      SensorTensorSet t{nn::Tensor<float>(accel_shape(file.spec)), nn::Tensor<float>(accel_shape(file.spec)),
                        nn::Tensor<float>(gps_shape(file.spec))};
      for (auto* target : {&t.accel, &t.gyro, &t.gps}) {
        for (auto& v : target->values()) v = read_le<float>(in, "tensor payload");
      }
      file.ride_hashes.push_back(hash);
      file.buckets.push_back(std::move(b));
      file.tensors.push_back(std::move(t));
    }
    return file;
  } catch (const BucketFileError&) {
    throw;
  } catch (const std::exception& e) {
    throw BucketFileError(path.string() + ": " + e.what());
  }
}

TensorDataset to_tensor_dataset(const BucketFile& file, std::string split) {
  TensorDataset data;
  data.spec = file.spec;
  data.split = std::move(split);
  data.items = file.tensors;
  for (const auto& b : file.buckets) {
    data.labels.push_back(b.label);
    data.ride_ids.push_back(b.ride_id);
    data.bucket_indices.push_back(b.bucket_index);
  }
  return data;
}

}  // namespace cyclesense
