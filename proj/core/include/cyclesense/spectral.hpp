#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyclesense/nn/tensor.hpp"
#include "cyclesense/preprocess.hpp"

namespace cyclesense {

class LengthMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Window length f (samples) and the resulting number of windows per bucket.
struct FrequencySpec {
  std::size_t f = 10;

  std::size_t windows() const { return kBucketSamples / f; }
  /// Throws std::invalid_argument unless f >= 2 and f divides 100.
  void validate() const;
};

/// Unnormalized forward DFT, X_k = sum_n x_n exp(-2 pi i k n / f).
std::vector<std::complex<double>> dft_f_point(std::span<const double> window, std::size_t f);

/// Precomputed twiddle factors for repeated f-point transforms.
class DftPlan {
 public:
  explicit DftPlan(std::size_t f);
  std::size_t size() const { return f_; }
  /// `out` must hold f coefficients.
  void transform(std::span<const double> window, std::span<std::complex<double>> out) const;

 private:
  std::size_t f_;
  std::vector<std::complex<double>> twiddle_;  // exp(-2 pi i m / f), m in [0, f)
};

/// Model inputs of one bucket:
///   accel, gyro [3 axes, f, T, 2 (real, imaginary)]
///   gps         [2 axes, 1, T, 1] (window mean of each velocity component)
struct SensorTensorSet {
  nn::Tensor<float> accel;
  nn::Tensor<float> gyro;
  nn::Tensor<float> gps;
};

/// How accelerometer/gyroscope windows are encoded. Identity keeps the raw
/// time-domain samples in the real channel with a zero imaginary channel;
/// it exists for the DFT ablation.
enum class SpectralMode { Dft, Identity };

SensorTensorSet bucket_to_tensors(const LabeledBucket& bucket, const FrequencySpec& spec,
                                  SpectralMode mode = SpectralMode::Dft);

/// Shapes of SensorTensorSet for a given spec (without batch axis).
nn::Shape accel_shape(const FrequencySpec& spec);
nn::Shape gps_shape(const FrequencySpec& spec);

/// A labelled dataset of tensor sets. `split` tags provenance ("train",
/// "val", "test") so augmentation can refuse anything but training data.
struct TensorDataset {
  FrequencySpec spec;
  std::string split;
  std::vector<SensorTensorSet> items;
  std::vector<std::uint8_t> labels;
  std::vector<std::string> ride_ids;
  std::vector<std::uint32_t> bucket_indices;

  std::size_t size() const { return items.size(); }
  std::size_t positives() const;
};

TensorDataset build_tensor_dataset(std::span<const LabeledBucket> buckets, const FrequencySpec& spec,
                                   std::string split, SpectralMode mode = SpectralMode::Dft);

/// Batched model inputs with a leading batch axis.
struct TensorBatch {
  nn::Tensor<float> accel;  // [B, 3, f, T, 2]
  nn::Tensor<float> gyro;   // [B, 3, f, T, 2]
  nn::Tensor<float> gps;    // [B, 2, 1, T, 1]
  std::vector<float> labels;

  std::size_t size() const { return labels.size(); }
};

TensorBatch make_batch(const TensorDataset& data, std::span<const std::size_t> indices);

}  // namespace cyclesense
