#include "cyclesense/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cyclesense {

void FrequencySpec::validate() const {
  if (f < 2 || kBucketSamples % f != 0) {
    throw std::invalid_argument("window length f=" + std::to_string(f) + " must be >= 2 and divide " +
                                std::to_string(kBucketSamples));
  }
}

DftPlan::DftPlan(std::size_t f) : f_(f), twiddle_(f) {
  if (f == 0) throw LengthMismatch("DFT length must be positive");
  for (std::size_t m = 0; m < f; ++m) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(f);
    twiddle_[m] = {std::cos(angle), std::sin(angle)};
  }
}

void DftPlan::transform(std::span<const double> window, std::span<std::complex<double>> out) const {
  if (window.size() != f_ || out.size() != f_) {
    throw LengthMismatch("DFT expects " + std::to_string(f_) + " samples, got " + std::to_string(window.size()));
  }
  for (std::size_t k = 0; k < f_; ++k) {
    std::complex<double> acc{0.0, 0.0};
    std::size_t m = 0;  // k*n mod f, advanced incrementally
    for (std::size_t n = 0; n < f_; ++n) {
      acc += window[n] * twiddle_[m];
      m += k;
      if (m >= f_) m -= f_;
    }
    out[k] = acc;
  }
}

std::vector<std::complex<double>> dft_f_point(std::span<const double> window, std::size_t f) {
  std::vector<std::complex<double>> out(f);
  DftPlan(f).transform(window, out);
  return out;
}

nn::Shape accel_shape(const FrequencySpec& spec) { return {3, spec.f, spec.windows(), 2}; }
nn::Shape gps_shape(const FrequencySpec& spec) { return {2, 1, spec.windows(), 1}; }

SensorTensorSet bucket_to_tensors(const LabeledBucket& bucket, const FrequencySpec& spec, SpectralMode mode) {
  spec.validate();
  const std::size_t f = spec.f;
  const std::size_t windows = spec.windows();
  SensorTensorSet out{nn::Tensor<float>(accel_shape(spec)), nn::Tensor<float>(accel_shape(spec)),
                      nn::Tensor<float>(gps_shape(spec))};
  const DftPlan plan(f);
  std::vector<double> window(f);
  std::vector<std::complex<double>> coeffs(f);

  auto fill = [&](nn::Tensor<float>& target, std::size_t first_channel) {
    for (std::size_t axis = 0; axis < 3; ++axis) {
      for (std::size_t t = 0; t < windows; ++t) {
        for (std::size_t n = 0; n < f; ++n) window[n] = bucket.at(t * f + n, first_channel + axis);
        if (mode == SpectralMode::Dft) {
          plan.transform(window, coeffs);
        } else {
          for (std::size_t n = 0; n < f; ++n) coeffs[n] = {window[n], 0.0};
        }
        for (std::size_t k = 0; k < f; ++k) {
          target.at({axis, k, t, 0}) = static_cast<float>(coeffs[k].real());
          target.at({axis, k, t, 1}) = static_cast<float>(coeffs[k].imag());
        }
      }
    }
  };
  fill(out.accel, Channel::AccX);
  fill(out.gyro, Channel::GyrA);

  for (std::size_t axis = 0; axis < 2; ++axis) {
    for (std::size_t t = 0; t < windows; ++t) {
      double sum = 0.0;
      for (std::size_t n = 0; n < f; ++n) sum += bucket.at(t * f + n, Channel::VelLat + axis);
      out.gps.at({axis, 0, t, 0}) = static_cast<float>(sum / static_cast<double>(f));
    }
  }
  return out;
}

std::size_t TensorDataset::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

TensorDataset build_tensor_dataset(std::span<const LabeledBucket> buckets, const FrequencySpec& spec,
                                   std::string split, SpectralMode mode) {
  TensorDataset data;
  data.spec = spec;
  data.split = std::move(split);
  data.items.reserve(buckets.size());
  for (const auto& b : buckets) {
    data.items.push_back(bucket_to_tensors(b, spec, mode));
    data.labels.push_back(b.label);
    data.ride_ids.push_back(b.ride_id);
    data.bucket_indices.push_back(b.bucket_index);
  }
  return data;
}

namespace {

nn::Tensor<float> stack(const TensorDataset& data, std::span<const std::size_t> indices,
                        nn::Tensor<float> SensorTensorSet::*member) {
  const auto& first = data.items.at(indices.front()).*member;
  nn::Shape shape{indices.size()};
  shape.insert(shape.end(), first.shape().begin(), first.shape().end());
  nn::Tensor<float> out(shape);
  const std::size_t stride = first.size();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& src = data.items.at(indices[b]).*member;
    if (src.shape() != first.shape()) throw nn::ShapeMismatch("batch items differ in shape");
    std::copy_n(src.data(), stride, out.data() + b * stride);
  }
  return out;
}

}  // namespace

TensorBatch make_batch(const TensorDataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("empty batch");
  TensorBatch batch;
  batch.accel = stack(data, indices, &SensorTensorSet::accel);
  batch.gyro = stack(data, indices, &SensorTensorSet::gyro);
  batch.gps = stack(data, indices, &SensorTensorSet::gps);
  for (auto i : indices) batch.labels.push_back(static_cast<float>(data.labels.at(i)));
  return batch;
}

}  // namespace cyclesense
