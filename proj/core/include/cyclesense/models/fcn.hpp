#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cyclesense/nn/layers.hpp"
#include "cyclesense/preprocess.hpp"

namespace cyclesense {

/// Channels seen by the FCN baseline; gyroscope channels are excluded.
inline constexpr std::array<Channel, 5> kFcnChannels{AccX, AccY, AccZ, VelLat, VelLon};

struct FcnConfig {
  std::array<std::size_t, 3> filters{128, 256, 128};
  std::array<std::size_t, 3> kernels{8, 5, 3};
};

/// Time-series FCN: three temporal conv blocks (BN + ReLU), global average
/// pooling, dense, sigmoid. Input [B, 1, 1, 100, 5].
template <typename S>
class FcnModel {
 public:
  FcnModel(FcnConfig config, std::uint64_t seed);
  FcnModel(const FcnModel&) = delete;
  FcnModel& operator=(const FcnModel&) = delete;

  nn::ParameterSet<S>& params() { return params_; }
  const nn::ParameterSet<S>& params() const { return params_; }
  const FcnConfig& config() const { return config_; }

  nn::Var<S> forward(nn::Tape<S>& tape, const nn::Tensor<S>& input, bool training) const;

 private:
  FcnConfig config_;
  nn::ParameterSet<S> params_;
  std::vector<nn::ConvBlock<S>> blocks_;
  nn::Dense<S> output_;
};

extern template class FcnModel<float>;
extern template class FcnModel<double>;

/// Stacks the time-domain FCN channels of the selected buckets into
/// [B, 1, 1, 100, 5].
nn::Tensor<float> fcn_input(std::span<const LabeledBucket> buckets, std::span<const std::size_t> indices);
nn::Tensor<float> fcn_input(std::span<const LabeledBucket> buckets);

std::vector<float> fcn_score(const FcnModel<float>& model, std::span<const LabeledBucket> buckets,
                             std::size_t batch_size = 128);

}  // namespace cyclesense
