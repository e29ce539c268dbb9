#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cyclesense/nn/layers.hpp"
#include "cyclesense/nn/tape.hpp"
#include "cyclesense/spectral.hpp"

namespace cyclesense {

struct CycleSenseConfig {
  FrequencySpec spectral{};
  std::size_t subnet_filters = 64;
  std::size_t fusion_filters = 112;
  std::size_t rnn_layers = 2;
  std::size_t rnn_units = 120;
  nn::CellType cell = nn::CellType::Gru;
  double dropout = 0.2;
  SpectralMode input_mode = SpectralMode::Dft;  // how accel/gyro windows were encoded

  std::string to_json_text() const;
  static CycleSenseConfig from_json_text(const std::string& text);
};

enum class Sensor { Accel, Gyro, Gps };
std::string_view to_string(Sensor sensor);
inline constexpr Sensor kSensors[] = {Sensor::Accel, Sensor::Gyro, Sensor::Gps};

/// Per-sensor feature extractor: a valid-padded conv block collapsing the
/// axis dimension, then a residual pair of same-padded blocks, then a mean
/// over the frequency axis. Input [B, axes, f, T, 2] (GPS: [B, 2, 1, T, 1]),
/// output [B, 1, 1, T, filters].
template <typename S>
struct SensorSubnet {
  nn::ConvBlock<S> entry;
  nn::ResidualBlock<S> body;

  nn::Var<S> operator()(nn::Tape<S>& tape, nn::Var<S> x, bool training) const;
};

/// The sensor-fusion network:
///   accel, gyro, gps subnets -> concat along the sensor axis [B, 3, 1, T, F]
///   -> fusion (six conv blocks, two of the pairs wrapped as residual blocks)
///   -> sequence [B, T, 3 * fusion_filters] -> stacked recurrent layers
///   -> dense -> sigmoid.
template <typename S>
class CycleSenseModel {
 public:
  CycleSenseModel(CycleSenseConfig config, std::uint64_t seed);
  CycleSenseModel(const CycleSenseModel&) = delete;
  CycleSenseModel& operator=(const CycleSenseModel&) = delete;

  const CycleSenseConfig& config() const { return config_; }
  nn::ParameterSet<S>& params() { return params_; }
  const nn::ParameterSet<S>& params() const { return params_; }
  std::size_t parameter_count() const { return params_.count_weights(); }

  const SensorSubnet<S>& subnet(Sensor sensor) const;
  /// Parameters (including buffers) belonging to one subnet.
  std::vector<nn::Parameter<S>*> subnet_parameters(Sensor sensor);
  /// Parameters of fusion, recurrent layers and head.
  std::vector<nn::Parameter<S>*> meta_parameters();
  void freeze_subnets(bool frozen = true);
  bool subnets_frozen() const;

  /// Probabilities [B, 1]. Frozen subnets always run in inference mode.
  nn::Var<S> forward(nn::Tape<S>& tape, const nn::Tensor<S>& accel, const nn::Tensor<S>& gyro,
                     const nn::Tensor<S>& gps, bool training) const;

  /// Everything after the subnets, fed with [B, 1, 1, T, F] features.
  nn::Var<S> forward_features(nn::Tape<S>& tape, nn::Var<S> accel, nn::Var<S> gyro, nn::Var<S> gps,
                              bool training) const;

  /// Subnet output in inference mode, without recording gradients.
  nn::Tensor<S> encode(Sensor sensor, const nn::Tensor<S>& input) const;

 private:
  CycleSenseConfig config_;
  nn::ParameterSet<S> params_;
  SensorSubnet<S> accel_;
  SensorSubnet<S> gyro_;
  SensorSubnet<S> gps_;
  std::vector<nn::ConvBlock<S>> fusion_head_;  // blocks 1 and 6
  std::vector<nn::ResidualBlock<S>> fusion_residual_;
  nn::RecurrentStack<S> rnn_;
  nn::Dense<S> output_;
};

extern template struct SensorSubnet<float>;
extern template struct SensorSubnet<double>;
extern template class CycleSenseModel<float>;
extern template class CycleSenseModel<double>;

/// Probabilities for every item of a dataset, evaluated in batches in
/// inference mode.
std::vector<float> predict(const CycleSenseModel<float>& model, const TensorDataset& data, std::size_t batch_size = 128);

}  // namespace cyclesense
