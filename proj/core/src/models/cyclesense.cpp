#include "cyclesense/models/cyclesense.hpp"

#include <nlohmann/json.hpp>
#include <stdexcept>

namespace cyclesense {

using nlohmann::json;
using nn::ConvBlock;
using nn::ConvBlockConfig;
using nn::Padding;
using nn::ResidualBlock;
using nn::Var;

std::string CycleSenseConfig::to_json_text() const {
  json j{{"f", spectral.f},
         {"subnet_filters", subnet_filters},
         {"fusion_filters", fusion_filters},
         {"rnn_layers", rnn_layers},
         {"rnn_units", rnn_units},
         {"cell", nn::to_string(cell)},
         {"dropout", dropout},
         {"spectral_mode", input_mode == SpectralMode::Dft ? "dft" : "identity"}};
  return j.dump(2);
}

CycleSenseConfig CycleSenseConfig::from_json_text(const std::string& text) {
  const json j = json::parse(text);
  CycleSenseConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "f") {
      c.spectral.f = value.get<std::size_t>();
    } else if (key == "subnet_filters") {
      c.subnet_filters = value.get<std::size_t>();
    } else if (key == "fusion_filters") {
      c.fusion_filters = value.get<std::size_t>();
    } else if (key == "rnn_layers") {
      c.rnn_layers = value.get<std::size_t>();
    } else if (key == "rnn_units") {
      c.rnn_units = value.get<std::size_t>();
    } else if (key == "cell") {
      c.cell = nn::parse_cell(value.get<std::string>());
    } else if (key == "dropout") {
      c.dropout = value.get<double>();
    } else if (key == "spectral_mode") {
      const auto mode = value.get<std::string>();
      if (mode != "dft" && mode != "identity") throw std::invalid_argument("unknown spectral_mode '" + mode + "'");
      c.input_mode = mode == "dft" ? SpectralMode::Dft : SpectralMode::Identity;
    } else {
      throw std::invalid_argument("unknown model config key: " + key);
    }
  }
  c.spectral.validate();
  return c;
}

std::string_view to_string(Sensor sensor) {
  switch (sensor) {
    case Sensor::Accel: return "accel";
    case Sensor::Gyro: return "gyro";
    case Sensor::Gps: return "gps";
  }
  return "?";
}

template <typename S>
Var<S> SensorSubnet<S>::operator()(nn::Tape<S>& tape, Var<S> x, bool training) const {
  Var<S> y = body(tape, entry(tape, x, training), training);
  return nn::mean_axis(y, 2);
}

namespace {

template <typename S>
SensorSubnet<S> make_subnet(nn::ParameterSet<S>& params, Sensor sensor, const CycleSenseConfig& config,
                            std::mt19937_64& rng) {
  const std::string name(to_string(sensor));
  const bool gps = sensor == Sensor::Gps;
  ConvBlockConfig entry;
  entry.kernel = gps ? std::array<std::size_t, 3>{2, 1, 1} : std::array<std::size_t, 3>{3, 3, 1};
  entry.padding = Padding::Valid;
  entry.filters = config.subnet_filters;
  entry.dropout = config.dropout;
  ConvBlockConfig body = entry;
  body.kernel = gps ? std::array<std::size_t, 3>{1, 1, 3} : std::array<std::size_t, 3>{1, 3, 3};
  body.padding = Padding::Same;
  SensorSubnet<S> net;
  net.entry = ConvBlock<S>::create(params, name + ".entry", gps ? 1 : 2, entry, rng);
  net.body = ResidualBlock<S>::create(params, name + ".residual", config.subnet_filters, body, rng);
  return net;
}

}  // namespace

template <typename S>
CycleSenseModel<S>::CycleSenseModel(CycleSenseConfig config, std::uint64_t seed) : config_(config) {
  config_.spectral.validate();
  if (config_.spectral.f < 3) throw nn::ShapeMismatch("the sensor subnets need at least 3 frequency bins");
  if (config_.subnet_filters == 0 || config_.fusion_filters == 0 || config_.rnn_units == 0 || config_.rnn_layers == 0) {
    throw nn::ShapeMismatch("model widths and depths must be positive");
  }
  std::mt19937_64 rng(seed);
  accel_ = make_subnet(params_, Sensor::Accel, config_, rng);
  gyro_ = make_subnet(params_, Sensor::Gyro, config_, rng);
  gps_ = make_subnet(params_, Sensor::Gps, config_, rng);

  ConvBlockConfig fusion;
  fusion.kernel = {3, 1, 3};
  fusion.padding = Padding::Same;
  fusion.filters = config_.fusion_filters;
  fusion.dropout = config_.dropout;
  fusion_head_.push_back(ConvBlock<S>::create(params_, "fusion.0", config_.subnet_filters, fusion, rng));
  fusion_residual_.push_back(ResidualBlock<S>::create(params_, "fusion.1", config_.fusion_filters, fusion, rng));
  fusion_residual_.push_back(ResidualBlock<S>::create(params_, "fusion.2", config_.fusion_filters, fusion, rng));
  fusion_head_.push_back(ConvBlock<S>::create(params_, "fusion.3", config_.fusion_filters, fusion, rng));

  rnn_ = nn::RecurrentStack<S>::create(params_, "rnn", config_.cell, 3 * config_.fusion_filters, config_.rnn_units,
                                       config_.rnn_layers, rng);
  output_ = nn::Dense<S>::create(params_, "head", config_.rnn_units, 1, rng);
}

template <typename S>
const SensorSubnet<S>& CycleSenseModel<S>::subnet(Sensor sensor) const {
  switch (sensor) {
    case Sensor::Accel: return accel_;
    case Sensor::Gyro: return gyro_;
    case Sensor::Gps: return gps_;
  }
  throw std::invalid_argument("unknown sensor");
}

template <typename S>
std::vector<nn::Parameter<S>*> CycleSenseModel<S>::subnet_parameters(Sensor sensor) {
  return params_.with_prefix(std::string(to_string(sensor)) + ".");
}

template <typename S>
std::vector<nn::Parameter<S>*> CycleSenseModel<S>::meta_parameters() {
  std::vector<nn::Parameter<S>*> out;
  for (const char* prefix : {"fusion.", "rnn.", "head."}) {
    for (auto* p : params_.with_prefix(prefix)) out.push_back(p);
  }
  return out;
}

template <typename S>
void CycleSenseModel<S>::freeze_subnets(bool frozen) {
  for (Sensor s : kSensors) {
    for (auto* p : subnet_parameters(s)) p->frozen = frozen;
  }
}

template <typename S>
bool CycleSenseModel<S>::subnets_frozen() const {
  for (const auto* p : params_.all()) {
    const bool subnet = p->name.starts_with("accel.") || p->name.starts_with("gyro.") || p->name.starts_with("gps.");
    if (subnet && !p->frozen) return false;
  }
  return true;
}

template <typename S>
Var<S> CycleSenseModel<S>::forward(nn::Tape<S>& tape, const nn::Tensor<S>& accel, const nn::Tensor<S>& gyro,
                                   const nn::Tensor<S>& gps, bool training) const {
  const auto expect = [&](const nn::Tensor<S>& t, nn::Shape item, const char* what) {
    item.insert(item.begin(), accel.rank() ? accel.dim(0) : 0);
    if (t.shape() != item) {
      throw nn::ShapeMismatch(std::string(what) + " input " + nn::to_string(t.shape()) + ", expected " +
                              nn::to_string(item));
    }
  };
  expect(accel, accel_shape(config_.spectral), "accelerometer");
  expect(gyro, accel_shape(config_.spectral), "gyroscope");
  expect(gps, gps_shape(config_.spectral), "gps");
  const bool sub_training = training && !subnets_frozen();
  Var<S> a = accel_(tape, tape.constant(accel), sub_training);
  Var<S> g = gyro_(tape, tape.constant(gyro), sub_training);
  Var<S> p = gps_(tape, tape.constant(gps), sub_training);
  return forward_features(tape, a, g, p, training);
}

template <typename S>
Var<S> CycleSenseModel<S>::forward_features(nn::Tape<S>& tape, Var<S> accel, Var<S> gyro, Var<S> gps,
                                            bool training) const {
  Var<S> x = nn::concat<S>({accel, gyro, gps}, 1);  // [B, 3, 1, T, F]
  x = fusion_head_[0](tape, x, training);
  for (const auto& r : fusion_residual_) x = r(tape, x, training);
  x = fusion_head_[1](tape, x, training);
  const std::size_t batch = x.dim(0);
  const std::size_t steps = x.dim(3);
  Var<S> seq = nn::reshape(nn::permute(x, {0, 3, 1, 2, 4}), {batch, steps, 3 * config_.fusion_filters});
  return nn::sigmoid(output_(tape, rnn_(tape, seq)));
}

template <typename S>
nn::Tensor<S> CycleSenseModel<S>::encode(Sensor sensor, const nn::Tensor<S>& input) const {
  nn::Tape<S> tape;
  return subnet(sensor)(tape, tape.constant(input), false).value();
}

template struct SensorSubnet<float>;
template struct SensorSubnet<double>;
template class CycleSenseModel<float>;
template class CycleSenseModel<double>;

std::vector<float> predict(const CycleSenseModel<float>& model, const TensorDataset& data, std::size_t batch_size) {
  std::vector<float> out;
  out.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    idx.clear();
    for (std::size_t i = begin; i < std::min(data.size(), begin + batch_size); ++i) idx.push_back(i);
    const auto batch = make_batch(data, idx);
    nn::Tape<float> tape;
    const auto probs = model.forward(tape, batch.accel, batch.gyro, batch.gps, false);
    for (float v : probs.value().values()) out.push_back(v);
  }
  return out;
}

}  // namespace cyclesense
