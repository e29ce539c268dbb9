#include "cyclesense/models/fcn.hpp"

#include <numeric>

namespace cyclesense {

template <typename S>
FcnModel<S>::FcnModel(FcnConfig config, std::uint64_t seed) : config_(config) {
  std::mt19937_64 rng(seed);
  std::size_t in = kFcnChannels.size();
  for (std::size_t i = 0; i < 3; ++i) {
    nn::ConvBlockConfig c;
    c.kernel = {1, 1, config_.kernels[i]};
    c.padding = nn::Padding::Same;
    c.filters = config_.filters[i];
    c.dropout = 0.0;
    blocks_.push_back(nn::ConvBlock<S>::create(params_, "fcn." + std::to_string(i), in, c, rng));
    in = c.filters;
  }
  output_ = nn::Dense<S>::create(params_, "fcn.head", in, 1, rng);
}

template <typename S>
nn::Var<S> FcnModel<S>::forward(nn::Tape<S>& tape, const nn::Tensor<S>& input, bool training) const {
  if (input.rank() != 5 || input.dim(4) != kFcnChannels.size()) {
    throw nn::ShapeMismatch("fcn input must be [batch, 1, 1, time, 5], got " + nn::to_string(input.shape()));
  }
  nn::Var<S> x = tape.constant(input);
  for (const auto& b : blocks_) x = b(tape, x, training);
  return nn::sigmoid(output_(tape, nn::global_average_pool(x)));
}

template class FcnModel<float>;
template class FcnModel<double>;

nn::Tensor<float> fcn_input(std::span<const LabeledBucket> buckets, std::span<const std::size_t> indices) {
  const std::size_t c = kFcnChannels.size();
  nn::Tensor<float> out({indices.size(), 1, 1, kBucketSamples, c});
  float* dst = out.data();
  for (std::size_t i : indices) {
    const auto& b = buckets[i];
    for (std::size_t t = 0; t < kBucketSamples; ++t) {
      for (Channel ch : kFcnChannels) *dst++ = b.at(t, ch);
    }
  }
  return out;
}

nn::Tensor<float> fcn_input(std::span<const LabeledBucket> buckets) {
  std::vector<std::size_t> idx(buckets.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return fcn_input(buckets, idx);
}

std::vector<float> fcn_score(const FcnModel<float>& model, std::span<const LabeledBucket> buckets,
                             std::size_t batch_size) {
  std::vector<float> out;
  out.reserve(buckets.size());
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < buckets.size(); begin += batch_size) {
    idx.clear();
    for (std::size_t i = begin; i < std::min(buckets.size(), begin + batch_size); ++i) idx.push_back(i);
    nn::Tape<float> tape;
    const auto probs = model.forward(tape, fcn_input(buckets, idx), false);
    for (float v : probs.value().values()) out.push_back(v);
  }
  return out;
}

}  // namespace cyclesense
