#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "cyclesense/nn/tensor.hpp"

namespace testing_support {

template <typename S>
cyclesense::nn::Tensor<S> random_tensor(cyclesense::nn::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                        double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  cyclesense::nn::Tensor<S> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<S>(dist(rng));
  return t;
}

}  // namespace testing_support

#include "cyclesense/synthdata.hpp"
#include "cyclesense/training.hpp"

namespace testing_support {

/// Preprocessed ride-level splits of a small synthetic dataset.
inline cyclesense::PreparedSplits synthetic_splits(cyclesense::SynthSpec spec, std::uint64_t split_seed = 1) {
  std::vector<cyclesense::RawRide> rides;
  for (auto& r : cyclesense::generate_dataset(spec)) rides.push_back(std::move(r.ride));
  return cyclesense::prepare_splits(rides, {split_seed});
}

inline std::vector<std::uint8_t> labels_of(const std::vector<cyclesense::LabeledBucket>& buckets) {
  std::vector<std::uint8_t> out;
  for (const auto& b : buckets) out.push_back(b.label);
  return out;
}

}  // namespace testing_support
