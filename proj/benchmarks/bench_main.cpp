#include <benchmark/benchmark.h>

#include <random>

#include "cyclesense/eval.hpp"
#include "cyclesense/models/cyclesense.hpp"
#include "cyclesense/models/heuristic.hpp"
#include "cyclesense/nn/ops.hpp"
#include "cyclesense/preprocess.hpp"
#include "cyclesense/spectral.hpp"
#include "cyclesense/synthdata.hpp"

using namespace cyclesense;

namespace {

nn::Tensor<float> noise(nn::Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d;
  nn::Tensor<float> t(std::move(shape));
  for (auto& v : t.values()) v = d(rng);
  return t;
}

LabeledBucket noise_bucket(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d;
  LabeledBucket b;
  for (auto& v : b.samples) v = d(rng);
  return b;
}

// Subnet-sized convolution: [64, 1, 10, 10, 64] x (1,3,3) -> 64 filters.
void BM_Conv3dForwardBackward(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  nn::Parameter<float> w{"w", noise({1, 3, 3, channels, channels}, 1)};
  nn::Parameter<float> b{"b", nn::Tensor<float>({channels})};
  const auto x = noise({64, 1, 10, 10, channels}, 2);
  for (auto _ : state) {
    nn::Tape<float> tape;
    w.zero_grad();
    b.zero_grad();
    auto y = nn::conv3d(tape.constant(x), tape.param(w), tape.param(b), nn::Padding::Same);
    tape.backward(nn::mean(y));
    benchmark::DoNotOptimize(w.grad.data());
  }
}
BENCHMARK(BM_Conv3dForwardBackward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_DftFPoint(benchmark::State& state) {
  const auto f = static_cast<std::size_t>(state.range(0));
  std::vector<double> x(f);
  std::mt19937_64 rng(3);
  for (auto& v : x) v = std::normal_distribution<double>()(rng);
  for (auto _ : state) benchmark::DoNotOptimize(dft_f_point(x, f));
}
BENCHMARK(BM_DftFPoint)->Arg(4)->Arg(10)->Arg(20)->Arg(50);

void BM_BucketToTensors(benchmark::State& state) {
  const auto bucket = noise_bucket(4);
  const FrequencySpec spec{10};
  for (auto _ : state) benchmark::DoNotOptimize(bucket_to_tensors(bucket, spec));
}
BENCHMARK(BM_BucketToTensors);

void BM_RocAuc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(5);
  std::vector<double> s(n);
  std::vector<std::uint8_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = rng() % 6 == 0;
    s[i] = std::normal_distribution<double>(y[i] ? 1.0 : 0.0)(rng);
  }
  y[0] = 1;
  y[1] = 0;
  for (auto _ : state) benchmark::DoNotOptimize(roc_auc(s, y));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_RocAuc)->Arg(1000)->Arg(100000);

void BM_PrepareRide(benchmark::State& state) {
  SynthSpec spec;
  const auto ride = generate_ride(spec, 0).ride;
  for (auto _ : state) benchmark::DoNotOptimize(prepare_ride(ride));
}
BENCHMARK(BM_PrepareRide)->Unit(benchmark::kMicrosecond);

void BM_HeuristicScores(benchmark::State& state) {
  std::vector<LabeledBucket> buckets;
  for (std::uint64_t i = 0; i < 400; ++i) buckets.push_back(noise_bucket(10 + i));
  for (auto _ : state) benchmark::DoNotOptimize(heuristic_scores(buckets));
}
BENCHMARK(BM_HeuristicScores)->Unit(benchmark::kMillisecond);

void BM_CycleSenseInference(benchmark::State& state) {
  CycleSenseModel<float> model({}, 6);
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto accel = noise({batch, 3, 10, 10, 2}, 7);
  const auto gyro = noise({batch, 3, 10, 10, 2}, 8);
  const auto gps = noise({batch, 2, 1, 10, 1}, 9);
  for (auto _ : state) {
    nn::Tape<float> tape;
    benchmark::DoNotOptimize(model.forward(tape, accel, gyro, gps, false).value().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch));
}
BENCHMARK(BM_CycleSenseInference)->Arg(1)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
