#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>

#include "cyclesense/bucket_io.hpp"
#include "cyclesense/spectral.hpp"

using namespace cyclesense;

namespace {

std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
  const std::size_t f = x.size();
  std::vector<std::complex<double>> out(f);
  for (std::size_t k = 0; k < f; ++k) {
    for (std::size_t n = 0; n < f; ++n) {
      out[k] += x[n] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * n) / static_cast<double>(f));
    }
  }
  return out;
}

std::vector<double> naive_inverse(const std::vector<std::complex<double>>& X) {
  const std::size_t f = X.size();
  std::vector<double> out(f);
  for (std::size_t n = 0; n < f; ++n) {
    std::complex<double> acc;
    for (std::size_t k = 0; k < f; ++k) {
      acc += X[k] * std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(k * n) / static_cast<double>(f));
    }
    out[n] = acc.real() / static_cast<double>(f);
  }
  return out;
}

LabeledBucket random_bucket(std::mt19937_64& rng) {
  LabeledBucket b;
  b.ride_id = "ride-" + std::to_string(rng() % 1000);
  b.bucket_index = static_cast<std::uint32_t>(rng() % 50);
  b.label = static_cast<std::uint8_t>(rng() % 2);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (auto& v : b.samples) v = u(rng);
  return b;
}

}  // namespace

TEST_CASE("dft examples") {
  const std::vector<double> ones{1, 1, 1, 1};
  auto c = dft_f_point(ones, 4);
  CHECK(c[0] == std::complex<double>(4, 0));
  for (int k = 1; k < 4; ++k) CHECK(std::abs(c[k]) < 1e-15);
  const std::vector<double> impulse{1, 0, 0, 0};
  for (const auto& v : dft_f_point(impulse, 4)) CHECK(v == std::complex<double>(1, 0));
  CHECK_THROWS_AS(dft_f_point(ones, 5), LengthMismatch);
}

TEST_CASE("dft matches the naive oracle, Parseval and linearity") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> d(0, 3);
  for (std::size_t f : {4, 10, 20, 50}) {
    for (int trial = 0; trial < 250; ++trial) {
      std::vector<double> x(f), y(f);
      for (auto& v : x) v = d(rng);
      for (auto& v : y) v = d(rng);
      const auto X = dft_f_point(x, f);
      const auto ref = naive_dft(x);
      double scale = 0.0;
      for (const auto& r : ref) scale = std::max(scale, std::abs(r));
      double energy_t = 0, energy_f = 0;
      for (std::size_t k = 0; k < f; ++k) {
        CHECK(std::abs(X[k] - ref[k]) <= 1e-9 * scale);
        energy_t += x[k] * x[k];
        energy_f += std::norm(X[k]);
      }
      CHECK(std::abs(energy_t - energy_f / static_cast<double>(f)) <= 1e-9 * energy_t);
      const double a = d(rng), b = d(rng);
      std::vector<double> mix(f);
      for (std::size_t n = 0; n < f; ++n) mix[n] = a * x[n] + b * y[n];
      const auto M = dft_f_point(mix, f);
      const auto Y = dft_f_point(y, f);
      for (std::size_t k = 0; k < f; ++k) CHECK(std::abs(M[k] - (a * X[k] + b * Y[k])) <= 1e-9 * (1 + std::abs(M[k])));
    }
  }
}

TEST_CASE("frequency spec validation") {
  CHECK_NOTHROW(FrequencySpec{10}.validate());
  CHECK(FrequencySpec{20}.windows() == 5);
  CHECK_THROWS(FrequencySpec{3}.validate());
  CHECK_THROWS(FrequencySpec{1}.validate());
}

TEST_CASE("bucket_to_tensors") {
  const FrequencySpec spec{10};
  SUBCASE("shapes depend on f only") {
    for (std::size_t f : {4, 5, 10, 20}) {
      std::mt19937_64 rng(f);
      const auto t = bucket_to_tensors(random_bucket(rng), FrequencySpec{f});
      CHECK(t.accel.shape() == nn::Shape{3, f, 100 / f, 2});
      CHECK(t.gyro.shape() == nn::Shape{3, f, 100 / f, 2});
      CHECK(t.gps.shape() == nn::Shape{2, 1, 100 / f, 1});
    }
  }
  SUBCASE("zero bucket") {
    const auto t = bucket_to_tensors(LabeledBucket{}, spec);
    for (const auto* x : {&t.accel, &t.gyro, &t.gps}) {
      for (float v : x->values()) CHECK(v == 0.0f);
    }
  }
  SUBCASE("constant acc_x lands in the DC bin") {
    LabeledBucket b;
    for (std::size_t i = 0; i < 100; ++i) b.samples[i * kChannels + AccX] = 0.5f;
    const auto t = bucket_to_tensors(b, spec);
    for (std::size_t w = 0; w < 10; ++w) {
      CHECK(t.accel.at({0, 0, w, 0}) == doctest::Approx(5.0f));
      for (std::size_t k = 1; k < 10; ++k) {
        CHECK(std::abs(t.accel.at({0, k, w, 0})) < 1e-6f);
        CHECK(std::abs(t.accel.at({0, k, w, 1})) < 1e-6f);
      }
    }
  }
  SUBCASE("inverse transform of every slice recovers the window") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      const auto b = random_bucket(rng);
      const auto t = bucket_to_tensors(b, spec);
      for (std::size_t axis = 0; axis < 3; ++axis) {
        for (std::size_t w = 0; w < 10; ++w) {
          std::vector<std::complex<double>> X(10);
          for (std::size_t k = 0; k < 10; ++k) X[k] = {t.gyro.at({axis, k, w, 0}), t.gyro.at({axis, k, w, 1})};
          const auto x = naive_inverse(X);
          // Coefficients are stored as float32, so recovery is limited by that rounding.
          for (std::size_t n = 0; n < 10; ++n) CHECK(std::abs(x[n] - b.at(w * 10 + n, GyrA + axis)) < 1e-5);
        }
      }
      for (std::size_t w = 0; w < 10; ++w) {
        double mean = 0;
        for (std::size_t n = 0; n < 10; ++n) mean += b.at(w * 10 + n, VelLon);
        CHECK(t.gps.at({1, 0, w, 0}) == doctest::Approx(mean / 10).epsilon(1e-6));
      }
    }
  }
  SUBCASE("identity mode keeps the time-domain samples") {
    std::mt19937_64 rng(8);
    const auto b = random_bucket(rng);
    const auto t = bucket_to_tensors(b, spec, SpectralMode::Identity);
    for (std::size_t w = 0; w < 10; ++w) {
      for (std::size_t n = 0; n < 10; ++n) {
        CHECK(t.accel.at({2, n, w, 0}) == b.at(w * 10 + n, AccZ));
        CHECK(t.accel.at({2, n, w, 1}) == 0.0f);
      }
    }
  }
}

TEST_CASE("inverse DFT recovers windows in double precision") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> d;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(10);
    for (auto& v : x) v = d(rng);
    const auto back = naive_inverse(dft_f_point(x, 10));
    for (std::size_t n = 0; n < 10; ++n) CHECK(std::abs(back[n] - x[n]) < 1e-9);
  }
}

TEST_CASE("batching stacks items along a leading axis") {
  std::mt19937_64 rng(2);
  std::vector<LabeledBucket> buckets;
  for (int i = 0; i < 5; ++i) buckets.push_back(random_bucket(rng));
  const auto data = build_tensor_dataset(buckets, FrequencySpec{10}, "train");
  const std::vector<std::size_t> idx{4, 1};
  const auto batch = make_batch(data, idx);
  CHECK(batch.accel.shape() == nn::Shape{2, 3, 10, 10, 2});
  CHECK(batch.gps.shape() == nn::Shape{2, 2, 1, 10, 1});
  CHECK(batch.accel[0] == data.items[4].accel[0]);
  CHECK(batch.gyro[600] == data.items[1].gyro[0]);
  CHECK(batch.labels[1] == static_cast<float>(buckets[1].label));
}

TEST_CASE("CSNB bucket file round trip") {
  std::mt19937_64 rng(12);
  std::vector<LabeledBucket> buckets;
  for (int i = 0; i < 7; ++i) buckets.push_back(random_bucket(rng));
  const FrequencySpec spec{5};
  const auto path = std::filesystem::temp_directory_path() / "cyclesense_buckets.csnb";
  write_bucket_file(path, buckets, spec);
  const auto file = read_bucket_file(path);
  CHECK(file.spec.f == 5);
  REQUIRE(file.buckets.size() == 7);
  CHECK(std::filesystem::file_size(path) == 4 + 2 + 8 + 2 + 2 + 7 * (8 + 4 + 1 + 800 * 4 + (3 * 5 * 20 * 2 * 2 + 2 * 20) * 4));
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(file.buckets[i].samples == buckets[i].samples);
    CHECK(file.buckets[i].label == buckets[i].label);
    CHECK(file.buckets[i].bucket_index == buckets[i].bucket_index);
    CHECK(file.ride_hashes[i] == fnv1a64(buckets[i].ride_id));
    const auto t = bucket_to_tensors(buckets[i], spec);
    CHECK(file.tensors[i].accel == t.accel);
    CHECK(file.tensors[i].gps == t.gps);
  }
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  std::filesystem::resize_file(path, 100);
  CHECK_THROWS_AS(read_bucket_file(path), BucketFileError);
  std::filesystem::remove(path);
}
