#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "cyclesense/nn/layers.hpp"
#include "cyclesense/nn/optim.hpp"
#include "cyclesense/spectral.hpp"

namespace cyclesense {

class NoPositives : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct GanConfig {
  std::size_t latent = 100;
  std::size_t generator_width = 64;
  std::size_t discriminator_width = 64;
  double lr = 2e-4;
  double beta1 = 0.5;
  std::size_t batch_size = 32;
  std::size_t steps = 300;
  double gap_fraction = 0.10;

  void validate() const;
};

/// Adversarial generator of incident tensor sets, working directly on the
/// frequency-domain tensors. Both networks treat a bucket as a sequence of T
/// windows carrying 12f + 2 features (accel and gyro real/imaginary bins plus
/// the two velocity means).
///
/// generator:     z -> dense -> [B, 1, 1, T, width] -> conv(1,1,3)+BN+ReLU
///                  -> linear conv(1,1,3) -> split into accel, gyro, gps
/// discriminator: flatten to [B, 1, 1, T, 12f+2] -> conv(1,1,3)+ReLU
///                  -> flatten -> dense (weights scaled by 0.01 at init) -> sigmoid
class Gan {
 public:
  Gan(FrequencySpec spec, GanConfig config, std::uint64_t seed);
  Gan(const Gan&) = delete;
  Gan& operator=(const Gan&) = delete;

  const GanConfig& config() const { return config_; }
  const FrequencySpec& spec() const { return spec_; }
  nn::ParameterSet<float>& generator_params() { return gen_params_; }
  nn::ParameterSet<float>& discriminator_params() { return disc_params_; }
  std::size_t features() const { return 12 * spec_.f + 2; }

  struct Output {
    nn::Var<float> accel;  // [B, 3, f, T, 2]
    nn::Var<float> gyro;
    nn::Var<float> gps;    // [B, 2, 1, T, 1]
  };
  Output generate(nn::Tape<float>& tape, const nn::Tensor<float>& z, bool training) const;
  /// Probability that each item is real, [B, 1].
  nn::Var<float> discriminate(nn::Tape<float>& tape, nn::Var<float> accel, nn::Var<float> gyro,
                              nn::Var<float> gps) const;

  nn::Tensor<float> sample_latent(std::size_t n, std::mt19937_64& rng) const;

  struct StepLosses {
    double discriminator_real = 0;
    double discriminator_fake = 0;
    double generator = 0;
  };
  /// One discriminator update (real = 1, fake = 0) followed by one generator
  /// update (fake = 1).
  StepLosses train_step(const TensorBatch& real, std::mt19937_64& rng);

 private:
  FrequencySpec spec_;
  GanConfig config_;
  nn::ParameterSet<float> gen_params_;
  nn::ParameterSet<float> disc_params_;
  nn::Dense<float> gen_project_;
  nn::ConvBlock<float> gen_conv_;
  nn::ConvBlock<float> gen_out_;
  nn::ConvBlock<float> disc_conv_;
  nn::Dense<float> disc_out_;
  nn::Adam<float> gen_opt_;
  nn::Adam<float> disc_opt_;
};

/// Trains on the positive items of `data` for config.steps steps and returns
/// the per-step losses.
std::vector<Gan::StepLosses> train_gan(Gan& gan, const TensorDataset& data, std::uint64_t seed);

/// n synthetic incident tensor sets; deterministic given the seed.
std::vector<SensorTensorSet> gan_generate(const Gan& gan, std::size_t n, std::uint64_t seed);

/// floor(gap_fraction * (n_neg - n_pos)), or 0 when positives are not the
/// minority.
std::size_t augmentation_count(std::size_t n_pos, std::size_t n_neg, double gap_fraction = 0.10);

/// Appends augmentation_count synthetic positives, labeled 1 with ride id
/// "synthetic". Only a "train" split is accepted; throws NoPositives when
/// the split has no positives.
std::size_t augment_dataset(TensorDataset& data, const Gan& gan, std::uint64_t seed);

}  // namespace cyclesense
