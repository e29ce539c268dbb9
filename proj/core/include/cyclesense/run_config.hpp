#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "cyclesense/models/cyclesense.hpp"
#include "cyclesense/models/gan.hpp"
#include "cyclesense/models/heuristic.hpp"
#include "cyclesense/ride_format.hpp"
#include "cyclesense/spectral.hpp"
#include "cyclesense/synthdata.hpp"
#include "cyclesense/training.hpp"

namespace cyclesense {

class ConfigInvalid : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct GridConfig {
  GridSpace space{};
  std::size_t budget = 54;
  std::size_t epochs = 5;
};

/// Every tunable of a run. All randomness derives from `seed`.
///
/// JSON layout (all keys optional, unknown keys rejected):
///   seed, threads, region, partition, columns, normalize, spectral_mode ("dft" | "identity"),
///   split {train, val}, model {f, subnet_filters, fusion_filters, rnn_layers, rnn_units, cell, dropout},
///   train {epochs, lr, batch_size, patience, class_weights, augmentation, stacking, pretrain_epochs},
///   fcn_train {same keys as train}, gan {latent, generator_width, discriminator_width, lr, beta1,
///   batch_size, steps, gap_fraction}, heuristic {window, top_jumps},
///   synth {n_rides, min_duration_s, max_duration_s, sigma_acc, sigma_gyro, noise_ar, incident_rate,
///   amplitude, swerve_fraction, brake_decay_s, sample_period_ms, sample_jitter_ms, gps_every,
///   gps_outlier_rate, region, partition}, grid {f, rnn_units, cells, lr, budget, epochs}
struct RunConfig {
  std::uint64_t seed = 42;
  std::size_t threads = 1;
  std::optional<std::string> region;
  std::optional<DatasetPartition> partition = DatasetPartition::AndroidNew;
  std::optional<std::filesystem::path> columns;
  bool normalize = true;
  SpectralMode spectral_mode = SpectralMode::Dft;
  SplitPlan split{};
  CycleSenseConfig model{};
  TrainConfig train{};
  TrainConfig fcn_train = default_fcn_train();
  HeuristicConfig heuristic{};
  SynthSpec synth{};
  GridConfig grid{};

  static TrainConfig default_fcn_train();

  /// Throws ConfigInvalid on malformed JSON, unknown keys or invalid values.
  static RunConfig from_json_text(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  std::string to_json_text() const;

  /// Child seed for a named subsystem.
  std::uint64_t seed_for(std::string_view name) const;
  void validate() const;
};

}  // namespace cyclesense
