#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cyclesense/ride_format.hpp"

namespace cyclesense {

enum class IncidentProfile { Brake, Swerve };

/// Parameters of the synthetic ride generator. Noise is AR(1) with
/// coefficient `noise_ar` and stationary standard deviation sigma per
/// channel; incident amplitudes are multiples of that sigma.
struct SynthSpec {
  std::size_t n_rides = 500;
  double min_duration_s = 30.0;
  double max_duration_s = 60.0;
  double sigma_acc = 0.5;
  double sigma_gyro = 0.05;
  double noise_ar = 0.5;
  double incident_rate = 0.8;  // Poisson mean per ride
  double amplitude = 6.0;      // in sigma
  double swerve_fraction = 0.1;
  double brake_decay_s = 0.5;
  std::int64_t sample_period_ms = 250;
  std::int64_t sample_jitter_ms = 50;
  std::size_t gps_every = 12;  // one fix per this many sensor rows
  double gps_outlier_rate = 0.03;
  std::string region = "Berlin";
  DatasetPartition partition = DatasetPartition::AndroidNew;
  std::uint64_t seed = 42;

  /// Throws std::invalid_argument on an unusable spec.
  void validate() const;
};

struct InjectedIncident {
  std::int64_t timestamp = 0;
  IncidentProfile profile = IncidentProfile::Brake;
};

struct SynthRide {
  RawRide ride;
  std::vector<InjectedIncident> injected;
};

/// Ride `index` of the dataset; depends only on (spec, index).
SynthRide generate_ride(const SynthSpec& spec, std::size_t index);
std::vector<SynthRide> generate_dataset(const SynthSpec& spec);

/// Relative path of ride `index`: <region>/<partition>/ride_NNNNN.csv.
std::filesystem::path synthetic_ride_path(const SynthSpec& spec, std::size_t index);

/// Writes every ride under `out_dir`; returns the written paths.
std::vector<std::filesystem::path> write_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace cyclesense
