#include "cyclesense/synthdata.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <stdexcept>

#include "cyclesense/preprocess.hpp"
#include "cyclesense/seed.hpp"

namespace cyclesense {

namespace {

constexpr double kGravity = 9.81;
constexpr double kMetersPerDegree = 111'320.0;
constexpr std::int64_t kEpochBase = 1'600'000'000'000;
constexpr std::int64_t kProfileMs = 1000;
constexpr std::int64_t kIncidentLeadMs = 1000;
constexpr std::int64_t kIncidentTailMs = 1500;

double round6(double v) { return std::round(v * 1e6) / 1e6; }

std::string version_line(DatasetPartition p) {
  switch (p) {
    case DatasetPartition::AndroidOld: return "60#1";
    case DatasetPartition::AndroidNew: return "80#1";
    case DatasetPartition::Ios: return "i20#1";
  }
  return "80#1";
}

/// AR(1) noise with stationary standard deviation sigma.
class ArNoise {
 public:
  ArNoise(double phi, double sigma, std::mt19937_64& rng) : phi_(phi), sigma_(sigma), rng_(rng) {
    value_ = std::normal_distribution<double>(0.0, sigma)(rng);
  }
  double next() {
    const double v = value_;
    value_ = phi_ * value_ + std::normal_distribution<double>(0.0, sigma_ * std::sqrt(1.0 - phi_ * phi_))(rng_);
    return v;
  }

 private:
  double phi_;
  double sigma_;
  std::mt19937_64& rng_;
  double value_ = 0.0;
};

}  // namespace

void SynthSpec::validate() const {
  if (min_duration_s < 30.0 || max_duration_s < min_duration_s) {
    throw std::invalid_argument("ride duration must be at least 30 s with min <= max");
  }
  if (incident_rate < 0.0) throw std::invalid_argument("incident rate must be non-negative");
  if (sigma_acc <= 0.0 || sigma_gyro <= 0.0) throw std::invalid_argument("noise sigma must be positive");
  if (noise_ar <= -1.0 || noise_ar >= 1.0) throw std::invalid_argument("noise_ar must lie in (-1, 1)");
  if (amplitude < 0.0) throw std::invalid_argument("amplitude must be non-negative");
  if (swerve_fraction < 0.0 || swerve_fraction > 1.0) throw std::invalid_argument("swerve_fraction must lie in [0, 1]");
  if (sample_period_ms <= 0 || sample_jitter_ms < 0 || sample_jitter_ms >= sample_period_ms) {
    throw std::invalid_argument("sample jitter must be smaller than the sample period");
  }
  if (gps_every == 0) throw std::invalid_argument("gps_every must be positive");
  if (region.empty()) throw std::invalid_argument("region must not be empty");
}

std::filesystem::path synthetic_ride_path(const SynthSpec& spec, std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof name, "ride_%05zu.csv", index);
  return std::filesystem::path(spec.region) / std::string(to_string(spec.partition)) / name;
}

SynthRide generate_ride(const SynthSpec& spec, std::size_t index) {
  spec.validate();
  std::mt19937_64 rng(derive_seed(spec.seed, "ride/" + std::to_string(index)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  SynthRide out;
  RawRide& ride = out.ride;
  ride.ride_id = synthetic_ride_path(spec, index).replace_extension().generic_string();
  ride.incident_version = version_line(spec.partition);
  ride.ride_version = ride.incident_version;
  ride.partition = spec.partition;

  const auto duration_ms = static_cast<std::int64_t>(uniform(spec.min_duration_s, spec.max_duration_s) * 1000.0);
  const std::int64_t start = kEpochBase + static_cast<std::int64_t>(index) * 3'600'000;
  std::vector<std::int64_t> times{start};
  std::uniform_int_distribution<std::int64_t> jitter(-spec.sample_jitter_ms, spec.sample_jitter_ms);
  while (times.back() - start < duration_ms) times.push_back(times.back() + spec.sample_period_ms + jitter(rng));
  const std::size_t n = times.size();

  // Incidents are placed on sensor timestamps.
  const auto count = std::poisson_distribution<int>(spec.incident_rate)(rng);
  std::size_t first = 0;
  while (first < n && times[first] - start < kIncidentLeadMs) ++first;
  // Only the span covered by whole buckets survives preprocessing.
  const std::int64_t grid_points = (times.back() - start) / kGridStepMs + 1;
  const std::int64_t retained_end =
      start + grid_points / static_cast<std::int64_t>(kBucketSamples) * kBucketSamples * kGridStepMs;
  std::size_t last = n;
  while (last > first && retained_end - times[last - 1] < kIncidentTailMs) --last;
  for (int i = 0; i < count && first < last; ++i) {
    const std::size_t at = first + static_cast<std::size_t>(rng() % (last - first));
    const IncidentProfile profile = unit(rng) < spec.swerve_fraction ? IncidentProfile::Swerve : IncidentProfile::Brake;
    out.injected.push_back({times[at], profile});
  }

  ArNoise ax(spec.noise_ar, spec.sigma_acc, rng), ay(spec.noise_ar, spec.sigma_acc, rng),
      az(spec.noise_ar, spec.sigma_acc, rng);
  ArNoise ga(spec.noise_ar, spec.sigma_gyro, rng), gb(spec.noise_ar, spec.sigma_gyro, rng),
      gc(spec.noise_ar, spec.sigma_gyro, rng);
  std::vector<std::size_t> swerve_axis;
  for (std::size_t i = 0; i < out.injected.size(); ++i) swerve_axis.push_back(rng() % 3);

  double lat = 52.52 + uniform(-0.05, 0.05);
  double lon = 13.405 + uniform(-0.08, 0.08);
  double heading = uniform(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> turn(0.0, 0.05);
  std::normal_distribution<double> speed(5.0, 0.5);

  for (std::size_t i = 0; i < n; ++i) {
    SensorRecord r;
    r.timestamp = times[i];
    double x = ax.next();
    double y = ay.next();
    double z = kGravity + az.next();
    std::array<double, 3> gyro{ga.next(), gb.next(), gc.next()};
    for (std::size_t k = 0; k < out.injected.size(); ++k) {
      const auto& inc = out.injected[k];
      const std::int64_t dt = r.timestamp - inc.timestamp;
      if (dt < 0 || dt >= kProfileMs) continue;
      const double s = static_cast<double>(dt) / 1000.0;
      if (inc.profile == IncidentProfile::Brake) {
        y -= spec.amplitude * spec.sigma_acc * std::exp(-s / spec.brake_decay_s);
      } else {
        gyro[swerve_axis[k]] += spec.amplitude * spec.sigma_gyro * std::sin(2.0 * std::numbers::pi * s);
      }
    }
    if (i > 0) {
      const double dt = static_cast<double>(times[i] - times[i - 1]) / 1000.0;
      heading += turn(rng);
      const double step = std::max(0.0, speed(rng)) * dt;
      lat += step * std::cos(heading) / kMetersPerDegree;
      lon += step * std::sin(heading) / (kMetersPerDegree * std::cos(lat * std::numbers::pi / 180.0));
    }
    if (i % spec.gps_every == 0) {
      double accuracy = uniform(3.0, 8.0);
      double fix_lat = lat;
      double fix_lon = lon;
      if (unit(rng) < spec.gps_outlier_rate) {
        accuracy = uniform(30.0, 80.0);
        fix_lat += std::normal_distribution<double>(0.0, accuracy)(rng) / kMetersPerDegree;
        fix_lon += std::normal_distribution<double>(0.0, accuracy)(rng) / kMetersPerDegree;
      }
      r.lat = std::round(fix_lat * 1e7) / 1e7;
      r.lon = std::round(fix_lon * 1e7) / 1e7;
      r.gps_accuracy = std::round(accuracy * 10.0) / 10.0;
    }
    r.acc_x = round6(x);
    r.acc_y = round6(y);
    r.acc_z = round6(z);
    r.gyr_a = round6(gyro[0]);
    r.gyr_b = round6(gyro[1]);
    r.gyr_c = round6(gyro[2]);
    ride.records.push_back(r);
  }

  for (const auto& inc : out.injected) {
    IncidentRecord rec;
    rec.timestamp = inc.timestamp;
    std::size_t at = 0;
    while (at + 1 < n && times[at] < inc.timestamp) ++at;
    for (std::size_t j = at + 1; j-- > 0;) {
      if (ride.records[j].has_fix()) {
        rec.lat = *ride.records[j].lat;
        rec.lon = *ride.records[j].lon;
        break;
      }
    }
    rec.incident_type = 1 + static_cast<int>(rng() % 8);
    ride.incidents.push_back(rec);
  }
  return out;
}

std::vector<SynthRide> generate_dataset(const SynthSpec& spec) {
  spec.validate();
  std::vector<SynthRide> rides;
  rides.reserve(spec.n_rides);
  for (std::size_t i = 0; i < spec.n_rides; ++i) rides.push_back(generate_ride(spec, i));
  return rides;
}

std::vector<std::filesystem::path> write_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::vector<std::filesystem::path> paths;
  for (std::size_t i = 0; i < spec.n_rides; ++i) {
    const auto path = out_dir / synthetic_ride_path(spec, i);
    std::filesystem::create_directories(path.parent_path());
    write_ride_file(path, generate_ride(spec, i).ride);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace cyclesense
