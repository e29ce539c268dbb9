#include "cyclesense/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace cyclesense {

CleanResult clean_ride(const RawRide& raw) {
  CleanRide ride;
  ride.ride_id = raw.ride_id;
  ride.partition = raw.partition;
  ride.incidents = raw.incidents;
  ride.records = raw.records;
  std::stable_sort(ride.records.begin(), ride.records.end(),
                   [](const SensorRecord& a, const SensorRecord& b) { return a.timestamp < b.timestamp; });

  // Keep the first row of every timestamp.
  const auto last = std::unique(ride.records.begin(), ride.records.end(),
                                [](const SensorRecord& a, const SensorRecord& b) { return a.timestamp == b.timestamp; });
  ride.flags.duplicate_timestamps_dropped = static_cast<std::size_t>(std::distance(last, ride.records.end()));
  ride.records.erase(last, ride.records.end());

  for (std::size_t i = 1; i < ride.records.size(); ++i) {
    const std::int64_t gap = ride.records[i].timestamp - ride.records[i - 1].timestamp;
    if (gap > kMaxGapMs) return Rejected{GapTooLarge{gap, ride.records[i - 1].timestamp}};
  }
  ride.flags.no_gyro = std::none_of(ride.records.begin(), ride.records.end(),
                                    [](const SensorRecord& r) { return r.has_gyro(); });
  return ride;
}

double quantile(std::span<const double> values, double p) {
  if (values.empty()) throw EmptyInput("quantile of an empty sample");
  std::vector<double> v(values.begin(), values.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
  const double a = v[lo];
  if (frac == 0.0 || lo + 1 >= v.size()) return a;
  // Smallest element above the lo-th order statistic is the (lo+1)-th.
  const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
  return a + frac * (b - a);
}

std::pair<double, double> tukey_bounds(std::span<const double> values, double k) {
  if (values.empty()) throw EmptyInput("tukey_bounds of an empty sample");
  if (!(k > 0.0)) throw std::invalid_argument("tukey_bounds requires k > 0");
  const double q25 = quantile(values, 0.25);
  const double q75 = quantile(values, 0.75);
  const double iqr = q75 - q25;
  return {q25 - k * iqr, q75 + k * iqr};
}

VelocitySeries gps_to_velocity(std::span<const GpsFix> fixes) {
  VelocitySeries series;
  for (std::size_t i = 0; i + 1 < fixes.size(); ++i) {
    const std::int64_t dt_ms = fixes[i + 1].timestamp - fixes[i].timestamp;
    if (dt_ms == 0) {
      ++series.degenerate_pairs;
      continue;
    }
    const double dt = static_cast<double>(dt_ms) / 1000.0;
    series.samples.push_back(
        {fixes[i].timestamp, (fixes[i + 1].lat - fixes[i].lat) / dt, (fixes[i + 1].lon - fixes[i].lon) / dt});
  }
  return series;
}

namespace {

std::size_t clear_outside(std::vector<VelocitySample>& samples, std::optional<double> VelocitySample::*component) {
  std::vector<double> values;
  for (const auto& s : samples) {
    if (s.*component) values.push_back(*(s.*component));
  }
  if (values.empty()) return 0;
  const auto [lo, hi] = tukey_bounds(values, kVelocityFenceK);
  std::size_t cleared = 0;
  for (auto& s : samples) {
    if (s.*component && (*(s.*component) < lo || *(s.*component) > hi)) {
      (s.*component).reset();
      ++cleared;
    }
  }
  return cleared;
}

}  // namespace

CleanRide filter_outliers(CleanRide ride) {
  std::vector<double> accuracies;
  for (const auto& r : ride.records) {
    if (r.has_fix()) accuracies.push_back(*r.gps_accuracy);
  }
  if (!accuracies.empty()) {
    const auto [lo, hi] = tukey_bounds(accuracies, kAccuracyFenceK);
    for (auto& r : ride.records) {
      if (r.has_fix() && (*r.gps_accuracy < lo || *r.gps_accuracy > hi)) {
        r.clear_fix();
        ++ride.flags.accuracy_outliers;
      }
    }
  }

  std::vector<GpsFix> fixes;
  for (const auto& r : ride.records) {
    if (r.has_fix()) fixes.push_back({r.timestamp, *r.lat, *r.lon});
  }
  auto series = gps_to_velocity(fixes);
  ride.velocities = std::move(series.samples);
  ride.flags.degenerate_velocity_pairs = series.degenerate_pairs;
  ride.flags.velocity_outliers = clear_outside(ride.velocities, &VelocitySample::vel_lat) +
                                 clear_outside(ride.velocities, &VelocitySample::vel_lon);
  ride.flags.no_gps = ride.velocities.empty();
  return ride;
}

void snap_incidents(CleanRide& ride) {
  std::vector<IncidentRecord> kept;
  const auto& records = ride.records;
  for (auto incident : ride.incidents) {
    const auto it = std::lower_bound(records.begin(), records.end(), incident.timestamp,
                                     [](const SensorRecord& r, std::int64_t t) { return r.timestamp < t; });
    std::int64_t best = -1;
    std::int64_t best_dist = kIncidentMatchMs + 1;
    if (it != records.end()) {
      best = it->timestamp;
      best_dist = it->timestamp - incident.timestamp;
    }
    if (it != records.begin()) {
      const auto prev = std::prev(it);
      if (incident.timestamp - prev->timestamp < best_dist) {
        best = prev->timestamp;
        best_dist = incident.timestamp - prev->timestamp;
      }
    }
    if (best_dist > kIncidentMatchMs) {
      ++ride.flags.incidents_dropped;
      continue;
    }
    if (best != incident.timestamp) ++ride.flags.incidents_snapped;
    incident.timestamp = best;
    kept.push_back(std::move(incident));
  }
  ride.incidents = std::move(kept);
}

std::vector<double> interpolate_series(std::span<const std::int64_t> times, std::span<const double> values,
                                       std::span<const std::int64_t> query) {
  std::vector<double> out(query.size(), 0.0);
  if (times.empty()) return out;
  std::size_t j = 0;
  for (std::size_t q = 0; q < query.size(); ++q) {
    const std::int64_t t = query[q];
    if (t <= times.front()) {
      out[q] = values.front();
      continue;
    }
    if (t >= times.back()) {
      out[q] = values.back();
      continue;
    }
    while (j + 1 < times.size() && times[j + 1] <= t) ++j;
    if (times[j] == t) {
      out[q] = values[j];
      continue;
    }
    const double span = static_cast<double>(times[j + 1] - times[j]);
    const double w = static_cast<double>(t - times[j]) / span;
    out[q] = values[j] + w * (values[j + 1] - values[j]);
  }
  return out;
}

UniformRide resample_uniform(const CleanRide& ride) {
  UniformRide out;
  out.ride_id = ride.ride_id;
  out.partition = ride.partition;
  out.flags = ride.flags;
  if (ride.records.empty()) return out;
  out.start_ms = ride.records.front().timestamp;
  const std::int64_t end_ms = ride.records.back().timestamp;
  const auto n = static_cast<std::size_t>((end_ms - out.start_ms) / kGridStepMs + 1);
  std::vector<std::int64_t> grid(n);
  for (std::size_t i = 0; i < n; ++i) grid[i] = out.timestamp_at(i);
  out.samples.assign(n, {});

  auto fill = [&](std::size_t channel, const std::vector<std::int64_t>& t, const std::vector<double>& v) {
    const auto values = interpolate_series(t, v, grid);
    for (std::size_t i = 0; i < n; ++i) out.samples[i][channel] = values[i];
  };

  std::vector<std::int64_t> t;
  std::array<std::vector<double>, 3> v;
  for (const auto& r : ride.records) {
    t.push_back(r.timestamp);
    v[0].push_back(r.acc_x);
    v[1].push_back(r.acc_y);
    v[2].push_back(r.acc_z);
  }
  for (std::size_t c = 0; c < 3; ++c) fill(AccX + c, t, v[c]);

  t.clear();
  for (auto& vec : v) vec.clear();
  for (const auto& r : ride.records) {
    if (!r.has_gyro()) continue;
    t.push_back(r.timestamp);
    v[0].push_back(*r.gyr_a);
    v[1].push_back(*r.gyr_b);
    v[2].push_back(*r.gyr_c);
  }
  for (std::size_t c = 0; c < 3; ++c) fill(GyrA + c, t, v[c]);

  for (auto [channel, component] : {std::pair{VelLat, &VelocitySample::vel_lat}, std::pair{VelLon, &VelocitySample::vel_lon}}) {
    t.clear();
    v[0].clear();
    for (const auto& s : ride.velocities) {
      if (!(s.*component)) continue;
      t.push_back(s.timestamp);
      v[0].push_back(*(s.*component));
    }
    fill(channel, t, v[0]);
  }
  return out;
}

std::string NormalizationStats::to_json_text() const {
  nlohmann::json j;
  j["max_abs"] = max_abs;
  return j.dump(2);
}

NormalizationStats NormalizationStats::from_json_text(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  NormalizationStats stats;
  stats.max_abs = j.at("max_abs").get<std::array<double, kChannels>>();
  for (double m : stats.max_abs) {
    if (!(m > 0.0) || !std::isfinite(m)) throw std::invalid_argument("normalization divisor must be positive");
  }
  return stats;
}

NormalizationStats fit_maxabs(std::span<const UniformRide> rides) {
  std::array<double, kChannels> max_abs{};
  for (const auto& ride : rides) {
    for (const auto& s : ride.samples) {
      for (std::size_t c = 0; c < kChannels; ++c) max_abs[c] = std::max(max_abs[c], std::abs(s[c]));
    }
  }
  NormalizationStats stats;
  for (std::size_t c = 0; c < kChannels; ++c) stats.max_abs[c] = max_abs[c] > 0.0 ? max_abs[c] : 1.0;
  return stats;
}

UniformRide apply_maxabs(UniformRide ride, const NormalizationStats& stats) {
  for (auto& s : ride.samples) {
    for (std::size_t c = 0; c < kChannels; ++c) s[c] /= stats.max_abs[c];
  }
  return ride;
}

std::vector<LabeledBucket> bucketize_and_label(const UniformRide& ride, std::span<const IncidentRecord> incidents) {
  std::vector<LabeledBucket> buckets;
  const std::size_t count = ride.samples.size() / kBucketSamples;
  buckets.reserve(count);
  for (std::size_t b = 0; b < count; ++b) {
    LabeledBucket bucket;
    bucket.ride_id = ride.ride_id;
    bucket.bucket_index = static_cast<std::uint32_t>(b);
    for (std::size_t i = 0; i < kBucketSamples; ++i) {
      const auto& s = ride.samples[b * kBucketSamples + i];
      for (std::size_t c = 0; c < kChannels; ++c) bucket.samples[i * kChannels + c] = static_cast<float>(s[c]);
    }
    const std::int64_t begin = ride.timestamp_at(b * kBucketSamples);
    const std::int64_t end = begin + static_cast<std::int64_t>(kBucketSamples) * kGridStepMs;
    bucket.label = std::any_of(incidents.begin(), incidents.end(),
                               [&](const IncidentRecord& inc) { return inc.timestamp >= begin && inc.timestamp < end; })
                       ? 1
                       : 0;
    buckets.push_back(std::move(bucket));
  }
  return buckets;
}

std::optional<PreparedRide> prepare_ride(const RawRide& raw, Rejected* rejection) {
  auto cleaned = clean_ride(raw);
  if (auto* rejected = std::get_if<Rejected>(&cleaned)) {
    if (rejection) *rejection = *rejected;
    return std::nullopt;
  }
  auto ride = std::get<CleanRide>(std::move(cleaned));
  snap_incidents(ride);
  ride = filter_outliers(std::move(ride));
  PreparedRide prepared;
  prepared.incidents = ride.incidents;
  prepared.ride = resample_uniform(ride);
  return prepared;
}

}  // namespace cyclesense
