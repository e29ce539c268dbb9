#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "cyclesense/ride_format.hpp"

namespace cyclesense {

inline constexpr std::int64_t kMaxGapMs = 6000;
inline constexpr std::int64_t kGridStepMs = 100;
inline constexpr std::size_t kBucketSamples = 100;
inline constexpr std::size_t kChannels = 8;
inline constexpr std::int64_t kIncidentMatchMs = 10000;
inline constexpr double kAccuracyFenceK = 1.5;
inline constexpr double kVelocityFenceK = 3.0;

/// Channel order of UniformRide samples and bucket matrices.
enum Channel : std::size_t { AccX = 0, AccY, AccZ, GyrA, GyrB, GyrC, VelLat, VelLon };

struct VelocitySample {
  std::int64_t timestamp = 0;  // timestamp of the earlier of the two fixes
  std::optional<double> vel_lat;  // degrees / second
  std::optional<double> vel_lon;
};

struct CleanFlags {
  std::size_t duplicate_timestamps_dropped = 0;
  std::size_t accuracy_outliers = 0;
  std::size_t velocity_outliers = 0;
  std::size_t degenerate_velocity_pairs = 0;
  std::size_t incidents_snapped = 0;
  std::size_t incidents_dropped = 0;
  bool no_gps = false;
  bool no_gyro = false;
};

struct CleanRide {
  std::string ride_id;
  DatasetPartition partition = DatasetPartition::AndroidNew;
  std::vector<IncidentRecord> incidents;
  std::vector<SensorRecord> records;  // strictly increasing timestamps
  std::vector<VelocitySample> velocities;
  CleanFlags flags;
};

struct GapTooLarge {
  std::int64_t gap_ms = 0;
  std::int64_t after_timestamp = 0;
};

struct Rejected {
  GapTooLarge reason;
};

using CleanResult = std::variant<CleanRide, Rejected>;

/// Sorts records by timestamp, drops exact duplicate timestamps and rejects
/// the ride if any adjacent gap exceeds 6000 ms.
CleanResult clean_ride(const RawRide& ride);

class EmptyInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Quantile by linear interpolation between order statistics
/// (position (n-1)p in the sorted sample).
double quantile(std::span<const double> values, double p);

/// Tukey fences (q25 - k*IQR, q75 + k*IQR).
std::pair<double, double> tukey_bounds(std::span<const double> values, double k);

struct GpsFix {
  std::int64_t timestamp = 0;
  double lat = 0.0;
  double lon = 0.0;
};

struct VelocitySeries {
  std::vector<VelocitySample> samples;
  std::size_t degenerate_pairs = 0;  // adjacent fixes with equal timestamps, skipped
};

/// Finite-difference velocity between consecutive fixes, attributed to the
/// earlier fix. n fixes give n-1 samples minus any degenerate pairs.
VelocitySeries gps_to_velocity(std::span<const GpsFix> fixes);

/// Accuracy fence (k=1.5) clears GPS fixes, then velocities are derived from
/// the surviving fixes and the velocity fence (k=3.0) clears each component
/// independently.
CleanRide filter_outliers(CleanRide ride);

/// Snaps each incident onto the nearest record timestamp within 10 s; the
/// rest are dropped and counted.
void snap_incidents(CleanRide& ride);

struct UniformRide {
  std::string ride_id;
  DatasetPartition partition = DatasetPartition::AndroidNew;
  std::int64_t start_ms = 0;  // grid point i sits at start_ms + 100 * i
  std::vector<std::array<double, kChannels>> samples;
  CleanFlags flags;

  std::int64_t timestamp_at(std::size_t i) const { return start_ms + static_cast<std::int64_t>(i) * kGridStepMs; }
};

/// Linear interpolation of every channel onto a 100 ms grid from the first to
/// the last record; values outside a channel's native span are clamped to the
/// nearest native sample, channels without samples are zero.
UniformRide resample_uniform(const CleanRide& ride);

/// Linear interpolation of one irregular series at `query` timestamps.
std::vector<double> interpolate_series(std::span<const std::int64_t> times, std::span<const double> values,
                                       std::span<const std::int64_t> query);

struct NormalizationStats {
  std::array<double, kChannels> max_abs{1, 1, 1, 1, 1, 1, 1, 1};

  static NormalizationStats identity() { return {}; }
  std::string to_json_text() const;
  static NormalizationStats from_json_text(std::string_view text);
};

/// Per-channel maximum absolute value over the fit rides; an all-zero
/// channel gets divisor 1.
NormalizationStats fit_maxabs(std::span<const UniformRide> rides);
UniformRide apply_maxabs(UniformRide ride, const NormalizationStats& stats);

struct LabeledBucket {
  std::string ride_id;
  std::uint32_t bucket_index = 0;
  std::uint8_t label = 0;
  std::array<float, kBucketSamples * kChannels> samples{};  // sample-major: [sample * 8 + channel]

  float at(std::size_t sample, std::size_t channel) const { return samples[sample * kChannels + channel]; }
};

/// Disjoint 100-sample windows from the start of the grid; the remainder is
/// dropped. A bucket is positive iff an incident timestamp lies in
/// [bucket start, bucket start + 10 s).
std::vector<LabeledBucket> bucketize_and_label(const UniformRide& ride, std::span<const IncidentRecord> incidents);

/// Result of running the per-ride stages on one raw ride.
struct PreparedRide {
  UniformRide ride;
  std::vector<IncidentRecord> incidents;  // snapped
};

/// clean_ride -> snap_incidents -> filter_outliers -> resample_uniform.
/// Returns nullopt (with the rejection) for rides excluded by the gap rule.
std::optional<PreparedRide> prepare_ride(const RawRide& ride, Rejected* rejection = nullptr);

}  // namespace cyclesense
