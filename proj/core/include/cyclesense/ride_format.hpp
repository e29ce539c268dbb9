#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cyclesense {

enum class DatasetPartition { AndroidOld, AndroidNew, Ios };

std::string_view to_string(DatasetPartition partition);
/// Accepts the CLI spellings "android-old", "android-new" and "ios".
std::optional<DatasetPartition> parse_partition(std::string_view text);

struct SensorRecord {
  std::int64_t timestamp = 0;  // ms since epoch
  std::optional<double> lat;
  std::optional<double> lon;
  std::optional<double> gps_accuracy;  // meters
  double acc_x = 0.0;
  double acc_y = 0.0;
  double acc_z = 0.0;
  std::optional<double> gyr_a;
  std::optional<double> gyr_b;
  std::optional<double> gyr_c;

  bool has_fix() const { return lat.has_value() && lon.has_value() && gps_accuracy.has_value(); }
  bool has_gyro() const { return gyr_a.has_value() && gyr_b.has_value() && gyr_c.has_value(); }
  void clear_fix() {
    lat.reset();
    lon.reset();
    gps_accuracy.reset();
  }

  friend bool operator==(const SensorRecord&, const SensorRecord&) = default;
};

struct IncidentRecord {
  std::int64_t timestamp = 0;
  double lat = 0.0;
  double lon = 0.0;
  int incident_type = 0;
  std::optional<std::string> description;

  friend bool operator==(const IncidentRecord&, const IncidentRecord&) = default;
};

struct RawRide {
  std::string ride_id;
  std::string incident_version;  // version header line of the incident section
  std::string ride_version;      // version header line of the sensor section
  std::vector<IncidentRecord> incidents;
  std::vector<SensorRecord> records;
  DatasetPartition partition = DatasetPartition::AndroidNew;

  friend bool operator==(const RawRide&, const RawRide&) = default;
};

/// Maps logical fields to the column names found in ride files. Every field
/// accepts a list of aliases; the first alias is the canonical name used by
/// write_ride. Unknown columns are ignored.
struct ColumnMap {
  struct Incident {
    std::vector<std::string> timestamp{"ts", "timestamp", "timeStamp"};
    std::vector<std::string> lat{"lat"};
    std::vector<std::string> lon{"lon"};
    std::vector<std::string> incident_type{"incident", "type"};
    std::vector<std::string> description{"desc", "description"};
  } incident;
  struct Sensor {
    std::vector<std::string> timestamp{"timeStamp", "timestamp", "ts"};
    std::vector<std::string> lat{"lat"};
    std::vector<std::string> lon{"lon"};
    std::vector<std::string> gps_accuracy{"acc", "accuracy"};
    std::vector<std::string> acc_x{"X"};
    std::vector<std::string> acc_y{"Y"};
    std::vector<std::string> acc_z{"Z"};
    std::vector<std::string> gyr_a{"a"};
    std::vector<std::string> gyr_b{"b"};
    std::vector<std::string> gyr_c{"c"};
  } sensor;
  // Partition rule applied to the sensor-section version header
  // "<app version>#<file version>".
  std::string ios_version_prefix = "i";
  int android_new_min_app_version = 72;

  static ColumnMap from_json_text(std::string_view json_text);
  static ColumnMap load(const std::filesystem::path& path);
  std::string to_json_text() const;
};

class RideParseError : public std::runtime_error {
 public:
  enum class Kind { MissingSeparator, MissingHeader, NoRecords };
  RideParseError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct RowIssue {
  std::size_t line = 0;  // 1-based line number in the file
  std::string message;
};

/// Non-fatal findings collected while parsing.
struct ParseDiagnostics {
  std::vector<RowIssue> unparsable_rows;
  std::size_t rows_missing_accelerometer = 0;
  std::size_t incomplete_gps_rows = 0;
  std::vector<std::string> ignored_columns;
};

/// Splits a ride file into incident and sensor sections and parses both.
/// Throws RideParseError for a missing separator or header; bad rows are
/// skipped and reported through `diagnostics`.
RawRide parse_ride(std::string_view text, const ColumnMap& columns = {}, ParseDiagnostics* diagnostics = nullptr,
                   std::string ride_id = {});

RawRide read_ride_file(const std::filesystem::path& path, const ColumnMap& columns = {},
                       ParseDiagnostics* diagnostics = nullptr);

/// Canonical form: canonical column order, shortest round-trip decimals with
/// '.', empty cells for absent optionals.
std::string write_ride(const RawRide& ride);

void write_ride_file(const std::filesystem::path& path, const RawRide& ride);

/// Pure function of the version header line.
DatasetPartition classify_partition(std::string_view version_line, const ColumnMap& columns = {});

struct ScanResult {
  std::vector<std::pair<std::string, DatasetPartition>> rides;  // ride id = relative path without extension
  std::vector<std::filesystem::path> unreadable;
};

class DirNotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Scans a directory tree of ride files. A non-empty `region` keeps only
/// files below a directory of that name or whose filename starts with it.
ScanResult partition_dataset(const std::filesystem::path& dir, const std::optional<std::string>& region = std::nullopt,
                             const ColumnMap& columns = {});

/// Paths of candidate ride files below `dir`, sorted, after the region filter.
std::vector<std::filesystem::path> list_ride_files(const std::filesystem::path& dir,
                                                   const std::optional<std::string>& region = std::nullopt);

std::string ride_id_for(const std::filesystem::path& root, const std::filesystem::path& file);

}  // namespace cyclesense
