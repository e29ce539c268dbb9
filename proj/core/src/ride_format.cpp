#include "cyclesense/ride_format.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

#include <nlohmann/json.hpp>

#include "text_util.hpp"

namespace cyclesense {

namespace fs = std::filesystem;
using detail::format_double;
using detail::split_csv_line;
using detail::trim;

std::string_view to_string(DatasetPartition partition) {
  switch (partition) {
    case DatasetPartition::AndroidOld:
      return "android-old";
    case DatasetPartition::AndroidNew:
      return "android-new";
    case DatasetPartition::Ios:
      return "ios";
  }
  return "unknown";
}

std::optional<DatasetPartition> parse_partition(std::string_view text) {
  if (text == "android-old") return DatasetPartition::AndroidOld;
  if (text == "android-new") return DatasetPartition::AndroidNew;
  if (text == "ios") return DatasetPartition::Ios;
  return std::nullopt;
}

namespace {

void read_aliases(const nlohmann::json& j, const char* key, std::vector<std::string>& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  out.clear();
  if (v.is_string()) {
    out.push_back(v.get<std::string>());
  } else {
    for (const auto& item : v) out.push_back(item.get<std::string>());
  }
  if (out.empty()) throw std::invalid_argument(std::string("column map: empty alias list for ") + key);
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> known, const char* where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument(std::string("column map: unknown key '") + key + "' in " + where);
    }
  }
}

struct Line {
  std::size_t number;  // 1-based
  std::string_view text;
};

std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> lines;
  std::size_t start = 0;
  std::size_t number = 1;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back({number++, line});
    if (end == text.size()) break;
    start = end + 1;
  }
  return lines;
}

bool is_separator(std::string_view line) {
  line = trim(line);
  return line.size() >= 10 && std::all_of(line.begin(), line.end(), [](char c) { return c == '='; });
}

// Column index lookup for one logical field; -1 when absent.
int find_column(const std::vector<std::string>& header, const std::vector<std::string>& aliases) {
  for (const auto& alias : aliases) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == alias) return static_cast<int>(i);
    }
  }
  return -1;
}

std::string_view cell(const std::vector<std::string>& cells, int index) {
  if (index < 0 || static_cast<std::size_t>(index) >= cells.size()) return {};
  return trim(cells[static_cast<std::size_t>(index)]);
}

bool parse_double(std::string_view text, double& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && std::isfinite(out);
}

bool parse_int64(std::string_view text, std::int64_t& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  if (ec == std::errc() && ptr == text.data() + text.size()) return true;
  // Some exports write integral timestamps as "1600000000000.0".
  double value = 0.0;
  if (!parse_double(text, value) || value != std::floor(value) || std::abs(value) > 9.0e15) return false;
  out = static_cast<std::int64_t>(value);
  return true;
}

// Optional numeric cell: empty -> nullopt, malformed -> error.
bool parse_optional(std::string_view text, std::optional<double>& out) {
  if (text.empty()) {
    out.reset();
    return true;
  }
  double value = 0.0;
  if (!parse_double(text, value)) return false;
  out = value;
  return true;
}

struct Section {
  std::string version;
  std::vector<std::string> header;
  std::vector<Line> rows;
};

Section read_section(const std::vector<Line>& lines, std::size_t begin, std::size_t end, const char* name) {
  Section section;
  std::size_t i = begin;
  while (i < end && trim(lines[i].text).empty()) ++i;
  if (i == end || trim(lines[i].text).find(',') != std::string_view::npos) {
    throw RideParseError(RideParseError::Kind::MissingHeader, std::string("missing version header in ") + name + " section");
  }
  section.version = std::string(trim(lines[i].text));
  ++i;
  while (i < end && trim(lines[i].text).empty()) ++i;
  if (i == end) {
    throw RideParseError(RideParseError::Kind::MissingHeader, std::string("missing CSV header in ") + name + " section");
  }
  for (auto& column : split_csv_line(lines[i].text)) section.header.emplace_back(trim(column));
  ++i;
  for (; i < end; ++i) {
    if (!trim(lines[i].text).empty()) section.rows.push_back(lines[i]);
  }
  return section;
}

void note_ignored(const std::vector<std::string>& header, const std::vector<int>& used, ParseDiagnostics& diag) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (std::find(used.begin(), used.end(), static_cast<int>(i)) == used.end() && !header[i].empty()) {
      diag.ignored_columns.push_back(header[i]);
    }
  }
}

std::string csv_escape(std::string_view text) {
  std::string clean(text);
  std::replace(clean.begin(), clean.end(), '\n', ' ');
  std::replace(clean.begin(), clean.end(), '\r', ' ');
  if (clean.find_first_of(",\"") == std::string::npos && trim(clean).size() == clean.size()) return clean;
  std::string out = "\"";
  for (char c : clean) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string format_optional(const std::optional<double>& value) { return value ? format_double(*value) : std::string(); }

}  // namespace

ColumnMap ColumnMap::from_json_text(std::string_view json_text) {
  ColumnMap map;
  const auto j = nlohmann::json::parse(json_text);
  reject_unknown(j, {"incident", "sensor", "ios_version_prefix", "android_new_min_app_version"}, "column map");
  if (j.contains("incident")) {
    const auto& inc = j.at("incident");
    reject_unknown(inc, {"timestamp", "lat", "lon", "incident_type", "description"}, "incident");
    read_aliases(inc, "timestamp", map.incident.timestamp);
    read_aliases(inc, "lat", map.incident.lat);
    read_aliases(inc, "lon", map.incident.lon);
    read_aliases(inc, "incident_type", map.incident.incident_type);
    read_aliases(inc, "description", map.incident.description);
  }
  if (j.contains("sensor")) {
    const auto& sen = j.at("sensor");
    reject_unknown(sen, {"timestamp", "lat", "lon", "gps_accuracy", "acc_x", "acc_y", "acc_z", "gyr_a", "gyr_b", "gyr_c"},
                   "sensor");
    read_aliases(sen, "timestamp", map.sensor.timestamp);
    read_aliases(sen, "lat", map.sensor.lat);
    read_aliases(sen, "lon", map.sensor.lon);
    read_aliases(sen, "gps_accuracy", map.sensor.gps_accuracy);
    read_aliases(sen, "acc_x", map.sensor.acc_x);
    read_aliases(sen, "acc_y", map.sensor.acc_y);
    read_aliases(sen, "acc_z", map.sensor.acc_z);
    read_aliases(sen, "gyr_a", map.sensor.gyr_a);
    read_aliases(sen, "gyr_b", map.sensor.gyr_b);
    read_aliases(sen, "gyr_c", map.sensor.gyr_c);
  }
  if (j.contains("ios_version_prefix")) map.ios_version_prefix = j.at("ios_version_prefix").get<std::string>();
  if (j.contains("android_new_min_app_version")) {
    map.android_new_min_app_version = j.at("android_new_min_app_version").get<int>();
  }
  return map;
}

ColumnMap ColumnMap::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open column map " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json_text(buffer.str());
}

std::string ColumnMap::to_json_text() const {
  nlohmann::json j;
  j["incident"] = {{"timestamp", incident.timestamp},
                   {"lat", incident.lat},
                   {"lon", incident.lon},
                   {"incident_type", incident.incident_type},
                   {"description", incident.description}};
  j["sensor"] = {{"timestamp", sensor.timestamp}, {"lat", sensor.lat},     {"lon", sensor.lon},
                 {"gps_accuracy", sensor.gps_accuracy}, {"acc_x", sensor.acc_x}, {"acc_y", sensor.acc_y},
                 {"acc_z", sensor.acc_z},         {"gyr_a", sensor.gyr_a}, {"gyr_b", sensor.gyr_b},
                 {"gyr_c", sensor.gyr_c}};
  j["ios_version_prefix"] = ios_version_prefix;
  j["android_new_min_app_version"] = android_new_min_app_version;
  return j.dump(2);
}

DatasetPartition classify_partition(std::string_view version_line, const ColumnMap& columns) {
  version_line = trim(version_line);
  if (!columns.ios_version_prefix.empty() && version_line.starts_with(columns.ios_version_prefix)) {
    return DatasetPartition::Ios;
  }
  const auto hash = version_line.find('#');
  std::string_view app = version_line.substr(0, hash);
  int app_version = 0;
  auto [ptr, ec] = std::from_chars(app.data(), app.data() + app.size(), app_version);
  if (ec != std::errc() || ptr != app.data() + app.size()) return DatasetPartition::AndroidOld;
  return app_version >= columns.android_new_min_app_version ? DatasetPartition::AndroidNew
                                                            : DatasetPartition::AndroidOld;
}

RawRide parse_ride(std::string_view text, const ColumnMap& columns, ParseDiagnostics* diagnostics, std::string ride_id) {
  ParseDiagnostics local;
  ParseDiagnostics& diag = diagnostics ? *diagnostics : local;
  diag = ParseDiagnostics{};

  const auto lines = split_lines(text);
  std::size_t separator = lines.size();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_separator(lines[i].text)) {
      separator = i;
      break;
    }
  }
  if (separator == lines.size()) {
    throw RideParseError(RideParseError::Kind::MissingSeparator, "no separator line of at least 10 '=' characters");
  }

  const Section incident_section = read_section(lines, 0, separator, "incident");
  const Section sensor_section = read_section(lines, separator + 1, lines.size(), "ride");

  RawRide ride;
  ride.ride_id = std::move(ride_id);
  ride.incident_version = incident_section.version;
  ride.ride_version = sensor_section.version;
  ride.partition = classify_partition(ride.ride_version, columns);

  {
    const auto& h = incident_section.header;
    const int c_ts = find_column(h, columns.incident.timestamp);
    const int c_lat = find_column(h, columns.incident.lat);
    const int c_lon = find_column(h, columns.incident.lon);
    const int c_type = find_column(h, columns.incident.incident_type);
    const int c_desc = find_column(h, columns.incident.description);
    if (c_ts < 0) throw RideParseError(RideParseError::Kind::MissingHeader, "incident header lacks a timestamp column");
    note_ignored(h, {c_ts, c_lat, c_lon, c_type, c_desc}, diag);

    for (const Line& line : incident_section.rows) {
      const auto cells = split_csv_line(line.text);
      IncidentRecord incident;
      double lat = 0.0;
      double lon = 0.0;
      std::int64_t type = 0;
      if (!parse_int64(cell(cells, c_ts), incident.timestamp) || incident.timestamp <= 0) {
        diag.unparsable_rows.push_back({line.number, "incident timestamp"});
        continue;
      }
      if (!parse_double(cell(cells, c_lat), lat) || !parse_double(cell(cells, c_lon), lon)) {
        diag.unparsable_rows.push_back({line.number, "incident coordinates"});
        continue;
      }
      const auto type_cell = cell(cells, c_type);
      if (!type_cell.empty() && !parse_int64(type_cell, type)) {
        diag.unparsable_rows.push_back({line.number, "incident type"});
        continue;
      }
      incident.lat = lat;
      incident.lon = lon;
      incident.incident_type = static_cast<int>(type);
      const auto desc = cell(cells, c_desc);
      if (!desc.empty()) incident.description = std::string(desc);
      ride.incidents.push_back(std::move(incident));
    }
  }

  {
    const auto& h = sensor_section.header;
    const auto& m = columns.sensor;
    const std::array<int, 10> c{find_column(h, m.timestamp), find_column(h, m.lat),   find_column(h, m.lon),
                                find_column(h, m.gps_accuracy), find_column(h, m.acc_x), find_column(h, m.acc_y),
                                find_column(h, m.acc_z),     find_column(h, m.gyr_a), find_column(h, m.gyr_b),
                                find_column(h, m.gyr_c)};
    if (c[0] < 0 || c[4] < 0 || c[5] < 0 || c[6] < 0) {
      throw RideParseError(RideParseError::Kind::MissingHeader,
                           "ride header lacks timestamp or accelerometer columns");
    }
    note_ignored(h, std::vector<int>(c.begin(), c.end()), diag);

    for (const Line& line : sensor_section.rows) {
      const auto cells = split_csv_line(line.text);
      SensorRecord r;
      if (!parse_int64(cell(cells, c[0]), r.timestamp) || r.timestamp <= 0) {
        diag.unparsable_rows.push_back({line.number, "sensor timestamp"});
        continue;
      }
      const auto ax = cell(cells, c[4]);
      const auto ay = cell(cells, c[5]);
      const auto az = cell(cells, c[6]);
      if (ax.empty() || ay.empty() || az.empty()) {
        ++diag.rows_missing_accelerometer;
        continue;
      }
      if (!parse_double(ax, r.acc_x) || !parse_double(ay, r.acc_y) || !parse_double(az, r.acc_z)) {
        diag.unparsable_rows.push_back({line.number, "accelerometer value"});
        continue;
      }
      if (!parse_optional(cell(cells, c[1]), r.lat) || !parse_optional(cell(cells, c[2]), r.lon) ||
          !parse_optional(cell(cells, c[3]), r.gps_accuracy) || !parse_optional(cell(cells, c[7]), r.gyr_a) ||
          !parse_optional(cell(cells, c[8]), r.gyr_b) || !parse_optional(cell(cells, c[9]), r.gyr_c)) {
        diag.unparsable_rows.push_back({line.number, "optional numeric value"});
        continue;
      }
      const bool any_gps = r.lat || r.lon || r.gps_accuracy;
      if (any_gps && !r.has_fix()) {
        ++diag.incomplete_gps_rows;
        r.clear_fix();
      }
      if (!r.has_gyro()) {
        r.gyr_a.reset();
        r.gyr_b.reset();
        r.gyr_c.reset();
      }
      ride.records.push_back(r);
    }
  }

  if (ride.records.empty()) throw RideParseError(RideParseError::Kind::NoRecords, "ride section has no usable rows");
  return ride;
}

RawRide read_ride_file(const fs::path& path, const ColumnMap& columns, ParseDiagnostics* diagnostics) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open ride file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_ride(buffer.str(), columns, diagnostics, path.stem().string());
}

std::string write_ride(const RawRide& ride) {
  const ColumnMap canonical;
  std::string out;
  out += ride.incident_version + '\n';
  out += canonical.incident.timestamp[0] + ',' + canonical.incident.lat[0] + ',' + canonical.incident.lon[0] + ',' +
         canonical.incident.incident_type[0] + ',' + canonical.incident.description[0] + '\n';
  for (const auto& inc : ride.incidents) {
    out += std::to_string(inc.timestamp);
    out += ',' + format_double(inc.lat) + ',' + format_double(inc.lon) + ',' + std::to_string(inc.incident_type) + ',';
    if (inc.description) out += csv_escape(*inc.description);
    out += '\n';
  }
  out += "=========================\n";
  out += ride.ride_version + '\n';
  const auto& s = canonical.sensor;
  out += s.lat[0] + ',' + s.lon[0] + ',' + s.acc_x[0] + ',' + s.acc_y[0] + ',' + s.acc_z[0] + ',' + s.timestamp[0] + ',' +
         s.gps_accuracy[0] + ',' + s.gyr_a[0] + ',' + s.gyr_b[0] + ',' + s.gyr_c[0] + '\n';
  for (const auto& r : ride.records) {
    out += format_optional(r.lat) + ',' + format_optional(r.lon) + ',' + format_double(r.acc_x) + ',' +
           format_double(r.acc_y) + ',' + format_double(r.acc_z) + ',' + std::to_string(r.timestamp) + ',' +
           format_optional(r.gps_accuracy) + ',' + format_optional(r.gyr_a) + ',' + format_optional(r.gyr_b) + ',' +
           format_optional(r.gyr_c) + '\n';
  }
  return out;
}

void write_ride_file(const fs::path& path, const RawRide& ride) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write ride file " + path.string());
  out << write_ride(ride);
}

std::string ride_id_for(const fs::path& root, const fs::path& file) {
  fs::path rel = fs::relative(file, root);
  rel.replace_extension();
  return rel.generic_string();
}

std::vector<fs::path> list_ride_files(const fs::path& dir, const std::optional<std::string>& region) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw DirNotFound("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (auto it = fs::recursive_directory_iterator(dir, fs::directory_options::skip_permission_denied, ec);
       it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) break;
    const auto& entry = *it;
    if (!entry.is_regular_file()) continue;
    const auto name = entry.path().filename().string();
    if (name.empty() || name.front() == '.' || entry.path().extension() == ".json") continue;
    if (region && !region->empty()) {
      bool match = name.starts_with(*region);
      for (const auto& part : fs::relative(entry.path().parent_path(), dir)) {
        if (part.string() == *region) match = true;
      }
      if (!match) continue;
    }
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

ScanResult partition_dataset(const fs::path& dir, const std::optional<std::string>& region, const ColumnMap& columns) {
  ScanResult result;
  for (const auto& file : list_ride_files(dir, region)) {
    try {
      const RawRide ride = read_ride_file(file, columns);
      result.rides.emplace_back(ride_id_for(dir, file), ride.partition);
    } catch (const std::exception&) {
      result.unreadable.push_back(file);
    }
  }
  return result;
}

}  // namespace cyclesense
