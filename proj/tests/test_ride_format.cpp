#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "cyclesense/ride_format.hpp"

using namespace cyclesense;
namespace fs = std::filesystem;

namespace {

const char* kCanonical =
    "72#2\n"
    "ts,lat,lon,incident,desc\n"
    "1600000001000,52.52,13.405,2,close pass\n"
    "=========================\n"
    "72#2\n"
    "lat,lon,X,Y,Z,timeStamp,acc,a,b,c\n"
    "52.52,13.405,0.1,0.2,9.81,1600000000000,4.5,0.01,0.02,0.03\n"
    ",,0.2,0.1,9.7,1600000000250,,0.01,0.02,0.03\n"
    ",,0.3,0,9.9,1600000000500,,,,\n";

RawRide random_ride(std::mt19937_64& rng, int index) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RawRide r;
  r.ride_id = "gen/" + std::to_string(index);
  const bool ios = rng() % 3 == 0;
  r.incident_version = ios ? "i7#1" : std::to_string(60 + rng() % 30) + "#1";
  r.ride_version = r.incident_version;
  r.partition = classify_partition(r.ride_version);
  std::int64_t t = 1'600'000'000'000 + static_cast<std::int64_t>(rng() % 1'000'000);
  const std::size_t n = 1 + rng() % 40;
  for (std::size_t i = 0; i < n; ++i) {
    SensorRecord s;
    s.timestamp = t;
    t += 150 + static_cast<std::int64_t>(rng() % 200);
    s.acc_x = u(rng) * 3;
    s.acc_y = u(rng) * 1e-3;
    s.acc_z = 9.81 + u(rng);
    if (rng() % 4 == 0) {
      s.lat = 52.5 + u(rng) * 0.01;
      s.lon = 13.4 + u(rng) * 0.01;
      s.gps_accuracy = 3.0 + std::abs(u(rng)) * 10;
    }
    if (rng() % 5 != 0) {
      s.gyr_a = u(rng);
      s.gyr_b = u(rng) * 1e5;
      s.gyr_c = u(rng);
    }
    r.records.push_back(s);
  }
  const std::size_t k = rng() % 3;
  for (std::size_t i = 0; i < k; ++i) {
    IncidentRecord inc;
    inc.timestamp = r.records[rng() % n].timestamp;
    inc.lat = 52.5 + u(rng);
    inc.lon = 13.4 + u(rng);
    inc.incident_type = static_cast<int>(rng() % 9);
    if (rng() % 2) inc.description = rng() % 2 ? "door \"opened\", suddenly" : "car";
    r.incidents.push_back(inc);
  }
  return r;
}

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("cyclesense_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("canonical fixture parses") {
  ParseDiagnostics diag;
  const auto ride = parse_ride(kCanonical, {}, &diag);
  REQUIRE(ride.incidents.size() == 1);
  REQUIRE(ride.records.size() == 3);
  CHECK(ride.incidents[0].incident_type == 2);
  CHECK(ride.incidents[0].description == std::optional<std::string>("close pass"));
  CHECK(ride.records[0].has_fix());
  CHECK_FALSE(ride.records[1].has_fix());
  CHECK_FALSE(ride.records[2].has_gyro());
  CHECK(ride.partition == DatasetPartition::AndroidNew);
  CHECK(diag.unparsable_rows.empty());
  CHECK(diag.rows_missing_accelerometer == 0);
}

TEST_CASE("missing separator and header") {
  std::string text = kCanonical;
  text.replace(text.find("====="), 25, "---");
  try {
    parse_ride(text);
    FAIL("expected MissingSeparator");
  } catch (const RideParseError& e) {
    CHECK(e.kind() == RideParseError::Kind::MissingSeparator);
  }
  try {
    parse_ride("72#2\n=========================\n72#2\n");
    FAIL("expected MissingHeader");
  } catch (const RideParseError& e) {
    CHECK(e.kind() == RideParseError::Kind::MissingHeader);
  }
}

TEST_CASE("bad rows are collected, rows without accelerometer dropped") {
  const std::string text =
      "72#2\nts,lat,lon,incident,desc\n"
      "==========\n"
      "72#2\nlat,lon,X,Y,Z,timeStamp,acc,a,b,c,extra\n"
      ",,0.1,0.2,9.8,1000,,,,,x\n"
      ",,abc,0.2,9.8,1100,,,,,x\n"
      ",,,0.2,9.8,1200,,,,,x\n"
      "52.1,,0.1,0.2,9.8,1300,,,,,x\n";
  ParseDiagnostics diag;
  const auto ride = parse_ride(text, {}, &diag);
  CHECK(ride.records.size() == 2);
  REQUIRE(diag.unparsable_rows.size() == 1);
  CHECK(diag.unparsable_rows[0].line == 7);
  CHECK(diag.rows_missing_accelerometer == 1);
  CHECK(diag.incomplete_gps_rows == 1);
  CHECK_FALSE(ride.records[1].has_fix());
  CHECK(diag.ignored_columns == std::vector<std::string>{"extra"});
}

TEST_CASE("column map aliases") {
  const std::string text =
      "72#2\ntime,latitude,longitude,kind\n1000,1,2,3\n"
      "==========\n"
      "72#2\nt,ax,ay,az\n1000,0.1,0.2,0.3\n";
  ColumnMap map = ColumnMap::from_json_text(R"({
    "incident": {"timestamp": ["time"], "lat": ["latitude"], "lon": ["longitude"], "incident_type": ["kind"]},
    "sensor": {"timestamp": ["t"], "acc_x": ["ax"], "acc_y": ["ay"], "acc_z": ["az"]}
  })");
  const auto ride = parse_ride(text, map);
  REQUIRE(ride.records.size() == 1);
  CHECK(ride.records[0].acc_z == 0.3);
  REQUIRE(ride.incidents.size() == 1);
  CHECK(ride.incidents[0].incident_type == 3);
  CHECK(ColumnMap::from_json_text(map.to_json_text()).sensor.acc_x == map.sensor.acc_x);
}

TEST_CASE("write_ride canonical output") {
  SUBCASE("empty incident list gives a header-only incident section") {
    RawRide r;
    r.incident_version = "72#1";
    r.ride_version = "72#1";
    SensorRecord s;
    s.timestamp = 1000;
    s.acc_x = 1;
    s.acc_y = 2;
    s.acc_z = 3;
    r.records.push_back(s);
    const auto text = write_ride(r);
    CHECK(text.starts_with("72#1\nts,lat,lon,incident,desc\n=========================\n"));
    SUBCASE("no GPS gives empty cells") { CHECK(text.find("\n,,1,2,3,1000,,,,\n") != std::string::npos); }
  }
  SUBCASE("write of the fixture is stable") {
    const auto once = write_ride(parse_ride(kCanonical));
    CHECK(write_ride(parse_ride(once)) == once);
    CHECK(once == kCanonical);
  }
}

TEST_CASE("round trip over generated rides") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 50; ++i) {
    const auto ride = random_ride(rng, i);
    const auto text = write_ride(ride);
    ParseDiagnostics diag;
    const auto parsed = parse_ride(text, {}, &diag, ride.ride_id);
    CHECK(parsed == ride);
    CHECK(write_ride(parsed) == text);
    CHECK(diag.unparsable_rows.empty());
  }
}

TEST_CASE("parsing arbitrary bytes never crashes") {
  std::mt19937_64 rng(77);
  const std::string alphabet = "0123456789.,-=#\n\r\" abcXYZ";
  std::size_t rides = 0;
  std::size_t errors = 0;
  for (int i = 0; i < 2000; ++i) {
    std::string text;
    if (i % 2 == 0) {
      text = kCanonical;
      for (int k = 0; k < 5; ++k) text[rng() % text.size()] = static_cast<char>(rng() % 256);
    } else {
      const std::size_t n = rng() % 300;
      for (std::size_t k = 0; k < n; ++k) text += alphabet[rng() % alphabet.size()];
    }
    try {
      parse_ride(text);
      ++rides;
    } catch (const RideParseError&) {
      ++errors;
    }
  }
  CHECK(rides + errors == 2000);
}

TEST_CASE("partition classification") {
  CHECK(classify_partition("72#2") == DatasetPartition::AndroidNew);
  CHECK(classify_partition("71#2") == DatasetPartition::AndroidOld);
  CHECK(classify_partition("i12#3") == DatasetPartition::Ios);
  ColumnMap map;
  map.android_new_min_app_version = 80;
  CHECK(classify_partition("72#2", map) == DatasetPartition::AndroidOld);
  CHECK(parse_partition("android-new") == DatasetPartition::AndroidNew);
  CHECK_FALSE(parse_partition("windows").has_value());
}

TEST_CASE("partition_dataset over fixtures") {
  const auto dir = fresh_dir("scan");
  auto write = [&](const fs::path& rel, const std::string& version) {
    std::string text = kCanonical;
    for (std::size_t pos = 0; (pos = text.find("72#2", pos)) != std::string::npos; pos += version.size()) {
      text.replace(pos, 4, version);
    }
    fs::create_directories((dir / rel).parent_path());
    std::ofstream(dir / rel) << text;
  };
  write("Berlin/a.csv", "72#2");
  write("Berlin/b.csv", "80#1");
  write("Munich/c.csv", "i3#1");
  std::ofstream(dir / "Munich" / "broken.csv") << "no separator here\n";

  const auto all = partition_dataset(dir);
  std::map<DatasetPartition, int> counts;
  for (const auto& [id, p] : all.rides) ++counts[p];
  CHECK(counts[DatasetPartition::AndroidNew] == 2);
  CHECK(counts[DatasetPartition::Ios] == 1);
  CHECK(all.unreadable.size() == 1);

  const auto berlin = partition_dataset(dir, "Berlin");
  REQUIRE(berlin.rides.size() == 2);
  for (const auto& [id, p] : berlin.rides) CHECK(id.starts_with("Berlin/"));

  CHECK(partition_dataset(fresh_dir("empty")).rides.empty());
  CHECK_THROWS_AS(partition_dataset(dir / "missing"), DirNotFound);
  fs::remove_all(dir);
}
