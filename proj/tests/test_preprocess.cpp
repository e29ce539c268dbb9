#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "cyclesense/preprocess.hpp"

using namespace cyclesense;

namespace {

SensorRecord rec(std::int64_t t, double ax = 0.0) {
  SensorRecord r;
  r.timestamp = t;
  r.acc_x = ax;
  return r;
}

RawRide ride_with_times(std::vector<std::int64_t> times) {
  RawRide r;
  r.ride_id = "r";
  for (auto t : times) r.records.push_back(rec(t));
  return r;
}

// Sort-based quantile, written independently of the library.
double sorted_quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const double lo = std::floor(h);
  const auto i = static_cast<std::size_t>(lo);
  if (i + 1 >= v.size()) return v.back();
  return v[i] + (h - lo) * (v[i + 1] - v[i]);
}

}  // namespace

TEST_CASE("clean_ride sorting and gap rule") {
  SUBCASE("unsorted timestamps get sorted") {
    auto result = clean_ride(ride_with_times({3000, 1000, 2000}));
    REQUIRE(std::holds_alternative<CleanRide>(result));
    const auto& ride = std::get<CleanRide>(result);
    CHECK(ride.records[0].timestamp == 1000);
    CHECK(ride.records[2].timestamp == 3000);
  }
  SUBCASE("6001 ms gap is rejected") {
    auto result = clean_ride(ride_with_times({1000, 7001}));
    REQUIRE(std::holds_alternative<Rejected>(result));
    CHECK(std::get<Rejected>(result).reason.gap_ms == 6001);
  }
  SUBCASE("6000 ms gap is accepted") { CHECK(std::holds_alternative<CleanRide>(clean_ride(ride_with_times({1000, 7000})))); }
  SUBCASE("duplicates dropped") {
    auto ride = std::get<CleanRide>(clean_ride(ride_with_times({1000, 1000, 1100})));
    CHECK(ride.records.size() == 2);
    CHECK(ride.flags.duplicate_timestamps_dropped == 1);
  }
}

TEST_CASE("tukey bounds") {
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(quantile(v, 0.25) == doctest::Approx(1.75));
  CHECK(quantile(v, 0.75) == doctest::Approx(3.25));
  const auto [lo, hi] = tukey_bounds(v, 1.5);
  CHECK(lo == doctest::Approx(-0.5));
  CHECK(hi == doctest::Approx(5.5));

  const std::vector<double> same(7, 2.5);
  CHECK(tukey_bounds(same, 3.0) == std::pair{2.5, 2.5});
  CHECK_THROWS_AS(tukey_bounds(std::vector<double>{}, 1.5), EmptyInput);
  CHECK_THROWS_AS(tukey_bounds(v, 0.0), std::invalid_argument);
}

TEST_CASE("tukey bounds equal the sorting oracle on random sets") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 200;
    std::vector<double> v(n);
    std::normal_distribution<double> d(0.0, 1.0 + trial % 7);
    for (auto& x : v) x = trial % 5 == 0 ? std::round(d(rng)) : d(rng);
    const double k = trial % 2 ? 1.5 : 3.0;
    const double q25 = sorted_quantile(v, 0.25);
    const double q75 = sorted_quantile(v, 0.75);
    const auto [lo, hi] = tukey_bounds(v, k);
    CHECK(std::abs(lo - (q25 - k * (q75 - q25))) <= 1e-12);
    CHECK(std::abs(hi - (q75 + k * (q75 - q25))) <= 1e-12);
  }
}

TEST_CASE("filter_outliers") {
  auto make = [](std::vector<double> accuracy) {
    CleanRide ride;
    std::int64_t t = 1000;
    for (double a : accuracy) {
      SensorRecord r = rec(t);
      r.lat = 52.0 + static_cast<double>(t) * 1e-7;
      r.lon = 13.0;
      r.gps_accuracy = a;
      ride.records.push_back(r);
      t += 3000;
    }
    return ride;
  };
  SUBCASE("a 50 m fix among 3 m fixes is cleared") {
    auto out = filter_outliers(make({3, 3, 3, 3, 50}));
    CHECK(out.flags.accuracy_outliers == 1);
    CHECK_FALSE(out.records[4].has_fix());
    for (int i = 0; i < 4; ++i) CHECK(out.records[i].has_fix());
  }
  SUBCASE("equal accuracies keep every fix") {
    auto in = make({5, 5, 5, 5});
    auto out = filter_outliers(in);
    CHECK(out.flags.accuracy_outliers == 0);
    CHECK(out.records == in.records);
    CHECK(out.flags.velocity_outliers == 0);
  }
  SUBCASE("no GPS at all flags the ride") {
    CleanRide ride;
    ride.records = {rec(0), rec(100)};
    auto out = filter_outliers(ride);
    CHECK(out.flags.no_gps);
    CHECK(out.velocities.empty());
  }
}

TEST_CASE("gps_to_velocity") {
  SUBCASE("3 s northward step") {
    const std::vector<GpsFix> fixes{{0, 52.5200, 13.4}, {3000, 52.5203, 13.4}};
    auto v = gps_to_velocity(fixes);
    REQUIRE(v.samples.size() == 1);
    CHECK(*v.samples[0].vel_lat == doctest::Approx(0.0001).epsilon(1e-9));
    CHECK(*v.samples[0].vel_lon == 0.0);
    CHECK(v.samples[0].timestamp == 0);
  }
  SUBCASE("stationary") {
    const std::vector<GpsFix> fixes{{0, 1, 2}, {1000, 1, 2}, {2000, 1, 2}};
    for (const auto& s : gps_to_velocity(fixes).samples) {
      CHECK(*s.vel_lat == 0.0);
      CHECK(*s.vel_lon == 0.0);
    }
  }
  SUBCASE("degenerate pair is skipped") {
    const std::vector<GpsFix> fixes{{0, 1, 2}, {0, 1.1, 2}, {1000, 1.2, 2}};
    auto v = gps_to_velocity(fixes);
    CHECK(v.degenerate_pairs == 1);
    CHECK(v.samples.size() == 1);
  }
  SUBCASE("integrated velocity telescopes to the displacement") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1e-4, 1e-4);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<GpsFix> fixes;
      std::int64_t t = 0;
      double lat = 52.5, lon = 13.4;
      for (int i = 0; i < 50; ++i) {
        fixes.push_back({t, lat, lon});
        t += 1 + static_cast<std::int64_t>(rng() % 5000);
        lat += u(rng);
        lon += u(rng);
      }
      const auto v = gps_to_velocity(fixes);
      double dlat = 0, dlon = 0;
      for (std::size_t i = 0; i < v.samples.size(); ++i) {
        const double dt = static_cast<double>(fixes[i + 1].timestamp - fixes[i].timestamp) / 1000.0;
        dlat += *v.samples[i].vel_lat * dt;
        dlon += *v.samples[i].vel_lon * dt;
      }
      CHECK(std::abs(dlat - (fixes.back().lat - fixes.front().lat)) < 1e-12);
      CHECK(std::abs(dlon - (fixes.back().lon - fixes.front().lon)) < 1e-12);
    }
  }
}

TEST_CASE("resample_uniform") {
  SUBCASE("linear midpoint") {
    CleanRide ride;
    ride.records = {rec(0, 0.0), rec(200, 2.0)};
    auto u = resample_uniform(ride);
    REQUIRE(u.samples.size() == 3);
    CHECK(u.samples[1][AccX] == doctest::Approx(1.0));
  }
  SUBCASE("knots reproduced exactly, grid spacing exact") {
    CleanRide ride;
    for (int i = 0; i < 20; ++i) ride.records.push_back(rec(5000 + i * 100, std::sin(i)));
    auto u = resample_uniform(ride);
    REQUIRE(u.samples.size() == 20);
    for (int i = 0; i < 20; ++i) {
      CHECK(u.samples[i][AccX] == std::sin(i));
      CHECK(u.timestamp_at(i) == 5000 + i * 100);
    }
  }
  SUBCASE("grid ends at or before the last record") {
    CleanRide ride;
    ride.records = {rec(0), rec(250)};
    auto u = resample_uniform(ride);
    CHECK(u.samples.size() == 3);
    CHECK(u.timestamp_at(2) <= 250);
  }
  SUBCASE("random piecewise-linear signals match the analytic line") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      const double a = std::uniform_real_distribution<double>(-3, 3)(rng);
      const double b = std::uniform_real_distribution<double>(-3, 3)(rng);
      CleanRide ride;
      std::int64_t t = 1'000'000;
      for (int i = 0; i < 60; ++i) {
        ride.records.push_back(rec(t, a * static_cast<double>(t - 1'000'000) / 1000.0 + b));
        t += 37 + static_cast<std::int64_t>(rng() % 400);
      }
      auto u = resample_uniform(ride);
      for (std::size_t i = 0; i < u.samples.size(); ++i) {
        const double expected = a * static_cast<double>(u.timestamp_at(i) - 1'000'000) / 1000.0 + b;
        CHECK(std::abs(u.samples[i][AccX] - expected) < 1e-12 * std::max(1.0, std::abs(expected)) * 100);
      }
    }
  }
  SUBCASE("clamping outside a channel's span and zero for empty channels") {
    CleanRide ride;
    ride.records = {rec(0), rec(100), rec(200), rec(300)};
    ride.velocities = {{100, 0.5, 0.25}, {200, 1.5, std::nullopt}};
    auto u = resample_uniform(ride);
    CHECK(u.samples[0][VelLat] == 0.5);
    CHECK(u.samples[3][VelLat] == 1.5);
    CHECK(u.samples[3][VelLon] == 0.25);
    for (const auto& s : u.samples) CHECK(s[GyrA] == 0.0);
  }
}

TEST_CASE("max-abs normalization") {
  UniformRide ride;
  ride.samples.resize(2);
  ride.samples[0][AccX] = -4;
  ride.samples[1][AccX] = 2;
  const std::vector<UniformRide> fit{ride};
  const auto stats = fit_maxabs(fit);
  CHECK(stats.max_abs[AccX] == 4.0);
  CHECK(stats.max_abs[GyrB] == 1.0);
  const auto out = apply_maxabs(ride, stats);
  CHECK(out.samples[0][AccX] == -1.0);
  CHECK(out.samples[1][AccX] == 0.5);
  CHECK(out.samples[0][GyrB] == 0.0);
  CHECK(NormalizationStats::from_json_text(stats.to_json_text()).max_abs == stats.max_abs);

  std::mt19937_64 rng(9);
  std::vector<UniformRide> rides(4);
  for (auto& r : rides) {
    r.samples.resize(30 + rng() % 30);
    for (auto& s : r.samples) {
      for (std::size_t c = 0; c < kChannels - 1; ++c) s[c] = std::normal_distribution<double>(0, 1 + c)(rng);
    }
  }
  const auto st = fit_maxabs(rides);
  for (std::size_t c = 0; c < kChannels - 1; ++c) {
    double m = 0;
    for (const auto& r : rides) {
      for (const auto& s : apply_maxabs(r, st).samples) m = std::max(m, std::abs(s[c]));
    }
    CHECK(m == 1.0);
  }
}

TEST_CASE("bucketize and label") {
  UniformRide ride;
  ride.ride_id = "x";
  ride.start_ms = 10'000;
  ride.samples.resize(250);
  SUBCASE("remainder dropped") {
    auto buckets = bucketize_and_label(ride, {});
    CHECK(buckets.size() == 2);
    for (const auto& b : buckets) CHECK(b.samples.size() == 800);
  }
  SUBCASE("incident at sample 150") {
    const std::vector<IncidentRecord> inc{{ride.timestamp_at(150), 0, 0, 1, std::nullopt}};
    auto buckets = bucketize_and_label(ride, inc);
    CHECK(buckets[0].label == 0);
    CHECK(buckets[1].label == 1);
  }
  SUBCASE("brute-force membership scan over random placements") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<IncidentRecord> inc;
      const std::size_t k = rng() % 4;
      for (std::size_t i = 0; i < k; ++i) {
        inc.push_back({ride.start_ms - 2000 + static_cast<std::int64_t>(rng() % 30'000), 0, 0, 1, std::nullopt});
      }
      const auto buckets = bucketize_and_label(ride, inc);
      std::size_t positives = 0;
      bool any_retained = false;
      for (std::size_t b = 0; b < buckets.size(); ++b) {
        bool expected = false;
        for (std::size_t s = b * 100; s < b * 100 + 100; ++s) {
          for (const auto& e : inc) {
            if (e.timestamp >= ride.timestamp_at(s) && e.timestamp < ride.timestamp_at(s) + kGridStepMs) expected = true;
          }
        }
        any_retained = any_retained || expected;
        CHECK(buckets[b].label == (expected ? 1 : 0));
        positives += buckets[b].label;
      }
      if (any_retained) CHECK(positives >= 1);
      CHECK(positives <= inc.size() + buckets.size());
    }
  }
}

TEST_CASE("incident snapping") {
  CleanRide ride;
  ride.records = {rec(1000), rec(2000), rec(30'000)};
  ride.incidents = {{1400, 0, 0, 1, std::nullopt}, {15'000, 0, 0, 1, std::nullopt}, {39'000, 0, 0, 1, std::nullopt}};
  snap_incidents(ride);
  REQUIRE(ride.incidents.size() == 2);  // 15 s is 13 s from its nearest record
  CHECK(ride.incidents[0].timestamp == 1000);
  CHECK(ride.incidents[1].timestamp == 30'000);
  CHECK(ride.flags.incidents_dropped == 1);
}

TEST_CASE("prepare_ride is deterministic and respects the gap rule") {
  RawRide raw;
  raw.ride_id = "det";
  std::mt19937_64 rng(1);
  std::int64_t t = 1'000'000;
  for (int i = 0; i < 200; ++i) {
    SensorRecord r = rec(t, std::normal_distribution<double>()(rng));
    if (i % 12 == 0) {
      r.lat = 52.5 + i * 1e-5;
      r.lon = 13.4;
      r.gps_accuracy = 4;
    }
    raw.records.push_back(r);
    t += 200 + static_cast<std::int64_t>(rng() % 100);
  }
  const auto a = prepare_ride(raw);
  const auto b = prepare_ride(raw);
  REQUIRE(a.has_value());
  CHECK(a->ride.samples == b->ride.samples);
  const auto ca = std::get<CleanRide>(clean_ride(raw));
  for (std::size_t i = 1; i < ca.records.size(); ++i) {
    CHECK(ca.records[i].timestamp - ca.records[i - 1].timestamp <= kMaxGapMs);
  }
  raw.records.back().timestamp += 10'000;
  Rejected why;
  CHECK_FALSE(prepare_ride(raw, &why).has_value());
  CHECK(why.reason.gap_ms > kMaxGapMs);
}
