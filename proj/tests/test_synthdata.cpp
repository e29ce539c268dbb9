#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cyclesense/eval.hpp"
#include "cyclesense/models/heuristic.hpp"
#include "cyclesense/synthdata.hpp"
#include "test_support.hpp"

using namespace cyclesense;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<LabeledBucket> all_buckets(const PreparedSplits& s) {
  auto out = s.train;
  out.insert(out.end(), s.val.begin(), s.val.end());
  out.insert(out.end(), s.test.begin(), s.test.end());
  return out;
}

}  // namespace

TEST_CASE("generator settings validation") {
  SynthSpec s;
  CHECK_NOTHROW(s.validate());
  s.incident_rate = -0.1;
  CHECK_THROWS(s.validate());
  s = {};
  s.min_duration_s = 20;
  CHECK_THROWS(s.validate());
  s = {};
  s.max_duration_s = 25;
  CHECK_THROWS(s.validate());
}

TEST_CASE("zero incident rate gives only negative buckets") {
  SynthSpec s;
  s.n_rides = 20;
  s.incident_rate = 0.0;
  const auto buckets = all_buckets(testing_support::synthetic_splits(s));
  REQUIRE(buckets.size() >= 60);
  for (const auto& b : buckets) CHECK(b.label == 0);
}

TEST_CASE("same seed writes byte-identical files") {
  SynthSpec s;
  s.n_rides = 5;
  const auto root = std::filesystem::temp_directory_path() / "cyclesense_synth";
  std::filesystem::remove_all(root);
  const auto a = write_dataset(s, root / "a");
  const auto b = write_dataset(s, root / "b");
  REQUIRE(a.size() == 5);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::filesystem::relative(a[i], root / "a") == synthetic_ride_path(s, i));
    CHECK(slurp(a[i]) == slurp(b[i]));
  }
  CHECK(synthetic_ride_path(s, 3) == std::filesystem::path("Berlin/android-new/ride_00003.csv"));
  s.seed = 43;
  const auto c = write_dataset(s, root / "c");
  CHECK(slurp(a[0]) != slurp(c[0]));
  std::filesystem::remove_all(root);
}

TEST_CASE("generated files parse without dropped rows and keep their incidents") {
  SynthSpec s;
  s.n_rides = 40;
  s.incident_rate = 2.0;
  s.swerve_fraction = 0.5;
  const auto root = std::filesystem::temp_directory_path() / "cyclesense_synth_parse";
  std::filesystem::remove_all(root);
  write_dataset(s, root);
  std::size_t incidents = 0;
  for (std::size_t i = 0; i < s.n_rides; ++i) {
    const auto synth = generate_ride(s, i);
    ParseDiagnostics diag;
    const auto text = slurp(root / synthetic_ride_path(s, i));
    const auto ride = parse_ride(text, {}, &diag);
    CHECK(diag.unparsable_rows.empty());
    CHECK(diag.rows_missing_accelerometer == 0);
    CHECK(diag.incomplete_gps_rows == 0);
    CHECK(ride.records.size() == synth.ride.records.size());
    CHECK(ride.incidents.size() == synth.injected.size());
    CHECK(classify_partition(ride.ride_version) == s.partition);

    const auto prepared = prepare_ride(ride);
    REQUIRE(prepared.has_value());
    const auto buckets = bucketize_and_label(prepared->ride, prepared->incidents);
    const std::int64_t end = prepared->ride.start_ms + static_cast<std::int64_t>(buckets.size() * kBucketSamples) * kGridStepMs;
    CHECK(prepared->incidents.size() == synth.injected.size());
    for (const auto& inc : synth.injected) {
      CHECK(inc.timestamp >= prepared->ride.start_ms);
      CHECK(inc.timestamp < end);
      const auto bucket = static_cast<std::size_t>((inc.timestamp - prepared->ride.start_ms) / 10'000);
      CHECK(buckets[bucket].label == 1);
      ++incidents;
    }
  }
  CHECK(incidents > 40);
  std::filesystem::remove_all(root);
}

TEST_CASE("strong incidents are separable by the heuristic") {
  SynthSpec s;
  s.n_rides = 120;
  s.amplitude = 10.0;
  const auto buckets = all_buckets(testing_support::synthetic_splits(s));
  const auto scores = heuristic_scores(buckets);
  const auto labels = testing_support::labels_of(buckets);
  const double auc = roc_auc(scores, labels);
  MESSAGE("heuristic AUC at 10 sigma: " << auc);
  CHECK(auc >= 0.9);
}
