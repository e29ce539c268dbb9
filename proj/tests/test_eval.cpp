#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "cyclesense/eval.hpp"

using namespace cyclesense;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double wins = 0;
  double pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

struct RandomSet {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
};

RandomSet random_set(std::mt19937_64& rng, std::size_t max_n = 1000) {
  RandomSet r;
  const std::size_t n = 2 + rng() % (max_n - 1);
  const bool coarse = rng() % 2;  // coarse scores produce many ties
  std::normal_distribution<double> d;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t y = rng() % 4 == 0;
    double s = d(rng) + (y ? 0.7 : 0.0);
    if (coarse) s = std::round(s * 2.0) / 2.0;
    r.scores.push_back(s);
    r.labels.push_back(y);
  }
  r.labels[0] = 1;
  r.labels[1] = 0;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("auc examples") {
  const std::vector<std::uint8_t> y{0, 0, 1, 1};
  CHECK(roc_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, y) == 1.0);
  CHECK(roc_auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, y) == 0.0);
  CHECK(roc_auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, y) == 0.5);
  CHECK(roc_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, y) == 0.75);
  CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{1, 1}), SingleClass);
  CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1}, std::vector<std::uint8_t>{1, 0}), std::invalid_argument);
  ScoredSet set{{0.2, 0.7}, {0, 1}, {"a", "a"}, {0, 1}};
  CHECK(roc_auc(set) == 1.0);
  CHECK(set.positives() == 1);
  ScoredSet bad{{0.2, 0.7}, {0, 2}, {}, {}};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("auc equals the pairwise oracle exactly") {
  std::mt19937_64 rng(100);
  for (int trial = 0; trial < 200; ++trial) {
    const auto r = random_set(rng);
    CHECK(roc_auc(r.scores, r.labels) == pairwise_auc(r.scores, r.labels));
  }
}

TEST_CASE("auc invariances") {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    const auto r = random_set(rng, 300);
    const double auc = roc_auc(r.scores, r.labels);
    std::vector<double> warped;
    for (double s : r.scores) warped.push_back(std::exp(3.0 * s) - 7.0);
    CHECK(roc_auc(warped, r.labels) == auc);
    std::vector<std::uint8_t> flipped;
    for (auto y : r.labels) flipped.push_back(1 - y);
    CHECK(roc_auc(r.scores, flipped) == doctest::Approx(1.0 - auc).epsilon(1e-12));
  }
}

TEST_CASE("roc curve is a monotone staircase") {
  std::mt19937_64 rng(102);
  for (int trial = 0; trial < 50; ++trial) {
    const auto r = random_set(rng, 200);
    const auto pts = roc_curve(r.scores, r.labels);
    REQUIRE(pts.size() >= 2);
    CHECK(pts.front().fpr == 0.0);
    CHECK(pts.front().tpr == 0.0);
    CHECK(pts.front().threshold == std::numeric_limits<double>::infinity());
    CHECK(pts.back().fpr == 1.0);
    CHECK(pts.back().tpr == 1.0);
    double area = 0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      CHECK(pts[i].fpr >= pts[i - 1].fpr);
      CHECK(pts[i].tpr >= pts[i - 1].tpr);
      CHECK(pts[i].threshold < pts[i - 1].threshold);
      area += (pts[i].fpr - pts[i - 1].fpr) * (pts[i].tpr + pts[i - 1].tpr) / 2.0;
    }
    CHECK(area == doctest::Approx(roc_auc(r.scores, r.labels)).epsilon(1e-12));
  }
  const auto pts = roc_curve(std::vector<double>{0.9, 0.3, 0.3, 0.1}, std::vector<std::uint8_t>{1, 1, 0, 0});
  REQUIRE(pts.size() == 4);
  CHECK(pts[1].tpr == 0.5);
  CHECK(pts[1].fpr == 0.0);
  CHECK(pts[2].tpr == 1.0);
  CHECK(pts[2].fpr == 0.5);
  CHECK(pts[2].threshold == 0.3);
}

TEST_CASE("comparison report") {
  const std::vector<std::uint8_t> y{0, 1, 0, 1, 0};
  const std::vector<ModelScores> models{{"heuristic", {0.1, 0.5, 0.4, 0.3, 0.2}},
                                        {"fcn", {0.1, 0.9, 0.2, 0.8, 0.3}},
                                        {"cyclesense", {0.1, 0.9, 0.2, 0.8, 0.3}}};
  const auto dir = std::filesystem::temp_directory_path() / "cyclesense_eval_report";
  std::filesystem::remove_all(dir);
  const auto rows = comparison_report(models, y, dir);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].model == "heuristic");
  CHECK(rows[0].auc == doctest::Approx(5.0 / 6.0));
  CHECK(rows[1].auc == rows[2].auc);
  CHECK(rows[1].n_pos == 2);
  CHECK(rows[1].n_neg == 3);
  CHECK(slurp(dir / "report.csv") ==
        "model,auc,n_pos,n_neg\nheuristic,0.8333333333333334,2,3\nfcn,1,2,3\ncyclesense,1,2,3\n");
  const auto roc = slurp(dir / "roc_fcn.csv");
  CHECK(roc.starts_with("fpr,tpr,threshold\n0,0,inf\n0,0.5,0.9\n"));
  CHECK(std::filesystem::exists(dir / "roc_heuristic.csv"));
  CHECK(std::filesystem::exists(dir / "roc_cyclesense.csv"));
  std::filesystem::remove_all(dir);
  const std::vector<ModelScores> short_scores{{"x", {0.1}}};
  CHECK_THROWS(comparison_report(short_scores, y));
}
