#include "cyclesense/models/heuristic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace cyclesense {

void HeuristicConfig::validate() const {
  if (window < 2 || window > kBucketSamples) throw std::invalid_argument("heuristic window must be in [2, 100] samples");
  if (top_jumps == 0 || top_jumps >= window) throw std::invalid_argument("heuristic top_jumps must be in [1, window)");
}

AxisScale fit_axis_scale(std::span<const LabeledBucket> buckets) {
  AxisScale out;
  std::vector<double> steps;
  steps.reserve(buckets.size() * (kBucketSamples - 1));
  for (std::size_t a = 0; a < 3; ++a) {
    steps.clear();
    for (const auto& b : buckets) {
      for (std::size_t t = 0; t + 1 < kBucketSamples; ++t) {
        steps.push_back(std::abs(static_cast<double>(b.at(t + 1, AccX + a)) - b.at(t, AccX + a)));
      }
    }
    if (steps.empty()) continue;
    const auto mid = steps.begin() + static_cast<std::ptrdiff_t>(steps.size() / 2);
    std::nth_element(steps.begin(), mid, steps.end());
    double s = *mid;
    if (s == 0.0) {
      for (double v : steps) s += v;
      s /= static_cast<double>(steps.size());
    }
    out.step[a] = s > 0.0 ? s : 1.0;
  }
  return out;
}

double heuristic_raw_score(const LabeledBucket& bucket, const AxisScale& scale, const HeuristicConfig& config) {
  config.validate();
  const std::size_t diffs = kBucketSamples - 1;
  std::array<std::array<double, kBucketSamples - 1>, 3> jump{};
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t t = 0; t < diffs; ++t) {
      jump[a][t] = std::abs(static_cast<double>(bucket.at(t + 1, AccX + a)) - bucket.at(t, AccX + a)) / scale.step[a];
    }
  }
  const std::size_t k = config.top_jumps;
  std::vector<double> top(k);
  double best = 0.0;
  for (std::size_t start = 0; start + config.window <= kBucketSamples; ++start) {
    for (std::size_t a = 0; a < 3; ++a) {
      const auto first = jump[a].begin() + static_cast<std::ptrdiff_t>(start);
      std::partial_sort_copy(first, first + static_cast<std::ptrdiff_t>(config.window - 1), top.begin(), top.end(),
                             std::greater<>());
      double mean = 0.0;
      for (double v : top) mean += v;
      best = std::max(best, mean / static_cast<double>(k));
    }
  }
  return best;
}

std::vector<double> min_max_normalize(std::vector<double> values) {
  if (values.empty()) return values;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double min = *lo;
  const double span = *hi - *lo;
  for (auto& v : values) v = span > 0 ? (v - min) / span : 0.0;
  return values;
}

std::vector<double> heuristic_scores(std::span<const LabeledBucket> buckets, const HeuristicConfig& config) {
  const AxisScale scale = fit_axis_scale(buckets);
  std::vector<double> raw;
  raw.reserve(buckets.size());
  for (const auto& b : buckets) raw.push_back(heuristic_raw_score(b, scale, config));
  return min_max_normalize(std::move(raw));
}

std::vector<double> heuristic_score(const UniformRide& ride, const HeuristicConfig& config) {
  const auto buckets = bucketize_and_label(ride, {});
  return heuristic_scores(buckets, config);
}

}  // namespace cyclesense
