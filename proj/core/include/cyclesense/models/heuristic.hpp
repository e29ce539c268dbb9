#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "cyclesense/preprocess.hpp"

namespace cyclesense {

/// Jump detector adapted to produce a continuous score. Within each window
/// of `window` samples and for each accelerometer axis, the `top_jumps`
/// largest adjacent absolute differences are averaged; a window scores the
/// maximum over axes and a bucket the maximum over all windows fully inside
/// it. Scores are min-max normalized over the scored set.
struct HeuristicConfig {
  std::size_t window = 30;  // 3 s on the 100 ms grid
  std::size_t top_jumps = 2;

  void validate() const;
};

/// Jumps on each accelerometer axis are measured relative to the typical
/// adjacent step of that axis over the scored set (its median absolute
/// difference), so positive per-axis rescaling of the input leaves the
/// ranking unchanged.
struct AxisScale {
  std::array<double, 3> step{1, 1, 1};
};

/// Median adjacent |difference| per axis; falls back to the mean, then to 1,
/// when that is zero.
AxisScale fit_axis_scale(std::span<const LabeledBucket> buckets);

/// Unnormalized score of one bucket.
double heuristic_raw_score(const LabeledBucket& bucket, const AxisScale& scale, const HeuristicConfig& config = {});

/// Scores of a whole split in [0, 1]; a split whose raw scores are all equal
/// scores 0 everywhere.
std::vector<double> heuristic_scores(std::span<const LabeledBucket> buckets, const HeuristicConfig& config = {});

/// Per-bucket scores of one resampled ride, normalized over the ride.
std::vector<double> heuristic_score(const UniformRide& ride, const HeuristicConfig& config = {});

/// Min-max normalization to [0, 1]; a constant input maps to all zeros.
std::vector<double> min_max_normalize(std::vector<double> values);

}  // namespace cyclesense
