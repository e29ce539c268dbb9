#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cyclesense {

class SingleClass : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Parallel lists of scores and labels with optional provenance.
struct ScoredSet {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::vector<std::string> ride_ids;
  std::vector<std::uint32_t> bucket_indices;

  std::size_t size() const { return scores.size(); }
  std::size_t positives() const;
  /// Throws std::invalid_argument on unequal lengths or labels other than 0/1.
  void validate() const;
};

struct RocPoint {
  double fpr = 0;
  double tpr = 0;
  double threshold = 0;  // items scoring >= threshold are called positive
};

/// P(score_pos > score_neg) + 0.5 P(tie) from a rank statistic over tie
/// groups. Throws SingleClass unless both labels occur.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);
double roc_auc(const ScoredSet& set);

/// One point per distinct score (descending), preceded by (0, 0) at +inf.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct ReportRow {
  std::string model;
  double auc = 0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

struct ModelScores {
  std::string model;
  std::vector<double> scores;
};

/// One row per model over a shared label vector. When `out_dir` is non-empty
/// writes report.csv and roc_<model>.csv there.
std::vector<ReportRow> comparison_report(std::span<const ModelScores> models, std::span<const std::uint8_t> labels,
                                         const std::filesystem::path& out_dir = {});

void write_report_csv(const std::filesystem::path& path, std::span<const ReportRow> rows);
void write_roc_csv(const std::filesystem::path& path, std::span<const RocPoint> points);

}  // namespace cyclesense
