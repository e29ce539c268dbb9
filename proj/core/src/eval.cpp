#include "cyclesense/eval.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>

#include "text_util.hpp"

namespace cyclesense {

std::size_t ScoredSet::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

void ScoredSet::validate() const {
  if (labels.size() != scores.size()) throw std::invalid_argument("scores and labels differ in length");
  if (!ride_ids.empty() && ride_ids.size() != scores.size()) throw std::invalid_argument("ride_ids length mismatch");
  if (!bucket_indices.empty() && bucket_indices.size() != scores.size()) {
    throw std::invalid_argument("bucket_indices length mismatch");
  }
  for (auto l : labels) {
    if (l > 1) throw std::invalid_argument("labels must be 0 or 1");
  }
}

namespace {

std::vector<std::size_t> order_by_score(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::pair<std::uint64_t, std::uint64_t> class_counts(std::span<const std::uint8_t> labels) {
  std::uint64_t pos = 0;
  for (auto l : labels) {
    if (l > 1) throw std::invalid_argument("labels must be 0 or 1");
    pos += l;
  }
  const std::uint64_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw SingleClass("AUC needs at least one positive and one negative");
  return {pos, neg};
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  const auto [pos, neg] = class_counts(labels);
  const auto order = order_by_score(scores, labels);
  // Walk tie groups from the top; twice the Mann-Whitney U stays an integer.
  std::uint64_t twice_u = 0;
  std::uint64_t neg_below = neg;
  for (std::size_t i = 0; i < order.size();) {
    std::uint64_t p = 0;
    std::uint64_t q = 0;
    std::size_t j = i;
    for (; j < order.size() && scores[order[j]] == scores[order[i]]; ++j) (labels[order[j]] ? p : q) += 1;
    neg_below -= q;
    twice_u += 2 * p * neg_below + p * q;
    i = j;
  }
  const double u = static_cast<double>(twice_u / 2) + (twice_u % 2 ? 0.5 : 0.0);
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double roc_auc(const ScoredSet& set) {
  set.validate();
  return roc_auc(set.scores, set.labels);
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  const auto [pos, neg] = class_counts(labels);
  const auto order = order_by_score(scores, labels);
  std::vector<RocPoint> points{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == threshold; ++i) (labels[order[i]] ? tp : fp) += 1;
    points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                      static_cast<double>(tp) / static_cast<double>(pos), threshold});
  }
  return points;
}

void write_report_csv(const std::filesystem::path& path, std::span<const ReportRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "model,auc,n_pos,n_neg\n";
  for (const auto& r : rows) out << r.model << ',' << detail::format_double(r.auc) << ',' << r.n_pos << ',' << r.n_neg << '\n';
}

void write_roc_csv(const std::filesystem::path& path, std::span<const RocPoint> points) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "fpr,tpr,threshold\n";
  for (const auto& p : points) {
    out << detail::format_double(p.fpr) << ',' << detail::format_double(p.tpr) << ','
        << detail::format_double(p.threshold) << '\n';
  }
}

std::vector<ReportRow> comparison_report(std::span<const ModelScores> models, std::span<const std::uint8_t> labels,
                                         const std::filesystem::path& out_dir) {
  std::vector<ReportRow> rows;
  const auto [pos, neg] = class_counts(labels);
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  for (const auto& m : models) {
    if (m.scores.size() != labels.size()) {
      throw std::invalid_argument("model " + m.model + " scored a different bucket set");
    }
    rows.push_back({m.model, roc_auc(m.scores, labels), pos, neg});
    if (!out_dir.empty()) write_roc_csv(out_dir / ("roc_" + m.model + ".csv"), roc_curve(m.scores, labels));
  }
  if (!out_dir.empty()) write_report_csv(out_dir / "report.csv", rows);
  return rows;
}

}  // namespace cyclesense
