#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyclesense/nn/tape.hpp"

namespace cyclesense::nn {

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Relative errors use max(|analytic|, |numeric|, floor) as denominator so
  /// gradients that are zero up to rounding do not blow up the ratio.
  double floor = 1e-6;
  /// Coordinates checked per tensor; 0 checks all of them.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;  // "name[index]" of the worst coordinate
  bool passed = false;
};

/// Compares the tape gradient of a scalar loss with central finite
/// differences for every coordinate of `targets`. `loss` must build the
/// whole graph on the tape it is given and return a one-element variable;
/// it is called once for the analytic pass and twice per coordinate.
inline GradCheckReport grad_check(const std::function<Var<double>(Tape<double>&)>& loss,
                                  const std::vector<Parameter<double>*>& targets, const GradCheckOptions& options = {}) {
  for (auto* p : targets) p->zero_grad();
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape(options.seed);
    Var<double> out = loss(tape);
    if (out.value().size() != 1) throw ShapeMismatch("grad_check: loss must be a scalar");
    tape.backward(out);
    for (auto* p : targets) analytic.push_back(p->grad);
  }
  auto evaluate = [&]() {
    Tape<double> tape(options.seed);
    return loss(tape).value()[0];
  };

  GradCheckReport report;
  std::mt19937_64 pick(options.seed ^ 0x9e3779b97f4a7c15ULL);
  for (std::size_t k = 0; k < targets.size(); ++k) {
    auto* p = targets[k];
    std::vector<std::size_t> coords(p->value.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coordinates > 0 && coords.size() > options.max_coordinates) {
      std::shuffle(coords.begin(), coords.end(), pick);
      coords.resize(options.max_coordinates);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double saved = p->value[i];
      p->value[i] = saved + options.step;
      const double plus = evaluate();
      p->value[i] = saved - options.step;
      const double minus = evaluate();
      p->value[i] = saved;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double a = analytic[k][i];
      const std::string where = p->name + "[" + std::to_string(i) + "]";
      if (!std::isfinite(a) || !std::isfinite(numeric)) {
        throw NonFiniteGradient("non-finite gradient at " + where);
      }
      const double abs_err = std::abs(a - numeric);
      const double rel_err = abs_err / std::max({std::abs(a), std::abs(numeric), options.floor});
      report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
      if (rel_err > report.max_relative_error || report.worst.empty()) {
        report.max_relative_error = std::max(report.max_relative_error, rel_err);
        report.worst = where;
      }
      ++report.coordinates;
    }
  }
  report.passed = report.max_relative_error <= options.tolerance;
  return report;
}

}  // namespace cyclesense::nn
