// SPDX-License-Identifier: Apache-2.0
#include "singlem/metrics.hpp"

#include <algorithm>

#include "singlem/error.hpp"

namespace singlem {

namespace {

void check_inputs(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size()) {
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(y_true.size()) + " labels vs " + std::to_string(y_pred.size()) + " predictions");
  }
  if (y_true.empty()) throw Error(ErrorCode::EmptyInput, "no labels");
}

}  // namespace

std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred,
                                                       std::size_t n_classes) {
  check_inputs(y_true, y_pred);
  std::vector<std::vector<std::size_t>> cm(n_classes, std::vector<std::size_t>(n_classes, 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || y_pred[i] < 0 || static_cast<std::size_t>(y_true[i]) >= n_classes ||
        static_cast<std::size_t>(y_pred[i]) >= n_classes) {
      throw Error(ErrorCode::InvalidSpec, "label outside [0, " + std::to_string(n_classes) + ")");
    }
    ++cm[static_cast<std::size_t>(y_true[i])][static_cast<std::size_t>(y_pred[i])];
  }
  return cm;
}

Metrics compute_metrics(std::span<const int> y_true, std::span<const int> y_pred) {
  check_inputs(y_true, y_pred);
  const int top = std::max(*std::max_element(y_true.begin(), y_true.end()),
                           *std::max_element(y_pred.begin(), y_pred.end()));
  return compute_metrics(y_true, y_pred, static_cast<std::size_t>(std::max(top, 0) + 1));
}

Metrics compute_metrics(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes) {
  const auto cm = confusion_matrix(y_true, y_pred, n_classes);
  const auto n = static_cast<double>(y_true.size());
  std::vector<double> row(n_classes, 0.0), col(n_classes, 0.0);
  double diag = 0.0;
  for (std::size_t i = 0; i < n_classes; ++i) {
    diag += static_cast<double>(cm[i][i]);
    for (std::size_t j = 0; j < n_classes; ++j) {
      row[i] += static_cast<double>(cm[i][j]);
      col[j] += static_cast<double>(cm[i][j]);
    }
  }
  Metrics m;
  m.accuracy = diag / n;
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const double denom = row[c] + col[c];
    if (denom > 0.0) f1_sum += 2.0 * static_cast<double>(cm[c][c]) / denom;
  }
  m.macro_f1 = f1_sum / static_cast<double>(n_classes);
  double pe = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) pe += (row[c] / n) * (col[c] / n);
  // Both raters constant on the same class: agreement is perfect.
  m.kappa = pe >= 1.0 ? (m.accuracy == 1.0 ? 1.0 : 0.0) : (m.accuracy - pe) / (1.0 - pe);
  return m;
}

}  // namespace singlem
