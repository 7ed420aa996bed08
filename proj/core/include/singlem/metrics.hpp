// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

namespace singlem {

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double kappa = 0.0;
};

/// Row = true class, column = predicted class. Labels must be in [0, n_classes).
std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred,
                                                       std::size_t n_classes);

/// Classes are 0..max(label). A class with neither true nor predicted
/// samples contributes an F1 of 0 to the macro average.
/// Throws LengthMismatch / EmptyInput.
Metrics compute_metrics(std::span<const int> y_true, std::span<const int> y_pred);
Metrics compute_metrics(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes);

}  // namespace singlem
