// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace singlem {

enum class KernelKind { Rbf, Linear };

struct SvmParams {
  KernelKind kernel = KernelKind::Rbf;
  double C = 1.0;
  double gamma = 1.0;  // rbf only: k(x, y) = exp(-gamma |x - y|^2)
  double tol = 1e-3;   // maximal KKT violation at convergence
  std::size_t max_iter = 1'000'000;
};

/// Dense row-major matrix of samples.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  Matrix select_rows(std::span<const std::size_t> idx) const;
  Matrix select_cols(std::size_t offset, std::size_t count) const;
};

/// Pairwise squared Euclidean distances (a.rows x b.rows).
std::vector<double> squared_distances(const Matrix& a, const Matrix& b);
/// Pairwise dot products (a.rows x b.rows).
std::vector<double> dot_products(const Matrix& a, const Matrix& b);

/// One binary machine: f(x) = sum_i coef_i k(x, sv_i) + bias, positive -> `positive`.
struct BinaryMachine {
  int positive = 0;
  int negative = 0;
  std::vector<std::size_t> support;  // indices into the training rows
  std::vector<double> coef;          // y_i * alpha_i
  double bias = 0.0;
  std::size_t iterations = 0;
};

/// One-vs-one ensemble over a precomputed kernel.
struct KernelSvm {
  std::vector<int> classes;  // ascending
  std::vector<BinaryMachine> machines;
};

/// gram is n x n (row-major) over the training rows. Throws SingleClass,
/// LengthMismatch, NoConvergence.
KernelSvm fit_kernel_svm(std::span<const double> gram, std::span<const int> labels, double C, double tol,
                         std::size_t max_iter);

/// cross is m x n_train: k(query_a, train_b). Majority vote; ties go to the
/// larger summed decision value, then to the smaller label.
std::vector<int> predict_kernel_svm(const KernelSvm& model, std::span<const double> cross, std::size_t n_train);

class SvmModel {
 public:
  static SvmModel fit(const Matrix& x, std::span<const int> labels, const SvmParams& params);

  int predict(std::span<const double> x) const;
  std::vector<int> predict(const Matrix& x) const;
  /// Decision values of every binary machine, in machine order.
  std::vector<double> decision_values(std::span<const double> x) const;

  const SvmParams& params() const { return params_; }
  const std::vector<int>& classes() const { return svm_.classes; }
  std::size_t dim() const { return train_.cols; }
  std::size_t support_count() const;

 private:
  SvmParams params_;
  Matrix train_;
  KernelSvm svm_;
  double kernel(std::span<const double> a, std::span<const double> b) const;
};

}  // namespace singlem
