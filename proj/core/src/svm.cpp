// SPDX-License-Identifier: Apache-2.0
#include "singlem/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "singlem/error.hpp"

namespace singlem {

Matrix Matrix::select_rows(std::span<const std::size_t> idx) const {
  Matrix out(idx.size(), cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto src = row(idx[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Matrix Matrix::select_cols(std::size_t offset, std::size_t count) const {
  if (offset + count > cols) throw Error(ErrorCode::ShapeMismatch, "column slice out of range");
  Matrix out(rows, count);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto src = row(r).subspan(offset, count);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

std::vector<double> dot_products(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw Error(ErrorCode::ShapeMismatch, "feature dimensions differ");
  std::vector<double> out(a.rows * b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* x = a.data.data() + i * a.cols;
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* y = b.data.data() + j * b.cols;
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += x[k] * y[k];
      out[i * b.rows + j] = s;
    }
  }
  return out;
}

std::vector<double> squared_distances(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw Error(ErrorCode::ShapeMismatch, "feature dimensions differ");
  std::vector<double> out(a.rows * b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* x = a.data.data() + i * a.cols;
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* y = b.data.data() + j * b.cols;
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) {
        const double d = x[k] - y[k];
        s += d * d;
      }
      out[i * b.rows + j] = s;
    }
  }
  return out;
}

namespace {

constexpr double kTau = 1e-12;

// Second-order working-set SMO for the C-SVC dual on rows `idx` of the gram.
BinaryMachine solve_binary(std::span<const double> gram, std::size_t n_all, const std::vector<std::size_t>& idx,
                           const std::vector<double>& y, double C, double tol, std::size_t max_iter) {
  const std::size_t n = idx.size();
  auto K = [&](std::size_t a, std::size_t b) { return gram[idx[a] * n_all + idx[b]]; };
  std::vector<double> alpha(n, 0.0), G(n, -1.0), diag(n);
  for (std::size_t t = 0; t < n; ++t) diag[t] = K(t, t);
  auto in_up = [&](std::size_t t) { return (y[t] > 0 && alpha[t] < C) || (y[t] < 0 && alpha[t] > 0); };
  auto in_low = [&](std::size_t t) { return (y[t] > 0 && alpha[t] > 0) || (y[t] < 0 && alpha[t] < C); };

  std::size_t iter = 0;
  for (;; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    std::size_t i = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (in_up(t) && -y[t] * G[t] > gmax) {
        gmax = -y[t] * G[t];
        i = t;
      }
    }
    double gmin = std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    std::size_t j = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (!in_low(t)) continue;
      const double v = -y[t] * G[t];
      gmin = std::min(gmin, v);
      if (i < n && v < gmax) {
        const double b = gmax - v;
        double a = diag[i] + diag[t] - 2.0 * K(i, t);
        if (a <= 0) a = kTau;
        const double obj = -(b * b) / a;
        if (obj < best) {
          best = obj;
          j = t;
        }
      }
    }
    if (i == n || j == n || gmax - gmin < tol) break;
    if (iter >= max_iter) {
      throw Error(ErrorCode::NoConvergence, "SMO exceeded " + std::to_string(max_iter) + " iterations (violation " +
                                                std::to_string(gmax - gmin) + ")");
    }

    const double kij = K(i, j);
    const double old_i = alpha[i], old_j = alpha[j];
    if (y[i] != y[j]) {
      double quad = diag[i] + diag[j] - 2.0 * kij;
      if (quad <= 0) quad = kTau;
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) {
          alpha[j] = 0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = -diff;
      }
      if (diff > 0) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = C - diff;
        }
      } else if (alpha[j] > C) {
        alpha[j] = C;
        alpha[i] = C + diff;
      }
    } else {
      double quad = diag[i] + diag[j] - 2.0 * kij;
      if (quad <= 0) quad = kTau;
      const double delta = (G[i] - G[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = sum - C;
        }
        if (alpha[j] > C) {
          alpha[j] = C;
          alpha[i] = sum - C;
        }
      } else {
        if (alpha[j] < 0) {
          alpha[j] = 0;
          alpha[i] = sum;
        }
        if (alpha[i] < 0) {
          alpha[i] = 0;
          alpha[j] = sum;
        }
      }
    }
    const double di = alpha[i] - old_i, dj = alpha[j] - old_j;
    for (std::size_t t = 0; t < n; ++t) {
      G[t] += y[t] * (y[i] * K(i, t) * di + y[j] * K(j, t) * dj);
    }
  }

  // rho from free vectors, else the midpoint of the feasible interval.
  double free_sum = 0.0;
  std::size_t n_free = 0;
  double ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * G[t];
    if (alpha[t] >= C) {
      if (y[t] < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (alpha[t] <= 0) {
      if (y[t] > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      free_sum += yg;
      ++n_free;
    }
  }
  const double rho = n_free > 0 ? free_sum / static_cast<double>(n_free) : (ub + lb) / 2.0;

  BinaryMachine m;
  m.bias = -rho;
  m.iterations = iter;
  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] > 0) {
      m.support.push_back(idx[t]);
      m.coef.push_back(y[t] * alpha[t]);
    }
  }
  return m;
}

}  // namespace

KernelSvm fit_kernel_svm(std::span<const double> gram, std::span<const int> labels, double C, double tol,
                         std::size_t max_iter) {
  const std::size_t n = labels.size();
  if (gram.size() != n * n) throw Error(ErrorCode::LengthMismatch, "gram size does not match label count");
  if (!(C > 0.0)) throw Error(ErrorCode::InvalidSpec, "C must be positive");
  const std::set<int> uniq(labels.begin(), labels.end());
  if (uniq.size() < 2) throw Error(ErrorCode::SingleClass, "training data has fewer than two classes");

  KernelSvm svm;
  svm.classes.assign(uniq.begin(), uniq.end());
  for (std::size_t a = 0; a < svm.classes.size(); ++a) {
    for (std::size_t b = a + 1; b < svm.classes.size(); ++b) {
      std::vector<std::size_t> idx;
      std::vector<double> y;
      for (std::size_t t = 0; t < n; ++t) {
        if (labels[t] == svm.classes[a]) {
          idx.push_back(t);
          y.push_back(1.0);
        } else if (labels[t] == svm.classes[b]) {
          idx.push_back(t);
          y.push_back(-1.0);
        }
      }
      BinaryMachine m = solve_binary(gram, n, idx, y, C, tol, max_iter);
      m.positive = svm.classes[a];
      m.negative = svm.classes[b];
      svm.machines.push_back(std::move(m));
    }
  }
  return svm;
}

namespace {

int vote(const KernelSvm& model, std::span<const double> decisions) {
  const std::size_t k = model.classes.size();
  std::vector<int> votes(k, 0);
  std::vector<double> score(k, 0.0);
  auto pos = [&](int label) {
    return static_cast<std::size_t>(std::lower_bound(model.classes.begin(), model.classes.end(), label) -
                                    model.classes.begin());
  };
  for (std::size_t m = 0; m < model.machines.size(); ++m) {
    const auto p = pos(model.machines[m].positive), q = pos(model.machines[m].negative);
    const double f = decisions[m];
    ++votes[f > 0 ? p : q];
    score[p] += f;
    score[q] -= f;
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < k; ++c) {
    if (votes[c] > votes[best] || (votes[c] == votes[best] && score[c] > score[best])) best = c;
  }
  return model.classes[best];
}

}  // namespace

std::vector<int> predict_kernel_svm(const KernelSvm& model, std::span<const double> cross, std::size_t n_train) {
  if (n_train == 0 || cross.size() % n_train != 0) throw Error(ErrorCode::LengthMismatch, "cross kernel size");
  const std::size_t m = cross.size() / n_train;
  std::vector<int> out(m);
  std::vector<double> dec(model.machines.size());
  for (std::size_t q = 0; q < m; ++q) {
    const double* row = cross.data() + q * n_train;
    for (std::size_t k = 0; k < model.machines.size(); ++k) {
      const auto& mach = model.machines[k];
      double f = mach.bias;
      for (std::size_t s = 0; s < mach.support.size(); ++s) f += mach.coef[s] * row[mach.support[s]];
      dec[k] = f;
    }
    out[q] = vote(model, dec);
  }
  return out;
}

double SvmModel::kernel(std::span<const double> a, std::span<const double> b) const {
  double s = 0.0;
  if (params_.kernel == KernelKind::Linear) {
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
  }
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return std::exp(-params_.gamma * s);
}

SvmModel SvmModel::fit(const Matrix& x, std::span<const int> labels, const SvmParams& params) {
  if (x.rows != labels.size()) throw Error(ErrorCode::LengthMismatch, "feature rows vs labels");
  if (x.rows == 0) throw Error(ErrorCode::EmptyInput, "no training samples");
  if (params.kernel == KernelKind::Rbf && !(params.gamma > 0.0)) {
    throw Error(ErrorCode::InvalidSpec, "gamma must be positive");
  }
  SvmModel model;
  model.params_ = params;
  model.train_ = x;
  std::vector<double> gram;
  if (params.kernel == KernelKind::Linear) {
    gram = dot_products(x, x);
  } else {
    gram = squared_distances(x, x);
    for (auto& v : gram) v = std::exp(-params.gamma * v);
  }
  model.svm_ = fit_kernel_svm(gram, labels, params.C, params.tol, params.max_iter);
  return model;
}

std::vector<double> SvmModel::decision_values(std::span<const double> x) const {
  if (x.size() != train_.cols) throw Error(ErrorCode::ShapeMismatch, "feature dimension differs from training");
  std::vector<double> cache(train_.rows, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> out;
  for (const auto& m : svm_.machines) {
    double f = m.bias;
    for (std::size_t s = 0; s < m.support.size(); ++s) {
      double& k = cache[m.support[s]];
      if (std::isnan(k)) k = kernel(x, train_.row(m.support[s]));
      f += m.coef[s] * k;
    }
    out.push_back(f);
  }
  return out;
}

int SvmModel::predict(std::span<const double> x) const { return vote(svm_, decision_values(x)); }

std::vector<int> SvmModel::predict(const Matrix& x) const {
  std::vector<int> out(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) out[r] = predict(x.row(r));
  return out;
}

std::size_t SvmModel::support_count() const {
  std::set<std::size_t> all;
  for (const auto& m : svm_.machines) all.insert(m.support.begin(), m.support.end());
  return all.size();
}

}  // namespace singlem
