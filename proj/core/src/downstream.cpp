// SPDX-License-Identifier: Apache-2.0
#include "singlem/downstream.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "singlem/error.hpp"
#include "singlem/kv_file.hpp"
#include "singlem/rng.hpp"
#include "singlem/tokenizer.hpp"

namespace singlem {

void Trial::validate() const {
  if (channels.empty()) throw Error(ErrorCode::EmptyInput, "trial has no channels");
  if (channel_names.size() != channels.size()) throw Error(ErrorCode::InvalidSpec, "channel names vs channel data");
  if (label < 0) throw Error(ErrorCode::InvalidSpec, "negative label");
  for (const auto& ch : channels) {
    if (ch.size() != channels.front().size()) throw Error(ErrorCode::InvalidSpec, "channels differ in length");
  }
}

double Trial::duration_s() const {
  return channels.empty() ? 0.0 : static_cast<double>(channels.front().size()) / sampling_rate_hz;
}

namespace {
constexpr int kMinTrialTaps = 65;
}  // namespace

Trial make_trial(const Recording& rec, const dsp::PreprocessConfig& cfg) {
  if (!rec.label) throw Error(ErrorCode::InvalidSpec, "recording of " + rec.subject_id + " has no label");
  Trial t;
  t.subject_id = rec.subject_id;
  t.label = *rec.label;
  t.sampling_rate_hz = cfg.target_rate_hz;
  for (const auto& ch : rec.channels) {
    t.channel_names.push_back(ch.name);
    if (ch.scaled && rec.sampling_rate_hz == cfg.target_rate_hz) {
      t.channels.push_back(ch.samples);
      continue;
    }
    // Short trials get the longest odd filter that still fits filtfilt's padding.
    dsp::PreprocessConfig local = cfg;
    const auto n = ch.samples.size();
    if (n <= 3 * static_cast<std::size_t>(local.num_taps)) {
      int taps = static_cast<int>((n - 1) / 3);
      if (taps % 2 == 0) --taps;
      if (taps < kMinTrialTaps) {
        throw Error(ErrorCode::SignalTooShort, rec.subject_id + "/" + ch.name + ": " + std::to_string(n) +
                                                   " samples is too short to filter");
      }
      local.num_taps = taps;
    }
    try {
      auto segments = dsp::preprocess_channel(ch.samples, rec.sampling_rate_hz, local);
      if (segments.size() != 1) {
        throw Error(ErrorCode::InvalidSpec, "trial preprocessing must not split the signal");
      }
      t.channels.push_back(std::move(segments.front()));
    } catch (const Error& e) {
      throw Error(e.code(), rec.subject_id + "/" + ch.name + ": " + e.what());
    }
  }
  t.validate();
  return t;
}

TrialFeatures extract_features(const Trial& trial, const Encoder& encoder) {
  trial.validate();
  const EncoderConfig& ec = encoder.config();
  TokenizerParams tp;
  tp.token_len = ec.token_len;
  const std::size_t n_ch = trial.channels.size();
  std::vector<double> data;
  std::size_t L = 0;
  for (std::size_t c = 0; c < n_ch; ++c) {
    auto toks = tokenize(trial.channels[c], tp);
    L = toks.size() / ec.token_len;
    data.insert(data.end(), toks.begin(), toks.end());
  }
  NoGradGuard no_grad;
  const Tensor r = encoder.encode(Tensor::from_values({n_ch, L, ec.token_len}, std::move(data)));
  TrialFeatures f;
  f.subject_id = trial.subject_id;
  f.label = trial.label;
  f.vector.assign(r.values().begin(), r.values().end());
  const std::size_t block = L * ec.repr_dim;
  for (std::size_t c = 0; c < n_ch; ++c) f.channel_slices.push_back({trial.channel_names[c], c * block, block});
  return f;
}

std::vector<std::size_t> top_fourier_bins(std::span<const double> x, std::size_t count) {
  const auto spec = dsp::rfft(x);
  const std::size_t available = x.size() / 2;
  if (count > available) {
    throw Error(ErrorCode::TooFewBins, "need " + std::to_string(count) + " bins, only " + std::to_string(available) +
                                           " positive-frequency bins");
  }
  std::vector<std::size_t> bins(available);
  std::iota(bins.begin(), bins.end(), std::size_t{1});
  std::stable_sort(bins.begin(), bins.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(spec[a]) > std::abs(spec[b]); });
  bins.resize(count);
  return bins;
}

TrialFeatures fourier_features(const Trial& trial, double k_per_second) {
  trial.validate();
  if (!(k_per_second > 0.0)) throw Error(ErrorCode::InvalidSpec, "k must be positive");
  const auto count = static_cast<std::size_t>(std::llround(k_per_second * trial.duration_s()));
  if (count == 0) throw Error(ErrorCode::TooFewBins, "trial too short for one coefficient");
  TrialFeatures f;
  f.subject_id = trial.subject_id;
  f.label = trial.label;
  for (std::size_t c = 0; c < trial.channels.size(); ++c) {
    const auto& x = trial.channels[c];
    const auto bins = top_fourier_bins(x, count);
    const auto spec = dsp::rfft(x);
    f.channel_slices.push_back({trial.channel_names[c], f.vector.size(), 2 * count});
    for (auto b : bins) f.vector.push_back(std::abs(spec[b]));
    for (auto b : bins) f.vector.push_back(std::arg(spec[b]));
  }
  return f;
}

Standardizer Standardizer::fit(const Matrix& x) {
  if (x.rows == 0) throw Error(ErrorCode::EmptyInput, "cannot standardize zero rows");
  Standardizer s;
  s.mean.assign(x.cols, 0.0);
  s.scale.assign(x.cols, 0.0);
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t c = 0; c < x.cols; ++c) s.mean[c] += x.data[r * x.cols + c];
  }
  for (auto& m : s.mean) m /= static_cast<double>(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t c = 0; c < x.cols; ++c) {
      const double d = x.data[r * x.cols + c] - s.mean[c];
      s.scale[c] += d * d;
    }
  }
  for (auto& v : s.scale) {
    v = std::sqrt(v / static_cast<double>(x.rows));
    if (!(v > 1e-12)) v = 1.0;
  }
  return s;
}

Matrix Standardizer::apply(const Matrix& x) const {
  if (x.cols != mean.size()) throw Error(ErrorCode::ShapeMismatch, "standardizer dimension");
  Matrix out = x;
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t c = 0; c < x.cols; ++c) {
      double& v = out.data[r * x.cols + c];
      v = (v - mean[c]) / scale[c];
    }
  }
  return out;
}

FeatureTable FeatureTable::from(const std::vector<TrialFeatures>& rows) {
  if (rows.empty()) throw Error(ErrorCode::EmptyInput, "no feature rows");
  FeatureTable t;
  const std::size_t dim = rows.front().vector.size();
  t.x = Matrix(rows.size(), dim);
  t.channel_slices = rows.front().channel_slices;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].vector.size() != dim) {
      throw Error(ErrorCode::ShapeMismatch, "feature rows differ in length (" + std::to_string(dim) + " vs " +
                                                std::to_string(rows[r].vector.size()) + ")");
    }
    t.subjects.push_back(rows[r].subject_id);
    t.labels.push_back(rows[r].label);
    std::copy(rows[r].vector.begin(), rows[r].vector.end(), t.x.row(r).begin());
  }
  return t;
}

FeatureTable FeatureTable::channel(const std::string& name) const {
  for (const auto& s : channel_slices) {
    if (s.name == name) {
      FeatureTable t;
      t.subjects = subjects;
      t.labels = labels;
      t.x = x.select_cols(s.offset, s.length);
      t.channel_slices = {{s.name, 0, s.length}};
      return t;
    }
  }
  throw Error(ErrorCode::InvalidSpec, "no channel named '" + name + "'");
}

std::vector<FoldSplit> loso_splits(const std::vector<std::string>& subjects, const std::vector<int>& labels,
                                   double val_fraction, std::uint64_t seed) {
  if (subjects.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "subjects vs labels");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw Error(ErrorCode::InvalidSpec, "val_fraction outside [0, 1)");
  const std::set<std::string> ids(subjects.begin(), subjects.end());
  if (ids.size() < 2) throw Error(ErrorCode::TooFewSubjects, std::to_string(ids.size()) + " subject(s); need 2");

  std::vector<FoldSplit> folds;
  std::uint64_t fold_index = 0;
  for (const auto& id : ids) {
    FoldSplit f;
    f.test_subject = id;
    std::map<int, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      if (subjects[i] == id) f.test.push_back(i);
      else by_label[labels[i]].push_back(i);
    }
    Rng rng(mix_seed(seed, fold_index++));
    for (auto& [label, idx] : by_label) {
      for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
      const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(idx.size())));
      f.validation.insert(f.validation.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
      f.train.insert(f.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    }
    std::sort(f.train.begin(), f.train.end());
    std::sort(f.validation.begin(), f.validation.end());
    folds.push_back(std::move(f));
  }
  return folds;
}

Grid Grid::standard() {
  Grid g;
  for (int i = 0; i < 7; ++i) g.c_values.push_back(std::pow(10.0, -2.0 + 5.0 * i / 6.0));
  for (int e = -4; e <= 1; ++e) g.gamma_values.push_back(std::pow(10.0, e));
  return g;
}

namespace {

std::vector<double> kernel_from(const std::vector<double>& base, KernelKind kind, double gamma) {
  if (kind == KernelKind::Linear) return base;
  std::vector<double> k(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) k[i] = std::exp(-gamma * base[i]);
  return k;
}

std::vector<double> base_kernel(const Matrix& a, const Matrix& b, KernelKind kind) {
  return kind == KernelKind::Linear ? dot_products(a, b) : squared_distances(a, b);
}

std::size_t class_count(std::span<const int> a, std::span<const int> b) {
  int top = 0;
  for (int v : a) top = std::max(top, v);
  for (int v : b) top = std::max(top, v);
  return static_cast<std::size_t>(top) + 1;
}

}  // namespace

TuneResult tune_hyperparams(const Matrix& train_x, std::span<const int> train_y, const Matrix& val_x,
                            std::span<const int> val_y, const Grid& grid, KernelKind kernel, double tol) {
  if (val_x.rows == 0) throw Error(ErrorCode::EmptyInput, "validation split is empty");
  if (grid.c_values.empty() || (kernel == KernelKind::Rbf && grid.gamma_values.empty())) {
    throw Error(ErrorCode::InvalidSpec, "empty hyperparameter grid");
  }
  const auto base_tt = base_kernel(train_x, train_x, kernel);
  const auto base_vt = base_kernel(val_x, train_x, kernel);
  const std::vector<double> gammas = kernel == KernelKind::Linear ? std::vector<double>{0.0} : grid.gamma_values;
  std::vector<double> cs = grid.c_values;
  std::vector<double> gs = gammas;
  std::sort(cs.begin(), cs.end());
  std::sort(gs.begin(), gs.end());
  const std::size_t n_classes = class_count(train_y, val_y);

  std::vector<std::vector<double>> gram(gs.size()), cross(gs.size());
  for (std::size_t g = 0; g < gs.size(); ++g) {
    gram[g] = kernel_from(base_tt, kernel, gs[g]);
    cross[g] = kernel_from(base_vt, kernel, gs[g]);
  }
  TuneResult best{cs.front(), gs.front(), -1.0};
  for (double c : cs) {
    for (std::size_t g = 0; g < gs.size(); ++g) {
      const auto svm = fit_kernel_svm(gram[g], train_y, c, tol, 1'000'000);
      const auto pred = predict_kernel_svm(svm, cross[g], train_x.rows);
      const double f1 = compute_metrics(val_y, pred, n_classes).macro_f1;
      if (f1 > best.val_macro_f1) best = {c, gs[g], f1};
    }
  }
  return best;
}

namespace {

std::vector<int> pick(const std::vector<int>& v, const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

FoldResult run_fold(const FeatureTable& table, const FoldSplit& split, const EvalConfig& cfg, std::size_t n_classes,
                    const FoldObserver& observer, std::mutex& observer_mutex) {
  const Matrix raw_train = table.x.select_rows(split.train);
  const Standardizer scaler = Standardizer::fit(raw_train);
  if (observer) {
    std::lock_guard lock(observer_mutex);
    observer(split, scaler);
  }
  const Matrix train_x = scaler.apply(raw_train);
  const Matrix val_x = scaler.apply(table.x.select_rows(split.validation));
  const Matrix test_x = scaler.apply(table.x.select_rows(split.test));
  const auto train_y = pick(table.labels, split.train);
  const auto val_y = pick(table.labels, split.validation);
  const auto test_y = pick(table.labels, split.test);

  const TuneResult tuned = tune_hyperparams(train_x, train_y, val_x, val_y, cfg.grid, cfg.kernel, cfg.tol);
  SvmParams params;
  params.kernel = cfg.kernel;
  params.C = tuned.C;
  params.gamma = cfg.kernel == KernelKind::Rbf ? tuned.gamma : 1.0;
  params.tol = cfg.tol;
  const SvmModel model = SvmModel::fit(train_x, train_y, params);
  const auto pred = model.predict(test_x);

  FoldResult r;
  r.test_subject = split.test_subject;
  r.metrics = compute_metrics(test_y, pred, n_classes);
  r.confusion = confusion_matrix(test_y, pred, n_classes);
  r.C = tuned.C;
  r.gamma = tuned.gamma;
  r.val_macro_f1 = tuned.val_macro_f1;
  r.n_train = split.train.size();
  r.n_validation = split.validation.size();
  r.n_test = split.test.size();
  return r;
}

}  // namespace

EvalReport loso_evaluate(const FeatureTable& table, const EvalConfig& cfg, const FoldObserver& observer) {
  if (table.size() == 0) throw Error(ErrorCode::EmptyInput, "no trials to evaluate");
  const auto splits = loso_splits(table.subjects, table.labels, cfg.val_fraction, cfg.seed);
  const std::size_t n_classes = class_count(table.labels, {});

  EvalReport report;
  report.folds.resize(splits.size());
  std::mutex observer_mutex;
  const std::size_t workers = std::clamp<std::size_t>(cfg.threads, 1, splits.size());
  if (workers == 1) {
    for (std::size_t f = 0; f < splits.size(); ++f) {
      report.folds[f] = run_fold(table, splits[f], cfg, n_classes, observer, observer_mutex);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(splits.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t f = next++; f < splits.size(); f = next++) {
          try {
            report.folds[f] = run_fold(table, splits[f], cfg, n_classes, observer, observer_mutex);
          } catch (...) {
            errors[f] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  const auto n = static_cast<double>(report.folds.size());
  for (const auto& f : report.folds) {
    report.mean.accuracy += f.metrics.accuracy / n;
    report.mean.macro_f1 += f.metrics.macro_f1 / n;
    report.mean.kappa += f.metrics.kappa / n;
  }
  for (const auto& f : report.folds) {
    report.stddev.accuracy += std::pow(f.metrics.accuracy - report.mean.accuracy, 2) / n;
    report.stddev.macro_f1 += std::pow(f.metrics.macro_f1 - report.mean.macro_f1, 2) / n;
    report.stddev.kappa += std::pow(f.metrics.kappa - report.mean.kappa, 2) / n;
  }
  report.stddev.accuracy = std::sqrt(report.stddev.accuracy);
  report.stddev.macro_f1 = std::sqrt(report.stddev.macro_f1);
  report.stddev.kappa = std::sqrt(report.stddev.kappa);
  return report;
}

std::string EvalReport::csv() const {
  std::ostringstream out;
  out << "fold,accuracy,f1,kappa,C,gamma,val_f1,n_train,n_validation,n_test\n";
  for (const auto& f : folds) {
    out << f.test_subject << ',' << format_double(f.metrics.accuracy) << ',' << format_double(f.metrics.macro_f1)
        << ',' << format_double(f.metrics.kappa) << ',' << format_double(f.C) << ',' << format_double(f.gamma) << ','
        << format_double(f.val_macro_f1) << ',' << f.n_train << ',' << f.n_validation << ',' << f.n_test << '\n';
  }
  out << "mean," << format_double(mean.accuracy) << ',' << format_double(mean.macro_f1) << ','
      << format_double(mean.kappa) << ",,,,,,\n";
  out << "std," << format_double(stddev.accuracy) << ',' << format_double(stddev.macro_f1) << ','
      << format_double(stddev.kappa) << ",,,,,,\n";
  return out.str();
}

std::string EvalReport::summary(const std::string& title) const {
  auto pm = [](double m, double s, double factor) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f ± %.2f", m * factor, s * factor);
    return std::string(buf);
  };
  std::ostringstream out;
  out << "| Features | Accuracy (%) | F1-score (%) | Kappa |\n";
  out << "|---|---|---|---|\n";
  out << "| " << title << " | " << pm(mean.accuracy, stddev.accuracy, 100) << " | "
      << pm(mean.macro_f1, stddev.macro_f1, 100) << " | " << pm(mean.kappa, stddev.kappa, 1) << " |\n";
  out << "\nfolds: " << folds.size() << '\n';
  for (const auto& f : folds) {
    out << "  " << f.test_subject << ": confusion";
    for (const auto& row : f.confusion) {
      out << " [";
      for (std::size_t j = 0; j < row.size(); ++j) out << (j ? " " : "") << row[j];
      out << ']';
    }
    out << '\n';
  }
  return out.str();
}

std::vector<ChannelResult> per_channel_evaluate(const FeatureTable& table, const EvalConfig& cfg) {
  std::vector<ChannelResult> out;
  for (const auto& s : table.channel_slices) {
    const EvalReport r = loso_evaluate(table.channel(s.name), cfg);
    out.push_back({s.name, r.mean, 0.0});
  }
  if (out.empty()) return out;
  double lo = out.front().metrics.accuracy, hi = lo;
  for (const auto& r : out) {
    lo = std::min(lo, r.metrics.accuracy);
    hi = std::max(hi, r.metrics.accuracy);
  }
  for (auto& r : out) r.normalized_accuracy = hi > lo ? (r.metrics.accuracy - lo) / (hi - lo) : 1.0;
  return out;
}

std::string per_channel_csv(const std::vector<ChannelResult>& results) {
  std::ostringstream out;
  out << "channel,accuracy,f1,kappa,accuracy_minmax\n";
  for (const auto& r : results) {
    out << r.channel << ',' << format_double(r.metrics.accuracy) << ',' << format_double(r.metrics.macro_f1) << ','
        << format_double(r.metrics.kappa) << ',' << format_double(r.normalized_accuracy) << '\n';
  }
  return out.str();
}

}  // namespace singlem
