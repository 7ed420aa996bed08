// SPDX-License-Identifier: Apache-2.0
#include "singlem/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "singlem/error.hpp"

namespace singlem {

Tensor& ParameterSet::add(const std::string& name, Tensor tensor, bool trainable) {
  if (find(name)) throw Error(ErrorCode::InvalidSpec, "duplicate parameter name '" + name + "'");
  if (trainable && !tensor.requires_grad()) {
    tensor = Tensor::from_values(tensor.shape(), std::vector<double>(tensor.values().begin(), tensor.values().end()), true);
  }
  items_.push_back({name, std::move(tensor), trainable});
  return items_.back().tensor;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : items_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Parameter* ParameterSet::find(const std::string& name) {
  for (auto& p : items_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::size_t ParameterSet::count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.tensor.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : items_) p.tensor.zero_grad();
}

void ParameterSet::extend(const ParameterSet& other, const std::string& prefix) {
  for (const auto& p : other.items_) {
    if (find(prefix + p.name)) throw Error(ErrorCode::InvalidSpec, "duplicate parameter name '" + prefix + p.name + "'");
    items_.push_back({prefix + p.name, p.tensor, p.trainable});
  }
}

Tensor init_uniform_fan_in(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from_values(std::move(shape), std::move(v), true);
}

Tensor init_normal(Shape shape, double stddev, Rng& rng) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return Tensor::from_values(std::move(shape), std::move(v), true);
}

AdamWState AdamWState::zeros_like(const ParameterSet& params) {
  AdamWState s;
  for (const auto& p : params.items()) {
    s.m.emplace_back(p.tensor.numel(), 0.0);
    s.v.emplace_back(p.tensor.numel(), 0.0);
  }
  return s;
}

void adamw_step(ParameterSet& params, AdamWState& state, double lr, const AdamWConfig& cfg) {
  auto& items = params.items();
  if (state.m.size() != items.size() || state.v.size() != items.size()) {
    throw Error(ErrorCode::StateShapeMismatch, "optimizer state holds " + std::to_string(state.m.size()) +
                                                   " buffers for " + std::to_string(items.size()) + " parameters");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto& p = items[i];
    if (!p.trainable) continue;
    auto w = p.tensor.mutable_values();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != w.size() || v.size() != w.size()) {
      throw Error(ErrorCode::StateShapeMismatch, "moment buffer size differs for '" + p.name + "'");
    }
    const auto g = p.tensor.grad();
    const bool has_grad = !g.empty();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = has_grad ? g[j] : 0.0;
      w[j] -= lr * cfg.weight_decay * w[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr_max, double lr_min) {
  if (total_steps <= 0) return lr_max;
  const double t = std::clamp(static_cast<double>(step) / static_cast<double>(total_steps), 0.0, 1.0);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace singlem
