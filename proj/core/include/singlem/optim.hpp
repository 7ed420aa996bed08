// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "singlem/parameters.hpp"

namespace singlem {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.1;
  double eps = 1e-8;
};

/// First/second moment buffers, one per parameter in set order.
struct AdamWState {
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamWState zeros_like(const ParameterSet& params);
};

/// One AdamW update with decoupled weight decay: w <- w - lr*wd*w, then the
/// bias-corrected Adam step. Parameters without a gradient are treated as
/// having a zero gradient. Throws StateShapeMismatch.
void adamw_step(ParameterSet& params, AdamWState& state, double lr, const AdamWConfig& cfg = {});

/// Cosine annealing from lr_max at step 0 to lr_min at step == total_steps.
double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr_max = 1e-4, double lr_min = 1e-6);

}  // namespace singlem
