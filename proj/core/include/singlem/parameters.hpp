// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "singlem/rng.hpp"
#include "singlem/tensor.hpp"

namespace singlem {

struct Parameter {
  std::string name;  // dotted path, e.g. "temporal.conv1.weight"
  Tensor tensor;
  bool trainable = true;
};

/// Insertion-ordered set of named parameters. Tensors are shared with the
/// owning module, so updates through the set are visible to the model.
class ParameterSet {
 public:
  /// Throws InvalidSpec on a duplicate name.
  Tensor& add(const std::string& name, Tensor tensor, bool trainable = true);

  const Parameter* find(const std::string& name) const;
  Parameter* find(const std::string& name);

  std::vector<Parameter>& items() { return items_; }
  const std::vector<Parameter>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  /// Total number of scalar values.
  std::size_t count() const;

  void zero_grad();
  /// Merges another set under a name prefix.
  void extend(const ParameterSet& other, const std::string& prefix = "");

 private:
  std::vector<Parameter> items_;
};

/// Uniform(+-sqrt(1/fan_in)), used for conv and linear weights.
Tensor init_uniform_fan_in(Shape shape, std::size_t fan_in, Rng& rng);
/// Normal(0, 0.02), used for learned embeddings and positional tables.
Tensor init_normal(Shape shape, double stddev, Rng& rng);

}  // namespace singlem
