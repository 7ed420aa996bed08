// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "singlem/error.hpp"
#include "singlem/tensor.hpp"

namespace singlem::detail {

/// Builds an op result. Parents and the backward closure are only kept when
/// grad mode is on and some parent requires grad.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward);

inline std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": axis " + std::to_string(axis) + " out of range");
  }
  return static_cast<std::size_t>(a);
}

}  // namespace singlem::detail
