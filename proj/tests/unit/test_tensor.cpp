// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "singlem/error.hpp"
#include "singlem/tensor.hpp"

using namespace singlem;
using singlem::testing::grad_check;
using singlem::testing::random_tensor;

namespace {

constexpr double kTol = 1e-4;

void check(const char* what, const std::function<Tensor(const std::vector<Tensor>&)>& f,
           const std::vector<Tensor>& inputs) {
  const auto r = grad_check(f, inputs);
  INFO(what << ": worst " << r.worst_relative << " at " << r.worst_input);
  CHECK(r.checked > 0);
  CHECK(r.worst_relative < kTol);
}

// Random projection keeps the seed gradient from being all ones.
Tensor project(const Tensor& y, Rng& rng) {
  return sum(mul(y, random_tensor(y.shape(), rng, 1.0, false)));
}

}  // namespace

TEST_CASE("forward values") {
  const auto a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  const auto b = Tensor::from_values({2, 2}, {5, 6, 7, 8});
  const auto c = matmul(a, b);
  CHECK(c.at({0, 0}) == 19);
  CHECK(c.at({1, 1}) == 50);
  CHECK(add(a, Tensor::from_values({2}, {10, 20})).at({1, 1}) == 24);
  CHECK(sum(a).item() == 10);
  CHECK(mean(a).item() == 2.5);
  CHECK(transpose(a).at({0, 1}) == 3);
  const auto s = softmax(Tensor::from_values({3}, {0, 0, std::log(2.0)}));
  CHECK(s.values()[2] == doctest::Approx(0.5));
  CHECK(huber(Tensor::from_values({2}, {0.5, 3}), Tensor::zeros({2}), 1.0).item() == doctest::Approx((0.125 + 2.5) / 2));
  CHECK(elu(Tensor::from_values({1}, {-1})).item() == doctest::Approx(std::exp(-1.0) - 1.0));
  CHECK(broadcast_shape({3, 1}, {1, 4}) == Shape{3, 4});
}

TEST_CASE("conv1d matches direct zero-padded correlation") {
  const auto x = Tensor::from_values({1, 4}, {1, 2, 3, 4});
  const auto w = Tensor::from_values({1, 1, 3}, {1, 10, 100});
  const auto y = conv1d(x, w, Tensor());
  // y[t] = x[t-1] + 10 x[t] + 100 x[t+1]
  CHECK(y.values()[0] == 210);
  CHECK(y.values()[1] == 321);
  CHECK(y.values()[3] == 43);
}

TEST_CASE("shape errors") {
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), Error);
  CHECK_THROWS_AS(add(Tensor::zeros({2}), Tensor::zeros({3})), Error);
  try {
    conv1d(Tensor::zeros({1, 5}), Tensor::zeros({1, 1, 4}), Tensor());
    FAIL("expected EvenKernel");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EvenKernel);
  }
  AttentionWeights w;
  try {
    multi_head_attention(Tensor::zeros({2, 6}), 4, w);
    FAIL("expected HeadDivisibility");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::HeadDivisibility);
  }
}

TEST_CASE("no-grad guard records nothing") {
  auto a = Tensor::full({2}, 1.0, true);
  {
    NoGradGuard g;
    CHECK_FALSE(grad_enabled());
    const auto b = scale(a, 2.0);
    CHECK_FALSE(b.requires_grad());
  }
  CHECK(grad_enabled());
}

TEST_CASE("leaf gradients accumulate across backward calls") {
  auto a = Tensor::full({2}, 3.0, true);
  sum(square(a)).backward();
  sum(square(a)).backward();
  CHECK(a.grad()[0] == doctest::Approx(12.0));
  a.zero_grad();
  sum(a).backward();
  CHECK(a.grad()[1] == doctest::Approx(1.0));
}

TEST_CASE("finite-difference checks of every op") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CAPTURE(seed);
    Rng rng(seed);
    const auto a = random_tensor({2, 3, 4}, rng);
    const auto b = random_tensor({3, 4}, rng);
    const auto c = random_tensor({2, 1, 4}, rng);
    const auto m = random_tensor({4, 5}, rng);
    const auto bm = random_tensor({2, 4, 5}, rng);
    const auto pa = random_tensor({2, 3, 4}, rng, 1.0, false);

    check("add", [&](const auto& v) { return project(add(v[0], v[1]), rng = Rng(seed)); }, {a, b});
    check("sub", [&](const auto& v) { return project(sub(v[0], v[1]), rng = Rng(seed)); }, {a, c});
    check("mul", [&](const auto& v) { return project(mul(v[0], v[1]), rng = Rng(seed)); }, {a, c});
    check("scale", [&](const auto& v) { return project(scale(v[0], -1.5), rng = Rng(seed)); }, {a});
    check("square", [&](const auto& v) { return project(square(v[0]), rng = Rng(seed)); }, {a});
    check("broadcast_to", [&](const auto& v) { return project(broadcast_to(v[0], {2, 3, 4}), rng = Rng(seed)); }, {c});
    check("matmul shared", [&](const auto& v) { return project(matmul(v[0], v[1]), rng = Rng(seed)); }, {a, m});
    check("matmul batched", [&](const auto& v) { return project(matmul(v[0], v[1]), rng = Rng(seed)); }, {a, bm});
    check("linear", [&](const auto& v) { return project(linear(v[0], v[1], v[2]), rng = Rng(seed)); },
          {a, m, random_tensor({5}, rng)});
    check("reshape", [&](const auto& v) { return project(reshape(v[0], {6, 4}), rng = Rng(seed)); }, {a});
    check("permute", [&](const auto& v) { return project(permute(v[0], {2, 0, 1}), rng = Rng(seed)); }, {a});
    check("transpose", [&](const auto& v) { return project(transpose(v[0]), rng = Rng(seed)); }, {a});
    check("gather", [&](const auto& v) { return project(gather(v[0], 1, {2, 0, 0, 1}), rng = Rng(seed)); }, {a});
    check("concat", [&](const auto& v) { return project(concat({v[0], v[1]}, 1), rng = Rng(seed)); },
          {a, random_tensor({2, 2, 4}, rng)});
    check("sum", [&](const auto& v) { return sum(mul(v[0], pa)); }, {a});
    check("mean", [&](const auto& v) { return mean(square(v[0])); }, {a});
    check("sum_last", [&](const auto& v) { return project(sum_last(v[0]), rng = Rng(seed)); }, {a});
    check("mean_last", [&](const auto& v) { return project(mean_last(v[0]), rng = Rng(seed)); }, {a});
    check("conv1d", [&](const auto& v) { return project(conv1d(v[0], v[1], v[2]), rng = Rng(seed)); },
          {random_tensor({2, 3, 7}, rng), random_tensor({2, 3, 5}, rng), random_tensor({2}, rng)});
    check("layer_norm last", [&](const auto& v) { return project(layer_norm(v[0], v[1], v[2]), rng = Rng(seed)); },
          {a, random_tensor({4}, rng), random_tensor({4}, rng)});
    check("layer_norm channel axis",
          [&](const auto& v) { return project(layer_norm(v[0], v[1], v[2], -2), rng = Rng(seed)); },
          {a, random_tensor({3}, rng), random_tensor({3}, rng)});
    check("elu", [&](const auto& v) { return project(elu(v[0]), rng = Rng(seed)); }, {a});
    check("gelu", [&](const auto& v) { return project(gelu(v[0]), rng = Rng(seed)); }, {a});
    check("softmax", [&](const auto& v) { return project(softmax(v[0]), rng = Rng(seed)); }, {a});
    check("huber", [&](const auto& v) { return huber(v[0], v[1], 0.7); }, {a, random_tensor({2, 3, 4}, rng)});
    check("attention",
          [&](const auto& v) {
            AttentionWeights w{v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]};
            return project(multi_head_attention(v[0], 2, w), rng = Rng(seed));
          },
          {a, random_tensor({4, 4}, rng, 0.5), random_tensor({4}, rng), random_tensor({4, 4}, rng, 0.5),
           random_tensor({4}, rng), random_tensor({4, 4}, rng, 0.5), random_tensor({4}, rng),
           random_tensor({4, 4}, rng, 0.5), random_tensor({4}, rng)});
  }
}

TEST_CASE("attention rows are convex combinations of values") {
  Rng rng(3);
  const auto x = random_tensor({5, 4}, rng, 1.0, false);
  const auto eye = Tensor::from_values({4, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
  const auto zero = Tensor::zeros({4});
  AttentionWeights w{random_tensor({4, 4}, rng, 1.0, false), zero, random_tensor({4, 4}, rng, 1.0, false), zero,
                     eye, zero, eye, zero};
  const auto y = multi_head_attention(x, 1, w);
  for (std::size_t j = 0; j < 4; ++j) {
    double lo = 1e9, hi = -1e9;
    for (std::size_t i = 0; i < 5; ++i) {
      lo = std::min(lo, x.at({i, j}));
      hi = std::max(hi, x.at({i, j}));
    }
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(y.at({i, j}) >= lo - 1e-12);
      CHECK(y.at({i, j}) <= hi + 1e-12);
    }
  }
}
