// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "singlem/error.hpp"
#include "singlem/metrics.hpp"
#include "singlem/rng.hpp"

using namespace singlem;

namespace {

Metrics m(std::vector<int> t, std::vector<int> p) { return compute_metrics(t, p); }

}  // namespace

TEST_CASE("perfect agreement") {
  const auto r = m({0, 1, 1, 0}, {0, 1, 1, 0});
  CHECK(r.accuracy == 1.0);
  CHECK(r.macro_f1 == 1.0);
  CHECK(r.kappa == 1.0);
}

TEST_CASE("chance-level agreement") {
  const auto r = m({0, 0, 1, 1}, {0, 1, 0, 1});
  CHECK(r.accuracy == 0.5);
  CHECK(std::abs(r.kappa) < 1e-12);
}

TEST_CASE("constant prediction on balanced binary") {
  const auto r = m({0, 0, 1, 1}, {1, 1, 1, 1});
  CHECK(r.accuracy == 0.5);
  CHECK(std::abs(r.kappa) < 1e-12);
  CHECK(std::abs(r.macro_f1 - 1.0 / 3.0) < 1e-12);
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(m({0, 1}, {0}), Error);
  CHECK_THROWS_AS(m({}, {}), Error);
}

TEST_CASE("kappa is zero for independence-constructed predictions") {
  // True marginals (1/2, 1/2); predictions split every true class 1:3.
  std::vector<int> t, p;
  for (int c = 0; c < 2; ++c) {
    for (int k = 0; k < 4; ++k) {
      t.push_back(c);
      p.push_back(k == 0 ? 0 : 1);
    }
  }
  CHECK(std::abs(m(t, p).kappa) < 1e-12);
}

TEST_CASE("kappa in range and equal to one only for perfect agreement") {
  Rng rng(1);
  for (int k = 0; k < 200; ++k) {
    std::vector<int> t(20), p(20);
    for (auto& v : t) v = static_cast<int>(rng.index(3));
    for (auto& v : p) v = static_cast<int>(rng.index(3));
    const auto r = m(t, p);
    CHECK(r.kappa <= 1.0);
    CHECK(r.kappa >= -1.0);
    CHECK(r.accuracy >= 0.0);
    CHECK(r.macro_f1 <= 1.0);
    CHECK((r.kappa == 1.0) == (t == p));
  }
}

TEST_CASE("absent class contributes zero to macro-F1") {
  const auto r = compute_metrics(std::vector<int>{0, 1}, std::vector<int>{0, 1}, 3);
  CHECK(std::abs(r.macro_f1 - 2.0 / 3.0) < 1e-12);
}
