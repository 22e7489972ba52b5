#include <cmath>

#include "doctest.h"
#include "skipmid/gates.hpp"
#include "skipmid/rng.hpp"

using namespace skipmid;

TEST_CASE("gate algebra worked example") {
  // One token, L = 6: s = (0.3, 0.5, 0.4) -> S = (0.3, 0.8, 1.2).
  Tensor<double> s({1, 3}, {0.3, 0.5, 0.4});
  GateTrace<double> trace = gate_algebra(s, 6);
  CHECK(trace.accumulated.at(0) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(trace.accumulated.at(1) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(trace.accumulated.at(2) == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(trace.gates.at2(0, 0) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(trace.gates.at2(0, 1) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(trace.gates.at2(0, 2) == 0.0);
  CHECK(trace.gates.at2(0, 3) == 0.0);
  CHECK(trace.gates.at2(0, 4) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(trace.gates.at2(0, 5) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(trace.layer_sparsity[0] == 0.0);
  CHECK(trace.layer_sparsity[2] == 1.0);
  CHECK(trace.layer_sparsity[3] == 1.0);
}

TEST_CASE("zero soft mask keeps every gate open") {
  Tensor<double> s({3, 2});
  GateTrace<double> trace = gate_algebra(s, 4);
  for (std::int64_t i = 0; i < trace.gates.numel(); ++i) CHECK(trace.gates.at(i) == 1.0);
  for (double z : trace.layer_sparsity) CHECK(z == 0.0);
}

TEST_CASE("gate algebra properties on random soft masks") {
  Rng rng(123);
  const std::uint64_t key = rng.stream_key("gates");
  std::uint64_t counter = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::int64_t n = 1 + static_cast<std::int64_t>(Rng::below_at(key, counter++, 5));
    const std::int64_t half = 1 + static_cast<std::int64_t>(Rng::below_at(key, counter++, 4));
    Tensor<double> s({n, half});
    for (std::int64_t i = 0; i < s.numel(); ++i) {
      s.at(i) = 0.8 * Rng::uniform_at(key, counter++);
    }
    GateTrace<double> trace = gate_algebra(s, 2 * half);
    for (std::int64_t i = 0; i < n; ++i) {
      double running = 0.0;
      for (std::int64_t l = 0; l < half; ++l) {
        running += s.at2(i, l);
        const double g = trace.gates.at2(i, l);
        CHECK(trace.gates.at2(i, 2 * half - l - 1) == g);  // mirror, exact
        CHECK(g >= 0.0);
        CHECK(g <= 1.0);
        if (l > 0) CHECK(g <= trace.gates.at2(i, l - 1));  // monotone first half
        CHECK((g == 0.0) == (trace.accumulated.at2(i, l) >= 1.0));
      }
    }
  }
}

TEST_CASE("gate algebra rejects bad shapes") {
  CHECK_THROWS_AS(gate_algebra(Tensor<double>({2, 3}), 4), ContractError);
  CHECK_THROWS_AS(gate_algebra(Tensor<double>({2, 2}), 5), ContractError);
  CHECK_THROWS_AS(gate_algebra(Tensor<double>({1, 1}, {-0.5}), 2), ContractError);
}

TEST_CASE("pool sparsity averages traces") {
  Tensor<double> a({1, 1}, {1.5});  // S >= 1: closed
  Tensor<double> b({1, 1}, {0.25});
  std::vector<GateTrace<double>> traces = {gate_algebra(a, 2), gate_algebra(b, 2)};
  SparsityReport report = pool_sparsity(traces);
  REQUIRE(report.layer_sparsity.size() == 2);
  CHECK(report.layer_sparsity[0] == 0.5);
  CHECK(report.layer_sparsity[1] == 0.5);
  CHECK(report.overall == 0.5);
  CHECK_THROWS_AS(pool_sparsity(std::vector<GateTrace<double>>{}), ContractError);
}
