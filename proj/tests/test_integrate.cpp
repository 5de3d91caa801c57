#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "rsdp/integrate.hpp"
#include "rsdp/model.hpp"
#include "rsdp/rng.hpp"
#include "rsdp/skorokhod.hpp"

using namespace rsdp;
using doctest::Approx;

namespace {

Model single_regime(const char* A, const char* sigma) {
  std::string text = std::string(R"({
    "n": 1, "regimes": 1,
    "drift": [{"A": [[)") + A + R"(]], "c": [0.0]}],
    "sigma": [[)" + sigma + R"(]],
    "constants": {"C1": 1.0, "C1_scope": "box"}
  })";
  return model_from_json(text);
}

Model switching_linear() {
  return model_from_json(R"({
    "n": 1, "regimes": 2,
    "drift": [
      {"A": [[-1.0]], "c": [0.0]},
      {"A": [[-2.0]], "c": [0.0]}
    ],
    "sigma": [[1.0]],
    "rates": [
      {"from": 1, "to": 2, "kind": "const", "value": 1.0},
      {"from": 2, "to": 1, "kind": "const", "value": 2.0}
    ],
    "constants": {}
  })");
}

Model switching_tanh() {
  return model_from_json(R"({
    "n": 1, "regimes": 2,
    "drift": [
      {"A": [[-1.0]], "c": [0.0]},
      {"A": [[-2.0]], "c": [0.0]}
    ],
    "sigma": [[1.0]],
    "rates": [
      {"from": 1, "to": 2, "kind": "tanh", "base": 1.0, "amp": 0.5, "dir": [1.0]},
      {"from": 2, "to": 1, "kind": "tanh", "base": 3.0, "amp": -0.5, "dir": [1.0]}
    ],
    "constants": {}
  })");
}

}  // namespace

TEST_CASE("zero drift reproduces the Brownian path at grid nodes") {
  const Model m = single_regime("0.0", "1.0");
  const double delta = 1.0 / 8.0, dmin = 1.0 / 64.0, T = 2.0;
  const BrownianPath bp = sample_brownian(1, dmin, T, 99);
  const PoissonDrive d = sample_drive(T, m.M(), 98);
  REQUIRE(d.times.empty());  // M == 0, no switching events

  const SamplePath path = em_path(m, delta, d, bp, Vec::Constant(1, 0.5), 1);
  REQUIRE(path.nodes() == 17);
  const long per = static_cast<long>(std::llround(delta / dmin));
  Vec w(1);
  for (long k = 0; k < path.nodes(); ++k) {
    bp.increment(0, k * per, w);
    CHECK(path.value(k)[0] == Approx(0.5 + w[0]).epsilon(1e-13));
  }
  CHECK(path.regimes.switches.empty());
}

TEST_CASE("linear drift without noise is the explicit Euler recursion") {
  const Model m = single_regime("-1.0", "0.0");
  const double delta = 0.25, T = 1.0;
  const BrownianPath bp = sample_brownian(1, delta, T, 7);
  const PoissonDrive d = sample_drive(T, m.M(), 8);
  const SamplePath path = em_path(m, delta, d, bp, Vec::Constant(1, 1.0), 1);
  for (long k = 0; k < path.nodes(); ++k)
    CHECK(path.value(k)[0] == Approx(std::pow(0.75, double(k))).epsilon(1e-15));
}

TEST_CASE("constant rates: scheme regimes equal the mark-driven switch path") {
  const Model m = switching_linear();
  const double T = 4.0;
  for (int p = 0; p < 50; ++p) {
    const PoissonDrive d = sample_drive(T, m.M(), derive_seed(31, "drive", p));
    const BrownianPath bp = sample_brownian(1, 1.0 / 64.0, T, derive_seed(31, "brownian", p));
    const SamplePath path = em_path(m, 1.0 / 16.0, d, bp, Vec::Zero(1), 1);
    const SwitchPath ref = evolve_switch(m.rates, d, [](double) { return Vec::Zero(1); }, 1);
    REQUIRE(path.regimes.switches.size() == ref.switches.size());
    for (size_t s = 0; s < ref.switches.size(); ++s) {
      CHECK(path.regimes.switches[s].first == ref.switches[s].first);
      CHECK(path.regimes.switches[s].second == ref.switches[s].second);
    }
  }
}

TEST_CASE("reference path is the same scheme on the finest grid") {
  const Model m = switching_tanh();
  const double dref = 1.0 / 128.0, T = 1.0;
  const PoissonDrive d = sample_drive(T, m.M(), 41);
  const BrownianPath bp = sample_brownian(1, dref, T, 42);
  const SamplePath a = em_path(m, dref, d, bp, Vec::Constant(1, 0.3), 1);
  const SamplePath b = reference_path(m, dref, d, bp, Vec::Constant(1, 0.3), 1);
  REQUIRE(a.xs.size() == b.xs.size());
  for (size_t i = 0; i < a.xs.size(); ++i) CHECK(a.xs[i] == b.xs[i]);
  CHECK(a.regimes.switches == b.regimes.switches);
}

TEST_CASE("Ornstein-Uhlenbeck moments at t = 1") {
  const Model m = single_regime("-1.0", "1.0");
  const double delta = 1.0 / 256.0, T = 1.0;
  const int paths = 4000;
  KahanSum sum, sumsq;
  for (int p = 0; p < paths; ++p) {
    const PoissonDrive d = sample_drive(T, m.M(), derive_seed(51, "drive", p));
    const BrownianPath bp = sample_brownian(1, delta, T, derive_seed(51, "brownian", p));
    const SamplePath path = em_path(m, delta, d, bp, Vec::Constant(1, 2.0), 1);
    const double x = path.value(path.nodes() - 1)[0];
    sum.add(x);
    sumsq.add(x * x);
  }
  const double mean = sum.value() / paths;
  const double var = sumsq.value() / paths - mean * mean;
  const double mean_exact = 2.0 * std::exp(-1.0);
  const double var_exact = (1.0 - std::exp(-2.0)) / 2.0;
  const double se = std::sqrt(var_exact / paths);
  CHECK(std::abs(mean - mean_exact) < 4.0 * se + 0.01);
  CHECK(std::abs(var - var_exact) < 0.05);
}

TEST_CASE("strong error shrinks with the step and fits a positive slope") {
  const Model m = single_regime("-1.0", "1.0");
  const std::vector<double> deltas = {1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64};
  const ErrorReport rep =
      strong_error(m, deltas, 1.0 / 1024.0, 1.0, Vec::Constant(1, 1.0), 1, 200, 61);
  REQUIRE(rep.rows.size() == 4);
  for (size_t i = 1; i < rep.rows.size(); ++i)
    CHECK(rep.rows[i].err_mean < rep.rows[i - 1].err_mean);
  REQUIRE(rep.slope.has_value());
  // Additive noise: the scheme converges at first order for one regime.
  CHECK(*rep.slope > 0.8);
  CHECK(*rep.slope < 1.3);
  CHECK(rep.divergent_paths.empty());
}

TEST_CASE("a vanishing pathwise error leaves the slope undefined") {
  const Model m = single_regime("0.0", "1.0");
  const std::vector<double> deltas = {1.0 / 4, 1.0 / 8};
  const ErrorReport rep =
      strong_error(m, deltas, 1.0 / 64.0, 1.0, Vec::Zero(1), 1, 50, 62);
  for (const ErrorRow& row : rep.rows) {
    CHECK(row.err_mean <= 1e-12);  // shared noise cancels; only drift can differ
    CHECK(row.mismatch_mean == 0.0);
  }
  if (rep.slope.has_value()) CHECK(rep.rows.front().err_mean > 0.0);
}

TEST_CASE("regime mismatch is identically zero for constant rates") {
  const Model m = switching_linear();
  const MCEstimate mm =
      mismatch_integral(m, 1.0 / 16.0, 1.0 / 512.0, 2.0, Vec::Zero(1), 1, 200, 63);
  CHECK(mm.mean == 0.0);
  CHECK(mm.std_error == 0.0);
}

TEST_CASE("state-dependent rates produce a small positive mismatch") {
  const Model m = switching_tanh();
  const MCEstimate mm =
      mismatch_integral(m, 1.0 / 8.0, 1.0 / 256.0, 4.0, Vec::Zero(1), 1, 400, 64);
  CHECK(mm.mean > 0.0);
  CHECK(mm.mean < 1.0);
}

TEST_CASE("increment bound from the declared coefficient constant") {
  SUBCASE("pure Brownian motion") {
    const Model m = single_regime("0.0", "1.0");
    const IncrementCheck c = increment_check(m, 1.0 / 32.0, 1.0, 400, 71);
    CHECK(c.pass);
    CHECK(c.worst_margin > 0.0);
  }
  SUBCASE("bounded drift, no noise") {
    const Model m = single_regime("-1.0", "0.0");
    const IncrementCheck c = increment_check(m, 1.0 / 32.0, 1.0, 100, 72);
    CHECK(c.pass);
  }
}

TEST_CASE("identical seeds reproduce every reported digit") {
  const Model m = switching_tanh();
  const std::vector<double> deltas = {1.0 / 8, 1.0 / 16};
  const ErrorReport a =
      strong_error(m, deltas, 1.0 / 256.0, 1.0, Vec::Constant(1, 0.2), 1, 60, 81, 1);
  const ErrorReport b =
      strong_error(m, deltas, 1.0 / 256.0, 1.0, Vec::Constant(1, 0.2), 1, 60, 81, 2);
  REQUIRE(a.rows.size() == b.rows.size());
  for (size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].err_mean == b.rows[i].err_mean);
    CHECK(a.rows[i].err_se == b.rows[i].err_se);
    CHECK(a.rows[i].mismatch_mean == b.rows[i].mismatch_mean);
    CHECK(a.rows[i].l1_mean == b.rows[i].l1_mean);
  }
  CHECK(a.slope == b.slope);
}

TEST_CASE("step ratios must be exact divisors") {
  const Model m = switching_linear();
  try {
    strong_error(m, {0.3}, 1.0 / 8.0, 1.0, Vec::Zero(1), 1, 10, 91);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
  try {
    mismatch_integral(m, 0.3, 1.0 / 8.0, 1.0, Vec::Zero(1), 1, 10, 92);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
}
