#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "rsdp/measure.hpp"
#include "rsdp/model.hpp"
#include "rsdp/rng.hpp"

using namespace rsdp;
using doctest::Approx;

namespace {

LabeledSample ls(double x, int i) { return {Vec::Constant(1, x), i}; }

std::vector<LabeledSample> random_cloud(int m, int regimes, Rng& rng) {
  std::vector<LabeledSample> out;
  out.reserve(m);
  for (int k = 0; k < m; ++k) {
    Vec x(2);
    x << rng.normal(), rng.normal();
    out.push_back({x, 1 + int(rng.uniform() * regimes)});
  }
  return out;
}

}  // namespace

TEST_CASE("ground distance combines regime mismatch and euclidean gap") {
  CHECK(rho(ls(1.5, 2), ls(1.5, 2)) == 0.0);
  CHECK(rho(ls(0.0, 1), ls(4.0, 1)) == 4.0);
  CHECK(rho(ls(0.0, 1), ls(2.0, 2)) == 3.0);
  CHECK(rho(ls(-1.0, 3), ls(-1.0, 1)) == 1.0);
  Vec a(3), b(3);
  a << 1.0, 2.0, 2.0;
  b << 1.0, 2.0, 0.0;
  CHECK(rho({a, 1}, {b, 1}) == 2.0);
}

TEST_CASE("transport distance: hand-checked two-point example") {
  // Matching (0,1)->(0,1) and (1,1)->(1,2) costs (0 + 1)/2; every other
  // assignment costs at least as much.
  const std::vector<LabeledSample> mu = {ls(0.0, 1), ls(1.0, 1)};
  const std::vector<LabeledSample> nu = {ls(0.0, 1), ls(1.0, 2)};
  CHECK(wasserstein_rho(mu, nu, 1) == Approx(0.5).epsilon(1e-15));
  CHECK(wasserstein_rho_bruteforce(mu, nu) == Approx(0.5).epsilon(1e-15));
}

TEST_CASE("identical clouds are at distance zero") {
  Rng rng(5);
  const auto mu = random_cloud(40, 3, rng);
  CHECK(wasserstein_rho(mu, mu, 2) == 0.0);
}

TEST_CASE("the distance is symmetric") {
  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    const auto mu = random_cloud(15, 2, rng);
    const auto nu = random_cloud(15, 2, rng);
    CHECK(wasserstein_rho(mu, nu, 3) == Approx(wasserstein_rho(nu, mu, 3)).epsilon(1e-13));
  }
}

TEST_CASE("triangle inequality on random triples") {
  Rng rng(7);
  for (int t = 0; t < 30; ++t) {
    const auto a = random_cloud(12, 2, rng);
    const auto b = random_cloud(12, 2, rng);
    const auto c = random_cloud(12, 2, rng);
    const double ab = wasserstein_rho(a, b, 4);
    const double bc = wasserstein_rho(b, c, 4);
    const double ac = wasserstein_rho(a, c, 4);
    CHECK(ac <= ab + bc + 1e-12);
  }
}

TEST_CASE("assignment solver equals the brute-force minimum") {
  Rng rng(8);
  for (int trial = 0; trial < 1000; ++trial) {
    const int m = 2 + int(rng.uniform() * 7.0);  // 2..8 points
    std::vector<LabeledSample> mu, nu;
    for (int k = 0; k < m; ++k) {
      mu.push_back(ls(3.0 * rng.normal(), 1 + int(rng.uniform() * 3.0)));
      nu.push_back(ls(3.0 * rng.normal(), 1 + int(rng.uniform() * 3.0)));
    }
    const double fast = wasserstein_rho(mu, nu, 9);
    const double slow = wasserstein_rho_bruteforce(mu, nu);
    CHECK(fast == Approx(slow).epsilon(1e-12));
  }
}

TEST_CASE("regime mass difference is a lower bound") {
  // Total-variation style bound: moving mass between regimes costs at least
  // the assignment fraction forced to change regimes.
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    const int m = 20;
    std::vector<LabeledSample> mu, nu;
    int c1 = 0, c2 = 0;
    for (int k = 0; k < m; ++k) {
      const int i = rng.uniform() < 0.5 ? 1 : 2;
      const int j = rng.uniform() < 0.8 ? 1 : 2;
      c1 += (i == 1);
      c2 += (j == 1);
      mu.push_back(ls(rng.normal(), i));
      nu.push_back(ls(rng.normal(), j));
    }
    const double lower = std::abs(c1 - c2) / double(m);
    CHECK(wasserstein_rho(mu, nu, 10) >= lower - 1e-12);
  }
}

TEST_CASE("unequal sizes are subsampled deterministically") {
  Rng rng(11);
  const auto mu = random_cloud(60, 2, rng);
  const auto nu = random_cloud(35, 2, rng);
  const double a = wasserstein_rho(mu, nu, 77);
  const double b = wasserstein_rho(mu, nu, 77);
  CHECK(a == b);
  // A different subsample seed may select different points.
  const double c = wasserstein_rho(mu, nu, 78);
  CHECK(std::isfinite(c));
}

TEST_CASE("oversized inputs are refused with advice") {
  std::vector<LabeledSample> mu, nu;
  for (int k = 0; k < 11; ++k) {
    mu.push_back(ls(k, 1));
    nu.push_back(ls(k + 0.5, 1));
  }
  try {
    wasserstein_rho(mu, nu, 1, 10);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    CHECK(std::string(e.what()).find("subsample") != std::string::npos);
  }
}

TEST_CASE("empty inputs are rejected") {
  CHECK_THROWS_AS(wasserstein_rho({}, {ls(0.0, 1)}, 1), Error);
}

TEST_CASE("translation moves the distance by at most the shift") {
  Rng rng(12);
  const auto mu = random_cloud(25, 1, rng);
  std::vector<LabeledSample> shifted = mu;
  Vec d(2);
  d << 0.3, -0.4;  // norm 0.5
  for (auto& s : shifted) s.x += d;
  const double w = wasserstein_rho(mu, shifted, 13);
  CHECK(w == Approx(0.5).epsilon(1e-12));  // optimal plan is the identity matching
}

TEST_CASE("law convergence experiment on a fast-mixing model") {
  const Model m = model_from_json(R"({
    "n": 1, "regimes": 2,
    "drift": [
      {"A": [[-1.0]], "c": [0.3]},
      {"A": [[-1.0]], "c": [-0.3]}
    ],
    "sigma": [[0.5]],
    "rates": [
      {"from": 1, "to": 2, "kind": "const", "value": 2.0},
      {"from": 2, "to": 1, "kind": "const", "value": 2.0}
    ],
    "constants": {"alpha": [-2.0, -2.0]}
  })");
  InvariantOptions opt;
  opt.delta = 1.0 / 32.0;
  opt.paths = 300;
  opt.probe_lag = 2.0;
  const std::vector<std::pair<Vec, int>> inits = {{Vec::Constant(1, -3.0), 1},
                                                  {Vec::Constant(1, 3.0), 2}};
  const InvariantConvergence r =
      invariant_convergence(m, inits, {1.0, 4.0, 8.0}, opt, 21);
  REQUIRE(r.times == std::vector<double>{1.0, 4.0, 8.0});
  REQUIRE(r.pair_distance.size() == 1);
  const auto& d = r.pair_distance[0];
  REQUIRE(d.size() == 3);
  CHECK(d[0] > d[2]);          // far apart initially, close at the end
  CHECK(d[2] < 0.5);
  CHECK(r.noise_floor > 0.0);  // finite samples never coincide exactly
  CHECK(r.noise_floor < 0.5);
  REQUIRE(r.stationarity.size() == 2);
  for (double s : r.stationarity) CHECK(s < 6.0 * r.noise_floor);
}

TEST_CASE("law convergence is reproducible across worker counts") {
  const Model m = model_from_json(R"({
    "n": 1, "regimes": 2,
    "drift": [
      {"A": [[-1.0]], "c": [0.0]},
      {"A": [[-2.0]], "c": [0.0]}
    ],
    "sigma": [[1.0]],
    "rates": [
      {"from": 1, "to": 2, "kind": "const", "value": 1.0},
      {"from": 2, "to": 1, "kind": "const", "value": 1.0}
    ],
    "constants": {}
  })");
  InvariantOptions opt;
  opt.delta = 1.0 / 16.0;
  opt.paths = 120;
  opt.probe_lag = 1.0;
  const std::vector<std::pair<Vec, int>> inits = {{Vec::Constant(1, 1.0), 1},
                                                  {Vec::Constant(1, -1.0), 2}};
  const InvariantConvergence a = invariant_convergence(m, inits, {1.0, 2.0}, opt, 22, 1);
  const InvariantConvergence b = invariant_convergence(m, inits, {1.0, 2.0}, opt, 22, 3);
  CHECK(a.pair_distance == b.pair_distance);
  CHECK(a.stationarity == b.stationarity);
  CHECK(a.noise_floor == b.noise_floor);
}
