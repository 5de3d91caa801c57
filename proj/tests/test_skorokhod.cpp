#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "rsdp/model.hpp"
#include "rsdp/rng.hpp"
#include "rsdp/skorokhod.hpp"

using namespace rsdp;
using doctest::Approx;

namespace {

RatePair constant_pair(int from, int to, double value) {
  RatePair p;
  p.from = from;
  p.to = to;
  p.kind = RatePair::Kind::Constant;
  p.value = value;
  return p;
}

RateFunction three_state_example() {
  // Row rates q12=1, q13=0.5, q21=2, q23=0, q31=1, q32=1.
  std::vector<RatePair> pairs{constant_pair(1, 2, 1.0),  constant_pair(1, 3, 0.5),
                              constant_pair(2, 1, 2.0),  constant_pair(2, 3, 0.0),
                              constant_pair(3, 1, 1.0),  constant_pair(3, 2, 1.0)};
  RateFunction rf(3, 1, pairs);
  rf.finalize();
  return rf;
}

RateFunction two_state_const(double q12 = 1.0, double q21 = 2.0) {
  std::vector<RatePair> pairs{constant_pair(1, 2, q12), constant_pair(2, 1, q21)};
  RateFunction rf(2, 1, pairs);
  rf.finalize();
  return rf;
}

}  // namespace

TEST_CASE("interval table follows the row-major enumeration") {
  const RateFunction rf = three_state_example();
  const Vec x = Vec::Zero(1);
  const IntervalTable table = build_intervals(rf, x);
  REQUIRE(table.entries.size() == 6);

  const double expect[6][2] = {{0.0, 1.0}, {1.0, 1.5}, {1.5, 3.5},
                               {3.5, 3.5}, {3.5, 4.5}, {4.5, 5.5}};
  const int from[6] = {1, 1, 2, 2, 3, 3};
  const int to[6] = {2, 3, 1, 3, 1, 2};
  for (int k = 0; k < 6; ++k) {
    CHECK(table.entries[k].from == from[k]);
    CHECK(table.entries[k].to == to[k]);
    CHECK(table.entries[k].lo == expect[k][0]);
    CHECK(table.entries[k].hi == expect[k][1]);
  }
  CHECK(table.total == 5.5);
}

TEST_CASE("tables tile the mark space with exact cumulative sums") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const int N = 2 + static_cast<int>(rng.uniform() * 3);  // 2..4
    std::vector<RatePair> pairs;
    for (int i = 1; i <= N; ++i)
      for (int j = 1; j <= N; ++j)
        if (i != j) pairs.push_back(constant_pair(i, j, 3.0 * rng.uniform()));
    RateFunction rf(N, 1, pairs);
    rf.finalize();
    const Vec x = Vec::Zero(1);
    const IntervalTable table = build_intervals(rf, x);
    REQUIRE(static_cast<int>(table.entries.size()) == N * (N - 1));

    // Independent prefix-sum oracle in enumeration order.
    double cum = 0.0;
    size_t k = 0;
    for (int i = 1; i <= N; ++i) {
      for (int j = 1; j <= N; ++j) {
        if (i == j) continue;
        CHECK(table.entries[k].lo == cum);
        cum += rf.eval(x, i, j);
        CHECK(table.entries[k].hi == cum);
        ++k;
      }
    }
    CHECK(table.total == cum);
    CHECK(table.total <= rf.M() + 1e-12);
  }
}

TEST_CASE("displacement from the worked two-state table") {
  const RateFunction rf = two_state_const();  // Gamma12=[0,1), Gamma21=[1,3)
  const Vec x = Vec::Zero(1);
  const IntervalTable t = build_intervals(rf, x);
  CHECK(t.displacement(1, 0.5) == 1);
  CHECK(t.displacement(1, 2.0) == 0);  // lies in row 2's interval
  CHECK(t.displacement(2, 1.5) == -1);
  CHECK(t.displacement(2, 3.5) == 0);
  // Right-open boundaries.
  CHECK(t.displacement(1, 1.0) == 0);
  CHECK(t.displacement(2, 1.0) == -1);
  CHECK(t.displacement(1, 4.0) == 0);  // mark == M: no jump

  // The direct evaluation matches the materialized table everywhere.
  for (double z = 0.0; z <= 4.0; z += 0.03125) {
    CHECK(jump_displacement(rf, x, 1, z) == t.displacement(1, z));
    CHECK(jump_displacement(rf, x, 2, z) == t.displacement(2, z));
  }
}

TEST_CASE("drive sampling: zero intensity and Poisson counts") {
  const PoissonDrive empty = sample_drive(5.0, 0.0, 99);
  CHECK(empty.times.empty());

  const double M = 4.0, T = 10.0;
  const int seeds = 10000;
  double count_sum = 0.0;
  for (int s = 0; s < seeds; ++s) {
    const PoissonDrive d = sample_drive(T, M, derive_seed(5, "drive", s));
    count_sum += static_cast<double>(d.times.size());
    if (s < 50) {
      double prev = 0.0;
      for (size_t k = 0; k < d.times.size(); ++k) {
        REQUIRE(d.times[k] > prev);
        REQUIRE(d.times[k] <= T);
        REQUIRE(d.marks[k] >= 0.0);
        REQUIRE(d.marks[k] < M);
        prev = d.times[k];
      }
    }
  }
  const double mean = count_sum / seeds;
  const double se = std::sqrt(M * T / seeds);
  CHECK(std::abs(mean - M * T) < 3.0 * se);
}

TEST_CASE("drive gaps follow the exponential law (KS test)") {
  const double M = 4.0;
  std::vector<double> gaps;
  for (int s = 0; s < 100; ++s) {
    const PoissonDrive d = sample_drive(10.0, M, derive_seed(17, "drive", s));
    double prev = 0.0;
    for (double t : d.times) {
      gaps.push_back(t - prev);
      prev = t;
    }
  }
  std::sort(gaps.begin(), gaps.end());
  const double n = static_cast<double>(gaps.size());
  REQUIRE(n > 3000);
  double ks = 0.0;
  for (size_t k = 0; k < gaps.size(); ++k) {
    const double F = 1.0 - std::exp(-M * gaps[k]);
    ks = std::max(ks, std::abs(F - (k + 1) / n));
    ks = std::max(ks, std::abs(F - k / n));
  }
  CHECK(ks < 1.628 / std::sqrt(n));  // 1% critical value
}

TEST_CASE("drive csv round trip") {
  const PoissonDrive d = sample_drive(3.0, 2.5, 4242);
  std::ostringstream os;
  write_drive_csv(d, os);
  CHECK(os.str().rfind("k,time,mark\n", 0) == 0);
  std::istringstream is(os.str());
  const PoissonDrive back = read_drive_csv(is, 3.0, 2.5);
  REQUIRE(back.times.size() == d.times.size());
  for (size_t k = 0; k < d.times.size(); ++k) {
    CHECK(back.times[k] == d.times[k]);
    CHECK(back.marks[k] == d.marks[k]);
  }
}

TEST_CASE("switch evolution follows interval membership") {
  const RateFunction rf = two_state_const();
  const auto x_at = [](double) { return Vec::Zero(1); };

  PoissonDrive empty;
  empty.T = 5.0;
  empty.M = 4.0;
  const SwitchPath constant = evolve_switch(rf, empty, x_at, 1);
  CHECK(constant.switches.empty());
  CHECK(constant.at(3.0) == 1);

  PoissonDrive one;
  one.T = 5.0;
  one.M = 4.0;
  one.times = {1.25};
  one.marks = {0.5};
  const SwitchPath s = evolve_switch(rf, one, x_at, 1);
  REQUIRE(s.switches.size() == 1);
  CHECK(s.switches[0].first == 1.25);
  CHECK(s.switches[0].second == 2);
  CHECK(s.at(1.25) == 2);  // right-continuous
  CHECK(s.at(1.24) == 1);
}

TEST_CASE("transition frequencies match the generator") {
  Mat Q(2, 2);
  Q << -1.0, 1.0, 2.0, -2.0;
  const double T = 2000.0;
  const double M = 4.0;
  const PoissonDrive d = sample_drive(T, M, 2025);
  const SwitchPath s = evolve_switch(Q, d, 1);

  double time_in[3] = {0.0, 0.0, 0.0};
  long jumps_from[3] = {0, 0, 0};
  double prev = 0.0;
  int cur = 1;
  for (const auto& sw : s.switches) {
    time_in[cur] += sw.first - prev;
    ++jumps_from[cur];
    prev = sw.first;
    cur = sw.second;
  }
  time_in[cur] += T - prev;

  // Jumps out of state i are Poisson with rate q_i * (occupation time).
  for (int i = 1; i <= 2; ++i) {
    const double rate = -Q(i - 1, i - 1);
    const double expect = rate * time_in[i];
    CHECK(std::abs(jumps_from[i] - expect) < 3.0 * std::sqrt(expect));
  }
}

TEST_CASE("state-dependent rates consult the continuous state at jump times") {
  RatePair up;
  up.from = 1;
  up.to = 2;
  up.kind = RatePair::Kind::Programmatic;
  up.fn = [](const Vec& x) { return x[0] > 0.0 ? 2.0 : 0.0; };
  std::vector<RatePair> pairs{up, constant_pair(2, 1, 0.0)};
  RateFunction rf(2, 1, pairs);
  rf.finalize();

  PoissonDrive d;
  d.T = 3.0;
  d.M = rf.M();
  d.times = {0.5, 1.5};
  d.marks = {0.5, 0.5};
  const auto x_at = [](double t) {
    Vec x(1);
    x[0] = t < 1.0 ? -1.0 : 1.0;
    return x;
  };
  const SwitchPath s = evolve_switch(rf, d, x_at, 1);
  REQUIRE(s.switches.size() == 1);
  CHECK(s.switches[0].first == 1.5);  // the t=0.5 event found an empty interval
  CHECK(s.switches[0].second == 2);
}

TEST_CASE("state-independent rates ignore the x provider") {
  const RateFunction rf = two_state_const();
  Mat Q(2, 2);
  Q << -1.0, 1.0, 2.0, -2.0;
  const PoissonDrive d = sample_drive(50.0, 4.0, 777);
  const auto xa = [](double t) { return Vec::Constant(1, std::sin(t)); };
  const auto xb = [](double t) { return Vec::Constant(1, 100.0 * t); };
  const SwitchPath sa = evolve_switch(rf, d, xa, 1);
  const SwitchPath sb = evolve_switch(rf, d, xb, 1);
  const SwitchPath sq = evolve_switch(Q, d, 1);
  REQUIRE(sa.switches.size() == sb.switches.size());
  REQUIRE(sa.switches.size() == sq.switches.size());
  for (size_t k = 0; k < sa.switches.size(); ++k) {
    CHECK(sa.switches[k] == sb.switches[k]);
    CHECK(sa.switches[k] == sq.switches[k]);
  }
}

TEST_CASE("symmetric difference: worked example and symmetry") {
  RatePair up;
  up.from = 1;
  up.to = 2;
  up.kind = RatePair::Kind::Programmatic;
  up.fn = [](const Vec& x) { return 1.0 + 0.3 * x[0]; };
  std::vector<RatePair> pairs{up, constant_pair(2, 1, 2.0)};
  RateFunction rf(2, 1, pairs);
  GridSpec grid;
  grid.lo = -2.0;
  grid.hi = 2.0;
  rf.finalize(grid);

  Vec x = Vec::Zero(1), y = Vec::Constant(1, 1.0);
  // q12: 1 vs 1.3 -> direct overlap 0.3; q21: [1,3) vs [1.3,3.3) -> 0.6.
  CHECK(symm_diff_measure(rf, x, y, 1, 2) == Approx(0.3).epsilon(1e-12));
  CHECK(symm_diff_measure(rf, x, y, 2, 1) == Approx(0.6).epsilon(1e-12));
  CHECK(symm_diff_measure(rf, x, y, 1, 2) == symm_diff_measure(rf, y, x, 1, 2));
  CHECK(symm_diff_measure(rf, x, x, 1, 2) == 0.0);
  CHECK(symm_diff_measure(rf, y, y, 2, 1) == 0.0);
}

TEST_CASE("interval shift bound over randomized tanh instances") {
  Rng rng(1234);
  long checked = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const int N = 2 + static_cast<int>(rng.uniform() * 2);  // 2..3
    std::vector<RatePair> pairs;
    for (int i = 1; i <= N; ++i) {
      for (int j = 1; j <= N; ++j) {
        if (i == j || rng.uniform() < 0.25) continue;
        RatePair p;
        p.from = i;
        p.to = j;
        p.kind = RatePair::Kind::Tanh;
        p.base = 0.5 + 2.0 * rng.uniform();
        p.amp = (rng.uniform() - 0.5) * 0.8;
        p.dir = Vec::Constant(1, 0.5 + rng.uniform());
        pairs.push_back(p);
      }
    }
    if (pairs.empty()) continue;
    RateFunction rf(N, 1, pairs);
    rf.finalize();
    const double Ktilde = 2.0 * N * (N - 1) * rf.cq() + 1.0;

    Vec x(1), y(1);
    x[0] = 6.0 * (rng.uniform() - 0.5);
    y[0] = 6.0 * (rng.uniform() - 0.5);
    for (int i = 1; i <= N; ++i)
      for (int j = 1; j <= N; ++j) {
        if (i == j) continue;
        const double d = symm_diff_measure(rf, x, y, i, j);
        CHECK(d <= Ktilde * std::abs(x[0] - y[0]) + 1e-12);
        ++checked;
      }
  }
  CHECK(checked > 5000);
}

TEST_CASE("mismatch measure from merged switch timelines") {
  SwitchPath a;
  a.initial = 1;
  a.switches = {{1.0, 2}, {3.0, 1}};
  SwitchPath b;
  b.initial = 1;
  b.switches = {{2.0, 2}};
  // Disagree on [1,2) and [3,5).
  CHECK(mismatch_measure(a, b, 5.0) == Approx(3.0).epsilon(1e-15));
  CHECK(mismatch_measure(b, a, 5.0) == Approx(3.0).epsilon(1e-15));
  CHECK(mismatch_measure(a, a, 5.0) == 0.0);
  // Truncation at the horizon.
  CHECK(mismatch_measure(a, b, 1.5) == Approx(0.5).epsilon(1e-15));
}
