#include "rsdp/skorokhod.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rsdp/io.hpp"
#include "rsdp/rng.hpp"

namespace rsdp {
namespace {

void check_rate(double q, int i, int j, const char* what) {
  if (!std::isfinite(q))
    throw Error(ErrorKind::Numeric, std::string(what) + ": rate q_" + std::to_string(i) +
                                        std::to_string(j) + " is not finite");
  if (q < 0.0)
    throw Error(ErrorKind::Config, std::string(what) + ": negative rate q_" +
                                       std::to_string(i) + std::to_string(j) + " = " +
                                       fmt17(q));
}

}  // namespace

int IntervalTable::displacement(int i, double z) const {
  const int base = (i - 1) * (N - 1);
  for (int k = 0; k < N - 1; ++k) {
    const Entry& e = entries[base + k];
    if (z >= e.lo && z < e.hi) return e.to - i;
  }
  return 0;
}

IntervalTable build_intervals(const RateFunction& rates, const Vec& x) {
  IntervalTable t;
  t.N = rates.N();
  t.entries.reserve(static_cast<size_t>(t.N) * (t.N - 1));
  double cum = 0.0;
  for (int i = 1; i <= t.N; ++i) {
    for (int j = 1; j <= t.N; ++j) {
      if (j == i) continue;
      const double q = rates.eval(x, i, j);
      check_rate(q, i, j, "interval table");
      t.entries.push_back({i, j, cum, cum + q});
      cum += q;
    }
  }
  t.total = cum;
  return t;
}

IntervalTable build_intervals(const Mat& Q) {
  if (Q.rows() != Q.cols() || Q.rows() < 1)
    throw Error(ErrorKind::Config, "transition matrix must be square");
  IntervalTable t;
  t.N = static_cast<int>(Q.rows());
  t.entries.reserve(static_cast<size_t>(t.N) * (t.N - 1));
  double cum = 0.0;
  for (int i = 1; i <= t.N; ++i) {
    for (int j = 1; j <= t.N; ++j) {
      if (j == i) continue;
      const double q = Q(i - 1, j - 1);
      check_rate(q, i, j, "interval table");
      t.entries.push_back({i, j, cum, cum + q});
      cum += q;
    }
  }
  t.total = cum;
  return t;
}

// Same cumulative traversal as build_intervals, stopping inside row i; the
// partial sums are bitwise identical to the table endpoints.
int jump_displacement(const RateFunction& rates, const Vec& x, int i, double z) {
  const int N = rates.N();
  double cum = 0.0;
  for (int r = 1; r < i; ++r) {
    for (int j = 1; j <= N; ++j) {
      if (j == r) continue;
      const double q = rates.eval(x, r, j);
      check_rate(q, r, j, "jump evaluation");
      cum += q;
    }
  }
  for (int j = 1; j <= N; ++j) {
    if (j == i) continue;
    const double q = rates.eval(x, i, j);
    check_rate(q, i, j, "jump evaluation");
    if (z >= cum && z < cum + q) return j - i;
    cum += q;
  }
  return 0;
}

int jump_displacement(const Mat& Q, int i, double z) {
  const int N = static_cast<int>(Q.rows());
  double cum = 0.0;
  for (int r = 1; r < i; ++r)
    for (int j = 1; j <= N; ++j) {
      if (j == r) continue;
      cum += Q(r - 1, j - 1);
    }
  for (int j = 1; j <= N; ++j) {
    if (j == i) continue;
    const double q = Q(i - 1, j - 1);
    if (z >= cum && z < cum + q) return j - i;
    cum += q;
  }
  return 0;
}

PoissonDrive sample_drive(double T, double M, uint64_t seed) {
  if (!(T > 0.0)) throw Error(ErrorKind::Config, "drive horizon must be positive");
  if (M < 0.0) throw Error(ErrorKind::Config, "drive intensity must be nonnegative");
  PoissonDrive d;
  d.T = T;
  d.M = M;
  d.seed = seed;
  if (M == 0.0) return d;
  Rng rng(seed);
  double t = 0.0;
  while (true) {
    t += rng.exponential(M);
    if (t > T) break;
    d.times.push_back(t);
    d.marks.push_back(rng.uniform() * M);
  }
  return d;
}

void write_drive_csv(const PoissonDrive& d, std::ostream& os) {
  os << "k,time,mark\n";
  for (size_t k = 0; k < d.times.size(); ++k)
    os << k << "," << fmt17(d.times[k]) << "," << fmt17(d.marks[k]) << "\n";
}

PoissonDrive read_drive_csv(std::istream& is, double T, double M) {
  PoissonDrive d;
  d.T = T;
  d.M = M;
  std::string line;
  if (!std::getline(is, line) || line.rfind("k,time,mark", 0) != 0)
    throw Error(ErrorKind::Config, "drive file missing header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    std::getline(row, cell, ',');
    const double t = std::stod(cell);
    std::getline(row, cell, ',');
    const double mark = std::stod(cell);
    if (!d.times.empty() && t <= d.times.back())
      throw Error(ErrorKind::Config, "drive times must increase");
    d.times.push_back(t);
    d.marks.push_back(mark);
  }
  return d;
}

int SwitchPath::at(double t) const {
  int cur = initial;
  for (const auto& s : switches) {
    if (s.first <= t)
      cur = s.second;
    else
      break;
  }
  return cur;
}

SwitchPath evolve_switch(const RateFunction& rates, const PoissonDrive& drive,
                         const std::function<Vec(double)>& x_at, int i0) {
  SwitchPath p;
  p.initial = i0;
  int cur = i0;
  for (size_t k = 0; k < drive.times.size(); ++k) {
    const Vec x = x_at(drive.times[k]);
    const int d = jump_displacement(rates, x, cur, drive.marks[k]);
    if (d != 0) {
      cur += d;
      p.switches.emplace_back(drive.times[k], cur);
    }
  }
  return p;
}

SwitchPath evolve_switch(const Mat& Q, const PoissonDrive& drive, int i0) {
  const IntervalTable table = build_intervals(Q);
  SwitchPath p;
  p.initial = i0;
  int cur = i0;
  for (size_t k = 0; k < drive.times.size(); ++k) {
    const int d = table.displacement(cur, drive.marks[k]);
    if (d != 0) {
      cur += d;
      p.switches.emplace_back(drive.times[k], cur);
    }
  }
  return p;
}

double symm_diff_measure(const RateFunction& rates, const Vec& x, const Vec& y, int i,
                         int j) {
  const int N = rates.N();
  if (i < 1 || i > N || j < 1 || j > N || i == j)
    throw Error(ErrorKind::Config, "interval indices out of range");
  auto endpoints = [&](const Vec& v, double& lo, double& hi) {
    double cum = 0.0;
    for (int r = 1; r <= i; ++r) {
      for (int c = 1; c <= N; ++c) {
        if (c == r) continue;
        const double q = rates.eval(v, r, c);
        check_rate(q, r, c, "interval comparison");
        if (r == i && c == j) {
          lo = cum;
          hi = cum + q;
          return;
        }
        cum += q;
      }
    }
  };
  double lox = 0, hix = 0, loy = 0, hiy = 0;
  endpoints(x, lox, hix);
  endpoints(y, loy, hiy);
  const double overlap = std::max(0.0, std::min(hix, hiy) - std::max(lox, loy));
  return (hix - lox) + (hiy - loy) - 2.0 * overlap;
}

double mismatch_measure(const SwitchPath& a, const SwitchPath& b, double T) {
  double acc = 0.0;
  double t_prev = 0.0;
  int ra = a.initial, rb = b.initial;
  size_t ia = 0, ib = 0;
  while (t_prev < T) {
    double t_next = T;
    if (ia < a.switches.size()) t_next = std::min(t_next, a.switches[ia].first);
    if (ib < b.switches.size()) t_next = std::min(t_next, b.switches[ib].first);
    if (ra != rb) acc += t_next - t_prev;
    while (ia < a.switches.size() && a.switches[ia].first == t_next) {
      ra = a.switches[ia].second;
      ++ia;
    }
    while (ib < b.switches.size() && b.switches[ib].first == t_next) {
      rb = b.switches[ib].second;
      ++ib;
    }
    t_prev = t_next;
  }
  return acc;
}

}  // namespace rsdp
