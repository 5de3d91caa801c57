#pragma once
// Interval representation of the switching process: for each anchor x the
// off-diagonal rates are laid out as consecutive left-closed right-open
// intervals on [0, M], enumerated row by row (row i lists targets j != i in
// ascending order).  A mark landing in the (i,j) interval moves regime i to j.

#include <functional>
#include <iosfwd>
#include <utility>
#include <vector>

#include "rsdp/model.hpp"
#include "rsdp/types.hpp"

namespace rsdp {

struct IntervalTable {
  struct Entry {
    int from = 0, to = 0;
    double lo = 0.0, hi = 0.0;  // hi - lo == q_ij(x); empty entries keep lo == hi
  };
  int N = 0;
  std::vector<Entry> entries;  // enumeration order; N*(N-1) entries
  double total = 0.0;          // sum of all exit rates at the anchor

  // Displacement (l - i) if z lies in the (i,l) interval, else 0.
  int displacement(int i, double z) const;
};

IntervalTable build_intervals(const RateFunction& rates, const Vec& x);
IntervalTable build_intervals(const Mat& Q);  // constant rates from a generator

// Same row/entry traversal as build_intervals but without materializing the
// table; used in simulation loops.  Bitwise-identical to the table version.
int jump_displacement(const RateFunction& rates, const Vec& x, int i, double z);
int jump_displacement(const Mat& Q, int i, double z);

struct PoissonDrive {
  double T = 0.0;
  double M = 0.0;
  std::vector<double> times;  // strictly increasing in (0, T]
  std::vector<double> marks;  // uniform on [0, M)
  uint64_t seed = 0;
};

// Gaps are Exponential(M), marks Uniform[0, M); M == 0 yields no events.
PoissonDrive sample_drive(double T, double M, uint64_t seed);

void write_drive_csv(const PoissonDrive& drive, std::ostream& os);
PoissonDrive read_drive_csv(std::istream& is, double T, double M);

struct SwitchPath {
  int initial = 1;
  std::vector<std::pair<double, int>> switches;  // (time, new regime), changes only
  int at(double t) const;  // right-continuous evaluation
};

SwitchPath evolve_switch(const RateFunction& rates, const PoissonDrive& drive,
                         const std::function<Vec(double)>& x_at, int i0);
SwitchPath evolve_switch(const Mat& Q, const PoissonDrive& drive, int i0);

// Lebesgue measure of the symmetric difference of the (i,j) intervals at two
// anchors; exact interval arithmetic.
double symm_diff_measure(const RateFunction& rates, const Vec& x, const Vec& y,
                         int i, int j);

// Lebesgue measure of {t in [0,T] : a(t) != b(t)} for two switch paths.
double mismatch_measure(const SwitchPath& a, const SwitchPath& b, double T);

}  // namespace rsdp
