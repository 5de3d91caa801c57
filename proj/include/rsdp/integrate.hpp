#pragma once
// Euler scheme with grid-frozen coefficients, fine-grid reference solutions
// under common random numbers, strong-error estimation, and the measure of
// time where the coarse and reference switch paths disagree.

#include <optional>
#include <vector>

#include "rsdp/model.hpp"
#include "rsdp/skorokhod.hpp"
#include "rsdp/types.hpp"

namespace rsdp {

struct TimeGrid {
  double delta = 0.0;
  double T = 0.0;
  long steps() const { return static_cast<long>(std::llround(T / delta)); }
  double floor_time(double t) const {  // t_delta = floor(t/delta) * delta
    return std::floor(t / delta) * delta;
  }
};

// Increments on the finest grid; any step that is an integer multiple of
// delta_min aggregates by exact summation of the underlying increments.
struct BrownianPath {
  int n = 0;
  double delta_min = 0.0;
  long steps = 0;
  std::vector<double> dW;  // steps * n, N(0, delta_min I) blocks
  uint64_t seed = 0;

  void increment(long k0, long k1, Vec& out) const;  // sum over cells [k0, k1)
};

BrownianPath sample_brownian(int n, double delta_min, double T, uint64_t seed);

struct SamplePath {
  double delta = 0.0;
  int n = 0;
  std::vector<double> xs;  // (steps+1) * n grid values
  SwitchPath regimes;      // exact switch times
  uint64_t drive_seed = 0, brownian_seed = 0;

  long nodes() const { return static_cast<long>(xs.size()) / n; }
  double time(long k) const { return k * delta; }
  Vec value(long k) const;
};

// One Euler path on its own grid: drift and the interval-table anchor are
// frozen at the left endpoint of the step cell that contains the current
// time; switch updates happen at exact drive jump times.  Requires constant
// sigma across regimes and state.
SamplePath em_path(const Model& model, double delta, const PoissonDrive& drive,
                   const BrownianPath& brownian, const Vec& x0, int i0);

// Finest-grid Euler path (delta_ref == brownian.delta_min); the truth proxy
// for error measurements.
SamplePath reference_path(const Model& model, double delta_ref,
                          const PoissonDrive& drive, const BrownianPath& brownian,
                          const Vec& x0, int i0);

struct ErrorRow {
  double delta = 0.0;
  double err_mean = 0.0, err_se = 0.0;        // E sup_t |X - Y|
  double mismatch_mean = 0.0, mismatch_se = 0.0;
  double l1_mean = 0.0;                        // int_0^T E|X - Y| dt
  long paths = 0;
};

struct ErrorReport {
  std::vector<ErrorRow> rows;           // ordered as the input delta list
  std::optional<double> slope;          // log-log fit; nullopt when errors vanish
  double slope_residual = 0.0;
  std::vector<long> divergent_paths;
};

// Shared-noise comparison of the reference path against every coarse step
// size.  Per path one drive and one Brownian path drive everything; the sup
// is taken over the union of grid and jump times (exact here: the pairwise
// difference is piecewise linear between fine nodes because the shared noise
// cancels and drifts are frozen per cell).
ErrorReport strong_error(const Model& model, const std::vector<double>& deltas,
                         double delta_ref, double T, const Vec& x0, int i0,
                         int paths, uint64_t seed, int workers = 1);

// Expected Lebesgue measure of {t <= T : coarse and reference regimes differ}
// on shared drives; exact pathwise from the merged switch timelines.
MCEstimate mismatch_integral(const Model& model, double delta, double delta_ref,
                             double T, const Vec& x0, int i0, int paths,
                             uint64_t seed, int workers = 1);

struct IncrementCheck {
  bool pass = false;
  double worst_margin = 0.0;  // min over sampled s of bound - estimate (in SE units margin applied)
  std::string detail;
};

// Verifies E|Y(s) - Y(s_delta)| <= 2 C1 sqrt(delta) within 3 standard errors
// at sampled off-grid times; C1 from the declared coefficient bound.
IncrementCheck increment_check(const Model& model, double delta, double T,
                               int paths, uint64_t seed);

void write_error_csv(const ErrorReport& report, std::ostream& os);

}  // namespace rsdp
