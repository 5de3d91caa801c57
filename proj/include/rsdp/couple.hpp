#pragma once
// Reflection coupling of two copies of the process, meeting-time statistics,
// contraction-rate measurement, moment-bound checks, and the quadrature bound
// on the fixed-environment expected meeting time.

#include <optional>
#include <vector>

#include "rsdp/model.hpp"
#include "rsdp/types.hpp"

namespace rsdp {

// Noise increments for the coupled pair driven by one n-dim Brownian motion:
// the second copy receives the increment reflected across the hyperplane
// orthogonal to x - y.  For x == y the copies run synchronously.
void reflected_increment(const Vec& x, const Vec& y, const Mat& sigma_x,
                         const Mat& sigma_y, const Vec& dW, Vec& dx_noise,
                         Vec& dy_noise);

struct MeetingTimes {
  double tau = 0.0;   // first simultaneous visit to the designated regime
  double T = 0.0;     // first full meeting (states and regimes)
  bool tau_censored = false;
  bool T_censored = false;
  double horizon = 0.0;
};

struct CouplingOptions {
  double delta = 1.0 / 512;
  double Tmax = 50.0;
  int designated_state = 1;
  double epsilon = 1e-6;  // numerical meeting threshold on |X - Y|
};

struct CouplingPoint {  // one recorded step of the joint path
  double t = 0.0;
  Vec x, y;
  int i = 1, j = 1;
};

struct CouplingResult {
  MeetingTimes times;
  bool glued = false;
  double glue_time = 0.0;
  std::vector<CouplingPoint> trace;  // filled only when requested
};

// Two independent drives for the two regime components (interval tables
// anchored at the current continuous states), one shared Brownian motion,
// Euler steps between grid and jump times.  After meeting the pair is glued
// and evolves as a single path.
CouplingResult simulate_coupling(const Model& model, const Vec& x, int i,
                                 const Vec& y, int j, const CouplingOptions& opt,
                                 uint64_t seed, bool record_trace = false);

struct TauTail {
  std::vector<double> grid;       // time grid
  std::vector<double> survival;   // empirical P(tau >= t)
  double theta_hat = 0.0;         // largest rate with survival <= tol * exp(-theta t)
  double ls_slope = 0.0;          // unconstrained log-linear fit (diagnostic)
  double mean_tau = 0.0, se_tau = 0.0;
  long censored = 0;
  bool dominated = false;         // survival <= tol * exp(-theta_hat t) on the grid
  double coupled_fraction = 0.0;  // paths whose full meeting time T was realized
  double mean_T = 0.0;            // over coupled paths
  long T_censored = 0;
  long tau_gt_T = 0;              // realized tau exceeding realized T (never expected)
};

TauTail tau_tail(const Model& model, const Vec& x, int i, const Vec& y, int j,
                 const CouplingOptions& opt, int paths, uint64_t seed,
                 double tolerance = 1.1, int workers = 1);

struct ContractionCurve {
  std::vector<double> times;
  std::vector<double> mean_sq;  // E|X - Y|^2, glued pairs contribute 0
  double fitted_rate = 0.0;
  double target_rate = 0.0;       // spectral value when available
  bool target_vacuous = false;    // target <= 0: decay not implied
  bool pass = false;              // fitted >= target * (1 - tolerance)
};

ContractionCurve contraction_rate(const Model& model, const Vec& x, int i,
                                  const Vec& y, int j, double T,
                                  const CouplingOptions& opt, int paths,
                                  uint64_t seed, double tolerance = 0.20,
                                  int workers = 1);

struct MomentBoundReport {
  std::vector<double> x0_norms;
  std::vector<double> ratios;    // sup_t E|X(t)|^2 / (1 + |x0|^2)
  double spread = 0.0;           // max ratio / min ratio
  bool bounded = false;          // no sustained growth detected
  bool pass = false;             // spread <= tolerance and bounded
};

MomentBoundReport moment_bound(const Model& model, const std::vector<Vec>& x0s,
                               int i0, double T, double delta, int paths,
                               uint64_t seed, double spread_tolerance = 5.0,
                               int workers = 1);

struct CouplingBoundParams {
  double C2 = 0.0;   // ellipticity floor (> 0)
  double C3 = 0.0;   // strong-dissipation coefficient (> 0)
  double beta = 0.0;
  double p = 0.0;    // > 2
};

// Upper bound on the expected fixed-environment meeting time at separation r:
//   bound(r) = (1 / (2 C2^2)) * int_0^r exp(-G(s)) int_s^inf exp(G(u)) du ds,
//   G(u) = [beta (u^2 - 1)/2 - C3 (u^p - 1)/p] / (4 C2^2).
// Adaptive quadrature, absolute tolerance 1e-10, inner tail truncated at
// relative weight 1e-16; evaluated in log space to avoid overflow.
double coupling_time_bound(const CouplingBoundParams& params, double r);

// Independent fixed-order Gauss-Legendre evaluation of the same bound, used
// to cross-check the adaptive scheme.
double coupling_time_bound_gauss(const CouplingBoundParams& params, double r);

struct FixedEnvMeeting {
  double mean = 0.0, std_error = 0.0;
  double censored_fraction = 0.0;
  long paths = 0;
  bool inconclusive = false;  // censoring above one half: raise the horizon
};

// Reflected diffusion pair in one frozen regime; empirical mean meeting time.
FixedEnvMeeting fixed_env_meeting(const Model& model, int i0_env, const Vec& x,
                                  const Vec& y, double delta, double Tmax,
                                  int paths, uint64_t seed, int workers = 1);

}  // namespace rsdp
