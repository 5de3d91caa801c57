#pragma once
// State-independent birth-death chains that bound the switching process from
// above or below on a shared drive, and the spectral decay rate of weighted
// exponential functionals.

#include "rsdp/model.hpp"
#include "rsdp/skorokhod.hpp"
#include "rsdp/types.hpp"

namespace rsdp {

// Above: chain built from sup(up-rates)/inf(down-rates); the switch path never
// exceeds it on a shared drive.  Below is the mirror (chain never exceeds the
// switch path).  Above pairs with nondecreasing weight vectors, Below with
// nonincreasing ones.
enum class DominationSide { Above, Below };

struct DominatingChain {
  int N = 0;
  Mat Q;                        // conservative birth-death generator
  DominationSide side = DominationSide::Above;
  bool conditions_hold = false; // pair-sum conditions for pathwise domination
  std::string condition_detail;
  std::string witness;          // x violating a condition, when found
};

// Requires a birth-death rate structure (throws Structural otherwise).
// Condition failures are reported in the verdict fields, not thrown.
DominatingChain build_dominating(const Model& model,
                                 DominationSide side = DominationSide::Above);

// Decay rate -max Re spec(Q + diag(lambda)).  lambda must be monotone
// consistently with `side` (nondecreasing for Above).  N <= 64.
double eta_bar(const Mat& Q, const Vec& lambda, DominationSide side);

// Orientation from the monotonicity of lambda; non-monotone vectors are
// rejected rather than guessed.
DominationSide side_for(const Vec& lambda);

// Per-regime dissipativity rates as the weight vector: the chain oriented by
// alpha and its decay rate.  alpha must be declared on the model.
DominatingChain alpha_chain(const Model& model);
double eta_alpha(const Model& model);

// Chain evolution on the same drive as the switch path (identical mark space).
SwitchPath simulate_dominating(const Mat& Q, const PoissonDrive& drive, int i0);

// E exp(int_0^t lambda_{L(s)} ds), L the chain with generator Q; Monte Carlo
// over drives, integrand exact per path, accumulation on log scale.
MCEstimate exp_functional_chain(const Mat& Q, const Vec& lambda, int i0, double t,
                                int paths, uint64_t seed);

// Same functional for the model's switch path, simulated jointly with the
// continuous state (step delta); drive shared layout with the chain variant.
MCEstimate exp_functional_model(const Model& model, const Vec& lambda,
                                const Vec& x0, int i0, double t, double delta,
                                int paths, uint64_t seed);

// Closed-form value E_i exp(int_0^t lambda_{L(s)} ds) = (exp(t(Q+diag lambda)) 1)_i
// via the matrix exponential; the deterministic reference for the Monte Carlo.
double exp_functional_matrix(const Mat& Q, const Vec& lambda, int i0, double t);

// Least-squares slope of log(values) against times; used for decay-rate fits.
double fit_log_slope(const std::vector<double>& times, const std::vector<double>& values);

}  // namespace rsdp
