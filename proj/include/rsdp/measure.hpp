#pragma once
// Empirical measures on R^n x {1..N}, the exact transport distance under
// rho((x,i),(y,j)) = 1_{i != j} + |x - y|, and convergence-to-equilibrium
// experiments.

#include <vector>

#include "rsdp/model.hpp"
#include "rsdp/types.hpp"

namespace rsdp {

struct LabeledSample {
  Vec x;
  int i = 1;
};

double rho(const LabeledSample& a, const LabeledSample& b);

// Exact optimal transport between equal-weight samples as a balanced
// assignment (shortest augmenting path).  Unequal counts are deterministically
// subsampled to the smaller size with `seed`; counts above `cap` are refused.
double wasserstein_rho(const std::vector<LabeledSample>& mu,
                       const std::vector<LabeledSample>& nu, uint64_t seed,
                       int cap = 2000);

// Brute-force assignment minimum (m <= 10); reference for exactness tests.
double wasserstein_rho_bruteforce(const std::vector<LabeledSample>& mu,
                                  const std::vector<LabeledSample>& nu);

struct InvariantConvergence {
  std::vector<double> times;
  // distance[t] between the two time-t laws, one row per ordered init pair
  std::vector<std::vector<double>> pair_distance;
  // stationarity probe per init: distance between law(t_final) and
  // law(t_final + lag)
  std::vector<double> stationarity;
  double noise_floor = 0.0;  // split-sample distance at t_final, first init
  std::vector<std::string> warnings;
};

struct InvariantOptions {
  double delta = 1.0 / 64;
  int paths = 2000;        // samples per empirical law
  double probe_lag = 5.0;
  int cap = 2000;
};

// Evolves independent batches from each initial condition (independent drives
// and Brownian paths per init), snapshots the laws at the requested times and
// compares them pairwise.  Hypothesis failures are attached as warnings; the
// experiment still runs.
InvariantConvergence invariant_convergence(const Model& model,
                                           const std::vector<std::pair<Vec, int>>& inits,
                                           const std::vector<double>& times,
                                           const InvariantOptions& opt,
                                           uint64_t seed, int workers = 1);

}  // namespace rsdp
