#include "rsdp/measure.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rsdp/integrate.hpp"
#include "rsdp/io.hpp"
#include "rsdp/parallel.hpp"
#include "rsdp/rng.hpp"

namespace rsdp {

double rho(const LabeledSample& a, const LabeledSample& b) {
  return (a.i != b.i ? 1.0 : 0.0) + (a.x - b.x).norm();
}

namespace {

// Balanced assignment by shortest augmenting paths with dual potentials;
// returns the column assigned to each row.
std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost) {
  const int m = static_cast<int>(cost.size());
  const double INF = 1e300;
  std::vector<double> u(m + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= m; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), INF);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = INF;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(m);
  for (int j = 1; j <= m; ++j) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

// Deterministic choice of `want` indices out of `have` (partial shuffle, then
// sorted for a stable cost-matrix order).
std::vector<int> subsample_indices(int have, int want, uint64_t seed) {
  std::vector<int> idx(have);
  std::iota(idx.begin(), idx.end(), 0);
  if (want < have) {
    Rng rng(seed);
    for (int k = 0; k < want; ++k) {
      const int j = k + static_cast<int>(rng.uniform() * (have - k));
      std::swap(idx[k], idx[std::min(j, have - 1)]);
    }
    idx.resize(want);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

}  // namespace

double wasserstein_rho(const std::vector<LabeledSample>& mu,
                       const std::vector<LabeledSample>& nu, uint64_t seed, int cap) {
  if (mu.empty() || nu.empty())
    throw Error(ErrorKind::Config, "empty sample set in transport distance");
  const int m = static_cast<int>(std::min(mu.size(), nu.size()));
  if (m > cap)
    throw Error(ErrorKind::Config,
                "sample count " + std::to_string(m) + " exceeds the assignment cap " +
                    std::to_string(cap) + "; subsample before calling");
  const std::vector<int> ia =
      subsample_indices(static_cast<int>(mu.size()), m, derive_seed(seed, "wsub", 0));
  const std::vector<int> ib =
      subsample_indices(static_cast<int>(nu.size()), m, derive_seed(seed, "wsub", 1));
  std::vector<std::vector<double>> cost(m, std::vector<double>(m));
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) cost[a][b] = rho(mu[ia[a]], nu[ib[b]]);
  const std::vector<int> assign = solve_assignment(cost);
  KahanSum total;
  for (int a = 0; a < m; ++a) total.add(cost[a][assign[a]]);
  return total.value() / m;
}

double wasserstein_rho_bruteforce(const std::vector<LabeledSample>& mu,
                                  const std::vector<LabeledSample>& nu) {
  if (mu.size() != nu.size() || mu.empty() || mu.size() > 10)
    throw Error(ErrorKind::Config, "brute-force transport needs equal sizes <= 10");
  const int m = static_cast<int>(mu.size());
  std::vector<std::vector<double>> cost(m, std::vector<double>(m));
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) cost[a][b] = rho(mu[a], nu[b]);
  std::vector<int> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    KahanSum total;
    for (int a = 0; a < m; ++a) total.add(cost[a][perm[a]]);
    best = std::min(best, total.value());
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / m;
}

InvariantConvergence invariant_convergence(const Model& model,
                                           const std::vector<std::pair<Vec, int>>& inits,
                                           const std::vector<double>& times,
                                           const InvariantOptions& opt, uint64_t seed,
                                           int workers) {
  if (inits.size() < 2)
    throw Error(ErrorKind::Config, "need at least two initial conditions");
  if (times.empty()) throw Error(ErrorKind::Config, "no snapshot times given");
  for (size_t k = 1; k < times.size(); ++k)
    if (times[k] <= times[k - 1])
      throw Error(ErrorKind::Config, "snapshot times must increase");
  if (opt.paths > opt.cap)
    throw Error(ErrorKind::Config, "paths per law exceed the assignment cap");
  if (opt.paths < 4) throw Error(ErrorKind::Config, "need at least four paths");

  const double t_final = times.back();
  const double horizon = t_final + opt.probe_lag;
  std::vector<long> snap_nodes;
  for (double t : times) {
    const long k = std::llround(t / opt.delta);
    if (std::abs(t - k * opt.delta) > 1e-9)
      throw Error(ErrorKind::Config,
                  "snapshot time " + fmt17(t) + " is not a multiple of the step size");
    snap_nodes.push_back(k);
  }
  const long probe_node = std::llround(horizon / opt.delta);
  if (std::abs(horizon - probe_node * opt.delta) > 1e-9)
    throw Error(ErrorKind::Config, "probe lag is not a multiple of the step size");

  InvariantConvergence out;
  out.times = times;
  const AssumptionReport rep = validate_model(model);
  for (const auto& v : rep.verdicts)
    if (v.applicable && !v.pass)
      out.warnings.push_back("hypothesis " + v.name + " failed: " + v.detail);

  const long Q = static_cast<long>(inits.size());
  const long P = opt.paths;
  const size_t S = snap_nodes.size();
  // laws[q][s][p]; the probe snapshot is stored at index S.
  std::vector<std::vector<std::vector<LabeledSample>>> laws(
      Q, std::vector<std::vector<LabeledSample>>(S + 1,
                                                 std::vector<LabeledSample>(P)));
  parallel_for(Q * P, workers, [&](long idx) {
    const long q = idx / P;
    const long p = idx % P;
    const PoissonDrive drive =
        sample_drive(horizon, model.M(), derive_seed(seed, "drive", idx));
    const BrownianPath bm =
        sample_brownian(model.n, opt.delta, horizon, derive_seed(seed, "brownian", idx));
    const SamplePath path =
        em_path(model, opt.delta, drive, bm, inits[q].first, inits[q].second);
    for (size_t s = 0; s < S; ++s) {
      laws[q][s][p].x = path.value(snap_nodes[s]);
      laws[q][s][p].i = path.regimes.at(snap_nodes[s] * opt.delta);
    }
    laws[q][S][p].x = path.value(probe_node);
    laws[q][S][p].i = path.regimes.at(probe_node * opt.delta);
  });

  long cell = 0;
  for (long a = 0; a < Q; ++a) {
    for (long b = a + 1; b < Q; ++b) {
      std::vector<double> row;
      for (size_t s = 0; s < S; ++s)
        row.push_back(wasserstein_rho(laws[a][s], laws[b][s],
                                      derive_seed(seed, "wpair", cell++), opt.cap));
      out.pair_distance.push_back(std::move(row));
    }
  }
  for (long q = 0; q < Q; ++q)
    out.stationarity.push_back(wasserstein_rho(laws[q][S - 1], laws[q][S],
                                               derive_seed(seed, "wstat", q), opt.cap));
  {
    const auto& pool = laws[0][S - 1];
    std::vector<LabeledSample> first(pool.begin(), pool.begin() + P / 2);
    std::vector<LabeledSample> second(pool.begin() + P / 2, pool.begin() + 2 * (P / 2));
    out.noise_floor =
        wasserstein_rho(first, second, derive_seed(seed, "wfloor", 0), opt.cap);
  }
  return out;
}

}  // namespace rsdp
