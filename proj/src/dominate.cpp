#include "rsdp/dominate.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include "rsdp/integrate.hpp"
#include "rsdp/io.hpp"
#include "rsdp/rng.hpp"

namespace rsdp {
namespace {

constexpr double kTol = 1e-9;

// Pair-sum conditions for pathwise domination on a shared drive.  Above needs
// the contracted edge bound below the pair-sum infimum; Below needs the
// pair-sum supremum below the expanded edge bound.  Interior pair sums must be
// constant either way.
void domination_conditions(const Model& m, DominationSide side, DominatingChain& out) {
  out.conditions_hold = true;
  if (m.N == 1) {
    out.condition_detail = "single regime";
    return;
  }
  for (int i = 1; i <= m.N - 2; ++i) {
    PairSumInfo info = pair_sum_info(m, i);
    if (!info.constant) {
      out.conditions_hold = false;
      out.condition_detail = "interior pair (" + std::to_string(i) + "," +
                             std::to_string(i + 1) + ") sum varies over [" +
                             fmt17(info.lo) + ", " + fmt17(info.hi) + "]";
      out.witness = info.witness_max;
      return;
    }
  }
  const int e = m.N - 1;
  PairSumInfo range = pair_sum_info(m, e);
  if (side == DominationSide::Above) {
    const double bound = m.rates.bounds(e, e + 1).sup + m.rates.bounds(e + 1, e).inf;
    if (bound <= range.lo + kTol) {
      out.condition_detail = "edge bound " + fmt17(bound) + " <= inf pair sum " +
                             fmt17(range.lo);
    } else {
      out.conditions_hold = false;
      out.condition_detail = "edge bound " + fmt17(bound) +
                             " exceeds the pair sum infimum " + fmt17(range.lo);
      out.witness = range.witness_min;
    }
  } else {
    const double bound = m.rates.bounds(e, e + 1).inf + m.rates.bounds(e + 1, e).sup;
    if (range.hi <= bound + kTol) {
      out.condition_detail = "sup pair sum " + fmt17(range.hi) + " <= edge bound " +
                             fmt17(bound);
    } else {
      out.conditions_hold = false;
      out.condition_detail = "pair sum supremum " + fmt17(range.hi) +
                             " exceeds the edge bound " + fmt17(bound);
      out.witness = range.witness_max;
    }
  }
}

}  // namespace

DominatingChain build_dominating(const Model& model, DominationSide side) {
  if (!model.rates.birth_death())
    throw Error(ErrorKind::Structural,
                "dominating chains need a birth-death rate structure");
  DominatingChain chain;
  chain.N = model.N;
  chain.side = side;
  chain.Q = Mat::Zero(model.N, model.N);
  for (int i = 1; i <= model.N - 1; ++i) {
    const PairBounds& up = model.rates.bounds(i, i + 1);
    const PairBounds& down = model.rates.bounds(i + 1, i);
    if (side == DominationSide::Above) {
      chain.Q(i - 1, i) = up.sup;
      chain.Q(i, i - 1) = down.inf;
    } else {
      chain.Q(i - 1, i) = up.inf;
      chain.Q(i, i - 1) = down.sup;
    }
  }
  for (int i = 0; i < model.N; ++i) chain.Q(i, i) = -chain.Q.row(i).sum();
  domination_conditions(model, side, chain);
  return chain;
}

double eta_bar(const Mat& Q, const Vec& lambda, DominationSide side) {
  const int N = static_cast<int>(Q.rows());
  if (N > 64)
    throw Error(ErrorKind::Unsupported, "spectral decay rates support at most 64 regimes");
  if (Q.cols() != N || lambda.size() != N)
    throw Error(ErrorKind::Config, "weight vector size must match the chain");
  for (int i = 0; i + 1 < N; ++i) {
    const bool ok = side == DominationSide::Above ? lambda[i + 1] >= lambda[i] - 1e-12
                                                  : lambda[i + 1] <= lambda[i] + 1e-12;
    if (!ok)
      throw Error(ErrorKind::Config,
                  std::string("weight vector must be ") +
                      (side == DominationSide::Above ? "nondecreasing" : "nonincreasing") +
                      " for this orientation");
  }
  Mat Ql = Q;
  for (int i = 0; i < N; ++i) Ql(i, i) += lambda[i];
  Eigen::EigenSolver<Mat> es(Ql);
  if (es.info() != Eigen::Success)
    throw Error(ErrorKind::Numeric, "eigenvalue computation failed");
  return -es.eigenvalues().real().maxCoeff();
}

DominationSide side_for(const Vec& lambda) {
  bool nondec = true, noninc = true;
  for (int i = 0; i + 1 < lambda.size(); ++i) {
    if (lambda[i + 1] < lambda[i]) nondec = false;
    if (lambda[i + 1] > lambda[i]) noninc = false;
  }
  if (nondec) return DominationSide::Above;
  if (noninc) return DominationSide::Below;
  throw Error(ErrorKind::Config,
              "weight vector is not monotone; no orientation applies");
}

DominatingChain alpha_chain(const Model& model) {
  if (!model.constants.alpha)
    throw Error(ErrorKind::Assumption,
                "per-regime dissipativity rates must be declared for this bound");
  Vec alpha(model.N);
  for (int i = 0; i < model.N; ++i) alpha[i] = (*model.constants.alpha)[i];
  return build_dominating(model, side_for(alpha));
}

double eta_alpha(const Model& model) {
  DominatingChain chain = alpha_chain(model);
  Vec alpha(model.N);
  for (int i = 0; i < model.N; ++i) alpha[i] = (*model.constants.alpha)[i];
  return eta_bar(chain.Q, alpha, chain.side);
}

SwitchPath simulate_dominating(const Mat& Q, const PoissonDrive& drive, int i0) {
  return evolve_switch(Q, drive, i0);
}

namespace {

double lambda_integral(const SwitchPath& path, const Vec& lambda, double t) {
  double acc = 0.0;
  double t_prev = 0.0;
  int cur = path.initial;
  for (const auto& s : path.switches) {
    if (s.first >= t) break;
    acc += lambda[cur - 1] * (s.first - t_prev);
    t_prev = s.first;
    cur = s.second;
  }
  acc += lambda[cur - 1] * (t - t_prev);
  return acc;
}

MCEstimate reduce_exponentials(const std::vector<double>& exponents) {
  const long P = static_cast<long>(exponents.size());
  double shift = exponents[0];
  for (double e : exponents) shift = std::max(shift, e);
  KahanSum sum, sumsq;
  for (double e : exponents) {
    const double v = std::exp(e - shift);
    sum.add(v);
    sumsq.add(v * v);
  }
  const double mean_shifted = sum.value() / P;
  MCEstimate est;
  est.paths = P;
  est.mean = std::exp(shift) * mean_shifted;
  if (P > 1) {
    const double var = std::max(0.0, (sumsq.value() / P - mean_shifted * mean_shifted) *
                                         (static_cast<double>(P) / (P - 1)));
    est.std_error = std::exp(shift) * std::sqrt(var / P);
  }
  return est;
}

}  // namespace

MCEstimate exp_functional_chain(const Mat& Q, const Vec& lambda, int i0, double t,
                                int paths, uint64_t seed) {
  const int N = static_cast<int>(Q.rows());
  if (lambda.size() != N)
    throw Error(ErrorKind::Config, "weight vector size must match the chain");
  if (i0 < 1 || i0 > N) throw Error(ErrorKind::Config, "start regime out of range");
  if (paths < 1) throw Error(ErrorKind::Config, "path count must be positive");
  double max_exit = 0.0;
  for (int i = 0; i < N; ++i) max_exit = std::max(max_exit, -Q(i, i));
  const double M = static_cast<double>(N) * (N - 1) * max_exit;
  const IntervalTable table = build_intervals(Q);
  std::vector<double> exponents(paths);
  for (int p = 0; p < paths; ++p) {
    const PoissonDrive drive = sample_drive(t, M, derive_seed(seed, "drive", p));
    SwitchPath path;
    path.initial = i0;
    int cur = i0;
    for (size_t k = 0; k < drive.times.size(); ++k) {
      const int d = table.displacement(cur, drive.marks[k]);
      if (d != 0) {
        cur += d;
        path.switches.emplace_back(drive.times[k], cur);
      }
    }
    exponents[p] = lambda_integral(path, lambda, t);
  }
  return reduce_exponentials(exponents);
}

MCEstimate exp_functional_model(const Model& model, const Vec& lambda, const Vec& x0,
                                int i0, double t, double delta, int paths,
                                uint64_t seed) {
  if (lambda.size() != model.N)
    throw Error(ErrorKind::Config, "weight vector size must match the regime count");
  std::vector<double> exponents(paths);
  for (int p = 0; p < paths; ++p) {
    const PoissonDrive drive = sample_drive(t, model.M(), derive_seed(seed, "drive", p));
    const BrownianPath bm =
        sample_brownian(model.n, delta, t, derive_seed(seed, "brownian", p));
    const SamplePath path = em_path(model, delta, drive, bm, x0, i0);
    exponents[p] = lambda_integral(path.regimes, lambda, t);
  }
  return reduce_exponentials(exponents);
}

double exp_functional_matrix(const Mat& Q, const Vec& lambda, int i0, double t) {
  const int N = static_cast<int>(Q.rows());
  if (lambda.size() != N)
    throw Error(ErrorKind::Config, "weight vector size must match the chain");
  Mat Ql = Q;
  for (int i = 0; i < N; ++i) Ql(i, i) += lambda[i];
  const Mat E = (t * Ql).exp();
  return E.row(i0 - 1).sum();
}

double fit_log_slope(const std::vector<double>& times, const std::vector<double>& values) {
  if (times.size() != values.size() || times.size() < 2)
    throw Error(ErrorKind::Config, "slope fit needs at least two points");
  KahanSum st, sy, stt, sty;
  for (size_t k = 0; k < times.size(); ++k) {
    if (!(values[k] > 0.0))
      throw Error(ErrorKind::Numeric, "slope fit needs positive values");
    const double y = std::log(values[k]);
    st.add(times[k]);
    sy.add(y);
    stt.add(times[k] * times[k]);
    sty.add(times[k] * y);
  }
  const double n = static_cast<double>(times.size());
  const double denom = n * stt.value() - st.value() * st.value();
  if (denom == 0.0) throw Error(ErrorKind::Numeric, "degenerate time grid in slope fit");
  return (n * sty.value() - st.value() * sy.value()) / denom;
}

}  // namespace rsdp
