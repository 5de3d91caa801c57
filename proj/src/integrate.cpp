#include "rsdp/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "rsdp/io.hpp"
#include "rsdp/parallel.hpp"
#include "rsdp/rng.hpp"

namespace rsdp {
namespace {

long checked_ratio(double coarse, double fine, const char* what) {
  const long r = std::llround(coarse / fine);
  if (r < 1 || std::abs(coarse - r * fine) > 1e-9 * std::max(coarse, 1.0))
    throw Error(ErrorKind::Config, std::string(what) + ": " + fmt17(coarse) +
                                       " is not an integer multiple of " + fmt17(fine));
  return r;
}

// Exact integral of s -> |a + s b| over [0,1].
double integral_norm_linear(const Vec& a, const Vec& b) {
  const double C = b.squaredNorm();
  const double A = a.squaredNorm();
  if (C == 0.0) return std::sqrt(A);
  const double B = a.dot(b);
  const double disc = A * C - B * B;
  if (disc <= 1e-14 * A * C) {
    // Collinear: |a + s b| = sqrt(C) |kappa + s| with kappa = B / C.
    const double kappa = B / C;
    double I;
    if (kappa >= 0.0)
      I = kappa + 0.5;
    else if (kappa <= -1.0)
      I = -kappa - 0.5;
    else
      I = 0.5 * (kappa * kappa + (1.0 + kappa) * (1.0 + kappa));
    return std::sqrt(C) * I;
  }
  auto F = [&](double s) {
    const double f = std::sqrt(A + 2.0 * B * s + C * s * s);
    return (B + C * s) * f / (2.0 * C) +
           disc / (2.0 * C * std::sqrt(C)) * std::asinh((B + C * s) / std::sqrt(disc));
  };
  return F(1.0) - F(0.0);
}

}  // namespace

void BrownianPath::increment(long k0, long k1, Vec& out) const {
  out.setZero();
  for (long k = k0; k < k1; ++k)
    for (int a = 0; a < n; ++a) out[a] += dW[k * n + a];
}

BrownianPath sample_brownian(int n, double delta_min, double T, uint64_t seed) {
  if (n < 1 || !(delta_min > 0.0) || !(T > 0.0))
    throw Error(ErrorKind::Config, "invalid Brownian grid parameters");
  BrownianPath b;
  b.n = n;
  b.delta_min = delta_min;
  b.steps = checked_ratio(T, delta_min, "Brownian horizon");
  b.seed = seed;
  b.dW.resize(static_cast<size_t>(b.steps) * n);
  Rng rng(seed);
  const double scale = std::sqrt(delta_min);
  for (size_t k = 0; k < b.dW.size(); ++k) b.dW[k] = scale * rng.normal();
  return b;
}

Vec SamplePath::value(long k) const {
  Vec v(n);
  for (int a = 0; a < n; ++a) v[a] = xs[k * n + a];
  return v;
}

SamplePath em_path(const Model& model, double delta, const PoissonDrive& drive,
                   const BrownianPath& brownian, const Vec& x0, int i0) {
  if (!model.sigma_shared())
    throw Error(ErrorKind::Assumption,
                "the Euler scheme requires one constant sigma across regimes");
  if (i0 < 1 || i0 > model.N)
    throw Error(ErrorKind::Config, "start regime out of range");
  const long r = checked_ratio(delta, brownian.delta_min, "Euler step");
  if (brownian.steps % r != 0)
    throw Error(ErrorKind::Config, "Brownian horizon is not a multiple of the step");
  const long K = brownian.steps / r;
  const Mat& sigma = model.sigma_of(1);

  SamplePath path;
  path.delta = delta;
  path.n = model.n;
  path.regimes.initial = i0;
  path.drive_seed = drive.seed;
  path.brownian_seed = brownian.seed;
  path.xs.reserve(static_cast<size_t>(K + 1) * model.n);

  Vec x = x0, anchor(model.n), b(model.n), dw(model.n), tmp(model.n);
  int reg = i0;
  size_t jp = 0;
  const auto& times = drive.times;
  const auto& marks = drive.marks;
  for (int a = 0; a < model.n; ++a) path.xs.push_back(x[a]);

  auto apply_event = [&](size_t k) {
    const int d = jump_displacement(model.rates, anchor, reg, marks[k]);
    if (d != 0) {
      reg += d;
      path.regimes.switches.emplace_back(times[k], reg);
    }
  };

  for (long k = 0; k < K; ++k) {
    const double t0 = k * delta;
    const double t1 = (k + 1) * delta;
    anchor = x;
    while (jp < times.size() && times[jp] == t0) apply_event(jp++);
    model.drift_eval(anchor, reg, b);
    while (jp < times.size() && times[jp] < t1) apply_event(jp++);
    brownian.increment(k * r, (k + 1) * r, dw);
    tmp = anchor;
    tmp += delta * b;
    tmp.noalias() += sigma * dw;
    x = tmp;
    if (!x.allFinite())
      throw Error(ErrorKind::Numeric, "path diverged at t = " + fmt17(t1));
    for (int a = 0; a < model.n; ++a) path.xs.push_back(x[a]);
  }
  anchor = x;
  const double t_end = K * delta;
  while (jp < times.size() && times[jp] == t_end) apply_event(jp++);
  return path;
}

SamplePath reference_path(const Model& model, double delta_ref,
                          const PoissonDrive& drive, const BrownianPath& brownian,
                          const Vec& x0, int i0) {
  if (std::abs(delta_ref - brownian.delta_min) > 1e-15 * delta_ref)
    throw Error(ErrorKind::Config, "reference step must equal the finest Brownian step");
  return em_path(model, delta_ref, drive, brownian, x0, i0);
}

namespace {

// One tracked discretization in the shared-noise sweep.
struct Track {
  long nsub = 1;       // fine cells per own cell
  double delta = 0.0;  // own step (exact caller value)
  Vec x, anchor, drift, w, eval, D_prev, D_new;
  int reg = 1;
  long k_anchor = 0;
  bool need_drift = true;
  // accumulators vs the reference (unused on the reference track)
  double sup = 0.0;
  KahanSum l1;
  double mism = 0.0;
  double t_last = 0.0;
};

struct SweepOut {
  std::vector<double> sup, mism, l1;
  bool divergent = false;
};

// Simultaneous evolution of the reference and all coarse discretizations on
// one drive and one Brownian path.  Between fine nodes every pairwise
// difference is linear (shared noise cancels, drifts are frozen per cell), so
// the sup over fine nodes and the closed-form segment integrals are exact.
SweepOut crn_sweep(const Model& model, const std::vector<double>& deltas,
                   double delta_ref, long K, const PoissonDrive& drive,
                   const BrownianPath& bm, const Vec& x0, int i0) {
  const int n = model.n;
  const Mat& sigma = model.sigma_of(1);
  const size_t D = deltas.size();
  std::vector<Track> tr(D + 1);
  for (size_t d = 0; d <= D; ++d) {
    Track& s = tr[d];
    s.delta = d == 0 ? delta_ref : deltas[d - 1];
    s.nsub = d == 0 ? 1 : std::llround(deltas[d - 1] / delta_ref);
    s.x = x0;
    s.anchor = s.drift = s.w = s.eval = Vec::Zero(n);
    s.D_prev = s.D_new = Vec::Zero(n);
    s.reg = i0;
  }
  const auto& times = drive.times;
  const auto& marks = drive.marks;
  size_t jp = 0;
  std::vector<int> disp(D + 1);

  auto handle_event = [&](size_t j) {
    const double t = times[j];
    for (size_t d = 1; d <= D; ++d) {
      if (tr[0].reg != tr[d].reg) tr[d].mism += t - tr[d].t_last;
      tr[d].t_last = t;
    }
    for (size_t d = 0; d <= D; ++d)
      disp[d] = jump_displacement(model.rates, tr[d].anchor, tr[d].reg, marks[j]);
    for (size_t d = 0; d <= D; ++d) tr[d].reg += disp[d];
  };

  for (long k = 0; k < K; ++k) {
    const double t0 = k * delta_ref;
    const double t1 = (k + 1) * delta_ref;
    for (auto& s : tr) {
      if (k % s.nsub == 0) {
        s.anchor = s.x;
        s.w.setZero();
        s.k_anchor = k;
        s.need_drift = true;
      }
    }
    while (jp < times.size() && times[jp] == t0) handle_event(jp++);
    for (auto& s : tr) {
      if (s.need_drift) {
        model.drift_eval(s.anchor, s.reg, s.drift);
        s.need_drift = false;
      }
    }
    while (jp < times.size() && times[jp] < t1) handle_event(jp++);
    for (auto& s : tr)
      for (int a = 0; a < n; ++a) s.w[a] += bm.dW[k * n + a];
    for (auto& s : tr) {
      if ((k + 1) % s.nsub == 0) {
        s.eval = s.anchor;
        s.eval += s.delta * s.drift;
        s.eval.noalias() += sigma * s.w;
        s.x = s.eval;
      } else {
        const double dt = (k + 1 - s.k_anchor) * delta_ref;
        s.eval = s.anchor;
        s.eval += dt * s.drift;
        s.eval.noalias() += sigma * s.w;
      }
    }
    for (size_t d = 1; d <= D; ++d) {
      Track& s = tr[d];
      s.D_new = tr[0].eval - s.eval;
      s.sup = std::max(s.sup, s.D_new.norm());
      s.eval = s.D_new - s.D_prev;  // reuse as scratch for the segment slope
      s.l1.add(delta_ref * integral_norm_linear(s.D_prev, s.eval));
      s.D_prev = s.D_new;
    }
  }
  const double T = K * delta_ref;
  SweepOut out;
  out.sup.resize(D);
  out.mism.resize(D);
  out.l1.resize(D);
  for (size_t d = 1; d <= D; ++d) {
    Track& s = tr[d];
    if (tr[0].reg != s.reg) s.mism += T - s.t_last;
    out.sup[d - 1] = s.sup;
    out.mism[d - 1] = s.mism;
    out.l1[d - 1] = s.l1.value();
    if (!std::isfinite(s.sup) || !std::isfinite(out.l1[d - 1])) out.divergent = true;
  }
  if (!tr[0].x.allFinite()) out.divergent = true;
  return out;
}

}  // namespace

ErrorReport strong_error(const Model& model, const std::vector<double>& deltas,
                         double delta_ref, double T, const Vec& x0, int i0,
                         int paths, uint64_t seed, int workers) {
  if (!model.sigma_shared())
    throw Error(ErrorKind::Assumption,
                "the Euler scheme requires one constant sigma across regimes");
  if (deltas.empty()) throw Error(ErrorKind::Config, "no step sizes given");
  if (paths < 2) throw Error(ErrorKind::Config, "need at least two paths");
  const long K = checked_ratio(T, delta_ref, "horizon");
  for (double d : deltas) {
    const long r = checked_ratio(d, delta_ref, "step size");
    if (K % r != 0)
      throw Error(ErrorKind::Config,
                  "horizon is not a multiple of step size " + fmt17(d));
  }
  const size_t D = deltas.size();
  std::vector<SweepOut> slots(paths);
  parallel_for(paths, workers, [&](long p) {
    const PoissonDrive drive =
        sample_drive(T, model.M(), derive_seed(seed, "drive", p));
    const BrownianPath bm =
        sample_brownian(model.n, delta_ref, T, derive_seed(seed, "brownian", p));
    slots[p] = crn_sweep(model, deltas, delta_ref, K, drive, bm, x0, i0);
  });

  ErrorReport rep;
  for (long p = 0; p < paths; ++p)
    if (slots[p].divergent) rep.divergent_paths.push_back(p);
  for (size_t d = 0; d < D; ++d) {
    KahanSum se_sum, se_sq, sm_sum, sm_sq, sl;
    long used = 0;
    for (long p = 0; p < paths; ++p) {
      if (slots[p].divergent) continue;
      ++used;
      se_sum.add(slots[p].sup[d]);
      se_sq.add(slots[p].sup[d] * slots[p].sup[d]);
      sm_sum.add(slots[p].mism[d]);
      sm_sq.add(slots[p].mism[d] * slots[p].mism[d]);
      sl.add(slots[p].l1[d]);
    }
    if (used < 2)
      throw Error(ErrorKind::Numeric, "all paths diverged at step size " + fmt17(deltas[d]));
    ErrorRow row;
    row.delta = deltas[d];
    row.paths = used;
    row.err_mean = se_sum.value() / used;
    row.mismatch_mean = sm_sum.value() / used;
    row.l1_mean = sl.value() / used;
    auto se_of = [&](const KahanSum& sum, const KahanSum& sq, double mean) {
      const double var =
          std::max(0.0, (sq.value() / used - mean * mean) *
                            (static_cast<double>(used) / (used - 1)));
      return std::sqrt(var / used);
    };
    row.err_se = se_of(se_sum, se_sq, row.err_mean);
    row.mismatch_se = se_of(sm_sum, sm_sq, row.mismatch_mean);
    rep.rows.push_back(row);
  }
  // Log-log decay fit over rows with nonzero error.
  std::vector<double> lx, ly;
  for (const auto& row : rep.rows)
    if (row.err_mean > 0.0) {
      lx.push_back(std::log(row.delta));
      ly.push_back(std::log(row.err_mean));
    }
  if (lx.size() >= 3) {
    KahanSum st, sy, stt, sty;
    for (size_t k = 0; k < lx.size(); ++k) {
      st.add(lx[k]);
      sy.add(ly[k]);
      stt.add(lx[k] * lx[k]);
      sty.add(lx[k] * ly[k]);
    }
    const double m = static_cast<double>(lx.size());
    const double denom = m * stt.value() - st.value() * st.value();
    if (denom != 0.0) {
      const double slope = (m * sty.value() - st.value() * sy.value()) / denom;
      const double icept = (sy.value() - slope * st.value()) / m;
      rep.slope = slope;
      double resid = 0.0;
      for (size_t k = 0; k < lx.size(); ++k)
        resid = std::max(resid, std::abs(ly[k] - slope * lx[k] - icept));
      rep.slope_residual = resid;
    }
  }
  return rep;
}

MCEstimate mismatch_integral(const Model& model, double delta, double delta_ref,
                             double T, const Vec& x0, int i0, int paths,
                             uint64_t seed, int workers) {
  const ErrorReport rep =
      strong_error(model, {delta}, delta_ref, T, x0, i0, paths, seed, workers);
  MCEstimate est;
  est.mean = rep.rows[0].mismatch_mean;
  est.std_error = rep.rows[0].mismatch_se;
  est.paths = rep.rows[0].paths;
  return est;
}

IncrementCheck increment_check(const Model& model, double delta, double T, int paths,
                               uint64_t seed) {
  if (!model.constants.C1)
    throw Error(ErrorKind::Assumption,
                "the increment bound requires the declared coefficient bound");
  const double C1 = *model.constants.C1;
  const long sub = 16;  // fine cells per step; sampled times sit mid-cell
  const double fine = delta / sub;
  const long K = checked_ratio(T, delta, "horizon");
  const int n_samples = static_cast<int>(std::min<long>(8, K));
  std::vector<long> cells(n_samples);  // coarse cell of each sampled time
  for (int m = 0; m < n_samples; ++m)
    cells[m] = std::min<long>(K - 1, (2 * m + 1) * K / (2 * n_samples));
  const Mat& sigma = model.sigma_of(1);
  const Vec x0 = Vec::Zero(model.n);
  std::vector<std::vector<double>> slot(paths, std::vector<double>(n_samples));
  for (long p = 0; p < paths; ++p) {
    const PoissonDrive drive =
        sample_drive(T, model.M(), derive_seed(seed, "drive", p));
    const BrownianPath bm =
        sample_brownian(model.n, fine, T, derive_seed(seed, "brownian", p));
    const SamplePath path = em_path(model, delta, drive, bm, x0, 1);
    Vec b(model.n), dw(model.n), diff(model.n);
    for (int m = 0; m < n_samples; ++m) {
      const long c = cells[m];
      const double t0 = c * delta;
      const Vec xc = path.value(c);
      model.drift_eval(xc, path.regimes.at(t0), b);
      // s sits sub/2 fine cells past the node: Y(s) - Y(s_delta) in closed form.
      bm.increment(c * sub, c * sub + sub / 2, dw);
      diff = (delta / 2.0) * b;
      diff.noalias() += sigma * dw;
      slot[p][m] = diff.norm();
    }
  }
  IncrementCheck out;
  out.pass = true;
  out.worst_margin = 1e300;
  std::string detail;
  const double bound = 2.0 * C1 * std::sqrt(delta);
  for (int m = 0; m < n_samples; ++m) {
    KahanSum sum, sq;
    for (long p = 0; p < paths; ++p) {
      sum.add(slot[p][m]);
      sq.add(slot[p][m] * slot[p][m]);
    }
    const double mean = sum.value() / paths;
    const double var = std::max(
        0.0, (sq.value() / paths - mean * mean) * (static_cast<double>(paths) / (paths - 1)));
    const double se = std::sqrt(var / paths);
    const double margin = bound + 3.0 * se - mean;
    out.worst_margin = std::min(out.worst_margin, margin);
    if (margin < 0.0) out.pass = false;
    detail += (m ? "; " : "") + std::string("s = ") +
              fmt17((cells[m] + 0.5) * delta) + ": est " + fmt17(mean) + " vs bound " +
              fmt17(bound);
  }
  out.detail = detail;
  return out;
}

void write_error_csv(const ErrorReport& report, std::ostream& os) {
  os << "delta,error_mean,error_ci_lo,error_ci_hi,mismatch,paths\n";
  for (const auto& row : report.rows) {
    os << fmt17(row.delta) << "," << fmt17(row.err_mean) << ","
       << fmt17(row.err_mean - 1.96 * row.err_se) << ","
       << fmt17(row.err_mean + 1.96 * row.err_se) << "," << fmt17(row.mismatch_mean)
       << "," << row.paths << "\n";
  }
}

}  // namespace rsdp
