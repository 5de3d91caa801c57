#include "rsdp/couple.hpp"

#include <algorithm>
#include <cmath>

#include "rsdp/dominate.hpp"
#include "rsdp/integrate.hpp"
#include "rsdp/io.hpp"
#include "rsdp/parallel.hpp"
#include "rsdp/rng.hpp"
#include "rsdp/skorokhod.hpp"

namespace rsdp {

void reflected_increment(const Vec& x, const Vec& y, const Mat& sigma_x,
                         const Mat& sigma_y, const Vec& dW, Vec& dx_noise,
                         Vec& dy_noise) {
  dx_noise.noalias() = sigma_x * dW;
  const double r = (x - y).norm();
  if (r == 0.0) {
    dy_noise.noalias() = sigma_y * dW;
    return;
  }
  const Vec u = (x - y) / r;
  const Vec w = dW - 2.0 * u.dot(dW) * u;
  dy_noise.noalias() = sigma_y * w;
}

namespace {

// Joint evolution of the coupled pair on merged grid/drive timelines.  The
// snapshot hook fires at every grid node (including t = 0) with the node
// index; after gluing the pair moves as one path on the first drive.
template <typename SnapFn>
CouplingResult couple_run(const Model& model, Vec x, int i, Vec y, int j,
                          const CouplingOptions& opt, uint64_t seed,
                          bool record_trace, SnapFn&& snap) {
  const int n = model.n;
  if (i < 1 || i > model.N || j < 1 || j > model.N)
    throw Error(ErrorKind::Config, "start regime out of range");
  if (opt.designated_state < 1 || opt.designated_state > model.N)
    throw Error(ErrorKind::Config, "designated regime out of range");
  const long K = std::llround(opt.Tmax / opt.delta);
  if (K < 1 || std::abs(opt.Tmax - K * opt.delta) > 1e-9)
    throw Error(ErrorKind::Config, "horizon must be a multiple of the step size");

  const PoissonDrive d1 = sample_drive(opt.Tmax, model.M(), derive_seed(seed, "drive", 0));
  const PoissonDrive d2 = sample_drive(opt.Tmax, model.M(), derive_seed(seed, "drive2", 0));
  Rng noise(derive_seed(seed, "brownian", 0));

  CouplingResult res;
  res.times.horizon = opt.Tmax;
  bool tau_rec = false, T_rec = false;
  auto record_tau = [&](double t) {
    if (!tau_rec && i == opt.designated_state && j == opt.designated_state) {
      res.times.tau = t;
      tau_rec = true;
    }
  };
  // Meeting is declared only in the designated environment; this keeps
  // tau <= T on every path where T is realized and leaves the regime
  // components independent until the first simultaneous designated visit.
  auto try_glue = [&](double t) {
    if (!res.glued && i == j && i == opt.designated_state &&
        (x - y).norm() <= opt.epsilon) {
      res.glued = true;
      res.glue_time = t;
      res.times.T = t;
      T_rec = true;
      y = x;
    }
  };
  record_tau(0.0);
  try_glue(0.0);
  snap(0L, x, y, res.glued);
  if (record_trace) res.trace.push_back({0.0, x, y, i, j});

  Vec dW(n), bx(n), by(n), dxn(n), dyn(n), xn(n), yn(n);
  long kg = 1;
  size_t p1 = 0, p2 = 0;
  double t_cur = 0.0;
  while (t_cur < opt.Tmax && !(tau_rec && T_rec)) {
    double t_next = kg * opt.delta;
    int what = 0;  // 0 grid, 1 drive1, 2 drive2
    if (p1 < d1.times.size() && d1.times[p1] < t_next) {
      t_next = d1.times[p1];
      what = 1;
    }
    if (p2 < d2.times.size() && d2.times[p2] < t_next) {
      t_next = d2.times[p2];
      what = 2;
    }
    const double h = t_next - t_cur;
    if (h > 0.0) {
      const double sh = std::sqrt(h);
      for (int a = 0; a < n; ++a) dW[a] = sh * noise.normal();
      if (res.glued) {
        model.drift_eval(x, i, bx);
        x += h * bx;
        x.noalias() += model.sigma_of(i) * dW;
        y = x;
      } else {
        model.drift_eval(x, i, bx);
        model.drift_eval(y, j, by);
        reflected_increment(x, y, model.sigma_of(i), model.sigma_of(j), dW, dxn, dyn);
        xn = x + h * bx + dxn;
        yn = y + h * by + dyn;
        if (i == j && i == opt.designated_state) {
          const double r_prev = (x - y).norm();
          const Vec u = (x - y) / r_prev;
          const double r_lin = u.dot(xn - yn);
          if (r_lin <= opt.epsilon || (xn - yn).norm() <= opt.epsilon) {
            const double frac = r_lin < 0.0 ? r_prev / (r_prev - r_lin) : 1.0;
            res.glued = true;
            res.glue_time = t_cur + frac * h;
            res.times.T = res.glue_time;
            T_rec = true;
            x = xn;
            y = x;
          } else {
            x = xn;
            y = yn;
          }
        } else {
          x = xn;
          y = yn;
        }
      }
      if (!x.allFinite() || !y.allFinite())
        throw Error(ErrorKind::Numeric, "coupled path diverged at t = " + fmt17(t_next));
    }
    t_cur = t_next;
    if (what == 0) {
      snap(kg, x, y, res.glued);
      if (record_trace) res.trace.push_back({t_cur, x, y, i, j});
      ++kg;
    } else if (what == 1) {
      const int d = jump_displacement(model.rates, x, i, d1.marks[p1]);
      ++p1;
      if (d != 0) {
        i += d;
        if (res.glued) j = i;
      }
      record_tau(t_cur);
      try_glue(t_cur);
    } else {
      ++p2;
      if (!res.glued) {
        const int d = jump_displacement(model.rates, y, j, d2.marks[p2 - 1]);
        if (d != 0) j += d;
        record_tau(t_cur);
        try_glue(t_cur);
      }
    }
  }
  if (!tau_rec) {
    res.times.tau = opt.Tmax;
    res.times.tau_censored = true;
  }
  if (!T_rec) {
    res.times.T = opt.Tmax;
    res.times.T_censored = true;
  }
  return res;
}

struct NoSnap {
  void operator()(long, const Vec&, const Vec&, bool) const {}
};

}  // namespace

CouplingResult simulate_coupling(const Model& model, const Vec& x, int i, const Vec& y,
                                 int j, const CouplingOptions& opt, uint64_t seed,
                                 bool record_trace) {
  return couple_run(model, x, i, y, j, opt, seed, record_trace, NoSnap{});
}

TauTail tau_tail(const Model& model, const Vec& x, int i, const Vec& y, int j,
                 const CouplingOptions& opt, int paths, uint64_t seed,
                 double tolerance, int workers) {
  if (paths < 2) throw Error(ErrorKind::Config, "need at least two paths");
  std::vector<MeetingTimes> slots(paths);
  parallel_for(paths, workers, [&](long p) {
    slots[p] = couple_run(model, x, i, y, j, opt, derive_seed(seed, "path", p), false,
                          NoSnap{})
                   .times;
  });
  TauTail out;
  const int G = 200;
  out.grid.resize(G + 1);
  out.survival.resize(G + 1);
  for (int g = 0; g <= G; ++g) out.grid[g] = opt.Tmax * g / G;
  KahanSum sum, sq;
  for (int g = 0; g <= G; ++g) {
    long alive = 0;
    for (const auto& mt : slots)
      if (mt.tau >= out.grid[g]) ++alive;
    out.survival[g] = static_cast<double>(alive) / paths;
  }
  KahanSum sum_T;
  long coupled = 0;
  for (const auto& mt : slots) {
    if (mt.tau_censored) ++out.censored;
    sum.add(mt.tau);
    sq.add(mt.tau * mt.tau);
    if (mt.T_censored) {
      ++out.T_censored;
    } else {
      ++coupled;
      sum_T.add(mt.T);
      if (!mt.tau_censored && mt.tau > mt.T + 1e-12) ++out.tau_gt_T;
    }
  }
  out.coupled_fraction = static_cast<double>(coupled) / paths;
  if (coupled > 0) out.mean_T = sum_T.value() / coupled;
  out.mean_tau = sum.value() / paths;
  const double var = std::max(0.0, (sq.value() / paths - out.mean_tau * out.mean_tau) *
                                       (static_cast<double>(paths) / (paths - 1)));
  out.se_tau = std::sqrt(var / paths);
  // Largest rate theta with survival <= tolerance * exp(-theta t) on the grid.
  double theta = 1e300;
  for (int g = 1; g <= G; ++g) {
    if (out.survival[g] <= 0.0) continue;
    theta = std::min(theta,
                     (std::log(tolerance) - std::log(out.survival[g])) / out.grid[g]);
  }
  out.theta_hat = std::max(0.0, theta == 1e300 ? 0.0 : theta);
  out.dominated = true;
  for (int g = 0; g <= G; ++g) {
    if (out.survival[g] >
        tolerance * std::exp(-out.theta_hat * out.grid[g]) + 1e-12)
      out.dominated = false;
  }
  // Unconstrained decay-rate fit on the strictly interior survival values.
  std::vector<double> ts, vs;
  for (int g = 0; g <= G; ++g)
    if (out.survival[g] > 0.0 && out.survival[g] < 1.0) {
      ts.push_back(out.grid[g]);
      vs.push_back(out.survival[g]);
    }
  if (ts.size() >= 2) {
    KahanSum st, sy, stt, sty;
    for (size_t k = 0; k < ts.size(); ++k) {
      const double lv = std::log(vs[k]);
      st.add(ts[k]);
      sy.add(lv);
      stt.add(ts[k] * ts[k]);
      sty.add(ts[k] * lv);
    }
    const double m = static_cast<double>(ts.size());
    const double denom = m * stt.value() - st.value() * st.value();
    if (denom != 0.0)
      out.ls_slope = -(m * sty.value() - st.value() * sy.value()) / denom;
  }
  return out;
}

ContractionCurve contraction_rate(const Model& model, const Vec& x, int i, const Vec& y,
                                  int j, double T, const CouplingOptions& opt,
                                  int paths, uint64_t seed, double tolerance,
                                  int workers) {
  if (paths < 2) throw Error(ErrorKind::Config, "need at least two paths");
  CouplingOptions o = opt;
  o.Tmax = T;
  const long K = std::llround(T / o.delta);
  if (K < 1 || std::abs(T - K * o.delta) > 1e-9)
    throw Error(ErrorKind::Config, "horizon must be a multiple of the step size");
  const long stride = std::max<long>(1, K / 128);
  const long S = K / stride + 1;
  std::vector<std::vector<double>> slots(paths, std::vector<double>(S, 0.0));
  parallel_for(paths, workers, [&](long p) {
    auto& slot = slots[p];
    couple_run(model, x, i, y, j, o, derive_seed(seed, "path", p), false,
               [&](long k, const Vec& xv, const Vec& yv, bool glued) {
                 if (k % stride == 0 && k / stride < S)
                   slot[k / stride] = glued ? 0.0 : (xv - yv).squaredNorm();
               });
  });

  ContractionCurve out;
  out.times.resize(S);
  out.mean_sq.resize(S);
  for (long s = 0; s < S; ++s) {
    out.times[s] = s * stride * o.delta;
    KahanSum sum;
    for (long p = 0; p < paths; ++p) sum.add(slots[p][s]);
    out.mean_sq[s] = sum.value() / paths;
  }
  const double eta = eta_alpha(model);
  out.target_rate = eta;
  out.target_vacuous = eta <= 0.0;
  // Fit above the Monte Carlo noise floor only.
  const double floor = out.mean_sq[0] * 3e-2;
  std::vector<double> ts, vs;
  for (long s = 0; s < S; ++s) {
    if (out.mean_sq[s] < floor || out.mean_sq[s] <= 0.0) break;
    ts.push_back(out.times[s]);
    vs.push_back(out.mean_sq[s]);
  }
  if (ts.size() >= 3) {
    KahanSum st, sy, stt, sty;
    for (size_t k = 0; k < ts.size(); ++k) {
      const double lv = std::log(vs[k]);
      st.add(ts[k]);
      sy.add(lv);
      stt.add(ts[k] * ts[k]);
      sty.add(ts[k] * lv);
    }
    const double m = static_cast<double>(ts.size());
    const double denom = m * stt.value() - st.value() * st.value();
    if (denom != 0.0)
      out.fitted_rate = -(m * sty.value() - st.value() * sy.value()) / denom;
  }
  out.pass = !out.target_vacuous && out.fitted_rate >= out.target_rate * (1.0 - tolerance);
  return out;
}

MomentBoundReport moment_bound(const Model& model, const std::vector<Vec>& x0s, int i0,
                               double T, double delta, int paths, uint64_t seed,
                               double spread_tolerance, int workers) {
  if (x0s.empty()) throw Error(ErrorKind::Config, "no start points given");
  if (paths < 2) throw Error(ErrorKind::Config, "need at least two paths");
  const long K = std::llround(T / delta);
  if (K < 1 || std::abs(T - K * delta) > 1e-9)
    throw Error(ErrorKind::Config, "horizon must be a multiple of the step size");
  const long stride = std::max<long>(1, K / 64);
  const long S = K / stride + 1;
  const long Q = static_cast<long>(x0s.size());
  std::vector<std::vector<double>> slots(Q * paths, std::vector<double>(S, 0.0));
  parallel_for(Q * paths, workers, [&](long idx) {
    const long q = idx / paths;
    const PoissonDrive drive =
        sample_drive(T, model.M(), derive_seed(seed, "drive", idx));
    const BrownianPath bm =
        sample_brownian(model.n, delta, T, derive_seed(seed, "brownian", idx));
    const SamplePath path = em_path(model, delta, drive, bm, x0s[q], i0);
    for (long s = 0; s < S; ++s) slots[idx][s] = path.value(s * stride).squaredNorm();
  });

  MomentBoundReport out;
  out.bounded = true;
  for (long q = 0; q < Q; ++q) {
    std::vector<double> curve(S);
    for (long s = 0; s < S; ++s) {
      KahanSum sum;
      for (long p = 0; p < paths; ++p) sum.add(slots[q * paths + p][s]);
      curve[s] = sum.value() / paths;
    }
    const double denom = 1.0 + x0s[q].squaredNorm();
    out.x0_norms.push_back(x0s[q].norm());
    out.ratios.push_back(*std::max_element(curve.begin(), curve.end()) / denom);
    // Sustained-growth detector: the last-quarter mean must not overtake the
    // second-quarter mean (linear growth trips this, settled curves do not).
    KahanSum q2, q4;
    long n2 = 0, n4 = 0;
    for (long s = S / 4; s < S / 2; ++s) {
      q2.add(curve[s]);
      ++n2;
    }
    for (long s = (3 * S) / 4; s < S; ++s) {
      q4.add(curve[s]);
      ++n4;
    }
    if (n2 > 0 && n4 > 0 &&
        q4.value() / n4 > 1.5 * (q2.value() / n2) + 1e-9 * denom)
      out.bounded = false;
  }
  const auto [mn, mx] = std::minmax_element(out.ratios.begin(), out.ratios.end());
  out.spread = *mn > 0.0 ? *mx / *mn : 1e300;
  out.pass = out.bounded && out.spread <= spread_tolerance;
  return out;
}

// ---------------------------------------------------------------------------
// Quadrature bound

namespace {

struct BoundKernel {
  double C2, C3, beta, p, scale;  // scale = 4 C2^2
  double G(double u) const {
    return (beta * (u * u - 1.0) / 2.0 - C3 * (std::pow(u, p) - 1.0) / p) / scale;
  }
  double peak() const {  // argmax of G on [0, inf)
    return beta <= 0.0 ? 0.0 : std::pow(beta / C3, 1.0 / (p - 2.0));
  }
  double tail_cut(double s) const {  // u beyond which exp(G) is negligible
    const double m = G(std::max(s, peak()));
    double u = std::max(s, peak()) + 1.0;
    while (G(u) > m - 45.0) u = 1.5 * u + 1.0;
    return u;
  }
};

BoundKernel make_kernel(const CouplingBoundParams& params) {
  if (params.p <= 2.0)
    throw Error(ErrorKind::Unsupported, "the quadrature bound needs p > 2");
  if (params.C2 <= 0.0 || params.C3 <= 0.0)
    throw Error(ErrorKind::Unsupported,
                "the quadrature bound needs positive C2 and C3");
  return BoundKernel{params.C2, params.C3, params.beta, params.p,
                     4.0 * params.C2 * params.C2};
}

template <typename F>
double simpson_rec(const F& f, double a, double fa, double b, double fb, double m,
                   double fm, double whole, double tol, int depth) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return simpson_rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1) +
         simpson_rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1);
}

template <typename F>
double adaptive_simpson(const F& f, double a, double b, double tol) {
  if (!(b > a)) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fb = f(b), fm = f(m);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_rec(f, a, fa, b, fb, m, fm, whole, tol, 48);
}

// log of J(s) = int_s^inf exp(G(u)) du, evaluated with the peak shifted out.
double log_inner(const BoundKernel& k, double s, bool gauss,
                 const std::vector<double>& gx, const std::vector<double>& gw) {
  const double m = k.G(std::max(s, k.peak()));
  const double hi = k.tail_cut(s);
  auto f = [&](double u) { return std::exp(k.G(u) - m); };
  double I;
  if (!gauss) {
    I = adaptive_simpson(f, s, hi, 1e-12);
  } else {
    I = 0.0;
    const int panels = 48;
    const double w = (hi - s) / panels;
    for (int q = 0; q < panels; ++q) {
      const double a = s + q * w;
      for (size_t g = 0; g < gx.size(); ++g)
        I += gw[g] * f(a + w * 0.5 * (1.0 + gx[g]));
      // weights are for [-1,1]; halved by the affine map below
    }
    I *= w * 0.5;
  }
  return m + std::log(I);
}

// Gauss-Legendre nodes/weights on [-1,1] by Newton iteration.
void gauss_legendre(int k, std::vector<double>& x, std::vector<double>& w) {
  x.resize(k);
  w.resize(k);
  for (int i = 0; i < k; ++i) {
    double t = std::cos(M_PI * (i + 0.75) / (k + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = t;
      for (int m = 2; m <= k; ++m) {
        const double p2 = ((2.0 * m - 1.0) * t * p1 - (m - 1.0) * p0) / m;
        p0 = p1;
        p1 = p2;
      }
      const double dp = k * (t * p1 - p0) / (t * t - 1.0);
      const double dt = p1 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-15) {
        x[i] = t;
        w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
        break;
      }
    }
  }
}

double bound_impl(const CouplingBoundParams& params, double r, bool gauss) {
  const BoundKernel k = make_kernel(params);
  if (r < 0.0) throw Error(ErrorKind::Config, "separation must be nonnegative");
  if (r == 0.0) return 0.0;
  std::vector<double> gx, gw;
  if (gauss) gauss_legendre(24, gx, gw);
  auto logh = [&](double s) { return log_inner(k, s, gauss, gx, gw) - k.G(s); };
  double shift = -1e300;
  for (int q = 0; q <= 64; ++q) shift = std::max(shift, logh(r * q / 64.0));
  auto f = [&](double s) { return std::exp(logh(s) - shift); };
  double I;
  if (!gauss) {
    I = adaptive_simpson(f, 0.0, r, 1e-12);
  } else {
    I = 0.0;
    const int panels = 48;
    const double w = r / panels;
    for (int q = 0; q < panels; ++q) {
      const double a = q * w;
      for (size_t g = 0; g < gx.size(); ++g) I += gw[g] * f(a + w * 0.5 * (1.0 + gx[g]));
    }
    I *= w * 0.5;
  }
  return std::exp(shift + std::log(I)) / (2.0 * params.C2 * params.C2);
}

}  // namespace

double coupling_time_bound(const CouplingBoundParams& params, double r) {
  return bound_impl(params, r, false);
}

double coupling_time_bound_gauss(const CouplingBoundParams& params, double r) {
  return bound_impl(params, r, true);
}

FixedEnvMeeting fixed_env_meeting(const Model& model, int i0_env, const Vec& x,
                                  const Vec& y, double delta, double Tmax, int paths,
                                  uint64_t seed, int workers) {
  if (i0_env < 1 || i0_env > model.N)
    throw Error(ErrorKind::Config, "environment regime out of range");
  if (paths < 2) throw Error(ErrorKind::Config, "need at least two paths");
  const long K = std::llround(Tmax / delta);
  if (K < 1 || std::abs(Tmax - K * delta) > 1e-9)
    throw Error(ErrorKind::Config, "horizon must be a multiple of the step size");
  const Mat& sigma = model.sigma_of(i0_env);
  const int n = model.n;
  struct Slot {
    double T = 0.0;
    bool censored = false;
  };
  std::vector<Slot> slots(paths);
  parallel_for(paths, workers, [&](long p) {
    Rng noise(derive_seed(seed, "brownian", p));
    Vec xv = x, yv = y, dW(n), bx(n), by(n), dxn(n), dyn(n), xn(n), yn(n);
    const double sh = std::sqrt(delta);
    bool met = (xv - yv).norm() <= 1e-6;
    double Tmeet = 0.0;
    for (long k = 0; k < K && !met; ++k) {
      for (int a = 0; a < n; ++a) dW[a] = sh * noise.normal();
      model.drift_eval(xv, i0_env, bx);
      model.drift_eval(yv, i0_env, by);
      reflected_increment(xv, yv, sigma, sigma, dW, dxn, dyn);
      xn = xv + delta * bx + dxn;
      yn = yv + delta * by + dyn;
      const double r_prev = (xv - yv).norm();
      const Vec u = (xv - yv) / r_prev;
      const double r_lin = u.dot(xn - yn);
      if (r_lin <= 1e-6 || (xn - yn).norm() <= 1e-6) {
        const double frac = r_lin < 0.0 ? r_prev / (r_prev - r_lin) : 1.0;
        Tmeet = k * delta + frac * delta;
        met = true;
      }
      xv = xn;
      yv = yn;
      if (!xv.allFinite() || !yv.allFinite())
        throw Error(ErrorKind::Numeric, "coupled path diverged");
    }
    slots[p].T = met ? Tmeet : Tmax;
    slots[p].censored = !met;
  });
  FixedEnvMeeting out;
  out.paths = paths;
  KahanSum sum, sq;
  long cens = 0;
  for (const auto& s : slots) {
    if (s.censored) ++cens;
    sum.add(s.T);
    sq.add(s.T * s.T);
  }
  out.mean = sum.value() / paths;
  const double var = std::max(0.0, (sq.value() / paths - out.mean * out.mean) *
                                       (static_cast<double>(paths) / (paths - 1)));
  out.std_error = std::sqrt(var / paths);
  out.censored_fraction = static_cast<double>(cens) / paths;
  out.inconclusive = out.censored_fraction > 0.5;
  return out;
}

}  // namespace rsdp
