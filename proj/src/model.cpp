#include "rsdp/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rsdp/io.hpp"

namespace rsdp {
namespace {

constexpr double kTol = 1e-9;

using json = nlohmann::ordered_json;

std::string regime_pair(int i, int j) {
  return "q_" + std::to_string(i) + std::to_string(j);
}

// Iterates the verification lattice [lo,hi]^n; fn receives each node.
void for_each_grid_point(const GridSpec& grid, int n,
                         const std::function<void(const Vec&)>& fn) {
  const int P = grid.points_per_axis;
  double total = std::pow(static_cast<double>(P), n);
  if (total > 2e6)
    throw Error(ErrorKind::Config,
                "verification grid too large; override the grid spec for n > 3");
  std::vector<int> idx(n, 0);
  Vec x(n);
  const double step = (P > 1) ? (grid.hi - grid.lo) / (P - 1) : 0.0;
  while (true) {
    for (int a = 0; a < n; ++a) x[a] = grid.lo + step * idx[a];
    fn(x);
    int a = 0;
    for (; a < n; ++a) {
      if (++idx[a] < P) break;
      idx[a] = 0;
    }
    if (a == n) break;
  }
}

double operator_norm(const Mat& A) {
  if (A.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(A);
  return svd.singularValues().maxCoeff();
}

double sym_lambda_max(const Mat& A) {  // largest eigenvalue of (A + A^T)/2
  Mat S = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  return es.eigenvalues().maxCoeff();
}

double sym_lambda_min(const Mat& A) {
  Mat S = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  return es.eigenvalues().minCoeff();
}

std::string vec_str(const Vec& x) {
  std::ostringstream os;
  os << "(";
  for (int a = 0; a < x.size(); ++a) os << (a ? ", " : "") << fmt17(x[a]);
  os << ")";
  return os.str();
}

}  // namespace

double RatePair::eval(const Vec& x) const {
  switch (kind) {
    case Kind::Constant:
      return value;
    case Kind::Tanh: {
      const double raw = base + amp * std::tanh(dir.dot(x));
      return std::min(std::max(raw, 0.0), cap);
    }
    case Kind::Programmatic:
      return fn(x);
  }
  return 0.0;
}

RateFunction::RateFunction(int N, int n, std::vector<RatePair> pairs)
    : N_(N), n_(n), pairs_(std::move(pairs)) {
  if (N_ < 1) throw Error(ErrorKind::Config, "regime count must be >= 1");
  for (const auto& p : pairs_) {
    if (p.from < 1 || p.from > N_ || p.to < 1 || p.to > N_ || p.from == p.to)
      throw Error(ErrorKind::Config, "rate pair indices out of range");
  }
  std::sort(pairs_.begin(), pairs_.end(), [](const RatePair& a, const RatePair& b) {
    return a.from != b.from ? a.from < b.from : a.to < b.to;
  });
  for (size_t k = 1; k < pairs_.size(); ++k) {
    if (pairs_[k].from == pairs_[k - 1].from && pairs_[k].to == pairs_[k - 1].to)
      throw Error(ErrorKind::Config,
                  "duplicate rate entry " + regime_pair(pairs_[k].from, pairs_[k].to));
  }
  pair_index_.assign(static_cast<size_t>(N_) * N_, -1);
  for (size_t k = 0; k < pairs_.size(); ++k)
    pair_index_[(pairs_[k].from - 1) * N_ + (pairs_[k].to - 1)] = static_cast<int>(k);
}

void RateFunction::finalize(const GridSpec& grid, double safety) {
  bounds_.clear();
  bounds_.reserve(pairs_.size());
  for (const auto& p : pairs_) {
    PairBounds b{p.from, p.to, 0.0, 0.0, 0.0, true};
    switch (p.kind) {
      case RatePair::Kind::Constant:
        if (p.value < 0.0)
          throw Error(ErrorKind::Config, "Q-matrix violation: negative rate " +
                                             regime_pair(p.from, p.to) + " = " +
                                             fmt17(p.value));
        b.sup = b.inf = p.value;
        b.lip = 0.0;
        break;
      case RatePair::Kind::Tanh: {
        if (p.cap < 0.0)
          throw Error(ErrorKind::Config, "Q-matrix violation: negative cap on " +
                                             regime_pair(p.from, p.to));
        if (static_cast<int>(p.dir.size()) != n_)
          throw Error(ErrorKind::Config, "rate direction dimension mismatch on " +
                                             regime_pair(p.from, p.to));
        const double a = std::abs(p.amp);
        const bool flat = (a == 0.0) || (p.dir.norm() == 0.0);
        auto clamp01 = [&](double v) { return std::min(std::max(v, 0.0), p.cap); };
        if (flat) {
          b.sup = b.inf = clamp01(p.base);
          b.lip = 0.0;
        } else {
          b.sup = clamp01(p.base + a);
          b.inf = clamp01(p.base - a);
          b.lip = a * p.dir.norm();  // |tanh'| <= 1; clamping only shrinks this
        }
        break;
      }
      case RatePair::Kind::Programmatic: {
        double mx = -1e300, mn = 1e300, lip = 0.0;
        const double step =
            (grid.points_per_axis > 1)
                ? (grid.hi - grid.lo) / (grid.points_per_axis - 1)
                : 1.0;
        Vec prev_x;
        for_each_grid_point(grid, n_, [&](const Vec& x) {
          const double v = p.fn(x);
          if (!std::isfinite(v))
            throw Error(ErrorKind::Numeric, "rate " + regime_pair(p.from, p.to) +
                                                " is not finite at x = " + vec_str(x));
          if (v < 0.0)
            throw Error(ErrorKind::Config, "Q-matrix violation: negative rate " +
                                               regime_pair(p.from, p.to) + " at x = " +
                                               vec_str(x));
          mx = std::max(mx, v);
          mn = std::min(mn, v);
          Vec xs = x;
          for (int a = 0; a < n_; ++a) {
            xs[a] = x[a] + step;
            lip = std::max(lip, std::abs(p.fn(xs) - v) / step);
            xs[a] = x[a];
          }
        });
        b.sup = mx * safety;
        b.inf = mn / safety;
        b.lip = lip * safety;
        b.exact = false;
        break;
      }
    }
    bounds_.push_back(b);
  }
  H_ = 0.0;
  for (int i = 1; i <= N_; ++i) {
    double row = 0.0;
    for (size_t k = 0; k < pairs_.size(); ++k)
      if (pairs_[k].from == i) row += bounds_[k].sup;
    H_ = std::max(H_, row);
  }
  M_ = static_cast<double>(N_) * (N_ - 1) * H_;
  cq_ = 0.0;
  for (const auto& b : bounds_) cq_ = std::max(cq_, b.lip);
  birth_death_ = true;
  for (size_t k = 0; k < pairs_.size(); ++k)
    if (std::abs(pairs_[k].from - pairs_[k].to) >= 2 && bounds_[k].sup > 0.0)
      birth_death_ = false;
  finalized_ = true;
}

double RateFunction::eval(const Vec& x, int i, int j) const {
  const int k = pair_index_[(i - 1) * N_ + (j - 1)];
  return k < 0 ? 0.0 : pairs_[k].eval(x);
}

double RateFunction::exit_rate(const Vec& x, int i) const {
  double s = 0.0;
  for (const auto& p : pairs_)
    if (p.from == i) s += p.eval(x);
  return s;
}

bool RateFunction::state_dependent() const {
  for (const auto& p : pairs_)
    if (p.kind != RatePair::Kind::Constant &&
        !(p.kind == RatePair::Kind::Tanh && (p.amp == 0.0 || p.dir.norm() == 0.0)))
      return true;
  return false;
}

const PairBounds& RateFunction::bounds(int i, int j) const {
  if (!finalized_) throw Error(ErrorKind::Config, "rate bounds not finalized");
  const int k = pair_index_[(i - 1) * N_ + (j - 1)];
  if (k < 0) {
    static const PairBounds zero{};
    return zero;
  }
  return bounds_[static_cast<size_t>(k)];
}

bool RateFunction::has_pair(int i, int j) const {
  return pair_index_[(i - 1) * N_ + (j - 1)] >= 0;
}

bool Model::sigma_shared() const {
  if (sigma.size() <= 1) return true;
  for (size_t k = 1; k < sigma.size(); ++k)
    if ((sigma[k] - sigma[0]).cwiseAbs().maxCoeff() != 0.0) return false;
  return true;
}

void Model::drift_eval(const Vec& x, int i, Vec& out) const {
  const DriftSpec& d = drift[i - 1];
  out.noalias() = d.A * x;
  out += d.c;
  if (d.cubic != 0.0) out -= (d.cubic * x.squaredNorm()) * x;
}

double Model::alpha_analytic(int i) const {
  Mat S = drift[i - 1].A + drift[i - 1].A.transpose();
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  return es.eigenvalues().maxCoeff();
}

std::optional<StrongDissipation> Model::strong_analytic(int i0) const {
  const DriftSpec& d = drift[i0 - 1];
  if (d.cubic <= 0.0) return std::nullopt;
  StrongDissipation s;
  s.i0 = i0;
  // Doubled pairing, as in A1: 2<h, Ah> <= lambda_max(A + A^T) |h|^2 and
  // 2<x-y, |x|^2 x - |y|^2 y> >= |x-y|^4 / 2 in every dimension.
  s.beta = 2.0 * sym_lambda_max(d.A);
  s.C3 = d.cubic / 2.0;
  s.p = 4.0;
  return s;
}

const Verdict* AssumptionReport::find(const std::string& name) const {
  for (const auto& v : verdicts)
    if (v.name == name) return &v;
  return nullptr;
}

bool AssumptionReport::all_applicable_pass() const {
  for (const auto& v : verdicts)
    if (v.applicable && !v.pass) return false;
  return true;
}

namespace {

// Strong connectivity of {(i,j): edge(i,j)} via forward/backward reachability.
bool strongly_connected(int N, const std::function<bool(int, int)>& edge) {
  if (N == 1) return true;
  auto reach = [&](bool transpose) {
    std::vector<char> seen(N, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int count = 1;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (int v = 0; v < N; ++v) {
        if (seen[v]) continue;
        const bool e = transpose ? edge(v + 1, u + 1) : edge(u + 1, v + 1);
        if (e) {
          seen[v] = 1;
          ++count;
          stack.push_back(v);
        }
      }
    }
    return count == N;
  };
  return reach(false) && reach(true);
}

Verdict check_q1(const Model& m, const GridSpec& grid) {
  Verdict v{"Q1", true, false, "analytic", "", ""};
  const int N = m.N;
  // Edges certain at every x (inf > 0) and edges possible somewhere (sup > 0).
  auto inf_edge = [&](int i, int j) { return m.rates.bounds(i, j).inf > 0.0; };
  auto sup_edge = [&](int i, int j) { return m.rates.bounds(i, j).sup > 0.0; };
  if (strongly_connected(N, inf_edge)) {
    v.pass = true;
    v.detail = "irreducible at every x (all needed rates bounded away from 0)";
    return v;
  }
  if (!strongly_connected(N, sup_edge)) {
    v.pass = false;
    v.detail = "rate graph not strongly connected for any x";
    v.witness = "x = " + vec_str(Vec::Zero(m.n));
    return v;
  }
  // Undecided analytically: check each sampled anchor.
  v.method = "grid";
  bool ok = true;
  std::string wit;
  for_each_grid_point(grid, m.n, [&](const Vec& x) {
    if (!ok) return;
    auto e = [&](int i, int j) { return m.rates.eval(x, i, j) > 0.0; };
    if (!strongly_connected(N, e)) {
      ok = false;
      wit = "x = " + vec_str(x);
    }
  });
  v.pass = ok;
  v.detail = ok ? "irreducible at every sampled x" : "reducible at a sampled point";
  v.witness = wit;
  return v;
}

Verdict check_q2(const Model& m, const GridSpec& grid) {
  Verdict v{"Q2", true, true, "analytic", "", ""};
  bool exact = true;
  for (const auto& p : m.rates.pairs())
    exact = exact && m.rates.bounds(p.from, p.to).exact;
  if (!exact) v.method = "grid";
  // Evidence sweep: exit rates below H (and total below M) at sampled x.
  double worst = -1e300;
  std::string wit;
  for_each_grid_point(grid, m.n, [&](const Vec& x) {
    for (int i = 1; i <= m.N; ++i) {
      const double q = m.rates.exit_rate(x, i);
      if (q - m.rates.H() > worst) {
        worst = q - m.rates.H();
        wit = "regime " + std::to_string(i) + " at x = " + vec_str(x);
      }
    }
  });
  if (m.N > 1 && worst > kTol) {
    v.pass = false;
    v.witness = wit;
    v.detail = "sampled exit rate exceeds H by " + fmt17(worst);
    return v;
  }
  v.detail = "H = " + fmt17(m.rates.H()) + ", M = " + fmt17(m.rates.M());
  return v;
}

Verdict check_q3(const Model& m) {
  Verdict v{"Q3", true, true, "analytic", "", ""};
  bool exact = true;
  for (const auto& p : m.rates.pairs())
    exact = exact && m.rates.bounds(p.from, p.to).exact;
  if (!exact) v.method = "grid";
  v.detail = "c_q = " + fmt17(m.rates.cq());
  return v;
}

Verdict check_a1(const Model& m) {
  Verdict v{"A1", false, false, "analytic", "", ""};
  if (!m.constants.alpha) return v;
  v.applicable = true;
  const auto& alpha = *m.constants.alpha;
  v.pass = true;
  std::ostringstream det;
  for (int i = 1; i <= m.N; ++i) {
    const double need = m.alpha_analytic(i);
    det << (i > 1 ? "; " : "") << "regime " << i << ": declared " << fmt17(alpha[i - 1])
        << ", admissible " << fmt17(need);
    if (alpha[i - 1] < need - kTol) {
      v.pass = false;
      v.witness = "regime " + std::to_string(i) + ": smallest valid rate " + fmt17(need) +
                  " exceeds declared " + fmt17(alpha[i - 1]);
    }
  }
  v.detail = det.str();
  return v;
}

Verdict check_a2(const Model& m, const GridSpec& grid) {
  Verdict v{"A2", false, false, "analytic", "", ""};
  if (!m.constants.C1) return v;
  v.applicable = true;
  const double C1 = *m.constants.C1;
  if (!m.constants.C1_box_scope) {
    for (int i = 1; i <= m.N; ++i) {
      const DriftSpec& d = m.drift[i - 1];
      if (operator_norm(d.A) > 0.0 || d.cubic != 0.0) {
        v.pass = false;
        v.witness = "regime " + std::to_string(i) +
                    ": drift unbounded along any ray (|b(t v, i)| -> inf)";
        v.detail = "a global coefficient bound needs zero linear and cubic parts";
        return v;
      }
    }
    double worst = 0.0;
    for (int i = 1; i <= m.N; ++i)
      worst = std::max(worst, m.drift[i - 1].c.norm() + m.sigma_of(i).norm());
    v.pass = worst <= C1 + kTol;
    v.detail = "sup |b| + |sigma|_HS = " + fmt17(worst) + " vs C1 = " + fmt17(C1);
    if (!v.pass) v.witness = "constant drift norm already exceeds C1";
    return v;
  }
  v.method = "grid";
  double worst = 0.0;
  std::string at;
  Vec b(m.n);
  for_each_grid_point(grid, m.n, [&](const Vec& x) {
    for (int i = 1; i <= m.N; ++i) {
      m.drift_eval(x, i, b);
      const double val = b.norm() + m.sigma_of(i).norm();
      if (val > worst) {
        worst = val;
        at = "regime " + std::to_string(i) + " at x = " + vec_str(x);
      }
    }
  });
  v.pass = worst <= C1 + kTol;
  v.detail = "box max |b| + |sigma|_HS = " + fmt17(worst) + " vs C1 = " + fmt17(C1) +
             " (bound claimed on the verification box only)";
  if (!v.pass) v.witness = at;
  return v;
}

Verdict check_a3(const Model& m) {
  Verdict v{"A3", false, false, "analytic", "", ""};
  if (!m.constants.C2) return v;
  v.applicable = true;
  const double C2 = *m.constants.C2;
  double least = 1e300;
  int argmin = 1;
  for (int i = 1; i <= m.N; ++i) {
    const double lm = sym_lambda_min(m.sigma_of(i));
    if (lm < least) {
      least = lm;
      argmin = i;
    }
  }
  v.pass = least >= C2 - 1e-12;
  v.detail = "min_i lambda_min(sym sigma_i) = " + fmt17(least) + " vs C2 = " + fmt17(C2);
  if (!v.pass)
    v.witness = "regime " + std::to_string(argmin) + ", u = minimizing eigenvector";
  return v;
}

Verdict check_a4(const Model& m) {
  Verdict v{"A4", false, false, "analytic", "", ""};
  if (!m.constants.strong) return v;
  v.applicable = true;
  const StrongDissipation& s = *m.constants.strong;
  if (s.i0 < 1 || s.i0 > m.N) {
    v.pass = false;
    v.detail = "designated regime out of range";
    return v;
  }
  if (s.p <= 2.0) {
    v.pass = false;
    v.detail = "exponent p = " + fmt17(s.p) + " must exceed 2";
    return v;
  }
  if (s.C3 <= 0.0) {
    v.pass = false;
    v.detail = "C3 must be positive";
    return v;
  }
  const DriftSpec& d = m.drift[s.i0 - 1];
  const double beta_need = 2.0 * sym_lambda_max(d.A);
  if (d.cubic <= 0.0) {
    v.pass = false;
    v.detail = "drift at regime " + std::to_string(s.i0) +
               " has no superlinear damping; no positive C3 is admissible";
    v.witness = "|x - y| large along any direction";
    return v;
  }
  // 2<h, b(x)-b(y)> <= beta_a |h|^2 - (cubic/2) |h|^4 with both terms sharp at
  // x = -y along the top eigendirection (same doubled pairing as A1); a
  // declared (beta, C3, p) is valid iff
  // phi(r) = (beta - beta_a) r^2 - C3 r^p + (cubic/2) r^4 >= 0 for all r >= 0.
  const double c4 = d.cubic / 2.0;
  bool ok = s.beta >= beta_need - 1e-12;
  std::string why = ok ? "" : "beta below the admissible minimum " + fmt17(beta_need);
  if (ok) {
    if (s.p > 4.0 + 1e-12) {
      ok = false;
      why = "p > 4 makes the declared tail stronger than the drift provides";
    } else if (std::abs(s.p - 4.0) <= 1e-12) {
      ok = s.C3 <= c4 + 1e-12;
      if (!ok) why = "C3 exceeds the admissible value " + fmt17(c4);
    } else {
      // p in (2,4): scan phi on a log grid; quartic dominates at infinity.
      for (double r = 1e-6; r <= 1e6 && ok; r *= 1.05) {
        const double phi = (s.beta - beta_need) * r * r - s.C3 * std::pow(r, s.p) +
                           c4 * r * r * r * r;
        if (phi < -1e-9 * std::max(1.0, r * r)) {
          ok = false;
          why = "declared inequality fails near |x - y| = " + fmt17(r);
        }
      }
    }
  }
  v.pass = ok;
  v.detail = "admissible: beta >= " + fmt17(beta_need) + ", C3 <= " + fmt17(c4) +
             " at p = 4" + (why.empty() ? "" : ("; " + why));
  if (!ok) v.witness = why;
  return v;
}

Verdict check_h1(const Model& m) {
  Verdict v{"H1", true, false, "analytic", "", ""};
  v.pass = m.sigma_shared();
  v.detail = v.pass ? "sigma is one constant matrix" : "sigma differs across regimes";
  return v;
}

Verdict check_h2(const Model& m) {
  Verdict v{"H2", false, false, "analytic", "", ""};
  if (!m.constants.C4) return v;
  v.applicable = true;
  const double C4 = *m.constants.C4;
  double need = 0.0;
  for (int i = 1; i <= m.N; ++i) {
    if (m.drift[i - 1].cubic != 0.0) {
      v.pass = false;
      v.detail = "cubic damping has unbounded slope; no global Lipschitz constant";
      v.witness = "regime " + std::to_string(i) + ", |x| large";
      return v;
    }
    need = std::max(need, operator_norm(m.drift[i - 1].A));
  }
  v.pass = C4 >= need - kTol;
  v.detail = "max_i |A_i|_2 = " + fmt17(need) + " vs C4 = " + fmt17(C4);
  if (!v.pass) v.witness = "declared constant below the admissible minimum";
  return v;
}

bool tanh_clamps_inactive(const RatePair& p) {
  const double a = std::abs(p.amp);
  return p.base - a >= 0.0 && p.base + a <= p.cap;
}

}  // namespace

PairSumInfo pair_sum_info(const Model& m, int i, const GridSpec& grid) {
  if (i < 1 || i + 1 > m.N)
    throw Error(ErrorKind::Config, "pair index out of range");
  const RatePair* up = nullptr;
  const RatePair* down = nullptr;
  for (const auto& p : m.rates.pairs()) {
    if (p.from == i && p.to == i + 1) up = &p;
    if (p.from == i + 1 && p.to == i) down = &p;
  }
  auto classify = [](const RatePair* p, bool& cst, double& val, bool& tanh_ok) {
    cst = false;
    tanh_ok = false;
    val = 0.0;
    if (!p) {
      cst = true;
      return;
    }
    if (p->kind == RatePair::Kind::Constant) {
      cst = true;
      val = p->value;
      return;
    }
    if (p->kind == RatePair::Kind::Tanh && (p->amp == 0.0 || p->dir.norm() == 0.0)) {
      cst = true;
      val = std::min(std::max(p->base, 0.0), p->cap);
      return;
    }
    if (p->kind == RatePair::Kind::Tanh && tanh_clamps_inactive(*p)) tanh_ok = true;
  };
  bool cu, cd, tu, td;
  double vu, vd;
  classify(up, cu, vu, tu);
  classify(down, cd, vd, td);
  PairSumInfo info;
  info.analytic = true;
  if (cu && cd) {
    info.lo = info.hi = vu + vd;
  } else if (cu && td) {
    info.lo = vu + down->base - std::abs(down->amp);
    info.hi = vu + down->base + std::abs(down->amp);
  } else if (cd && tu) {
    info.lo = vd + up->base - std::abs(up->amp);
    info.hi = vd + up->base + std::abs(up->amp);
  } else if (tu && td && (up->dir - down->dir).norm() == 0.0) {
    const double span = std::abs(up->amp + down->amp);
    info.lo = up->base + down->base - span;
    info.hi = up->base + down->base + span;
  } else {
    info.analytic = false;
    double mn = 1e300, mx = -1e300;
    Vec at_min(m.n), at_max(m.n);
    for_each_grid_point(grid, m.n, [&](const Vec& x) {
      const double s = m.rates.eval(x, i, i + 1) + m.rates.eval(x, i + 1, i);
      if (s < mn) {
        mn = s;
        at_min = x;
      }
      if (s > mx) {
        mx = s;
        at_max = x;
      }
    });
    info.lo = mn;
    info.hi = mx;
    info.witness_min = "x = " + vec_str(at_min);
    info.witness_max = "x = " + vec_str(at_max);
  }
  info.constant = (info.hi - info.lo) <= kTol;
  // Witness points also for analytic ranges, so failure reports can always
  // name a concrete x; skipped if the sweep itself is infeasible.
  if (!info.constant && info.witness_min.empty()) {
    try {
      double mn = 1e300, mx = -1e300;
      Vec at_min(m.n), at_max(m.n);
      for_each_grid_point(grid, m.n, [&](const Vec& x) {
        const double s = m.rates.eval(x, i, i + 1) + m.rates.eval(x, i + 1, i);
        if (s < mn) {
          mn = s;
          at_min = x;
        }
        if (s > mx) {
          mx = s;
          at_max = x;
        }
      });
      info.witness_min = "x = " + vec_str(at_min);
      info.witness_max = "x = " + vec_str(at_max);
    } catch (const Error&) {
    }
  }
  return info;
}

static BirthDeathCheck check_birth_death_impl(const Model& m, const GridSpec& grid) {
  BirthDeathCheck r;
  r.is_birth_death = m.rates.birth_death();
  if (!r.is_birth_death) {
    r.detail = "a rate with |i - j| >= 2 is not identically zero";
    return r;
  }
  if (m.N == 1) {
    r.m1_holds = true;
    r.detail = "single regime";
    return r;
  }
  bool analytic = true;
  for (int i = 1; i <= m.N - 2; ++i) {
    PairSumInfo c = pair_sum_info(m, i, grid);
    analytic = analytic && c.analytic;
    if (!c.constant) {
      r.m1_holds = false;
      r.detail = "interior pair (" + std::to_string(i) + "," + std::to_string(i + 1) +
                 ") sum varies over [" + fmt17(c.lo) + ", " + fmt17(c.hi) + "]";
      r.witness = c.witness_max;
      return r;
    }
  }
  // Edge pair: sup(up) + inf(down) must not exceed the pair sum anywhere.
  const int e = m.N - 1;
  const double bound = m.rates.bounds(e, e + 1).sup + m.rates.bounds(e + 1, e).inf;
  PairSumInfo range = pair_sum_info(m, e, grid);
  analytic = analytic && range.analytic;
  if (bound <= range.lo + kTol) {
    r.m1_holds = true;
    r.detail = std::string(analytic ? "analytic" : "grid") + ": edge bound " +
               fmt17(bound) + " <= inf pair sum " + fmt17(range.lo);
  } else {
    r.m1_holds = false;
    r.detail = "edge bound " + fmt17(bound) + " exceeds the pair sum infimum " +
               fmt17(range.lo);
    r.witness = range.witness_min;
  }
  return r;
}

BirthDeathCheck check_birth_death(const Model& model) {
  return check_birth_death_impl(model, GridSpec{});
}

AssumptionReport validate_model(const Model& model, const GridSpec& grid) {
  AssumptionReport rep;
  rep.verdicts.push_back(check_q1(model, grid));
  rep.verdicts.push_back(check_q2(model, grid));
  rep.verdicts.push_back(check_q3(model));
  rep.verdicts.push_back(check_a1(model));
  rep.verdicts.push_back(check_a2(model, grid));
  rep.verdicts.push_back(check_a3(model));
  rep.verdicts.push_back(check_a4(model));
  rep.verdicts.push_back(check_h1(model));
  rep.verdicts.push_back(check_h2(model));
  {
    BirthDeathCheck bd = check_birth_death_impl(model, grid);
    Verdict v{"m1", bd.is_birth_death, bd.m1_holds, "analytic", bd.detail, bd.witness};
    rep.verdicts.push_back(v);
  }
  return rep;
}

RateSummary rate_bounds(const Model& model) {
  RateSummary s;
  for (const auto& p : model.rates.pairs()) s.pairs.push_back(model.rates.bounds(p.from, p.to));
  s.H = model.rates.H();
  s.M = model.rates.M();
  return s;
}

// ---------------------------------------------------------------------------
// JSON round trip

namespace {

Mat mat_from_json(const json& j) {
  const size_t rows = j.size();
  Mat m(rows, rows ? j[0].size() : 0);
  for (size_t r = 0; r < rows; ++r) {
    if (j[r].size() != static_cast<size_t>(m.cols()))
      throw Error(ErrorKind::Config, "ragged matrix in model config");
    for (size_t c = 0; c < j[r].size(); ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

json mat_to_json(const Mat& m) {
  json j = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    j.push_back(row);
  }
  return j;
}

Vec vec_from_json(const json& j) {
  Vec v(j.size());
  for (size_t k = 0; k < j.size(); ++k) v[k] = j[k].get<double>();
  return v;
}

json vec_to_json(const Vec& v) {
  json j = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) j.push_back(v[k]);
  return j;
}

}  // namespace

Model model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw Error(ErrorKind::Config, std::string("model config parse error: ") + e.what());
  }
  Model m;
  try {
    m.n = j.at("n").get<int>();
    m.N = j.at("regimes").get<int>();
    if (m.n < 1 || m.N < 1)
      throw Error(ErrorKind::Config, "dimension and regime count must be positive");
    for (const auto& d : j.at("drift")) {
      DriftSpec ds;
      ds.A = d.contains("A") ? mat_from_json(d["A"]) : Mat::Zero(m.n, m.n);
      ds.c = d.contains("c") ? vec_from_json(d["c"]) : Vec::Zero(m.n);
      ds.cubic = d.value("cubic", 0.0);
      if (ds.A.rows() != m.n || ds.A.cols() != m.n || ds.c.size() != m.n)
        throw Error(ErrorKind::Config, "drift dimensions disagree with n");
      if (ds.cubic < 0.0)
        throw Error(ErrorKind::Config, "cubic damping must be nonnegative");
      m.drift.push_back(ds);
    }
    if (static_cast<int>(m.drift.size()) != m.N)
      throw Error(ErrorKind::Config, "drift list must have one entry per regime");
    const json& js = j.at("sigma");
    const bool per_regime = js.size() > 0 && js[0].is_array() && js[0].size() > 0 &&
                            js[0][0].is_array();
    if (per_regime) {
      for (const auto& s : js) m.sigma.push_back(mat_from_json(s));
      if (static_cast<int>(m.sigma.size()) != m.N)
        throw Error(ErrorKind::Config, "per-regime sigma list must have N entries");
    } else {
      m.sigma.push_back(mat_from_json(js));
    }
    for (const auto& s : m.sigma)
      if (s.rows() != m.n || s.cols() != m.n)
        throw Error(ErrorKind::Config, "sigma dimensions disagree with n");
    std::vector<RatePair> pairs;
    if (j.contains("rates")) {
      for (const auto& r : j["rates"]) {
        RatePair p;
        p.from = r.at("from").get<int>();
        p.to = r.at("to").get<int>();
        const std::string kind = r.at("kind").get<std::string>();
        if (kind == "const") {
          p.kind = RatePair::Kind::Constant;
          p.value = r.at("value").get<double>();
        } else if (kind == "tanh") {
          p.kind = RatePair::Kind::Tanh;
          p.base = r.at("base").get<double>();
          p.amp = r.at("amp").get<double>();
          p.dir = r.contains("dir") ? vec_from_json(r["dir"]) : Vec::Zero(m.n);
          p.cap = r.value("cap", 1e300);
        } else {
          throw Error(ErrorKind::Config, "unknown rate kind '" + kind + "'");
        }
        pairs.push_back(std::move(p));
      }
    }
    m.rates = RateFunction(m.N, m.n, std::move(pairs));
    m.rates.finalize();
    if (j.contains("constants")) {
      const json& jc = j["constants"];
      if (jc.contains("alpha")) {
        std::vector<double> a = jc["alpha"].get<std::vector<double>>();
        if (static_cast<int>(a.size()) != m.N)
          throw Error(ErrorKind::Config, "alpha must have one entry per regime");
        m.constants.alpha = std::move(a);
      }
      if (jc.contains("C1")) m.constants.C1 = jc["C1"].get<double>();
      m.constants.C1_box_scope = jc.value("C1_scope", std::string("global")) == "box";
      if (jc.contains("C2")) {
        m.constants.C2 = jc["C2"].get<double>();
        if (*m.constants.C2 <= 0.0)
          throw Error(ErrorKind::Config, "C2 must be positive when declared");
      }
      if (jc.contains("strong")) {
        StrongDissipation s;
        s.i0 = jc["strong"].value("i0", 1);
        s.beta = jc["strong"].at("beta").get<double>();
        s.C3 = jc["strong"].at("C3").get<double>();
        s.p = jc["strong"].at("p").get<double>();
        m.constants.strong = s;
      }
      if (jc.contains("C4")) m.constants.C4 = jc["C4"].get<double>();
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorKind::Config, std::string("model config error: ") + e.what());
  }
  return m;
}

std::string model_to_json(const Model& m) {
  json j;
  j["n"] = m.n;
  j["regimes"] = m.N;
  j["drift"] = json::array();
  for (const auto& d : m.drift) {
    json jd;
    jd["A"] = mat_to_json(d.A);
    jd["c"] = vec_to_json(d.c);
    jd["cubic"] = d.cubic;
    j["drift"].push_back(jd);
  }
  if (m.sigma.size() == 1) {
    j["sigma"] = mat_to_json(m.sigma[0]);
  } else {
    j["sigma"] = json::array();
    for (const auto& s : m.sigma) j["sigma"].push_back(mat_to_json(s));
  }
  j["rates"] = json::array();
  for (const auto& p : m.rates.pairs()) {
    json jp;
    jp["from"] = p.from;
    jp["to"] = p.to;
    if (p.kind == RatePair::Kind::Constant) {
      jp["kind"] = "const";
      jp["value"] = p.value;
    } else if (p.kind == RatePair::Kind::Tanh) {
      jp["kind"] = "tanh";
      jp["base"] = p.base;
      jp["amp"] = p.amp;
      jp["dir"] = vec_to_json(p.dir);
      if (p.cap < 1e300) jp["cap"] = p.cap;
    } else {
      throw Error(ErrorKind::Config, "programmatic rates are not serializable");
    }
    j["rates"].push_back(jp);
  }
  json jc;
  if (m.constants.alpha) jc["alpha"] = *m.constants.alpha;
  if (m.constants.C1) {
    jc["C1"] = *m.constants.C1;
    jc["C1_scope"] = m.constants.C1_box_scope ? "box" : "global";
  }
  if (m.constants.C2) jc["C2"] = *m.constants.C2;
  if (m.constants.strong) {
    jc["strong"] = {{"i0", m.constants.strong->i0},
                    {"beta", m.constants.strong->beta},
                    {"C3", m.constants.strong->C3},
                    {"p", m.constants.strong->p}};
  }
  if (m.constants.C4) jc["C4"] = *m.constants.C4;
  if (!jc.empty()) j["constants"] = jc;
  return j.dump(2) + "\n";
}

Model load_model_file(const std::string& path) {
  return model_from_json(read_text_file(path));
}

}  // namespace rsdp
