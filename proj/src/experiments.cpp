#include "rsdp/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rsdp/couple.hpp"
#include "rsdp/dominate.hpp"
#include "rsdp/integrate.hpp"
#include "rsdp/io.hpp"
#include "rsdp/measure.hpp"
#include "rsdp/model.hpp"
#include "rsdp/parallel.hpp"
#include "rsdp/rng.hpp"
#include "rsdp/skorokhod.hpp"

namespace rsdp {
namespace {

using json = nlohmann::ordered_json;

struct Loaded {
  json config;
  Model model;
  uint64_t seed = 0;
  int workers = 1;
  std::string out_dir;
};

Vec vec_from(const json& j, int n, const char* what) {
  if (!j.is_array() || static_cast<int>(j.size()) != n)
    throw Error(ErrorKind::Config, std::string(what) + " must be an array of length " +
                                       std::to_string(n));
  Vec v(n);
  for (int a = 0; a < n; ++a) v[a] = j[a].get<double>();
  return v;
}

json vec_to(const Vec& v) {
  json j = json::array();
  for (Eigen::Index a = 0; a < v.size(); ++a) j.push_back(v[a]);
  return j;
}

GridSpec grid_from(const json& cfg) {
  GridSpec g;
  if (cfg.contains("grid")) {
    const json& jg = cfg["grid"];
    g.lo = jg.value("lo", g.lo);
    g.hi = jg.value("hi", g.hi);
    g.points_per_axis = jg.value("points", g.points_per_axis);
  }
  return g;
}

Loaded load_config(const RunOptions& opt) {
  Loaded L;
  const std::string text = read_text_file(opt.config_path);
  try {
    L.config = json::parse(text);
  } catch (const std::exception& e) {
    throw Error(ErrorKind::Config, std::string("config parse error: ") + e.what());
  }
  if (L.config.contains("model")) {
    L.model = model_from_json(L.config["model"].dump());
  } else if (L.config.contains("model_file")) {
    std::filesystem::path p = L.config["model_file"].get<std::string>();
    if (p.is_relative())
      p = std::filesystem::path(opt.config_path).parent_path() / p;
    L.model = load_model_file(p.string());
  } else {
    throw Error(ErrorKind::Config, "config needs a 'model' or 'model_file' entry");
  }
  L.seed = opt.seed ? *opt.seed : L.config.value("seed", 0ull);
  L.workers = opt.workers ? *opt.workers : L.config.value("workers", 1);
  if (L.workers < 1) L.workers = 1;
  L.out_dir = opt.out_dir;
  return L;
}

std::string hex64(uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// The manifest is written before any result so an interrupted run still
// records what was attempted.  It is the one output allowed to differ between
// reruns (wall-clock stamp, worker count).
void write_manifest(const Loaded& L, const RunOptions& opt, const char* command,
                    long path_count, const std::vector<std::string>& outputs) {
  json m;
  m["library_version"] = kLibraryVersion;
  m["command"] = command;
  m["started_unix"] = static_cast<long>(std::time(nullptr));
  m["config_hash"] = hex64(fnv1a64_bytes(read_text_file(opt.config_path)));
  m["base_seed"] = L.seed;
  m["workers"] = L.workers;
  m["seed_rule"] = "stream(tag, k) = splitmix64(splitmix64(splitmix64(base) ^ fnv1a64(tag)) ^ k)";
  json seeds = json::array();
  const long shown = std::min<long>(path_count, 256);
  for (long k = 0; k < shown; ++k) seeds.push_back(hex64(derive_seed(L.seed, "drive", k)));
  m["path_seeds"] = {{"tag", "drive"},
                     {"count", path_count},
                     {"truncated", path_count > 256},
                     {"first", seeds}};
  m["outputs"] = outputs;
  ensure_dir(L.out_dir);
  write_text_file(L.out_dir + "/manifest.json", m.dump(2) + "\n");
}

json verdict_json(const Verdict& v) {
  json j;
  j["name"] = v.name;
  j["applicable"] = v.applicable;
  j["pass"] = v.pass;
  j["method"] = v.method;
  j["detail"] = v.detail;
  if (!v.witness.empty()) j["witness"] = v.witness;
  return j;
}

int map_error(const Error& e) {
  std::cerr << "error: " << e.what() << "\n";
  switch (e.kind()) {
    case ErrorKind::Config:
      return kExitConfig;
    case ErrorKind::Assumption:
    case ErrorKind::Structural:
    case ErrorKind::Unsupported:
      return kExitAssumption;
    case ErrorKind::Numeric:
      return kExitThreshold;
  }
  return kExitConfig;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    return map_error(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

// Missing declared constants that a coupling run would need become failing
// verdicts so `check` and `couple` agree on the exit code.  The undeclared
// assumption is rewritten in place; appending a second verdict would hide the
// failure from find().
void require_coupling_constants(const Loaded& L, AssumptionReport& rep) {
  auto demand = [&](const char* name, const char* detail) {
    for (auto& v : rep.verdicts) {
      if (v.name == name) {
        v.applicable = true;
        v.pass = false;
        v.detail = detail;
        return;
      }
    }
    rep.verdicts.push_back(Verdict{name, true, false, "analytic", detail, ""});
  };
  if (!L.model.constants.C2)
    demand("A3", "A3 required: declare the ellipticity floor C2 for coupling runs");
  if (!L.model.constants.strong)
    demand("A4",
           "A4 required: declare the strong-dissipation constants for coupling runs");
}

}  // namespace

int cmd_check(const RunOptions& opt) {
  return guarded([&]() {
    Loaded L = load_config(opt);
    write_manifest(L, opt, "check", 0, {"check.json"});
    const GridSpec grid = grid_from(L.config);
    AssumptionReport rep = validate_model(L.model, grid);
    if (L.config.contains("couple")) require_coupling_constants(L, rep);
    const BirthDeathCheck bd = check_birth_death(L.model);
    const RateSummary rates = rate_bounds(L.model);

    json out;
    out["verdicts"] = json::array();
    for (const auto& v : rep.verdicts) out["verdicts"].push_back(verdict_json(v));
    out["rates"] = {{"H", rates.H}, {"M", rates.M}, {"cq", L.model.rates.cq()}};
    json jp = json::array();
    for (const auto& b : rates.pairs)
      jp.push_back({{"from", b.from},
                    {"to", b.to},
                    {"sup", b.sup},
                    {"inf", b.inf},
                    {"lip", b.lip},
                    {"exact", b.exact}});
    out["rates"]["pairs"] = jp;
    out["birth_death"] = {{"is_birth_death", bd.is_birth_death},
                          {"pair_conditions", bd.m1_holds},
                          {"detail", bd.detail}};
    if (!bd.witness.empty()) out["birth_death"]["witness"] = bd.witness;

    const json& sec = L.config.contains("check") ? L.config["check"] : json::object();
    if (sec.contains("lambda") && bd.is_birth_death) {
      Vec lambda = vec_from(sec["lambda"], L.model.N, "lambda");
      const DominationSide side = side_for(lambda);
      const DominatingChain chain = build_dominating(L.model, side);
      out["spectral"] = {
          {"side", side == DominationSide::Above ? "above" : "below"},
          {"eta_bar", eta_bar(chain.Q, lambda, side)},
          {"conditions_hold", chain.conditions_hold}};
    }
    if (L.model.constants.alpha) {
      try {
        out["spectral_alpha"] = {{"eta_alpha", eta_alpha(L.model)}};
      } catch (const Error& e) {
        out["spectral_alpha"] = {{"note", e.what()}};
      }
    }
    write_text_file(L.out_dir + "/check.json", out.dump(2) + "\n");

    for (const auto& v : rep.verdicts) {
      if (!v.applicable) continue;
      std::cout << v.name << ": " << (v.pass ? "pass" : "FAIL") << " (" << v.method
                << ") " << v.detail;
      if (!v.pass && !v.witness.empty()) std::cout << " [witness: " << v.witness << "]";
      std::cout << "\n";
    }
    std::cout << "H = " << fmt17(rates.H) << ", M = " << fmt17(rates.M)
              << ", cq = " << fmt17(L.model.rates.cq()) << "\n";
    return rep.all_applicable_pass() ? kExitOk : kExitAssumption;
  });
}

int cmd_converge(const RunOptions& opt) {
  return guarded([&]() {
    Loaded L = load_config(opt);
    if (!L.config.contains("converge"))
      throw Error(ErrorKind::Config, "config needs a 'converge' section");
    const json& sec = L.config["converge"];
    write_manifest(L, opt, "converge", sec.value("paths", 200),
                   {"errors.csv", "converge.json"});

    // Preconditions: one constant sigma, declared drift Lipschitz constant.
    AssumptionReport rep = validate_model(L.model, grid_from(L.config));
    const Verdict* h1 = rep.find("H1");
    if (!h1 || !h1->pass)
      throw Error(ErrorKind::Assumption,
                  "convergence runs need one constant sigma across regimes");
    const Verdict* h2 = rep.find("H2");
    if (!h2 || !h2->applicable)
      throw Error(ErrorKind::Assumption,
                  "convergence runs need the declared drift Lipschitz constant C4");
    if (!h2->pass)
      throw Error(ErrorKind::Assumption, "declared C4 is not admissible: " + h2->detail);

    std::vector<double> deltas;
    for (const auto& d : sec.at("deltas")) deltas.push_back(d.get<double>());
    const double delta_ref = sec.at("delta_ref").get<double>();
    const double T = sec.at("T").get<double>();
    const Vec x0 = vec_from(sec.at("x0"), L.model.n, "x0");
    const int i0 = sec.value("i0", 1);
    const int paths = sec.value("paths", 200);
    const double slope_min = sec.value("slope_min", 0.45);
    const double ratio_spread_max = sec.value("ratio_spread_max", 3.0);

    const ErrorReport report =
        strong_error(L.model, deltas, delta_ref, T, x0, i0, paths, L.seed, L.workers);

    std::ostringstream csv;
    write_error_csv(report, csv);
    write_text_file(L.out_dir + "/errors.csv", csv.str());

    json out;
    out["rows"] = json::array();
    std::vector<double> ratios;
    for (const auto& row : report.rows) {
      json r;
      r["delta"] = row.delta;
      r["error_mean"] = row.err_mean;
      r["error_se"] = row.err_se;
      r["mismatch_mean"] = row.mismatch_mean;
      r["mismatch_se"] = row.mismatch_se;
      r["l1_mean"] = row.l1_mean;
      r["paths"] = row.paths;
      // Mismatch against its theoretical scale sqrt(delta) + int E|X-Y| dt.
      const double scale = std::sqrt(row.delta) + row.l1_mean;
      if (row.mismatch_mean > 0.0) {
        r["ratio"] = row.mismatch_mean / scale;
        ratios.push_back(row.mismatch_mean / scale);
      }
      out["rows"].push_back(r);
    }
    bool slope_ok = true, increment_ok = true;
    if (report.slope) {
      out["slope"] = *report.slope;
      out["slope_residual"] = report.slope_residual;
      slope_ok = *report.slope >= slope_min;
    } else {
      out["slope"] = "undefined";
      out["note"] = "all errors vanish; decay fit not applicable";
    }
    if (!ratios.empty()) {
      const auto [mn, mx] = std::minmax_element(ratios.begin(), ratios.end());
      out["ratio_spread"] = *mx / *mn;
      out["ratio_spread_ok"] = (*mx / *mn) <= ratio_spread_max;
    }
    out["divergent_paths"] = report.divergent_paths;
    out["thresholds"] = {{"slope_min", slope_min},
                         {"ratio_spread_max", ratio_spread_max}};

    if (sec.contains("increment")) {
      const json& ji = sec["increment"];
      const IncrementCheck ic =
          increment_check(L.model, ji.at("delta").get<double>(), ji.at("T").get<double>(),
                          ji.value("paths", 200), derive_seed(L.seed, "increment", 0));
      out["increment"] = {{"pass", ic.pass},
                          {"worst_margin", ic.worst_margin},
                          {"detail", ic.detail}};
      increment_ok = ic.pass;
    }
    out["verdicts"] = {{"slope_ok", slope_ok}, {"increment_ok", increment_ok}};
    write_text_file(L.out_dir + "/converge.json", out.dump(2) + "\n");

    if (report.slope)
      std::cout << "slope = " << fmt17(*report.slope) << (slope_ok ? " (ok)" : " (LOW)")
                << "\n";
    else
      std::cout << "slope undefined (errors vanish)\n";
    return (slope_ok && increment_ok) ? kExitOk : kExitThreshold;
  });
}

int cmd_dominate(const RunOptions& opt) {
  return guarded([&]() {
    Loaded L = load_config(opt);
    if (!L.config.contains("dominate"))
      throw Error(ErrorKind::Config, "config needs a 'dominate' section");
    const json& sec = L.config["dominate"];
    const int paths = sec.value("paths", 2000);
    write_manifest(L, opt, "dominate", paths, {"dominate.json", "functional.csv"});

    if (!L.model.rates.birth_death())
      throw Error(ErrorKind::Structural,
                  "domination needs a birth-death rate structure");
    Vec lambda = vec_from(sec.at("lambda"), L.model.N, "lambda");
    const DominationSide side = side_for(lambda);
    const DominatingChain chain = build_dominating(L.model, side);

    json out;
    out["side"] = side == DominationSide::Above ? "above" : "below";
    json jQ = json::array();
    for (int i = 0; i < chain.N; ++i) {
      json row = json::array();
      for (int j = 0; j < chain.N; ++j) row.push_back(chain.Q(i, j));
      jQ.push_back(row);
    }
    out["chain_Q"] = jQ;
    out["conditions_hold"] = chain.conditions_hold;
    out["condition_detail"] = chain.condition_detail;
    if (!chain.witness.empty()) out["witness"] = chain.witness;
    if (!chain.conditions_hold) {
      write_text_file(L.out_dir + "/dominate.json", out.dump(2) + "\n");
      std::cerr << "domination conditions fail: " << chain.condition_detail;
      if (!chain.witness.empty()) std::cerr << " [witness: " << chain.witness << "]";
      std::cerr << "\n";
      return kExitAssumption;
    }
    const double eta = eta_bar(chain.Q, lambda, side);
    out["eta_bar"] = eta;

    // Pathwise domination on shared drives.
    const Vec x0 = vec_from(sec.at("x0"), L.model.n, "x0");
    const int i0 = sec.value("i0", 1);
    const double delta = sec.value("delta", 1.0 / 64);
    const double T = sec.value("T", 10.0);
    long regime_violations = 0, integral_violations = 0;
    {
      std::vector<std::pair<long, long>> slots(paths);
      parallel_for(paths, L.workers, [&](long p) {
        const PoissonDrive drive =
            sample_drive(T, L.model.M(), derive_seed(L.seed, "drive", p));
        const BrownianPath bm =
            sample_brownian(L.model.n, delta, T, derive_seed(L.seed, "brownian", p));
        const SamplePath path = em_path(L.model, delta, drive, bm, x0, i0);
        const SwitchPath bar = simulate_dominating(chain.Q, drive, i0);
        // Merged timeline comparison at every switch instant.
        long bad = 0;
        std::vector<double> marks;
        for (const auto& s : path.regimes.switches) marks.push_back(s.first);
        for (const auto& s : bar.switches) marks.push_back(s.first);
        marks.push_back(0.0);
        std::sort(marks.begin(), marks.end());
        for (double t : marks) {
          const int a = path.regimes.at(t);
          const int b = bar.at(t);
          const bool ok = side == DominationSide::Above ? a <= b : b <= a;
          if (!ok) ++bad;
        }
        double ia = 0.0, ib = 0.0;
        {
          double prev = 0.0;
          int cur = path.regimes.initial;
          for (const auto& s : path.regimes.switches) {
            ia += lambda[cur - 1] * (s.first - prev);
            prev = s.first;
            cur = s.second;
          }
          ia += lambda[cur - 1] * (T - prev);
          prev = 0.0;
          cur = bar.initial;
          for (const auto& s : bar.switches) {
            ib += lambda[cur - 1] * (s.first - prev);
            prev = s.first;
            cur = s.second;
          }
          ib += lambda[cur - 1] * (T - prev);
        }
        slots[p] = {bad, (ia <= ib + 1e-12) ? 0 : 1};
      });
      for (const auto& s : slots) {
        regime_violations += s.first;
        integral_violations += s.second;
      }
    }
    out["pathwise"] = {{"paths", paths},
                       {"regime_violations", regime_violations},
                       {"integral_violations", integral_violations}};

    // Functional table: Monte Carlo for chain and model against the
    // matrix-exponential value.
    std::vector<double> times;
    if (sec.contains("times"))
      for (const auto& t : sec["times"]) times.push_back(t.get<double>());
    else
      times = {1.0, 2.0, 5.0};
    const int func_paths = sec.value("func_paths", paths);
    std::ostringstream csv;
    csv << "t,mc_chain,mc_chain_se,exact,mc_model,mc_model_se\n";
    bool mc_ok = true;
    json jf = json::array();
    for (size_t ti = 0; ti < times.size(); ++ti) {
      const double t = times[ti];
      const MCEstimate mc = exp_functional_chain(chain.Q, lambda, i0, t, func_paths,
                                                 derive_seed(L.seed, "func", ti));
      const double exact = exp_functional_matrix(chain.Q, lambda, i0, t);
      const MCEstimate mm =
          exp_functional_model(L.model, lambda, x0, i0, t, delta, func_paths,
                               derive_seed(L.seed, "funcm", ti));
      if (std::abs(mc.mean - exact) > 3.0 * std::max(mc.std_error, 1e-15)) mc_ok = false;
      csv << fmt17(t) << "," << fmt17(mc.mean) << "," << fmt17(mc.std_error) << ","
          << fmt17(exact) << "," << fmt17(mm.mean) << "," << fmt17(mm.std_error) << "\n";
      jf.push_back({{"t", t},
                    {"mc_chain", mc.mean},
                    {"mc_chain_se", mc.std_error},
                    {"exact", exact},
                    {"mc_model", mm.mean},
                    {"mc_model_se", mm.std_error}});
    }
    write_text_file(L.out_dir + "/functional.csv", csv.str());
    out["functional"] = jf;

    // Spectral decay of the exact functional.
    const double fit_lo = sec.value("fit_lo", 5.0);
    const double fit_hi = sec.value("fit_hi", 50.0);
    const int fit_points = sec.value("fit_points", 25);
    std::vector<double> fts, fvs;
    for (int k = 0; k < fit_points; ++k) {
      const double t = fit_lo + (fit_hi - fit_lo) * k / (fit_points - 1);
      fts.push_back(t);
      fvs.push_back(exp_functional_matrix(chain.Q, lambda, i0, t));
    }
    const double fitted = -fit_log_slope(fts, fvs);
    const double rtol = sec.value("decay_rtol", 0.1);
    const bool decay_ok = std::abs(fitted - eta) <= rtol * std::max(std::abs(eta), 0.05);
    out["decay"] = {{"fitted", fitted}, {"eta_bar", eta}, {"ok", decay_ok}};

    write_text_file(L.out_dir + "/dominate.json", out.dump(2) + "\n");
    std::cout << "eta_bar = " << fmt17(eta) << ", fitted decay = " << fmt17(fitted)
              << ", regime violations = " << regime_violations << "\n";
    if (regime_violations > 0 || integral_violations > 0 || !mc_ok || !decay_ok)
      return kExitThreshold;
    return kExitOk;
  });
}

int cmd_couple(const RunOptions& opt) {
  return guarded([&]() {
    Loaded L = load_config(opt);
    if (!L.config.contains("couple"))
      throw Error(ErrorKind::Config, "config needs a 'couple' section");
    const json& sec = L.config["couple"];
    write_manifest(L, opt, "couple", sec.value("paths", 2000),
                   {"coupling.json", "survival.csv", "contraction.csv"});

    AssumptionReport rep = validate_model(L.model, grid_from(L.config));
    require_coupling_constants(L, rep);
    for (const char* name : {"A3", "A4"}) {
      const Verdict* v = rep.find(name);
      if (v && v->applicable && !v->pass)
        throw Error(ErrorKind::Assumption,
                    std::string(name) + " fails: " + v->detail +
                        (v->witness.empty() ? "" : " [witness: " + v->witness + "]"));
    }

    json out;
    bool threshold_fail = false, inconclusive = false;

    if (sec.contains("bound")) {
      const json& jb = sec["bound"];
      CouplingBoundParams params;
      params.C2 = *L.model.constants.C2;
      params.C3 = L.model.constants.strong->C3;
      params.beta = L.model.constants.strong->beta;
      params.p = L.model.constants.strong->p;
      json rows = json::array();
      for (const auto& jr : jb.at("r_values")) {
        const double r = jr.get<double>();
        const double b = coupling_time_bound(params, r);
        const double bg = coupling_time_bound_gauss(params, r);
        if (std::abs(b - bg) > 1e-6 * std::max(1.0, std::abs(b)))
          throw Error(ErrorKind::Numeric,
                      "quadrature cross-check failed at r = " + fmt17(r));
        rows.push_back({{"r", r}, {"bound", b}, {"gauss", bg}});
      }
      out["bound"] = rows;
    }

    if (sec.contains("fixed_env")) {
      const json& jf = sec["fixed_env"];
      CouplingBoundParams params;
      params.C2 = *L.model.constants.C2;
      params.C3 = L.model.constants.strong->C3;
      params.beta = L.model.constants.strong->beta;
      params.p = L.model.constants.strong->p;
      const int i_env = L.model.constants.strong->i0;
      const double delta = jf.value("delta", 1.0 / 512);
      const double Tmax = jf.value("Tmax", 50.0);
      const int fpaths = jf.value("paths", 2000);
      const double factor = jf.value("factor", 1.0);
      json rows = json::array();
      size_t pi = 0;
      for (const auto& jp : jf.at("pairs")) {
        const Vec x = vec_from(jp.at(0), L.model.n, "pair start");
        const Vec y = vec_from(jp.at(1), L.model.n, "pair start");
        const double r = (x - y).norm();
        const FixedEnvMeeting met =
            fixed_env_meeting(L.model, i_env, x, y, delta, Tmax, fpaths,
                              derive_seed(L.seed, "fenv", pi++), L.workers);
        const double bound = coupling_time_bound(params, r);
        const bool ok = met.mean <= factor * bound + 3.0 * met.std_error;
        if (met.inconclusive)
          inconclusive = true;
        else if (!ok)
          threshold_fail = true;
        rows.push_back({{"r", r},
                        {"mean", met.mean},
                        {"se", met.std_error},
                        {"bound", bound},
                        {"censored_fraction", met.censored_fraction},
                        {"inconclusive", met.inconclusive},
                        {"ok", ok}});
      }
      out["fixed_env"] = rows;
    }

    CouplingOptions copt;
    copt.delta = sec.value("delta", copt.delta);
    copt.Tmax = sec.value("Tmax", copt.Tmax);
    copt.designated_state = L.model.constants.strong->i0;

    if (sec.contains("full")) {
      const json& jc = sec["full"];
      const Vec x = vec_from(jc.at("x"), L.model.n, "x");
      const Vec y = vec_from(jc.at("y"), L.model.n, "y");
      const int i = jc.value("i", 1);
      const int j = jc.value("j", 1);
      CouplingOptions o = copt;
      o.delta = jc.value("delta", o.delta);
      o.Tmax = jc.value("Tmax", o.Tmax);
      const int cpaths = jc.value("paths", sec.value("paths", 2000));
      const double tol = jc.value("tolerance", 1.1);
      const double theta_min = jc.value("theta_min", 0.05);
      const TauTail tail = tau_tail(L.model, x, i, y, j, o, cpaths,
                                    derive_seed(L.seed, "tau", 0), tol, L.workers);
      std::ostringstream csv;
      csv << "t,survival\n";
      for (size_t g = 0; g < tail.grid.size(); ++g)
        csv << fmt17(tail.grid[g]) << "," << fmt17(tail.survival[g]) << "\n";
      write_text_file(L.out_dir + "/survival.csv", csv.str());
      const double cens_frac = static_cast<double>(tail.censored) / cpaths;
      const double coupled_min = jc.value("coupled_min", 0.99);
      out["full"] = {{"theta_hat", tail.theta_hat},
                     {"ls_slope", tail.ls_slope},
                     {"mean_tau", tail.mean_tau},
                     {"se_tau", tail.se_tau},
                     {"censored", tail.censored},
                     {"censored_fraction", cens_frac},
                     {"dominated", tail.dominated},
                     {"theta_min", theta_min},
                     {"coupled_fraction", tail.coupled_fraction},
                     {"mean_T", tail.mean_T},
                     {"T_censored", tail.T_censored},
                     {"tau_gt_T", tail.tau_gt_T},
                     {"coupled_min", coupled_min}};
      if (cens_frac > 0.5)
        inconclusive = true;
      else if (tail.theta_hat < theta_min || !tail.dominated ||
               tail.coupled_fraction < coupled_min || tail.tau_gt_T > 0)
        threshold_fail = true;
    }

    if (sec.contains("contraction")) {
      const json& jc = sec["contraction"];
      const Vec x = vec_from(jc.at("x"), L.model.n, "x");
      const Vec y = vec_from(jc.at("y"), L.model.n, "y");
      const int i = jc.value("i", 1);
      const int j = jc.value("j", 1);
      CouplingOptions o = copt;
      o.delta = jc.value("delta", o.delta);
      const double T = jc.at("T").get<double>();
      const int cpaths = jc.value("paths", sec.value("paths", 2000));
      const double tol = jc.value("tolerance", 0.20);
      const ContractionCurve curve =
          contraction_rate(L.model, x, i, y, j, T, o, cpaths,
                           derive_seed(L.seed, "contr", 0), tol, L.workers);
      std::ostringstream csv;
      csv << "t,mean_sq\n";
      for (size_t k = 0; k < curve.times.size(); ++k)
        csv << fmt17(curve.times[k]) << "," << fmt17(curve.mean_sq[k]) << "\n";
      write_text_file(L.out_dir + "/contraction.csv", csv.str());
      out["contraction"] = {{"fitted_rate", curve.fitted_rate},
                            {"target_rate", curve.target_rate},
                            {"target_vacuous", curve.target_vacuous},
                            {"pass", curve.pass}};
      if (!curve.target_vacuous && !curve.pass) threshold_fail = true;
    }

    if (sec.contains("moments")) {
      const json& jm = sec["moments"];
      std::vector<Vec> x0s;
      for (const auto& jx : jm.at("x0s")) x0s.push_back(vec_from(jx, L.model.n, "x0"));
      const MomentBoundReport mom = moment_bound(
          L.model, x0s, jm.value("i0", 1), jm.at("T").get<double>(),
          jm.value("delta", 1.0 / 64), jm.value("paths", sec.value("paths", 2000)),
          derive_seed(L.seed, "mom", 0), jm.value("spread_tolerance", 5.0), L.workers);
      json jr = json::array();
      for (size_t q = 0; q < mom.ratios.size(); ++q)
        jr.push_back({{"x0_norm", mom.x0_norms[q]}, {"ratio", mom.ratios[q]}});
      out["moments"] = {{"ratios", jr},
                        {"spread", mom.spread},
                        {"bounded", mom.bounded},
                        {"pass", mom.pass}};
      if (!mom.pass) threshold_fail = true;
    }

    write_text_file(L.out_dir + "/coupling.json", out.dump(2) + "\n");
    if (threshold_fail) return kExitThreshold;
    if (inconclusive) {
      std::cout << "inconclusive; raise Tmax\n";
      return kExitInconclusive;
    }
    return kExitOk;
  });
}

int cmd_invariant(const RunOptions& opt) {
  return guarded([&]() {
    Loaded L = load_config(opt);
    if (!L.config.contains("invariant"))
      throw Error(ErrorKind::Config, "config needs an 'invariant' section");
    const json& sec = L.config["invariant"];
    InvariantOptions io;
    io.delta = sec.value("delta", io.delta);
    io.paths = sec.value("paths", io.paths);
    io.probe_lag = sec.value("probe_lag", io.probe_lag);
    io.cap = sec.value("cap", io.cap);
    write_manifest(L, opt, "invariant", io.paths, {"invariant.json", "invariant.csv"});

    std::vector<std::pair<Vec, int>> inits;
    for (const auto& ji : sec.at("inits"))
      inits.emplace_back(vec_from(ji.at("x"), L.model.n, "init x"), ji.value("i", 1));
    std::vector<double> times;
    for (const auto& jt : sec.at("times")) times.push_back(jt.get<double>());
    const double abs_threshold = sec.value("threshold", 0.05);
    const double floor_factor = sec.value("floor_factor", 3.0);

    const InvariantConvergence conv =
        invariant_convergence(L.model, inits, times, io, L.seed, L.workers);

    std::ostringstream csv;
    csv << "t";
    for (size_t a = 0; a < inits.size(); ++a)
      for (size_t b = a + 1; b < inits.size(); ++b)
        csv << ",d_" << a << "_" << b;
    csv << "\n";
    for (size_t ti = 0; ti < times.size(); ++ti) {
      csv << fmt17(times[ti]);
      for (const auto& row : conv.pair_distance) csv << "," << fmt17(row[ti]);
      csv << "\n";
    }
    write_text_file(L.out_dir + "/invariant.csv", csv.str());

    const double allowed = std::max(abs_threshold, floor_factor * conv.noise_floor);
    bool ok = true;
    double final_max = 0.0;
    for (const auto& row : conv.pair_distance) final_max = std::max(final_max, row.back());
    ok = final_max <= allowed;

    json out;
    out["times"] = times;
    out["pair_distance"] = conv.pair_distance;
    out["stationarity"] = conv.stationarity;
    out["noise_floor"] = conv.noise_floor;
    out["final_max_distance"] = final_max;
    out["allowed"] = allowed;
    out["warnings"] = conv.warnings;
    out["pass"] = ok;
    write_text_file(L.out_dir + "/invariant.json", out.dump(2) + "\n");

    std::cout << "final distance " << fmt17(final_max) << " vs allowed " << fmt17(allowed)
              << (ok ? " (ok)" : " (FAIL)") << "\n";
    for (const auto& w : conv.warnings) std::cout << "warning: " << w << "\n";
    return ok ? kExitOk : kExitThreshold;
  });
}

int cmd_simulate(const RunOptions& opt) {
  return guarded([&]() {
    Loaded L = load_config(opt);
    if (!L.config.contains("simulate"))
      throw Error(ErrorKind::Config, "config needs a 'simulate' section");
    const json& sec = L.config["simulate"];
    write_manifest(L, opt, "simulate", 1, {"path.csv", "drive.csv"});
    const double T = sec.at("T").get<double>();
    const double delta = sec.at("delta").get<double>();
    const Vec x0 = vec_from(sec.at("x0"), L.model.n, "x0");
    const int i0 = sec.value("i0", 1);
    const PoissonDrive drive =
        sample_drive(T, L.model.M(), derive_seed(L.seed, "drive", 0));
    const BrownianPath bm =
        sample_brownian(L.model.n, delta, T, derive_seed(L.seed, "brownian", 0));
    const SamplePath path = em_path(L.model, delta, drive, bm, x0, i0);

    std::ostringstream csv;
    csv << "t";
    for (int a = 0; a < L.model.n; ++a) csv << ",x" << a;
    csv << ",regime\n";
    for (long k = 0; k < path.nodes(); ++k) {
      csv << fmt17(path.time(k));
      for (int a = 0; a < L.model.n; ++a) csv << "," << fmt17(path.xs[k * L.model.n + a]);
      csv << "," << path.regimes.at(path.time(k)) << "\n";
    }
    write_text_file(L.out_dir + "/path.csv", csv.str());
    std::ostringstream dcsv;
    write_drive_csv(drive, dcsv);
    write_text_file(L.out_dir + "/drive.csv", dcsv.str());
    std::cout << "wrote " << path.nodes() << " nodes, " << drive.times.size()
              << " drive events\n";
    return kExitOk;
  });
}

}  // namespace rsdp
