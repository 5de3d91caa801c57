#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "rsdp/couple.hpp"
#include "rsdp/dominate.hpp"
#include "rsdp/integrate.hpp"
#include "rsdp/io.hpp"
#include "rsdp/measure.hpp"
#include "rsdp/model.hpp"
#include "rsdp/rng.hpp"
#include "rsdp/skorokhod.hpp"

namespace py = pybind11;
using namespace rsdp;

namespace {

py::dict verdict_dict(const Verdict& v) {
  py::dict d;
  d["name"] = v.name;
  d["applicable"] = v.applicable;
  d["pass"] = v.pass;
  d["method"] = v.method;
  d["detail"] = v.detail;
  d["witness"] = v.witness;
  return d;
}

std::vector<LabeledSample> to_samples(
    const std::vector<std::pair<Vec, int>>& raw) {
  std::vector<LabeledSample> out;
  out.reserve(raw.size());
  for (const auto& [x, i] : raw) out.push_back({x, i});
  return out;
}

}  // namespace

PYBIND11_MODULE(_rsdpsim, m) {
  m.doc() = "regime-switching diffusion simulation core";

  py::register_exception<Error>(m, "RsdpError");

  py::class_<Model>(m, "Model")
      .def_readonly("n", &Model::n)
      .def_readonly("N", &Model::N)
      .def_property_readonly("H", [](const Model& mm) { return mm.rates.H(); })
      .def_property_readonly("M", [](const Model& mm) { return mm.rates.M(); })
      .def_property_readonly("cq", [](const Model& mm) { return mm.rates.cq(); })
      .def("rate", [](const Model& mm, const Vec& x, int i, int j) {
        return mm.rates.eval(x, i, j);
      })
      .def("to_json", [](const Model& mm) { return model_to_json(mm); });

  m.def("model_from_json", &model_from_json, py::arg("text"),
        "Parse a model from a JSON document.");
  m.def("load_model_file", &load_model_file, py::arg("path"));

  m.def(
      "check",
      [](const Model& model) {
        const AssumptionReport rep = validate_model(model);
        py::list out;
        for (const auto& v : rep.verdicts) out.append(verdict_dict(v));
        return out;
      },
      py::arg("model"), "Assumption verdicts for a model.");

  m.def(
      "simulate",
      [](const Model& model, double T, double delta, const Vec& x0, int i0,
         uint64_t seed) {
        const PoissonDrive drive =
            sample_drive(T, model.M(), derive_seed(seed, "drive", 0));
        const BrownianPath bm =
            sample_brownian(model.n, delta, T, derive_seed(seed, "brownian", 0));
        const SamplePath path = em_path(model, delta, drive, bm, x0, i0);
        const long K = path.nodes();
        Eigen::MatrixXd xs(K, model.n);
        std::vector<double> ts(K);
        std::vector<int> regimes(K);
        for (long k = 0; k < K; ++k) {
          ts[k] = path.time(k);
          for (int a = 0; a < model.n; ++a) xs(k, a) = path.xs[k * model.n + a];
          regimes[k] = path.regimes.at(path.time(k));
        }
        return py::make_tuple(ts, xs, regimes);
      },
      py::arg("model"), py::arg("T"), py::arg("delta"), py::arg("x0"),
      py::arg("i0") = 1, py::arg("seed") = 0,
      "One Euler path; returns (times, states, regimes).");

  m.def(
      "strong_error",
      [](const Model& model, const std::vector<double>& deltas, double delta_ref,
         double T, const Vec& x0, int i0, int paths, uint64_t seed) {
        const ErrorReport rep =
            strong_error(model, deltas, delta_ref, T, x0, i0, paths, seed);
        py::list rows;
        for (const auto& r : rep.rows) {
          py::dict d;
          d["delta"] = r.delta;
          d["error_mean"] = r.err_mean;
          d["error_se"] = r.err_se;
          d["mismatch_mean"] = r.mismatch_mean;
          d["l1_mean"] = r.l1_mean;
          d["paths"] = r.paths;
          rows.append(d);
        }
        py::dict out;
        out["rows"] = rows;
        out["slope"] = rep.slope ? py::object(py::float_(*rep.slope))
                                 : py::object(py::none());
        return out;
      },
      py::arg("model"), py::arg("deltas"), py::arg("delta_ref"), py::arg("T"),
      py::arg("x0"), py::arg("i0") = 1, py::arg("paths") = 100,
      py::arg("seed") = 0);

  m.def(
      "eta_bar",
      [](const Mat& Q, const Vec& lambda) {
        return eta_bar(Q, lambda, side_for(lambda));
      },
      py::arg("Q"), py::arg("lam"),
      "Spectral decay rate of the weighted functional for a chain generator.");

  m.def(
      "dominating_generator",
      [](const Model& model, bool above) {
        const DominatingChain chain = build_dominating(
            model, above ? DominationSide::Above : DominationSide::Below);
        py::dict out;
        out["Q"] = chain.Q;
        out["conditions_hold"] = chain.conditions_hold;
        out["detail"] = chain.condition_detail;
        out["witness"] = chain.witness;
        return out;
      },
      py::arg("model"), py::arg("above") = true);

  m.def(
      "coupling_time_bound",
      [](double C2, double C3, double beta, double p, double r) {
        CouplingBoundParams params;
        params.C2 = C2;
        params.C3 = C3;
        params.beta = beta;
        params.p = p;
        return coupling_time_bound(params, r);
      },
      py::arg("C2"), py::arg("C3"), py::arg("beta"), py::arg("p"), py::arg("r"),
      "Quadrature bound on the expected fixed-environment meeting time.");

  m.def(
      "meeting_times",
      [](const Model& model, const Vec& x, int i, const Vec& y, int j,
         double delta, double Tmax, int designated, uint64_t seed) {
        CouplingOptions opt;
        opt.delta = delta;
        opt.Tmax = Tmax;
        opt.designated_state = designated;
        const CouplingResult res = simulate_coupling(model, x, i, y, j, opt, seed);
        py::dict out;
        out["tau"] = res.times.tau;
        out["tau_censored"] = res.times.tau_censored;
        out["T"] = res.times.T;
        out["T_censored"] = res.times.T_censored;
        out["glued"] = res.glued;
        return out;
      },
      py::arg("model"), py::arg("x"), py::arg("i"), py::arg("y"), py::arg("j"),
      py::arg("delta") = 1.0 / 512, py::arg("Tmax") = 50.0,
      py::arg("designated") = 1, py::arg("seed") = 0);

  m.def(
      "wasserstein",
      [](const std::vector<std::pair<Vec, int>>& mu,
         const std::vector<std::pair<Vec, int>>& nu, uint64_t seed) {
        return wasserstein_rho(to_samples(mu), to_samples(nu), seed);
      },
      py::arg("mu"), py::arg("nu"), py::arg("seed") = 0,
      "Exact transport distance between labeled samples under "
      "1_{i != j} + |x - y|.");

  m.attr("__version__") = kLibraryVersion;
}
