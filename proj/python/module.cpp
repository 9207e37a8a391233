#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lmcpf/diagnostics.hpp"
#include "lmcpf/experiment.hpp"
#include "lmcpf/filters.hpp"
#include "lmcpf/io.hpp"
#include "lmcpf/models.hpp"
#include "lmcpf/observations.hpp"
#include "lmcpf/rng.hpp"
#include "lmcpf/version.hpp"

namespace py = pybind11;
using namespace lmcpf;

namespace {

Ensemble as_ensemble(const Matrix& members) {
  Ensemble e;
  e.members = members;
  return e;
}

py::dict summary_to_dict(const ExperimentSummary& s) {
  py::dict d;
  d["scored_cycles"] = s.scored_cycles;
  d["rmse"] = s.rmse;
  d["bias"] = s.bias;
  d["crps"] = s.crps;
  d["spread"] = s.spread;
  d["min_spread"] = s.min_spread;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Localized particle and ensemble Kalman filtering core";
  m.attr("__version__") = kVersion;

  py::register_exception<Error>(m, "LmcpfError");

  py::enum_<ModelKind>(m, "ModelKind")
      .value("Lorenz63", ModelKind::Lorenz63)
      .value("Lorenz96", ModelKind::Lorenz96);

  py::class_<ModelSpec>(m, "ModelSpec")
      .def_static("lorenz63", &ModelSpec::lorenz63, py::arg("dt") = 0.01,
                  py::arg("steps_per_cycle") = 1)
      .def_static("lorenz96", &ModelSpec::lorenz96, py::arg("n") = 40,
                  py::arg("forcing") = 8.0, py::arg("dt") = 0.05,
                  py::arg("steps_per_cycle") = 1)
      .def_readwrite("dt", &ModelSpec::dt)
      .def_readwrite("steps_per_cycle", &ModelSpec::steps_per_cycle)
      .def_property_readonly("kind", [](const ModelSpec& s) { return s.kind; })
      .def_property_readonly("dim", &ModelSpec::dim)
      .def_property_readonly("cyclic", &ModelSpec::cyclic);

  m.def("tendency", &tendency, py::arg("model"), py::arg("x"));
  m.def("rk4_step", &rk4_step, py::arg("model"), py::arg("x"));
  m.def("advance", &advance, py::arg("model"), py::arg("x"), py::arg("steps"));
  m.def(
      "propagate",
      [](const ModelSpec& model, const Matrix& members) {
        return propagate(model, as_ensemble(members)).members;
      },
      py::arg("model"), py::arg("members"));

  m.def(
      "ensemble_mean",
      [](const Matrix& members) { return ensemble_mean(as_ensemble(members)); },
      py::arg("members"));
  m.def(
      "perturbations",
      [](const Matrix& members) { return perturbations(as_ensemble(members)); },
      py::arg("members"));

  py::class_<EnsembleSpaceQuantities>(m, "EnsembleSpaceQuantities")
      .def_readonly("A", &EnsembleSpaceQuantities::A)
      .def_readonly("C", &EnsembleSpaceQuantities::C)
      .def_readonly("gamma", &EnsembleSpaceQuantities::gamma)
      .def_readonly("rank", &EnsembleSpaceQuantities::rankA);

  m.def("build_ens_space", &build_ens_space, py::arg("obs_anomalies"),
        py::arg("rinv_weights"), py::arg("innovation"), py::arg("gamma"));
  m.def("a_norm", &a_norm, py::arg("beta"), py::arg("q"));
  m.def("sym_sqrt", &sym_sqrt, py::arg("m"));
  m.def("sym_inv_sqrt", &sym_inv_sqrt, py::arg("m"));

  py::class_<ObservationBatch>(m, "ObservationBatch")
      .def(py::init([](const Vector& values, const Vector& err_var,
                       const std::vector<double>& locations) {
             ObservationBatch b;
             b.values = values;
             b.err_var = err_var;
             b.locations = locations;
             return b;
           }),
           py::arg("values"), py::arg("err_var"), py::arg("locations"))
      .def_readwrite("values", &ObservationBatch::values)
      .def_readwrite("err_var", &ObservationBatch::err_var)
      .def_readwrite("locations", &ObservationBatch::locations)
      .def_property_readonly("size", &ObservationBatch::size);

  m.def("apply_obs_operator", &apply_obs_operator, py::arg("batch"),
        py::arg("state"), py::arg("cyclic"));
  m.def(
      "generate_twin_obs",
      [](const Vector& truth, const ObservationBatch& tpl, bool cyclic,
         std::uint64_t seed, std::int64_t cycle) {
        auto rng = make_stream(seed, cycle, 0, Draw::ObsNoise);
        return generate_twin_obs(truth, tpl, cyclic, rng);
      },
      py::arg("truth"), py::arg("template"), py::arg("cyclic"),
      py::arg("seed"), py::arg("cycle") = 1);
  m.def(
      "qc_filter",
      [](const ObservationBatch& batch, const Vector& fg_mean,
         const Vector& fg_spread, double k) {
        QcResult r = qc_filter(batch, fg_mean, fg_spread, k);
        return py::make_tuple(r.kept, r.kept_indices, r.n_rejected);
      },
      py::arg("batch"), py::arg("fg_mean"), py::arg("fg_spread"),
      py::arg("k"));

  py::enum_<TaperKind>(m, "TaperKind")
      .value("GaspariCohn", TaperKind::GaspariCohn)
      .value("Boxcar", TaperKind::Boxcar)
      .value("NoTaper", TaperKind::None);

  py::class_<LocalizationSpec>(m, "LocalizationSpec")
      .def(py::init<>())
      .def_readwrite("kind", &LocalizationSpec::kind)
      .def_readwrite("radius", &LocalizationSpec::radius);

  m.def("gaspari_cohn", &gaspari_cohn, py::arg("ratio"));
  m.def("localization_weights", &localization_weights, py::arg("loc"),
        py::arg("analysis_point"), py::arg("batch"), py::arg("domain_length"));

  py::enum_<FilterKind>(m, "FilterKind")
      .value("LETKF", FilterKind::LETKF)
      .value("LAPF", FilterKind::LAPF)
      .value("LMCPF", FilterKind::LMCPF);

  py::class_<FilterConfig>(m, "FilterConfig")
      .def(py::init<>())
      .def_readwrite("kind", &FilterConfig::kind)
      .def_readwrite("kappa", &FilterConfig::kappa)
      .def_readwrite("kappa_post", &FilterConfig::kappa_post)
      .def_readwrite("c0", &FilterConfig::c0)
      .def_readwrite("c1", &FilterConfig::c1)
      .def_readwrite("rho0", &FilterConfig::rho0)
      .def_readwrite("rho1", &FilterConfig::rho1)
      .def_readwrite("smoothing_alpha", &FilterConfig::smoothing_alpha)
      .def_readwrite("localization", &FilterConfig::localization)
      .def_readwrite("exact_weights", &FilterConfig::exact_weights)
      .def_readwrite("shared_noise", &FilterConfig::shared_noise)
      .def_readwrite("qc_enabled", &FilterConfig::qc_enabled)
      .def_readwrite("qc_k", &FilterConfig::qc_k)
      .def("gamma", &FilterConfig::gamma, py::arg("ensemble_size"));

  m.def("letkf_mean_weights", &letkf_mean_weights, py::arg("q"),
        py::arg("obs_anomalies"), py::arg("rinv_weights"),
        py::arg("innovation"));
  m.def("letkf_transform", &letkf_transform, py::arg("q"));
  m.def("pf_weights_approx", &pf_weights_approx, py::arg("q"));
  m.def("pf_weights_exact", &pf_weights_exact, py::arg("q"));
  m.def("resampling_matrix", &resampling_matrix, py::arg("weights"),
        py::arg("uniform_draws"));
  m.def("shift_matrix", &shift_matrix, py::arg("q"));
  m.def("posterior_cov_ens", &posterior_cov_ens, py::arg("q"));
  m.def("rho_spread", &rho_spread, py::arg("innovation"), py::arg("err_var"),
        py::arg("hbht_trace"));
  m.def("sigma_of_rho", &sigma_of_rho, py::arg("rho"), py::arg("cfg"));

  py::class_<Geometry>(m, "Geometry")
      .def(py::init([](int n, bool cyclic) {
             return Geometry{n, cyclic};
           }),
           py::arg("n"), py::arg("cyclic"))
      .def_readwrite("n", &Geometry::n)
      .def_readwrite("cyclic", &Geometry::cyclic);

  py::class_<LocalAnalysis>(m, "LocalAnalysis")
      .def_readonly("W", &LocalAnalysis::W)
      .def_readonly("weights", &LocalAnalysis::weights)
      .def_readonly("rho", &LocalAnalysis::rho)
      .def_readonly("sigma", &LocalAnalysis::sigma)
      .def_readonly("d_c", &LocalAnalysis::d_c)
      .def_readonly("d_min", &LocalAnalysis::d_min)
      .def_readonly("shift_norm", &LocalAnalysis::shift_norm)
      .def_readonly("n_local_obs", &LocalAnalysis::n_local_obs)
      .def_readonly("rank", &LocalAnalysis::rank);

  m.def(
      "analyze_point",
      [](const Matrix& members, const ObservationBatch& batch,
         const FilterConfig& cfg, const Geometry& geom, double point,
         std::uint64_t seed, std::int64_t cycle, int point_index) {
        Ensemble ens = as_ensemble(members);
        ObsSpaceEnsemble obs_ens = map_to_obs_space(batch, ens, geom.cyclic);
        AnalysisContext ctx;
        ctx.seed = seed;
        ctx.cycle = cycle;
        ctx.point_index = point_index;
        return analyze_point(ens, obs_ens, batch, cfg, geom, point, ctx);
      },
      py::arg("members"), py::arg("batch"), py::arg("cfg"), py::arg("geom"),
      py::arg("analysis_point"), py::arg("seed"), py::arg("cycle") = 1,
      py::arg("point_index") = 0);

  m.def(
      "assemble_global",
      [](const Matrix& members, const std::vector<LocalAnalysis>& locals,
         int stride, const Geometry& geom) {
        return assemble_global(as_ensemble(members), locals, stride, geom)
            .members;
      },
      py::arg("members"), py::arg("locals"), py::arg("stride"),
      py::arg("geom"));

  m.def(
      "crps",
      [](const Vector& ens, double obs) { return crps(ens, obs); },
      py::arg("ensemble_values"), py::arg("obs"));
  m.def(
      "rmse_and_bias",
      [](const Vector& values, const Vector& reference) {
        ScoreStats s = rmse_and_bias(values, reference);
        return py::make_tuple(s.rmse, s.bias);
      },
      py::arg("values"), py::arg("reference"));
  m.def("one_dim_shift_factor", &one_dim_shift_factor, py::arg("kappa"),
        py::arg("b"), py::arg("r"));
  m.def(
      "fit_decay_exponent",
      [](const Vector& sigmas) {
        DecayModel d = fit_decay_exponent(sigmas);
        return py::make_tuple(d.eta, d.nu);
      },
      py::arg("sigmas"));
  m.def(
      "decay_sigmas",
      [](double eta, double nu, int count) {
        return decay_sigmas(DecayModel{eta, nu}, count);
      },
      py::arg("eta"), py::arg("nu"), py::arg("count"));
  m.def(
      "simulate_norm_mean",
      [](double eta, double nu, int dim, int draws, std::uint64_t seed) {
        return simulate_norm_histogram(DecayModel{eta, nu}, dim, draws, seed)
            .mean_norm;
      },
      py::arg("eta"), py::arg("nu"), py::arg("dim"), py::arg("draws"),
      py::arg("seed"));

  m.def(
      "run_experiment",
      [](const std::string& config_json) {
        return summary_to_dict(run_and_write(parse_config_json(config_json)));
      },
      py::arg("config_json"),
      "Run a cycled twin experiment from a JSON string and write the "
      "standard output files");
  m.def(
      "run_experiment_file",
      [](const std::string& path) {
        return summary_to_dict(run_and_write(load_config(path)));
      },
      py::arg("config_path"));
}
