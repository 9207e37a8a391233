#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmcpf/io.hpp"
#include "lmcpf/version.hpp"

namespace {

using namespace lmcpf;

FilterKind parse_filter_flag(const std::string& s) {
  if (s == "letkf") return FilterKind::LETKF;
  if (s == "lapf") return FilterKind::LAPF;
  return FilterKind::LMCPF;
}

ExperimentConfig load_with_overrides(const std::string& config_path,
                                     const std::optional<std::uint64_t>& seed,
                                     const std::string& out,
                                     const std::string& filter) {
  ExperimentConfig cfg = load_config(config_path);
  if (seed) cfg.seed = *seed;
  if (!out.empty()) cfg.output_dir = out;
  if (!filter.empty()) cfg.filter.kind = parse_filter_flag(filter);
  cfg.validate();
  return cfg;
}

void print_summary(const ExperimentConfig& cfg,
                   const ExperimentSummary& summary) {
  std::cout << "cycles=" << cfg.cycles << " scored=" << summary.scored_cycles
            << " rmse=" << format_double(summary.rmse)
            << " bias=" << format_double(summary.bias)
            << " crps=" << format_double(summary.crps)
            << " spread=" << format_double(summary.spread)
            << " min_spread=" << format_double(summary.min_spread) << "\n";
}

int run_cycle(const std::string& config_path,
              const std::optional<std::uint64_t>& seed, const std::string& out,
              const std::string& filter) {
  ExperimentConfig cfg = load_with_overrides(config_path, seed, out, filter);
  ExperimentSummary summary = run_and_write(cfg);
  print_summary(cfg, summary);
  std::cout << "wrote " << cfg.output_dir << "/cycle_scores.csv\n";
  return 0;
}

int run_forecast(const std::string& config_path,
                 const std::optional<std::uint64_t>& seed,
                 const std::string& out, const std::string& filter) {
  ExperimentConfig cfg = load_with_overrides(config_path, seed, out, filter);
  if (cfg.forecast_leads.empty()) cfg.forecast_leads = {1, 2, 4, 8};
  ExperimentResult result = run_cycle_experiment(cfg);
  std::vector<ForecastRow> rows = run_forecasts(cfg, result);
  ensure_output_dir(cfg.output_dir);
  const std::string path = cfg.output_dir + "/forecast_scores.csv";
  write_forecast_scores(rows, path);
  for (const ForecastRow& r : rows) {
    std::cout << "lead=" << r.lead << " launches=" << r.launches
              << " rmse=" << format_double(r.rmse)
              << " crps=" << format_double(r.crps) << "\n";
  }
  std::cout << "wrote " << path << "\n";
  return 0;
}

int run_weights(const std::string& instance_path, const std::string& out,
                double kappa_max, int kappa_steps) {
  if (kappa_steps < 2) throw ConfigError("weights: need at least 2 steps");
  if (!(kappa_max > 0.0)) throw ConfigError("weights: kappa-max must be > 0");
  SavedInstance inst = read_instance(instance_path);
  std::vector<double> kappas;
  kappas.reserve(kappa_steps);
  for (int i = 0; i < kappa_steps; ++i)
    kappas.push_back(kappa_max * i / (kappa_steps - 1));
  std::vector<WeightsCurveRow> rows = compare_weights_curve(inst, kappas);
  ensure_output_dir(out);
  const std::string path = out + "/weights_curve.csv";
  write_weights_curve(rows, path);
  std::cout << "instance cycle=" << inst.cycle << " point=" << inst.point
            << " members=" << inst.C.size() << "\n";
  std::cout << "wrote " << path << "\n";
  return 0;
}

int run_simhist(double eta, double nu, int dim, int draws, std::uint64_t seed,
                double bin_width, const std::string& out) {
  DecayModel model{eta, nu};
  NormSimResult res = simulate_norm_histogram(model, dim, draws, seed, bin_width);
  ensure_output_dir(out);
  const std::string path = out + "/simhist.csv";
  write_histogram(res.hist, path);
  std::cout << "draws=" << draws << " mean_norm=" << format_double(res.mean_norm)
            << "\n";
  std::cout << "wrote " << path << "\n";
  return 0;
}

int run_diag(const std::string& config_path,
             const std::optional<std::uint64_t>& seed, std::string state_path,
             std::string out, const std::string& filter) {
  ExperimentConfig cfg = load_with_overrides(config_path, seed, "", filter);
  if (state_path.empty()) state_path = cfg.output_dir + "/final_state.csv";
  if (out.empty()) out = cfg.output_dir;
  FinalState fs = read_final_state(state_path);
  const Geometry geom{cfg.model.dim(), cfg.model.cyclic()};
  if (fs.ensemble.dim() != geom.n)
    throw DimensionMismatch("diag: state dimension disagrees with the model");
  const int L = fs.ensemble.size();

  // Rebuild the observation batch of the dumped cycle from the same streams
  // the experiment used, then recompute the pointwise departures.
  ObservationBatch tpl = obs_template(cfg.obs, cfg.model);
  ObservationBatch batch;
  int n_obs = 0;
  if (tpl.size() > 0) {
    auto rng = make_stream(cfg.seed, fs.cycle, 0, Draw::ObsNoise);
    ObservationBatch full = generate_twin_obs(fs.truth, tpl, geom.cyclic, rng);
    n_obs = full.size();
    if (cfg.filter.qc_enabled) {
      ObsSpaceEnsemble fg = map_to_obs_space(full, fs.ensemble, geom.cyclic);
      Vector sd = (fg.anomalies().rowwise().squaredNorm() / (L - 1)).cwiseSqrt();
      batch = qc_filter(full, fg.mean, sd, cfg.filter.qc_k).kept;
    } else {
      batch = full;
    }
  }

  ensure_output_dir(out);
  {
    std::ofstream pts_out(out + "/diag_points.csv", std::ios::binary);
    pts_out << "point,grid_pos,n_local_obs,rank,d_c,d_min,rho,sigma\n";
    if (batch.size() > 0) {
      ObsSpaceEnsemble obs_ens = map_to_obs_space(batch, fs.ensemble, geom.cyclic);
      const std::vector<double> pts = analysis_points(cfg);
      for (std::size_t k = 0; k < pts.size(); ++k) {
        auto q = local_ens_space(obs_ens, batch, cfg.filter, geom, pts[k],
                                 cfg.filter.gamma(L));
        double d_c = 0.0, d_min = 0.0, rho = std::nan(""), sig = 0.0;
        int nloc = 0, rank = 0;
        if (q) {
          d_c = a_norm(q->C, *q);
          Vector dep(q->C.size());
          for (int l = 0; l < dep.size(); ++l) {
            Vector v = q->C - Vector::Unit(q->C.size(), l);
            dep(l) = a_norm(v, *q);
          }
          d_min = dep.minCoeff();
          rank = q->rankA;
          // Raw (unsmoothed) spread diagnostic of this single state.
          Vector taper = localization_weights(cfg.filter.localization, pts[k],
                                              batch, geom.domain_length());
          Vector innov(batch.size()), errv(batch.size());
          double hbht = 0.0;
          int m = 0;
          for (int i = 0; i < batch.size(); ++i) {
            if (taper(i) <= 0.0) continue;
            innov(m) = batch.values(i) - obs_ens.mean(i);
            errv(m) = batch.err_var(i);
            hbht += (obs_ens.values.row(i).array() - obs_ens.mean(i))
                        .matrix()
                        .squaredNorm() /
                    (L - 1);
            ++m;
          }
          nloc = m;
          rho = rho_spread(innov.head(m), errv.head(m), hbht);
          sig = sigma_of_rho(rho, cfg.filter);
        }
        pts_out << k << ',' << format_double(pts[k]) << ',' << nloc << ','
                << rank << ',' << format_double(d_c) << ','
                << format_double(d_min) << ',' << format_double(rho) << ','
                << format_double(sig) << '\n';
      }
    }
  }
  {
    ScoreStats sc = rmse_and_bias(ensemble_mean(fs.ensemble), fs.truth);
    detail::KahanSum crps_acc;
    for (int g = 0; g < geom.n; ++g)
      crps_acc.add(crps(fs.ensemble.members.row(g).transpose(), fs.truth(g)));
    SpreadStats sp = spread_stats(fs.ensemble);
    std::ofstream sc_out(out + "/diag_scores.csv", std::ios::binary);
    sc_out << "cycle,rmse,bias,crps,spread_mean,spread_min,spread_max,"
              "n_obs,n_obs_kept\n";
    sc_out << fs.cycle << ',' << format_double(sc.rmse) << ','
           << format_double(sc.bias) << ','
           << format_double(crps_acc.value() / geom.n) << ','
           << format_double(sp.mean) << ',' << format_double(sp.min) << ','
           << format_double(sp.max) << ',' << n_obs << ',' << batch.size()
           << '\n';
  }
  std::cout << "wrote " << out << "/diag_points.csv and " << out
            << "/diag_scores.csv\n";
  return 0;
}

void print_error_line(const std::string& code, const std::string& message) {
  nlohmann::json j = {{"error", code}, {"message", message}};
  std::cerr << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Localized particle and ensemble Kalman filtering twin "
               "experiments on Lorenz models"};
  app.set_version_flag("--version", std::string(lmcpf::kVersion));
  app.require_subcommand(1);

  std::string config_path, out_dir, filter_name, state_path, instance_path;
  std::optional<std::uint64_t> seed;
  double kappa_max = 5.0, eta = 4.0, nu = 1.0, bin_width = 0.0;
  int kappa_steps = 51, dim = 40, draws = 100000;
  std::uint64_t sim_seed = 1;

  auto add_run_options = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON experiment configuration")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "override the experiment seed");
    cmd->add_option("--out", out_dir, "override the output directory");
    cmd->add_option("--filter", filter_name, "override the filter kind")
        ->check(CLI::IsMember({"letkf", "lapf", "lmcpf"}));
  };

  CLI::App* cycle = app.add_subcommand("cycle", "run a cycled twin experiment");
  add_run_options(cycle);

  CLI::App* forecast = app.add_subcommand(
      "forecast", "rerun the experiment and score forecasts per lead time");
  add_run_options(forecast);

  CLI::App* weights = app.add_subcommand(
      "weights", "sweep kappa over a saved analysis instance and compare "
                 "exact and approximate particle weights");
  weights->add_option("--instance", instance_path, "instance JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  weights->add_option("--out", out_dir, "output directory")->required();
  weights->add_option("--kappa-max", kappa_max, "largest kappa in the sweep");
  weights->add_option("--kappa-steps", kappa_steps, "grid points in [0,max]");

  CLI::App* simhist = app.add_subcommand(
      "simhist", "simulate departure-norm statistics for a power-law "
                 "eigenvalue decay");
  simhist->add_option("--eta", eta, "decay amplitude");
  simhist->add_option("--nu", nu, "decay exponent");
  simhist->add_option("--dim", dim, "space dimension");
  simhist->add_option("--draws", draws, "Monte Carlo sample count");
  simhist->add_option("--seed", sim_seed, "random seed");
  simhist->add_option("--bin-width", bin_width,
                      "histogram bin width (0 = automatic)");
  simhist->add_option("--out", out_dir, "output directory")->required();

  CLI::App* diag = app.add_subcommand(
      "diag", "recompute diagnostics from a dumped final state");
  add_run_options(diag);
  diag->add_option("--state", state_path,
                   "state CSV (default <output_dir>/final_state.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code != 0) print_error_line("UsageError", e.what());
    return code;
  }

  try {
    if (cycle->parsed())
      return run_cycle(config_path, seed, out_dir, filter_name);
    if (forecast->parsed())
      return run_forecast(config_path, seed, out_dir, filter_name);
    if (weights->parsed())
      return run_weights(instance_path, out_dir, kappa_max, kappa_steps);
    if (simhist->parsed())
      return run_simhist(eta, nu, dim, draws, sim_seed, bin_width, out_dir);
    if (diag->parsed())
      return run_diag(config_path, seed, state_path, out_dir, filter_name);
  } catch (const lmcpf::Error& e) {
    print_error_line(e.code(), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error_line("Error", e.what());
    return 1;
  }
  return 0;
}
