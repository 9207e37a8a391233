#include "lmcpf/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>
#include <utility>

#include "lmcpf/rng.hpp"

namespace lmcpf {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <class F>
void run_parallel(int count, int threads, F&& f) {
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (int k = 0; k < count; ++k) f(k);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      try {
        for (int k; (k = next.fetch_add(1)) < count;) f(k);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

double crps_mean_over_variables(const Ensemble& ens, const Vector& truth) {
  detail::KahanSum acc;
  for (int g = 0; g < ens.dim(); ++g)
    acc.add(crps(ens.members.row(g).transpose(), truth(g)));
  return acc.value() / ens.dim();
}

void aggregate_point_diagnostics(CycleRecord& rec,
                                 const std::vector<LocalAnalysis>& locals,
                                 const std::vector<double>& pts) {
  rec.points.reserve(locals.size());
  detail::KahanSum dc, dmin, rho, sigma;
  int n_with_obs = 0, n_with_rho = 0;
  std::vector<double> shifts;
  for (std::size_t k = 0; k < locals.size(); ++k) {
    const LocalAnalysis& la = locals[k];
    PointDiag pd;
    pd.point = static_cast<int>(k);
    pd.grid_pos = pts[k];
    pd.n_local_obs = la.n_local_obs;
    pd.rank = la.rank;
    pd.d_c = la.d_c;
    pd.d_min = la.d_min;
    pd.shift_norm = la.shift_norm;
    pd.rho = la.rho;
    pd.sigma = la.sigma;
    rec.points.push_back(pd);
    if (la.n_local_obs > 0) {
      ++n_with_obs;
      dc.add(la.d_c);
      dmin.add(la.d_min);
      sigma.add(la.sigma);
      shifts.push_back(la.shift_norm);
      if (std::isfinite(la.rho)) {
        rho.add(la.rho);
        ++n_with_rho;
      }
    }
  }
  if (n_with_obs > 0) {
    rec.diag.d_c_mean = dc.value() / n_with_obs;
    rec.diag.d_min_mean = dmin.value() / n_with_obs;
    rec.diag.sigma_mean = sigma.value() / n_with_obs;
    rec.diag.shift_median = median(shifts);
    rec.diag.rho_mean = n_with_rho > 0 ? rho.value() / n_with_rho : kNaN;
  } else {
    rec.diag.d_c_mean = kNaN;
    rec.diag.d_min_mean = kNaN;
    rec.diag.sigma_mean = kNaN;
    rec.diag.shift_median = kNaN;
    rec.diag.rho_mean = kNaN;
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  model.validate();
  filter.validate();
  if (ensemble_size < 2) throw ConfigError("ensemble: size must be >= 2");
  if (init_spread < 0.0)
    throw ConfigError("ensemble: init_spread must be non-negative");
  if (cycles < 1) throw ConfigError("cycles must be >= 1");
  if (spinup_cycles < 0 || spinup_cycles >= cycles)
    throw ConfigError("spinup_cycles must lie in [0, cycles)");
  if (analysis_stride < 1)
    throw ConfigError("analysis_stride must be >= 1");
  if (obs.stride < 0)
    throw ConfigError("observations: stride must be >= 0");
  if (!(obs.err_var > 0.0))
    throw ConfigError("observations: err_var must be positive");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  for (int lead : forecast_leads)
    if (lead < 0) throw ConfigError("forecast leads must be non-negative");
}

Vector burn_in_truth(const ModelSpec& model) {
  Vector x;
  if (model.kind == ModelKind::Lorenz63) {
    x.resize(3);
    x << 1.0, 1.0, 25.0;
  } else {
    x = Vector::Constant(model.dim(), model.l96.forcing);
    x(0) += 0.01;  // break the symmetric fixed point
  }
  return advance(model, std::move(x), 1000);
}

Ensemble initial_ensemble(const ExperimentConfig& cfg, const Vector& truth) {
  const int n = cfg.model.dim();
  const int L = cfg.ensemble_size;
  if (truth.size() != n)
    throw DimensionMismatch("initial_ensemble: truth has wrong dimension");
  auto rng = make_stream(cfg.seed, 0, 0, Draw::EnsembleInit);
  Ensemble ens;
  if (cfg.init == EnsembleInit::PerturbedTruth) {
    ens.members = (cfg.init_spread * normal_matrix(n, L, rng)).colwise() + truth;
  } else {
    // Every member is the same displaced copy of the truth: zero spread, but
    // still a nonzero initial error for the filter to work against.
    Vector member = truth + cfg.init_spread * normal_vector(n, rng);
    ens.members = member.replicate(1, L);
  }
  return ens;
}

ObservationBatch obs_template(const ObsNetworkSpec& obs,
                              const ModelSpec& model) {
  ObservationBatch b;
  b.values.resize(0);
  b.err_var.resize(0);
  if (obs.stride <= 0) return b;
  const int n = model.dim();
  const bool cyclic = model.cyclic();
  std::vector<double> locs;
  for (int g = 0; g < n; g += obs.stride) {
    const double loc = g + obs.offset;
    if (!cyclic && (loc < 0.0 || loc > n - 1)) continue;
    locs.push_back(loc);
  }
  const int m = static_cast<int>(locs.size());
  b.locations = std::move(locs);
  b.values = Vector::Zero(m);
  b.err_var = Vector::Constant(m, obs.err_var);
  return b;
}

std::vector<double> analysis_points(const ExperimentConfig& cfg) {
  std::vector<double> pts;
  for (int g = 0; g < cfg.model.dim(); g += cfg.analysis_stride)
    pts.push_back(static_cast<double>(g));
  return pts;
}

ExperimentResult run_cycle_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const Geometry geom{cfg.model.dim(), cfg.model.cyclic()};
  const int n = geom.n;
  const int L = cfg.ensemble_size;

  Vector truth = burn_in_truth(cfg.model);
  Ensemble ens = initial_ensemble(cfg, truth);
  const ObservationBatch tpl = obs_template(cfg.obs, cfg.model);
  const std::vector<double> pts = analysis_points(cfg);
  const int npts = static_cast<int>(pts.size());

  std::vector<std::optional<double>> rho_prev(npts);
  const double rescue_amp =
      cfg.filter.rescue_amplitude * std::sqrt(cfg.obs.err_var);
  const bool particle_filter = cfg.filter.kind != FilterKind::LETKF;

  ExperimentResult result;
  result.config = cfg;
  result.records.reserve(cfg.cycles);

  for (int cycle = 1; cycle <= cfg.cycles; ++cycle) {
    truth = advance(cfg.model, truth, cfg.model.steps_per_cycle);
    ens = propagate(cfg.model, ens);

    CycleRecord rec;
    rec.cycle = cycle;
    rec.diag.d_c_mean = kNaN;
    rec.diag.d_min_mean = kNaN;
    rec.diag.shift_median = kNaN;
    rec.diag.rho_mean = kNaN;
    rec.diag.sigma_mean = kNaN;

    ObservationBatch batch;
    int n_kept = 0;
    if (tpl.size() > 0) {
      auto obs_rng = make_stream(cfg.seed, cycle, 0, Draw::ObsNoise);
      ObservationBatch full =
          generate_twin_obs(truth, tpl, geom.cyclic, obs_rng);
      rec.diag.n_obs = full.size();

      if (cfg.filter.qc_enabled) {
        ObsSpaceEnsemble fg = map_to_obs_space(full, ens, geom.cyclic);
        Vector sd =
            (fg.anomalies().rowwise().squaredNorm() / (L - 1)).cwiseSqrt();
        batch = qc_filter(full, fg.mean, sd, cfg.filter.qc_k).kept;
      } else {
        batch = full;
      }
      n_kept = batch.size();
      rec.diag.n_obs_kept = n_kept;
    }

    if (n_kept > 0) {
      const ObsSpaceEnsemble obs_ens = map_to_obs_space(batch, ens, geom.cyclic);

      Matrix shared;
      const Matrix* shared_ptr = nullptr;
      if (particle_filter && cfg.filter.shared_noise) {
        auto noise_rng = make_stream(cfg.seed, cycle, 0, Draw::SharedNoise);
        shared = normal_matrix(L, L, noise_rng);
        shared_ptr = &shared;
      }

      std::vector<LocalAnalysis> locals(npts);
      run_parallel(npts, cfg.threads, [&](int k) {
        AnalysisContext ctx;
        ctx.seed = cfg.seed;
        ctx.cycle = cycle;
        ctx.point_index = k;
        ctx.shared_noise = shared_ptr;
        ctx.rho_prev = rho_prev[k];
        locals[k] = analyze_point(ens, obs_ens, batch, cfg.filter, geom,
                                  pts[k], ctx);
      });
      for (int k = 0; k < npts; ++k)
        rho_prev[k] = std::isfinite(locals[k].rho)
                          ? std::optional<double>(locals[k].rho)
                          : std::nullopt;

      Ensemble analysis =
          assemble_global(ens, locals, cfg.analysis_stride, geom);

      // Collapse guard: a variable whose analysis spread has fallen below
      // the floor receives an additive jitter so the ensemble can re-open.
      // Never triggers in healthy cycling; see the unit tests.
      if (cfg.filter.rescue_floor > 0.0) {
        Matrix x = perturbations(analysis);
        for (int g = 0; g < n; ++g) {
          const double sd = std::sqrt(x.row(g).squaredNorm() / (L - 1));
          if (sd < cfg.filter.rescue_floor) {
            auto rescue_rng = make_stream(cfg.seed, cycle, g, Draw::Rescue);
            analysis.members.row(g) +=
                rescue_amp * normal_vector(L, rescue_rng).transpose();
          }
        }
      }

      if (cycle == cfg.cycles) {
        for (int k = 0; k < npts && !result.instance; ++k) {
          auto q = local_ens_space(obs_ens, batch, cfg.filter, geom, pts[k],
                                   cfg.filter.gamma(L));
          if (q && q->rankA > 0) {
            SavedInstance inst;
            inst.A = q->A;
            inst.C = q->C;
            inst.gamma = q->gamma;
            inst.cycle = cycle;
            inst.point = k;
            result.instance = inst;
          }
        }
        if (cfg.dump_matrices) {
          result.final_transforms.reserve(npts);
          for (const LocalAnalysis& la : locals)
            result.final_transforms.push_back(la.W);
        }
      }

      ens = analysis;
      aggregate_point_diagnostics(rec, locals, pts);
    }

    const ScoreStats sc = rmse_and_bias(ensemble_mean(ens), truth);
    rec.diag.rmse = sc.rmse;
    rec.diag.bias = sc.bias;
    rec.diag.crps = crps_mean_over_variables(ens, truth);
    rec.diag.spread = spread_stats(ens);
    rec.truth = truth;
    rec.analysis = ens;
    result.records.push_back(std::move(rec));
  }
  return result;
}

ExperimentSummary summarize(const std::vector<CycleRecord>& records,
                            int spinup_cycles) {
  detail::KahanSum rmse, bias, crps_acc, spread;
  ExperimentSummary s;
  s.min_spread = std::numeric_limits<double>::infinity();
  for (const CycleRecord& rec : records) {
    if (rec.cycle <= spinup_cycles) continue;
    rmse.add(rec.diag.rmse);
    bias.add(rec.diag.bias);
    crps_acc.add(rec.diag.crps);
    spread.add(rec.diag.spread.mean);
    s.min_spread = std::min(s.min_spread, rec.diag.spread.mean);
    ++s.scored_cycles;
  }
  if (s.scored_cycles == 0)
    throw Error("summarize: no cycles beyond the spin-up window");
  s.rmse = rmse.value() / s.scored_cycles;
  s.bias = bias.value() / s.scored_cycles;
  s.crps = crps_acc.value() / s.scored_cycles;
  s.spread = spread.value() / s.scored_cycles;
  return s;
}

std::vector<ForecastRow> run_forecasts(const ExperimentConfig& cfg,
                                       const ExperimentResult& result) {
  std::vector<int> leads = cfg.forecast_leads;
  std::sort(leads.begin(), leads.end());
  leads.erase(std::unique(leads.begin(), leads.end()), leads.end());

  const int last = result.records.empty() ? 0 : result.records.back().cycle;
  std::vector<ForecastRow> rows;
  for (int lead : leads) {
    ForecastRow row;
    row.lead = lead;
    detail::KahanSum rmse, bias, crps_acc;
    for (const CycleRecord& rec : result.records) {
      if (rec.cycle <= cfg.spinup_cycles || rec.cycle + lead > last) continue;
      Ensemble fc = rec.analysis;
      for (int s = 0; s < lead; ++s) fc = propagate(cfg.model, fc);
      const Vector& verif = result.records[rec.cycle + lead - 1].truth;
      const ScoreStats sc = rmse_and_bias(ensemble_mean(fc), verif);
      rmse.add(sc.rmse);
      bias.add(sc.bias);
      crps_acc.add(crps_mean_over_variables(fc, verif));
      ++row.launches;
    }
    if (row.launches > 0) {
      row.rmse = rmse.value() / row.launches;
      row.bias = bias.value() / row.launches;
      row.crps = crps_acc.value() / row.launches;
      rows.push_back(row);
    }
  }
  return rows;
}

std::vector<WeightsCurveRow> compare_weights_curve(
    const SavedInstance& instance, const std::vector<double>& kappas) {
  const int L = static_cast<int>(instance.A.rows());
  if (instance.A.cols() != L || instance.C.size() != L)
    throw DimensionMismatch("weights curve: instance shapes disagree");

  EnsembleSpaceQuantities q;
  q.A = instance.A;
  q.C = instance.C;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(q.A);
  if (eig.info() != Eigen::Success)
    throw Error("weights curve: eigendecomposition failed");
  q.eigvec = eig.eigenvectors();
  q.eigval = eig.eigenvalues().cwiseMax(0.0);
  const double lmax = q.eigval.maxCoeff();
  q.rankA = static_cast<int>((q.eigval.array() > 1e-10 * lmax).count());

  const Vector approx = pf_weights_approx(q) / L;
  std::vector<WeightsCurveRow> rows;
  rows.reserve(kappas.size());
  for (double kappa : kappas) {
    if (kappa < 0.0) throw ConfigError("weights curve: kappa must be >= 0");
    q.gamma = kappa / (L - 1);
    WeightsCurveRow row;
    row.kappa = kappa;
    row.exact = pf_weights_exact(q) / L;
    row.approx = approx;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace lmcpf
