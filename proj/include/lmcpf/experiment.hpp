#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lmcpf/diagnostics.hpp"
#include "lmcpf/filters.hpp"
#include "lmcpf/models.hpp"
#include "lmcpf/observations.hpp"

namespace lmcpf {

enum class EnsembleInit { PerturbedTruth, IdenticalCopies };

// Regular observation network: every stride-th grid index, optionally moved
// off-grid by a fractional offset. stride 0 disables observations entirely
// (free run).
struct ObsNetworkSpec {
  int stride = 1;
  double offset = 0.0;
  double err_var = 1.0;
};

struct ExperimentConfig {
  ModelSpec model;
  ObsNetworkSpec obs;
  FilterConfig filter;
  int ensemble_size = 40;
  EnsembleInit init = EnsembleInit::PerturbedTruth;
  double init_spread = 1.0;
  int cycles = 100;
  int spinup_cycles = 0;  // excluded from time-mean scores
  int analysis_stride = 1;
  std::vector<int> forecast_leads;
  int threads = 1;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  bool dump_matrices = false;

  void validate() const;
};

struct PointDiag {
  int point = 0;
  double grid_pos = 0.0;
  int n_local_obs = 0;
  int rank = 0;
  double d_c = 0.0;
  double d_min = 0.0;
  double shift_norm = 0.0;
  double rho = 0.0;
  double sigma = 0.0;
};

struct CycleDiagnostics {
  double rmse = 0.0;
  double bias = 0.0;
  double crps = 0.0;
  SpreadStats spread;
  // Means over analysis points that saw observations.
  double d_c_mean = 0.0;
  double d_min_mean = 0.0;
  double shift_median = 0.0;
  double rho_mean = 0.0;
  double sigma_mean = 0.0;
  int n_obs = 0;
  int n_obs_kept = 0;
};

struct CycleRecord {
  int cycle = 0;
  Vector truth;
  Ensemble analysis;
  CycleDiagnostics diag;
  std::vector<PointDiag> points;
};

// One localized analysis problem frozen for offline weight studies.
struct SavedInstance {
  Matrix A;
  Vector C;
  double gamma = 0.0;
  int cycle = 0;
  int point = 0;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<CycleRecord> records;
  std::optional<SavedInstance> instance;  // from the final cycle
  std::vector<Matrix> final_transforms;   // per point, only on dump_matrices
};

struct ExperimentSummary {
  int scored_cycles = 0;
  double rmse = 0.0;
  double bias = 0.0;
  double crps = 0.0;
  double spread = 0.0;
  double min_spread = 0.0;  // minimum over scored cycles of the mean spread
};

// Deterministic attractor state: fixed initial condition advanced through a
// long spin-up.
Vector burn_in_truth(const ModelSpec& model);

Ensemble initial_ensemble(const ExperimentConfig& cfg, const Vector& truth);

// Observation locations and error variances implied by the network spec;
// values are filled per cycle.
ObservationBatch obs_template(const ObsNetworkSpec& obs, const ModelSpec& model);

std::vector<double> analysis_points(const ExperimentConfig& cfg);

ExperimentResult run_cycle_experiment(const ExperimentConfig& cfg);

ExperimentSummary summarize(const std::vector<CycleRecord>& records,
                            int spinup_cycles);

struct ForecastRow {
  int lead = 0;
  int launches = 0;
  double rmse = 0.0;
  double bias = 0.0;
  double crps = 0.0;
};

// Relaunches forecasts from every post-spinup analysis and scores them
// against the stored truth; lead 0 reproduces the analysis scores.
std::vector<ForecastRow> run_forecasts(const ExperimentConfig& cfg,
                                       const ExperimentResult& result);

struct WeightsCurveRow {
  double kappa = 0.0;
  Vector exact;   // normalized to sum 1
  Vector approx;  // kappa-independent, repeated per row for convenience
};

std::vector<WeightsCurveRow> compare_weights_curve(
    const SavedInstance& instance, const std::vector<double>& kappas);

}  // namespace lmcpf
