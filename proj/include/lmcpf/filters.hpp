#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "lmcpf/ensemble.hpp"
#include "lmcpf/observations.hpp"
#include "lmcpf/rng.hpp"
#include "lmcpf/types.hpp"

namespace lmcpf {

enum class FilterKind { LETKF, LAPF, LMCPF };

struct FilterConfig {
  FilterKind kind = FilterKind::LMCPF;

  // Particle uncertainty: each member carries covariance gamma * X X^T with
  // gamma = kappa / (L - 1). kappa_post additionally inflates the posterior
  // mixture covariance before its square root enters the transform.
  double kappa = 2.5;
  double kappa_post = 1.0;

  // Adaptive rejuvenation sigma(rho): constant c0 up to rho0, linear up to
  // (rho1, c1), constant c1 beyond.
  double c0 = 0.02;
  double c1 = 0.5;
  double rho0 = 1.0;
  double rho1 = 1.5;
  // Temporal smoothing of rho per analysis point:
  // rho_used = alpha * rho_prev + (1 - alpha) * rho_raw.
  double smoothing_alpha = 0.7;

  LocalizationSpec localization;

  bool exact_weights = false;  // Gaussian-mixture weights instead of the
                               // large-kappa approximation
  bool shared_noise = true;    // one rejuvenation draw per cycle for all
                               // analysis points (else one per point)

  bool qc_enabled = true;
  double qc_k = 3.0;

  // Ensemble-collapse guard in the cycling driver: variables whose analysis
  // spread falls below the floor receive an additive jitter of the given
  // amplitude times the mean observation error standard deviation.
  double rescue_floor = 0.01;
  double rescue_amplitude = 0.5;

  double gamma(int ensemble_size) const {
    return (kind == FilterKind::LETKF ? 1.0 : kappa) / (ensemble_size - 1);
  }
  void validate() const;
};

struct Geometry {
  int n = 0;
  bool cyclic = true;

  double domain_length() const { return cyclic ? static_cast<double>(n) : -1.0; }
};

struct AnalysisContext {
  std::uint64_t seed = 0;
  std::int64_t cycle = 0;
  int point_index = 0;
  const Matrix* shared_noise = nullptr;     // L x L, used when
                                            // FilterConfig::shared_noise
  std::optional<double> rho_prev;           // smoothed rho from the previous
                                            // cycle at this point
};

// Product of one local analysis: the ensemble-space transform to apply at
// this point plus its diagnostics.
struct LocalAnalysis {
  Matrix W;          // L x L, analysis = mean + X * W columns
  Vector weights;    // particle weights (sum L); uniform for LETKF
  double rho = 0.0;  // smoothed spread diagnostic (NaN without observations)
  double sigma = 0.0;
  double d_c = 0.0;        // ||C||_A
  double d_min = 0.0;      // min_l ||C - e_l||_A
  double shift_norm = 0.0; // ||mean shift||_A
  int n_local_obs = 0;
  int rank = 0;
};

// ---- ensemble-space building blocks ----

// w = (I + gamma A)^{-1} Y^T diag(rinv) d; the Kalman mean update is then
// mean + gamma X w.
Vector letkf_mean_weights(const EnsembleSpaceQuantities& q,
                          const Matrix& obs_anomalies,
                          const Vector& rinv_weights,
                          const Vector& innovation);

// (I + gamma A)^{-1/2}, the deterministic square-root perturbation update.
Matrix letkf_transform(const EnsembleSpaceQuantities& q);

// Particle weights from the ensemble-space departures, normalized to sum L.
// approx: w_l ~ exp(-1/2 (C - e_l)^T A (C - e_l)), the large-kappa limit.
// exact:  w_l ~ exp(-1/2 (C - e_l)^T A(I + gamma A)^{-1} (C - e_l)), the
//         Gaussian-mixture marginal with per-particle covariance gamma X X^T.
Vector pf_weights_approx(const EnsembleSpaceQuantities& q);
Vector pf_weights_exact(const EnsembleSpaceQuantities& q);

// Stratified resampling: selection matrix with exactly one unit entry per
// column. Column l selects the particle whose cumulative weight interval
// contains l - 1 + uniform_draws(l); weights must sum to L.
Matrix resampling_matrix(const Vector& weights, const Vector& uniform_draws);

// Column l is the shift gamma (I + gamma A)^{-1} A (C - e_l) moving particle
// l toward the observations in ensemble space.
Matrix shift_matrix(const EnsembleSpaceQuantities& q);

// Posterior covariance of one mixture component in ensemble space:
// (gamma^{-1} I + A)^{-1} = gamma (I + gamma A)^{-1}.
Matrix posterior_cov_ens(const EnsembleSpaceQuantities& q);

// Spread diagnostic rho = (d^T d - tr(R)) / tr(H B H^T) over the local
// observations. Returns NaN for an empty innovation; results are clamped to
// [-1e6, 1e6] so the temporal smoothing cannot be poisoned by a collapsed
// ensemble (tr(H B H^T) -> 0).
double rho_spread(const Vector& innovation, const Vector& err_var,
                  double hbht_trace);

// Piecewise-linear rejuvenation amplitude; NaN maps to c0 (no observations).
double sigma_of_rho(double rho, const FilterConfig& cfg);

// ---- local analyses ----

LocalAnalysis letkf_analysis(const Ensemble& ens, const ObsSpaceEnsemble& obs_ens,
                             const ObservationBatch& batch,
                             const FilterConfig& cfg, const Geometry& geom,
                             double analysis_point, const AnalysisContext& ctx);

LocalAnalysis lapf_analysis(const Ensemble& ens, const ObsSpaceEnsemble& obs_ens,
                            const ObservationBatch& batch,
                            const FilterConfig& cfg, const Geometry& geom,
                            double analysis_point, const AnalysisContext& ctx);

LocalAnalysis lmcpf_analysis(const Ensemble& ens, const ObsSpaceEnsemble& obs_ens,
                             const ObservationBatch& batch,
                             const FilterConfig& cfg, const Geometry& geom,
                             double analysis_point, const AnalysisContext& ctx);

LocalAnalysis analyze_point(const Ensemble& ens, const ObsSpaceEnsemble& obs_ens,
                            const ObservationBatch& batch,
                            const FilterConfig& cfg, const Geometry& geom,
                            double analysis_point, const AnalysisContext& ctx);

// Applies the local transforms to the global ensemble. Analysis point k sits
// at grid index k * stride; W is interpolated entrywise between the two
// nearest points (cyclically on a ring, clamped at the ends otherwise).
Ensemble assemble_global(const Ensemble& background,
                         const std::vector<LocalAnalysis>& locals, int stride,
                         const Geometry& geom);

// Localized ensemble-space problem at one analysis point, or nullopt when no
// observation has positive localization weight there.
std::optional<EnsembleSpaceQuantities> local_ens_space(
    const ObsSpaceEnsemble& obs_ens, const ObservationBatch& batch,
    const FilterConfig& cfg, const Geometry& geom, double analysis_point,
    double gamma);

}  // namespace lmcpf
