#include "lmcpf/filters.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace lmcpf {

namespace {

constexpr double kRhoClamp = 1e6;

// Local slice of the observation batch at one analysis point: everything
// with positive localization weight, with R^{-1} already tapered.
struct LocalProblem {
  Matrix Y;        // m_local x L observed anomalies
  Vector rinv;     // taper / err_var
  Vector innov;    // y - ybar
  Vector err_var;  // untapered observation error variances
  double hbht_trace = 0.0;
  int m = 0;
};

LocalProblem localize(const ObsSpaceEnsemble& obs_ens,
                      const ObservationBatch& batch, const FilterConfig& cfg,
                      const Geometry& geom, double analysis_point) {
  const int L = static_cast<int>(obs_ens.values.cols());
  if (obs_ens.values.rows() != batch.size())
    throw DimensionMismatch("localize: batch and observed ensemble disagree");
  Vector taper = localization_weights(cfg.localization, analysis_point, batch,
                                      geom.domain_length());
  std::vector<int> idx;
  for (int i = 0; i < batch.size(); ++i)
    if (taper(i) > 0.0) idx.push_back(i);

  LocalProblem p;
  p.m = static_cast<int>(idx.size());
  p.Y.resize(p.m, L);
  p.rinv.resize(p.m);
  p.innov.resize(p.m);
  p.err_var.resize(p.m);
  for (int k = 0; k < p.m; ++k) {
    const int i = idx[k];
    p.Y.row(k) = obs_ens.values.row(i).array() - obs_ens.mean(i);
    p.rinv(k) = taper(i) / batch.err_var(i);
    p.innov(k) = batch.values(i) - obs_ens.mean(i);
    p.err_var(k) = batch.err_var(i);
    p.hbht_trace += p.Y.row(k).squaredNorm() / (L - 1);
  }
  return p;
}

// (C - e_l)^T M (C - e_l) for every l, with M = V diag(mvals) V^T sharing
// the eigenbasis of A.
Vector quad_form_departures(const EnsembleSpaceQuantities& q,
                            const Vector& mvals) {
  Vector c = q.eigvec.transpose() * q.C;
  Vector mc = q.eigvec * mvals.cwiseProduct(c);
  const double cmc = c.dot(mvals.cwiseProduct(c));
  Vector mll = q.eigvec.array().square().matrix() * mvals;
  return (cmc - 2.0 * mc.array() + mll.array()).max(0.0).matrix();
}

Vector weights_from_sqnorms(const Vector& sq) {
  const int L = static_cast<int>(sq.size());
  Vector e = 0.5 * sq;
  Vector w = (-(e.array() - e.minCoeff())).exp();
  const double sum = w.sum();
  if (!(sum > 0.0))
    throw AllWeightsZero("particle weights: all weights vanished");
  return w * (L / sum);
}

LocalAnalysis identity_analysis(int L, double sigma) {
  LocalAnalysis la;
  la.W = Matrix::Identity(L, L);
  la.weights = Vector::Ones(L);
  la.rho = std::numeric_limits<double>::quiet_NaN();
  la.sigma = sigma;
  return la;
}

double smoothed_rho(double raw, const AnalysisContext& ctx, double alpha) {
  if (ctx.rho_prev && std::isfinite(*ctx.rho_prev))
    return alpha * (*ctx.rho_prev) + (1.0 - alpha) * raw;
  return raw;
}

void fill_departure_diag(LocalAnalysis& la, const EnsembleSpaceQuantities& q,
                         const LocalProblem& p) {
  la.d_c = a_norm(q.C, q);
  Vector sq = quad_form_departures(q, q.eigval);
  la.d_min = std::sqrt(std::max(0.0, sq.minCoeff()));
  la.rank = q.rankA;
  la.n_local_obs = p.m;
}

Matrix rejuvenation_noise(const FilterConfig& cfg, const AnalysisContext& ctx,
                          int L) {
  if (cfg.shared_noise) {
    if (ctx.shared_noise) {
      if (ctx.shared_noise->rows() != L || ctx.shared_noise->cols() != L)
        throw DimensionMismatch("rejuvenation: shared noise has wrong shape");
      return *ctx.shared_noise;
    }
    auto rng = make_stream(ctx.seed, ctx.cycle, 0, Draw::SharedNoise);
    return normal_matrix(L, L, rng);
  }
  auto rng = make_stream(ctx.seed, ctx.cycle, ctx.point_index, Draw::PointNoise);
  return normal_matrix(L, L, rng);
}

}  // namespace

void FilterConfig::validate() const {
  if (!(kappa > 0.0)) throw ConfigError("filter: kappa must be positive");
  if (!(kappa_post > 0.0))
    throw ConfigError("filter: kappa_post must be positive");
  if (c0 < 0.0 || c1 < 0.0)
    throw ConfigError("filter: rejuvenation amplitudes must be non-negative");
  if (!(rho1 > rho0))
    throw ConfigError("filter: need rho1 > rho0 for the sigma ramp");
  if (smoothing_alpha < 0.0 || smoothing_alpha >= 1.0)
    throw ConfigError("filter: smoothing_alpha must lie in [0,1)");
  if (!(qc_k > 0.0)) throw ConfigError("filter: qc_k must be positive");
  if (rescue_floor < 0.0 || rescue_amplitude < 0.0)
    throw ConfigError("filter: rescue parameters must be non-negative");
  if (localization.kind != TaperKind::None && !(localization.radius > 0.0))
    throw ConfigError("filter: localization radius must be positive");
}

Vector letkf_mean_weights(const EnsembleSpaceQuantities& q,
                          const Matrix& obs_anomalies,
                          const Vector& rinv_weights,
                          const Vector& innovation) {
  if (obs_anomalies.cols() != q.A.rows())
    throw DimensionMismatch("letkf_mean_weights: member count mismatch");
  if (obs_anomalies.rows() != innovation.size() ||
      rinv_weights.size() != innovation.size())
    throw DimensionMismatch("letkf_mean_weights: observation count mismatch");
  Vector b = obs_anomalies.transpose() * rinv_weights.cwiseProduct(innovation);
  Vector t = q.eigvec.transpose() * b;
  t.array() /= (1.0 + q.gamma * q.eigval.array());
  return q.eigvec * t;
}

Matrix letkf_transform(const EnsembleSpaceQuantities& q) {
  Vector d = (1.0 + q.gamma * q.eigval.array()).rsqrt();
  return q.eigvec * d.asDiagonal() * q.eigvec.transpose();
}

Vector pf_weights_approx(const EnsembleSpaceQuantities& q) {
  return weights_from_sqnorms(quad_form_departures(q, q.eigval));
}

Vector pf_weights_exact(const EnsembleSpaceQuantities& q) {
  Vector mvals =
      q.eigval.array() / (1.0 + q.gamma * q.eigval.array());
  return weights_from_sqnorms(quad_form_departures(q, mvals));
}

Matrix resampling_matrix(const Vector& weights, const Vector& uniform_draws) {
  const int L = static_cast<int>(weights.size());
  if (uniform_draws.size() != L)
    throw DimensionMismatch("resampling_matrix: need one draw per member");
  if ((weights.array() < 0.0).any())
    throw Error("resampling_matrix: negative weight");
  const double sum = weights.sum();
  if (std::abs(sum - L) > 1e-9 * L)
    throw WeightSumMismatch("resampling_matrix: weights sum to " +
                            std::to_string(sum) + ", expected " +
                            std::to_string(L));

  std::vector<double> cum(L);
  double acc = 0.0;
  int first_pos = -1;
  for (int i = 0; i < L; ++i) {
    acc += weights(i);
    cum[i] = acc;
    if (first_pos < 0 && weights(i) > 0.0) first_pos = i;
  }

  Matrix w = Matrix::Zero(L, L);
  for (int l = 0; l < L; ++l) {
    const double r = uniform_draws(l);
    if (r < 0.0 || r >= 1.0)
      throw Error("resampling_matrix: draw outside [0,1)");
    const double target = l + r;
    int i;
    if (target <= 0.0) {
      // Interval bounds are right-closed, so a draw of exactly zero belongs
      // to no interval; assign the first particle with positive weight.
      i = first_pos;
    } else {
      auto it = std::lower_bound(cum.begin(), cum.end(), target);
      i = it == cum.end() ? L - 1 : static_cast<int>(it - cum.begin());
      while (weights(i) <= 0.0 && i > 0) --i;  // rounding pushed past the end
    }
    w(i, l) = 1.0;
  }
  return w;
}

Matrix shift_matrix(const EnsembleSpaceQuantities& q) {
  // gamma (I + gamma A)^{-1} A shares the eigenbasis of A with eigenvalues
  // gamma a / (1 + gamma a).
  Vector tv = q.gamma * q.eigval.array() /
              (1.0 + q.gamma * q.eigval.array());
  Matrix ta = q.eigvec * tv.asDiagonal() * q.eigvec.transpose();
  Vector tc = ta * q.C;
  Matrix out = -ta;
  out.colwise() += tc;
  return out;
}

Matrix posterior_cov_ens(const EnsembleSpaceQuantities& q) {
  Vector d = q.gamma / (1.0 + q.gamma * q.eigval.array());
  return q.eigvec * d.asDiagonal() * q.eigvec.transpose();
}

double rho_spread(const Vector& innovation, const Vector& err_var,
                  double hbht_trace) {
  if (innovation.size() != err_var.size())
    throw DimensionMismatch("rho_spread: innovation/err_var length mismatch");
  if (innovation.size() == 0)
    return std::numeric_limits<double>::quiet_NaN();
  const double num = innovation.squaredNorm() - err_var.sum();
  double rho;
  if (hbht_trace > 0.0) {
    rho = num / hbht_trace;
  } else {
    // Collapsed ensemble: the ratio diverges with the sign of the numerator.
    rho = num > 0.0 ? kRhoClamp : (num < 0.0 ? -kRhoClamp : 0.0);
  }
  return std::clamp(rho, -kRhoClamp, kRhoClamp);
}

double sigma_of_rho(double rho, const FilterConfig& cfg) {
  if (std::isnan(rho)) return cfg.c0;
  if (rho <= cfg.rho0) return cfg.c0;
  if (rho >= cfg.rho1) return cfg.c1;
  return cfg.c0 +
         (cfg.c1 - cfg.c0) * (rho - cfg.rho0) / (cfg.rho1 - cfg.rho0);
}

LocalAnalysis letkf_analysis(const Ensemble& ens,
                             const ObsSpaceEnsemble& obs_ens,
                             const ObservationBatch& batch,
                             const FilterConfig& cfg, const Geometry& geom,
                             double analysis_point,
                             const AnalysisContext& ctx) {
  const int L = ens.size();
  LocalProblem p = localize(obs_ens, batch, cfg, geom, analysis_point);
  if (p.m == 0) return identity_analysis(L, 0.0);

  const double gamma = cfg.gamma(L);
  EnsembleSpaceQuantities q = build_ens_space(p.Y, p.rinv, p.innov, gamma);
  Vector w = letkf_mean_weights(q, p.Y, p.rinv, p.innov);

  LocalAnalysis la;
  la.W = letkf_transform(q);
  la.W.colwise() += gamma * w;
  la.weights = Vector::Ones(L);
  la.rho = smoothed_rho(rho_spread(p.innov, p.err_var, p.hbht_trace), ctx,
                        cfg.smoothing_alpha);
  la.sigma = 0.0;
  fill_departure_diag(la, q, p);
  la.shift_norm = a_norm(gamma * w, q);
  return la;
}

namespace {

LocalAnalysis particle_analysis(FilterKind kind, const Ensemble& ens,
                                const ObsSpaceEnsemble& obs_ens,
                                const ObservationBatch& batch,
                                const FilterConfig& cfg, const Geometry& geom,
                                double analysis_point,
                                const AnalysisContext& ctx) {
  const int L = ens.size();
  LocalProblem p = localize(obs_ens, batch, cfg, geom, analysis_point);
  if (p.m == 0) return identity_analysis(L, sigma_of_rho(
      std::numeric_limits<double>::quiet_NaN(), cfg));

  EnsembleSpaceQuantities q =
      build_ens_space(p.Y, p.rinv, p.innov, cfg.gamma(L));

  LocalAnalysis la;
  la.weights = (kind == FilterKind::LMCPF && cfg.exact_weights)
                   ? pf_weights_exact(q)
                   : pf_weights_approx(q);

  auto rng = make_stream(ctx.seed, ctx.cycle, ctx.point_index, Draw::Resample);
  Matrix selection = resampling_matrix(la.weights, uniform_vector(L, rng));

  la.rho = smoothed_rho(rho_spread(p.innov, p.err_var, p.hbht_trace), ctx,
                        cfg.smoothing_alpha);
  la.sigma = sigma_of_rho(la.rho, cfg);

  Matrix noise = rejuvenation_noise(cfg, ctx, L);

  if (kind == FilterKind::LAPF) {
    // Unit-spread draws around the selected particles: dividing the raw
    // normal entries by sqrt(L-1) makes X*N_scaled match the ensemble
    // spread per variable, so sigma directly sets the jitter amplitude.
    la.W = selection + la.sigma / std::sqrt(double(L - 1)) * noise;
    la.shift_norm =
        a_norm((selection - Matrix::Identity(L, L)).rowwise().mean(), q);
  } else {
    Matrix shift = shift_matrix(q);
    Vector ga_scale = (cfg.kappa_post * q.gamma /
                       (1.0 + q.gamma * q.eigval.array()))
                          .sqrt();
    Matrix sqrt_ga =
        q.eigvec * ga_scale.asDiagonal() * q.eigvec.transpose();
    la.W = selection + shift * selection + la.sigma * (sqrt_ga * noise);
    la.shift_norm = a_norm(shift.rowwise().mean(), q);
  }
  fill_departure_diag(la, q, p);
  return la;
}

}  // namespace

LocalAnalysis lapf_analysis(const Ensemble& ens,
                            const ObsSpaceEnsemble& obs_ens,
                            const ObservationBatch& batch,
                            const FilterConfig& cfg, const Geometry& geom,
                            double analysis_point, const AnalysisContext& ctx) {
  return particle_analysis(FilterKind::LAPF, ens, obs_ens, batch, cfg, geom,
                           analysis_point, ctx);
}

LocalAnalysis lmcpf_analysis(const Ensemble& ens,
                             const ObsSpaceEnsemble& obs_ens,
                             const ObservationBatch& batch,
                             const FilterConfig& cfg, const Geometry& geom,
                             double analysis_point,
                             const AnalysisContext& ctx) {
  return particle_analysis(FilterKind::LMCPF, ens, obs_ens, batch, cfg, geom,
                           analysis_point, ctx);
}

LocalAnalysis analyze_point(const Ensemble& ens,
                            const ObsSpaceEnsemble& obs_ens,
                            const ObservationBatch& batch,
                            const FilterConfig& cfg, const Geometry& geom,
                            double analysis_point, const AnalysisContext& ctx) {
  switch (cfg.kind) {
    case FilterKind::LETKF:
      return letkf_analysis(ens, obs_ens, batch, cfg, geom, analysis_point,
                            ctx);
    case FilterKind::LAPF:
      return lapf_analysis(ens, obs_ens, batch, cfg, geom, analysis_point,
                           ctx);
    case FilterKind::LMCPF:
    default:
      return lmcpf_analysis(ens, obs_ens, batch, cfg, geom, analysis_point,
                            ctx);
  }
}

std::optional<EnsembleSpaceQuantities> local_ens_space(
    const ObsSpaceEnsemble& obs_ens, const ObservationBatch& batch,
    const FilterConfig& cfg, const Geometry& geom, double analysis_point,
    double gamma) {
  LocalProblem p = localize(obs_ens, batch, cfg, geom, analysis_point);
  if (p.m == 0) return std::nullopt;
  return build_ens_space(p.Y, p.rinv, p.innov, gamma);
}

Ensemble assemble_global(const Ensemble& background,
                         const std::vector<LocalAnalysis>& locals, int stride,
                         const Geometry& geom) {
  const int n = background.dim();
  const int L = background.size();
  const int npts = static_cast<int>(locals.size());
  if (npts == 0)
    throw CoverageGap("assemble_global: no local analyses supplied");
  if (stride < 1) throw ConfigError("assemble_global: stride must be >= 1");

  Vector mean = ensemble_mean(background);
  Matrix x = perturbations(background);

  Ensemble out;
  out.members.resize(n, L);
  for (int g = 0; g < n; ++g) {
    const int k0 = g / stride;
    if (k0 >= npts)
      throw CoverageGap("assemble_global: grid index " + std::to_string(g) +
                        " beyond the last analysis point");
    const int r = g - k0 * stride;
    Eigen::RowVectorXd row;
    if (r == 0) {
      row = x.row(g) * locals[k0].W;
    } else {
      int k1 = k0 + 1;
      double gap = stride;
      if (k1 >= npts) {
        if (geom.cyclic) {
          k1 = 0;
          gap = static_cast<double>(n - k0 * stride);
        } else {
          k1 = k0;  // clamp past the last point
          gap = 1.0;
        }
      }
      const double t = k1 == k0 ? 0.0 : r / gap;
      Matrix w = (1.0 - t) * locals[k0].W + t * locals[k1].W;
      row = x.row(g) * w;
    }
    out.members.row(g) = row.array() + mean(g);
  }
  return out;
}

}  // namespace lmcpf
