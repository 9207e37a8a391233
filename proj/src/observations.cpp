#include "lmcpf/observations.hpp"

#include <cmath>
#include <string>

namespace lmcpf {

namespace {

double interpolate(const Vector& state, double loc, bool cyclic) {
  const int n = static_cast<int>(state.size());
  if (cyclic) {
    double wrapped = std::fmod(loc, static_cast<double>(n));
    if (wrapped < 0.0) wrapped += n;
    const int i0 = static_cast<int>(std::floor(wrapped)) % n;
    const double f = wrapped - std::floor(wrapped);
    return (1.0 - f) * state(i0) + f * state((i0 + 1) % n);
  }
  if (loc < 0.0 || loc > n - 1)
    throw IndexOutOfRange("observation location " + std::to_string(loc) +
                          " outside grid [0," + std::to_string(n - 1) + "]");
  int i0 = static_cast<int>(std::floor(loc));
  if (i0 == n - 1) i0 = n - 2;  // loc == n-1 exactly
  const double f = loc - i0;
  return (1.0 - f) * state(i0) + f * state(i0 + 1);
}

}  // namespace

void ObservationBatch::validate(int state_dim, bool cyclic) const {
  const int m = size();
  if (err_var.size() != m || static_cast<int>(locations.size()) != m)
    throw DimensionMismatch("observations: fields have inconsistent lengths");
  for (int i = 0; i < m; ++i) {
    if (!(err_var(i) > 0.0))
      throw ConfigError("observations: err_var must be positive");
    if (!cyclic && (locations[i] < 0.0 || locations[i] > state_dim - 1))
      throw IndexOutOfRange("observations: location outside grid");
  }
}

Vector apply_obs_operator(const ObservationBatch& batch, const Vector& state,
                          bool cyclic) {
  Vector out(batch.size());
  for (int i = 0; i < batch.size(); ++i)
    out(i) = interpolate(state, batch.locations[i], cyclic);
  return out;
}

ObsSpaceEnsemble map_to_obs_space(const ObservationBatch& batch,
                                  const Ensemble& ens, bool cyclic) {
  ObsSpaceEnsemble out;
  out.values.resize(batch.size(), ens.size());
  for (int l = 0; l < ens.size(); ++l)
    out.values.col(l) =
        apply_obs_operator(batch, ens.members.col(l), cyclic);
  out.mean = out.values.rowwise().mean();
  return out;
}

ObservationBatch generate_twin_obs(const Vector& truth,
                                   const ObservationBatch& tpl, bool cyclic,
                                   std::mt19937_64& rng) {
  ObservationBatch out = tpl;
  out.values = apply_obs_operator(tpl, truth, cyclic);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int i = 0; i < out.size(); ++i)
    out.values(i) += std::sqrt(out.err_var(i)) * dist(rng);
  return out;
}

double gaspari_cohn(double ratio) {
  const double r = std::abs(ratio);
  if (r >= 2.0) return 0.0;
  if (r <= 1.0) {
    return -0.25 * r * r * r * r * r + 0.5 * r * r * r * r +
           0.625 * r * r * r - (5.0 / 3.0) * r * r + 1.0;
  }
  return (1.0 / 12.0) * r * r * r * r * r - 0.5 * r * r * r * r +
         0.625 * r * r * r + (5.0 / 3.0) * r * r - 5.0 * r + 4.0 -
         (2.0 / 3.0) / r;
}

Vector localization_weights(const LocalizationSpec& loc, double analysis_point,
                            const ObservationBatch& batch,
                            double domain_length) {
  if (loc.kind != TaperKind::None && !(loc.radius > 0.0))
    throw ConfigError("localization: radius must be positive");
  Vector w(batch.size());
  for (int i = 0; i < batch.size(); ++i) {
    double d = std::abs(batch.locations[i] - analysis_point);
    if (domain_length > 0.0) {
      d = std::fmod(d, domain_length);
      d = std::min(d, domain_length - d);
    }
    switch (loc.kind) {
      case TaperKind::GaspariCohn:
        w(i) = gaspari_cohn(d / loc.radius);
        break;
      case TaperKind::Boxcar:
        w(i) = d <= loc.radius ? 1.0 : 0.0;
        break;
      case TaperKind::None:
        w(i) = 1.0;
        break;
    }
  }
  return w;
}

QcResult qc_filter(const ObservationBatch& batch, const Vector& fg_mean_obs,
                   const Vector& fg_spread_obs, double k_qc) {
  const int m = batch.size();
  if (fg_mean_obs.size() != m || fg_spread_obs.size() != m)
    throw DimensionMismatch("qc_filter: first-guess fields length mismatch");
  QcResult res;
  res.kept_indices.reserve(m);
  for (int i = 0; i < m; ++i) {
    const double tol =
        k_qc * std::sqrt(batch.err_var(i) +
                         fg_spread_obs(i) * fg_spread_obs(i));
    if (std::abs(batch.values(i) - fg_mean_obs(i)) <= tol)
      res.kept_indices.push_back(i);
  }
  const int kept = static_cast<int>(res.kept_indices.size());
  res.n_rejected = m - kept;
  res.kept.values.resize(kept);
  res.kept.err_var.resize(kept);
  res.kept.locations.resize(kept);
  for (int k = 0; k < kept; ++k) {
    const int i = res.kept_indices[k];
    res.kept.values(k) = batch.values(i);
    res.kept.err_var(k) = batch.err_var(i);
    res.kept.locations[k] = batch.locations[i];
  }
  return res;
}

}  // namespace lmcpf
