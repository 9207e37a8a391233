#pragma once

#include <random>
#include <vector>

#include "lmcpf/ensemble.hpp"
#include "lmcpf/types.hpp"

namespace lmcpf {

// Pointwise observations of the state at fractional grid locations with
// independent (diagonal-R) Gaussian errors. The observation operator is
// linear interpolation between the two bracketing grid indices.
struct ObservationBatch {
  Vector values;
  Vector err_var;
  std::vector<double> locations;

  int size() const { return static_cast<int>(values.size()); }
  void validate(int state_dim, bool cyclic) const;
};

Vector apply_obs_operator(const ObservationBatch& batch, const Vector& state,
                          bool cyclic);

ObsSpaceEnsemble map_to_obs_space(const ObservationBatch& batch,
                                  const Ensemble& ens, bool cyclic);

// Synthetic observations for twin experiments: H(truth) plus one Gaussian
// draw of standard deviation sqrt(err_var) per observation, in batch order.
ObservationBatch generate_twin_obs(const Vector& truth,
                                   const ObservationBatch& tpl, bool cyclic,
                                   std::mt19937_64& rng);

enum class TaperKind { GaspariCohn, Boxcar, None };

struct LocalizationSpec {
  TaperKind kind = TaperKind::GaspariCohn;
  double radius = 4.0;
};

// Fifth-order piecewise-rational compactly supported correlation function of
// the distance ratio; 1 at 0, identically 0 from ratio 2 on.
double gaspari_cohn(double ratio);

// Weight of every observation at one analysis point. domain_length > 0
// means cyclic distance on a ring of that length.
Vector localization_weights(const LocalizationSpec& loc, double analysis_point,
                            const ObservationBatch& batch,
                            double domain_length);

struct QcResult {
  ObservationBatch kept;
  std::vector<int> kept_indices;  // positions in the input batch
  int n_rejected = 0;
};

// First-guess check: an observation survives when its departure from the
// ensemble mean stays within k_qc standard deviations of the combined
// observation error and first-guess spread.
QcResult qc_filter(const ObservationBatch& batch, const Vector& fg_mean_obs,
                   const Vector& fg_spread_obs, double k_qc);

}  // namespace lmcpf
