#pragma once

#include "lmcpf/types.hpp"

namespace lmcpf {

// State ensemble: one column per member, one row per model variable.
struct Ensemble {
  Matrix members;

  int dim() const { return static_cast<int>(members.rows()); }
  int size() const { return static_cast<int>(members.cols()); }
};

Vector ensemble_mean(const Ensemble& ens);

// Member deviations from the ensemble mean; each row sums to zero.
Matrix perturbations(const Ensemble& ens);

// Ensemble mapped through the observation operator.
struct ObsSpaceEnsemble {
  Matrix values;  // m x L
  Vector mean;    // length m

  Matrix anomalies() const { return values.colwise() - mean; }
};

// The local analysis problem transformed to ensemble space.
//
// A = Y^T diag(rinv) Y is symmetric positive semidefinite and singular by
// construction (rows of Y sum to zero, so A 1 = 0). C is the minimum-norm
// solution of A C = Y^T diag(rinv) d, which is well defined because the
// right-hand side lies in range(A). The spectral decomposition of A is kept
// so downstream transforms reuse one factorization.
struct EnsembleSpaceQuantities {
  Matrix A;         // L x L
  Vector C;         // length L
  double gamma{0};  // particle-uncertainty scaling kappa/(L-1)
  int rankA{0};
  Matrix eigvec;    // orthonormal columns
  Vector eigval;    // ascending, clamped at zero
};

// obs_anomalies: m x L perturbations of the observed ensemble.
// rinv_weights:  length m, localization weight divided by observation error
//                variance per observation (entries >= 0, not all zero).
// innovation:    length m, observation minus observed ensemble mean.
EnsembleSpaceQuantities build_ens_space(const Matrix& obs_anomalies,
                                        const Vector& rinv_weights,
                                        const Vector& innovation,
                                        double gamma);

// sqrt(beta^T A beta). Equals the R^{-1}-weighted observation-space norm of
// Y beta, so it measures displacements where observations constrain them.
double a_norm(const Vector& beta, const EnsembleSpaceQuantities& q);

// Symmetric square root / inverse square root through the spectral
// decomposition. sym_sqrt tolerates slightly negative eigenvalues (clamped
// at zero); sym_inv_sqrt requires strictly positive spectrum.
Matrix sym_sqrt(const Matrix& m);
Matrix sym_inv_sqrt(const Matrix& m);

}  // namespace lmcpf
