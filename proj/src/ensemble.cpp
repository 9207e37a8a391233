#include "lmcpf/ensemble.hpp"

#include <cmath>

namespace lmcpf {

namespace {

constexpr double kRankTol = 1e-10;  // relative to the largest eigenvalue

void check_symmetric(const Matrix& m, const char* where) {
  if (m.rows() != m.cols())
    throw DimensionMismatch(std::string(where) + ": matrix is not square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
    throw NotSymmetric(std::string(where) + ": matrix is not symmetric");
}

}  // namespace

Vector ensemble_mean(const Ensemble& ens) {
  if (ens.size() < 1) throw DimensionMismatch("ensemble_mean: empty ensemble");
  return ens.members.rowwise().mean();
}

Matrix perturbations(const Ensemble& ens) {
  return ens.members.colwise() - ensemble_mean(ens);
}

EnsembleSpaceQuantities build_ens_space(const Matrix& obs_anomalies,
                                        const Vector& rinv_weights,
                                        const Vector& innovation,
                                        double gamma) {
  const int m = static_cast<int>(obs_anomalies.rows());
  const int L = static_cast<int>(obs_anomalies.cols());
  if (rinv_weights.size() != m || innovation.size() != m)
    throw DimensionMismatch("build_ens_space: inconsistent observation count");
  if (L < 2)
    throw DimensionMismatch("build_ens_space: need at least two members");
  if (m > 0) {
    if ((rinv_weights.array() < 0.0).any())
      throw Error("build_ens_space: negative R^{-1} weight");
    if (rinv_weights.maxCoeff() <= 0.0)
      throw AllWeightsZero("build_ens_space: all R^{-1} weights are zero");
  }

  EnsembleSpaceQuantities q;
  q.gamma = gamma;

  // A = Y^T diag(rinv) Y and b = Y^T diag(rinv) d, assembled through the
  // weighted anomalies so A is symmetric by construction.
  Matrix wy = rinv_weights.asDiagonal() * obs_anomalies;
  q.A = obs_anomalies.transpose() * wy;
  q.A = 0.5 * (q.A + q.A.transpose().eval());
  Vector b = wy.transpose() * innovation;

  Eigen::SelfAdjointEigenSolver<Matrix> eig(q.A);
  if (eig.info() != Eigen::Success)
    throw Error("build_ens_space: eigendecomposition failed");
  q.eigvec = eig.eigenvectors();
  q.eigval = eig.eigenvalues().cwiseMax(0.0);

  // C = A^+ b with the pseudo-inverse truncated at a relative tolerance, so
  // the defect direction (the ones vector) and noise modes are dropped.
  const double lmax = q.eigval.size() > 0 ? q.eigval.maxCoeff() : 0.0;
  const double cut = kRankTol * lmax;
  Vector inv = Vector::Zero(L);
  for (int i = 0; i < L; ++i) {
    if (lmax > 0.0 && q.eigval(i) > cut) {
      inv(i) = 1.0 / q.eigval(i);
      ++q.rankA;
    }
  }
  q.C = q.eigvec * (inv.asDiagonal() * (q.eigvec.transpose() * b));
  return q;
}

double a_norm(const Vector& beta, const EnsembleSpaceQuantities& q) {
  if (beta.size() != q.A.rows())
    throw DimensionMismatch("a_norm: coefficient length mismatch");
  return std::sqrt(std::max(0.0, beta.dot(q.A * beta)));
}

Matrix sym_sqrt(const Matrix& m) {
  check_symmetric(m, "sym_sqrt");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  if (eig.info() != Eigen::Success)
    throw Error("sym_sqrt: eigendecomposition failed");
  Vector ev = eig.eigenvalues();
  const double lmax = std::max(0.0, ev.maxCoeff());
  if (ev.minCoeff() < -1e-8 * std::max(1.0, lmax))
    throw NotPositiveDefinite("sym_sqrt: matrix has a negative eigenvalue");
  Vector root = ev.cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() *
         eig.eigenvectors().transpose();
}

Matrix sym_inv_sqrt(const Matrix& m) {
  check_symmetric(m, "sym_inv_sqrt");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  if (eig.info() != Eigen::Success)
    throw Error("sym_inv_sqrt: eigendecomposition failed");
  Vector ev = eig.eigenvalues();
  const double lmax = std::max(0.0, ev.maxCoeff());
  if (ev.minCoeff() <= 1e-12 * std::max(1.0, lmax))
    throw NotPositiveDefinite("sym_inv_sqrt: matrix is not positive definite");
  Vector root = ev.cwiseSqrt().cwiseInverse();
  return eig.eigenvectors() * root.asDiagonal() *
         eig.eigenvectors().transpose();
}

}  // namespace lmcpf
