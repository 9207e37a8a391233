#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lmcpf/ensemble.hpp"
#include "lmcpf/types.hpp"

namespace lmcpf {

struct SpreadStats {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

// Per-variable ensemble standard deviation (L-1 divisor), reduced over
// variables.
SpreadStats spread_stats(const Ensemble& ens);

struct ScoreStats {
  double rmse = 0.0;
  double bias = 0.0;
};

ScoreStats rmse_and_bias(const Vector& values, const Vector& reference);

// Empirical continuous ranked probability score of the ensemble {x_l}
// against a scalar verification y:
//   mean_l |x_l - y| - 1/(2 L^2) sum_{l,k} |x_l - x_k|.
double crps(const Vector& ensemble_values, double obs);

double median(std::vector<double> values);

struct Histogram {
  std::vector<double> edges;   // size bins + 1
  std::vector<long> counts;

  int bins() const { return static_cast<int>(counts.size()); }
};

// bin_width <= 0 selects the Freedman-Diaconis width 2 IQR n^{-1/3} (with a
// fallback to a single bin for degenerate samples).
Histogram histogram(std::span<const double> values, double bin_width = 0.0);

struct ShiftStats {
  double median = 0.0;
  Histogram hist;
};

ShiftStats shift_stats(std::span<const double> shift_norms,
                       double bin_width = 0.0);

// Scalar-problem shift fraction kappa b / (r + kappa b): how far one
// particle moves toward an observation with background variance b and
// observation error variance r.
double one_dim_shift_factor(double kappa, double b, double r);

// Power-law decay model sigma_j = eta / j^nu for an ordered positive
// sequence (j is 1-based).
struct DecayModel {
  double eta = 0.0;
  double nu = 0.0;
};

DecayModel fit_decay_exponent(const Vector& sigmas);

Vector decay_sigmas(const DecayModel& model, int count);

struct NormSimResult {
  std::vector<double> norms;
  double mean_norm = 0.0;
  Histogram hist;
};

// Monte Carlo distribution of || z ||_2 with independent z_j ~ N(0,
// sigma_j^2) and sigma_j from the decay model; the reference shape for the
// departure-norm histograms.
NormSimResult simulate_norm_histogram(const DecayModel& model, int dim,
                                      int n_draws, std::uint64_t seed,
                                      double bin_width = 0.0);

namespace detail {

// Compensated accumulation; keeps reductions reproducible across refactors
// of loop structure.
class KahanSum {
 public:
  void add(double x) {
    const double y = x - c_;
    const double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

}  // namespace detail

}  // namespace lmcpf
