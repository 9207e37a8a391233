#include "lmcpf/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "lmcpf/rng.hpp"

namespace lmcpf {

SpreadStats spread_stats(const Ensemble& ens) {
  const int L = ens.size();
  if (L < 2) throw DimensionMismatch("spread_stats: need at least 2 members");
  Matrix x = perturbations(ens);
  Vector var = x.rowwise().squaredNorm() / (L - 1);
  Vector sd = var.cwiseSqrt();
  return {sd.mean(), sd.minCoeff(), sd.maxCoeff()};
}

ScoreStats rmse_and_bias(const Vector& values, const Vector& reference) {
  if (values.size() != reference.size() || values.size() == 0)
    throw DimensionMismatch("rmse_and_bias: length mismatch or empty input");
  Vector diff = values - reference;
  ScoreStats s;
  s.bias = diff.mean();
  s.rmse = std::sqrt(diff.squaredNorm() / diff.size());
  return s;
}

double crps(const Vector& ensemble_values, double obs) {
  const int L = static_cast<int>(ensemble_values.size());
  if (L == 0) throw DimensionMismatch("crps: empty ensemble");
  detail::KahanSum dist;
  for (int i = 0; i < L; ++i) dist.add(std::abs(ensemble_values(i) - obs));
  detail::KahanSum pairs;
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j)
      pairs.add(std::abs(ensemble_values(i) - ensemble_values(j)));
  return dist.value() / L - pairs.value() / (2.0 * L * L);
}

double median(std::vector<double> values) {
  if (values.empty()) throw DimensionMismatch("median: empty input");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  double lo = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lo + hi);
}

Histogram histogram(std::span<const double> values, double bin_width) {
  if (values.empty()) throw DimensionMismatch("histogram: empty input");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front();
  const double hi = sorted.back();
  const std::size_t n = sorted.size();

  double width = bin_width;
  if (width <= 0.0) {
    const double q1 = sorted[n / 4];
    const double q3 = sorted[(3 * n) / 4];
    width = 2.0 * (q3 - q1) / std::cbrt(static_cast<double>(n));
  }

  Histogram h;
  if (width <= 0.0 || hi == lo) {
    h.edges = {lo, std::nextafter(hi, hi + 1.0)};
    h.counts = {static_cast<long>(n)};
    return h;
  }

  const int bins =
      std::max(1, static_cast<int>(std::ceil((hi - lo) / width)));
  h.edges.resize(bins + 1);
  for (int b = 0; b <= bins; ++b) h.edges[b] = lo + b * width;
  h.counts.assign(bins, 0);
  for (double v : sorted) {
    int b = static_cast<int>((v - lo) / width);
    b = std::clamp(b, 0, bins - 1);
    ++h.counts[b];
  }
  return h;
}

ShiftStats shift_stats(std::span<const double> shift_norms, double bin_width) {
  ShiftStats s;
  s.hist = histogram(shift_norms, bin_width);
  s.median = median({shift_norms.begin(), shift_norms.end()});
  return s;
}

double one_dim_shift_factor(double kappa, double b, double r) {
  if (!(kappa > 0.0) || !(b > 0.0) || !(r > 0.0))
    throw Error("one_dim_shift_factor: arguments must be positive");
  return kappa * b / (r + kappa * b);
}

DecayModel fit_decay_exponent(const Vector& sigmas) {
  const int n = static_cast<int>(sigmas.size());
  if (n < 2)
    throw DimensionMismatch("fit_decay_exponent: need at least 2 values");
  if ((sigmas.array() <= 0.0).any())
    throw Error("fit_decay_exponent: values must be positive");
  DecayModel m;
  m.eta = sigmas(0);
  detail::KahanSum acc;
  for (int j = 2; j <= n; ++j)
    acc.add((std::log(m.eta) - std::log(sigmas(j - 1))) / std::log(j));
  m.nu = acc.value() / (n - 1);
  return m;
}

Vector decay_sigmas(const DecayModel& model, int count) {
  if (count < 1) throw DimensionMismatch("decay_sigmas: count must be >= 1");
  Vector out(count);
  for (int j = 1; j <= count; ++j)
    out(j - 1) = model.eta / std::pow(static_cast<double>(j), model.nu);
  return out;
}

NormSimResult simulate_norm_histogram(const DecayModel& model, int dim,
                                      int n_draws, std::uint64_t seed,
                                      double bin_width) {
  if (dim < 1 || n_draws < 1)
    throw DimensionMismatch("simulate_norm_histogram: bad size arguments");
  Vector sig = decay_sigmas(model, dim);
  auto rng = make_stream(seed, 0, 0, Draw::NormSim);
  std::normal_distribution<double> dist(0.0, 1.0);

  NormSimResult res;
  res.norms.reserve(n_draws);
  detail::KahanSum mean;
  for (int d = 0; d < n_draws; ++d) {
    double sq = 0.0;
    for (int j = 0; j < dim; ++j) {
      const double z = sig(j) * dist(rng);
      sq += z * z;
    }
    const double norm = std::sqrt(sq);
    res.norms.push_back(norm);
    mean.add(norm);
  }
  res.mean_norm = mean.value() / n_draws;
  res.hist = histogram(res.norms, bin_width);
  return res;
}

}  // namespace lmcpf
