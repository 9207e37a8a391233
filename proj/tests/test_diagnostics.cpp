#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "lmcpf/diagnostics.hpp"
#include "lmcpf/rng.hpp"

using namespace lmcpf;

TEST_CASE("spread statistics per variable") {
  Ensemble ens;
  ens.members.resize(2, 3);
  ens.members << 1.0, 2.0, 3.0,   // sd 1
                 5.0, 5.0, 5.0;   // sd 0
  SpreadStats s = spread_stats(ens);
  CHECK(s.min == doctest::Approx(0.0));
  CHECK(s.max == doctest::Approx(1.0));
  CHECK(s.mean == doctest::Approx(0.5));
}

TEST_CASE("rmse, bias, and the variance decomposition") {
  Vector v(4), r(4);
  v << 1.0, 2.0, 3.0, 4.0;
  r << 0.0, 0.0, 0.0, 0.0;
  ScoreStats s = rmse_and_bias(v, r);
  CHECK(s.bias == doctest::Approx(2.5));
  CHECK(s.rmse == doctest::Approx(std::sqrt(30.0 / 4.0)));

  // rmse^2 = bias^2 + population variance of the error.
  auto rng = make_stream(7, 0, 0, Draw::NormSim);
  Vector e = normal_vector(50, rng);
  ScoreStats t = rmse_and_bias(e, Vector::Zero(50));
  const double popvar = (e.array() - e.mean()).square().sum() / 50.0;
  CHECK(t.rmse * t.rmse ==
        doctest::Approx(t.bias * t.bias + popvar).epsilon(1e-12));

  CHECK_THROWS_AS(rmse_and_bias(v, Vector::Zero(3)), const DimensionMismatch&);
}

TEST_CASE("empirical crps on hand-checked cases") {
  Vector two(2);
  two << 0.0, 2.0;
  // mean |x - 1| = 1; pair term 1/(2*4) * (|0-2| + |2-0|) = 0.5.
  CHECK(crps(two, 1.0) == doctest::Approx(0.5).epsilon(1e-14));

  // A point ensemble scores the absolute error.
  CHECK(crps(Vector::Constant(5, 2.0), 3.5) == doctest::Approx(1.5));

  // Far verification: crps approaches the absolute error of the mean.
  Vector e(3);
  e << -1.0, 0.0, 1.0;
  const double far = crps(e, 100.0);
  CHECK(far == doctest::Approx(100.0 - 4.0 / 9.0).epsilon(1e-12));

  // Translation invariance.
  Vector shifted = e.array() + 7.0;
  CHECK(crps(shifted, 7.5) == doctest::Approx(crps(e, 0.5)).epsilon(1e-12));
}

TEST_CASE("median of odd and even samples") {
  CHECK(median({3.0, 1.0, 2.0}) == doctest::Approx(2.0));
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == doctest::Approx(2.5));
  CHECK(median({5.0}) == doctest::Approx(5.0));
}

TEST_CASE("histogram with fixed bin width") {
  std::vector<double> v{0.1, 0.2, 0.35, 0.8, 0.81, 1.4};
  Histogram h = histogram(v, 0.5);
  REQUIRE(h.bins() == 3);
  CHECK(h.edges.front() == doctest::Approx(0.1));
  CHECK(h.edges.back() >= 1.4);
  CHECK(h.counts[0] == 3);
  CHECK(h.counts[1] == 2);
  CHECK(h.counts[2] == 1);
  long total = 0;
  for (long c : h.counts) total += c;
  CHECK(total == 6);
}

TEST_CASE("histogram chooses a Freedman-Diaconis width by default") {
  auto rng = make_stream(11, 0, 0, Draw::NormSim);
  Vector z = normal_vector(2000, rng);
  std::vector<double> v(z.data(), z.data() + z.size());
  Histogram h = histogram(v);
  // 2 IQR n^{-1/3} with IQR ~ 1.35 gives a width near 0.21 over a ~7 span.
  CHECK(h.bins() > 15);
  CHECK(h.bins() < 80);
  long total = 0;
  for (long c : h.counts) total += c;
  CHECK(total == 2000);

  // Degenerate sample: single bin, no crash.
  std::vector<double> flat(10, 3.0);
  Histogram hf = histogram(flat);
  CHECK(hf.bins() == 1);
  CHECK(hf.counts[0] == 10);
}

TEST_CASE("scalar shift factor") {
  CHECK(one_dim_shift_factor(2.0, 2.0, 1.0) == doctest::Approx(0.8));
  CHECK(one_dim_shift_factor(1e-12, 2.0, 1.0) ==
        doctest::Approx(0.0).scale(1.0));
  CHECK_THROWS_AS(one_dim_shift_factor(0.0, 2.0, 1.0), const Error&);
  // Saturates toward 1 as kappa grows.
  CHECK(one_dim_shift_factor(1e9, 1.0, 1.0) == doctest::Approx(1.0));
  CHECK(one_dim_shift_factor(1.0, 1.0, 1.0) == doctest::Approx(0.5));
}

TEST_CASE("decay-exponent fit recovers exact power laws") {
  for (double nu : {0.0, 0.5, 1.0, 2.0, 3.0}) {
    for (double eta : {4.0, 15.0, 30.0, 40.0, 50.0}) {
      Vector s = decay_sigmas(DecayModel{eta, nu}, 40);
      DecayModel fit = fit_decay_exponent(s);
      CHECK(fit.eta == doctest::Approx(eta).epsilon(1e-12));
      CHECK(fit.nu == doctest::Approx(nu).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(fit_decay_exponent(Vector::Ones(1)), const DimensionMismatch&);
}

TEST_CASE("decay sigma sequence") {
  Vector s = decay_sigmas(DecayModel{8.0, 1.0}, 4);
  CHECK(s(0) == doctest::Approx(8.0));
  CHECK(s(1) == doctest::Approx(4.0));
  CHECK(s(2) == doctest::Approx(8.0 / 3.0));
  CHECK(s(3) == doctest::Approx(2.0));
}

TEST_CASE("simulated departure norms match the chi distribution") {
  // With nu = 0 every component has scale eta, so ||z|| = eta * chi_L and
  // E||z|| = eta sqrt(2) Gamma((L+1)/2) / Gamma(L/2).
  const int dim = 40;
  const double eta = 4.0;
  NormSimResult r =
      simulate_norm_histogram(DecayModel{eta, 0.0}, dim, 40000, 99);
  const double expected =
      eta * std::sqrt(2.0) *
      std::exp(std::lgamma((dim + 1) / 2.0) - std::lgamma(dim / 2.0));
  CHECK(r.mean_norm == doctest::Approx(expected).epsilon(0.01));
  CHECK(static_cast<int>(r.norms.size()) == 40000);
  long total = 0;
  for (long c : r.hist.counts) total += c;
  CHECK(total == 40000);

  // Determinism in the seed.
  NormSimResult r2 =
      simulate_norm_histogram(DecayModel{eta, 0.0}, dim, 1000, 99);
  CHECK(r2.norms[0] == doctest::Approx(r.norms[0]).epsilon(1e-15));

  // Faster decay concentrates the norm at smaller values.
  NormSimResult fast =
      simulate_norm_histogram(DecayModel{eta, 2.0}, dim, 4000, 5);
  NormSimResult slow =
      simulate_norm_histogram(DecayModel{eta, 0.5}, dim, 4000, 5);
  CHECK(fast.mean_norm < slow.mean_norm);
}

TEST_CASE("shift statistics bundle median and histogram") {
  std::vector<double> norms{0.5, 1.5, 1.0, 4.0, 2.0};
  ShiftStats s = shift_stats(norms, 1.0);
  CHECK(s.median == doctest::Approx(1.5));
  long total = 0;
  for (long c : s.hist.counts) total += c;
  CHECK(total == 5);
}

TEST_CASE("compensated summation survives magnitude cancellation") {
  detail::KahanSum k;
  k.add(1e16);
  for (int i = 0; i < 10000; ++i) k.add(1.0);
  k.add(-1e16);
  CHECK(k.value() == doctest::Approx(10000.0).epsilon(1e-12));
}
