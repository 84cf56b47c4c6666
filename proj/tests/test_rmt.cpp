#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "rmwave/common.hpp"
#include "rmwave/rmt.hpp"

using namespace rmwave;

namespace {

// Independent oracle: integrate the semicircle density from 0 to x with
// adaptive Simpson instead of the closed form.
double cdf0_oracle(double x) {
  if (x <= -2.0) return -0.5;
  if (x >= 2.0) return 0.5;
  return adaptive_simpson([](double t) { return rmt::semicircle_density(t); }, 0.0, x, 1e-13);
}

// Independent oracle: plain bisection for nu(kappa).
double nu_oracle(double kappa) {
  double lo = -2.0, hi = 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (cdf0_oracle(mid) < kappa / 2.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("quadrature helpers hit analytic references") {
  std::vector<double> x, w;
  gauss_legendre(8, x, w);
  // exact for polynomials of degree <= 15
  for (int k = 0; k <= 15; ++k) {
    double s = 0.0;
    for (int i = 0; i < 8; ++i) s += w[i] * std::pow(x[i], k);
    const double ref = (k % 2 == 0) ? 2.0 / (k + 1) : 0.0;
    CHECK(std::abs(s - ref) < 1e-13);
  }
  const double si = composite_gl([](double t) { return std::sin(t); }, 0.0, M_PI, 8, 4);
  CHECK(std::abs(si - 2.0) < 1e-12);
  const double pi4 = adaptive_simpson([](double t) { return 4.0 / (1.0 + t * t); }, 0.0, 1.0, 1e-12);
  CHECK(std::abs(pi4 - M_PI) < 1e-10);
}

TEST_CASE("derived seeds are deterministic and distinct") {
  CHECK(derive_seed(12345, 0) == derive_seed(12345, 0));
  CHECK(derive_seed(12345, 0) != derive_seed(12345, 1));
  CHECK(derive_seed(12345, 7) != derive_seed(54321, 7));
}

TEST_CASE("parallel_for covers every index once and forwards exceptions") {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
  CHECK_THROWS_AS(parallel_for(std::size_t{10}, 3,
                               [](std::size_t i) {
                                 if (i == 7) throw std::runtime_error("boom");
                               }),
                  std::runtime_error);
}

TEST_CASE("semicircle density and closed-form integral match quadrature") {
  CHECK(rmt::semicircle_density(2.5) == 0.0);
  CHECK(rmt::semicircle_density(0.0) == doctest::Approx(1.0 / M_PI));
  // total mass
  const double mass =
      adaptive_simpson([](double t) { return rmt::semicircle_density(t); }, -2.0, 2.0, 1e-13);
  CHECK(std::abs(mass - 1.0) < 1e-10);
  for (double xv : {-2.0, -1.3, -0.5, 0.0, 0.7, 1.9, 2.0})
    CHECK(std::abs(rmt::semicircle_cdf0(xv) - cdf0_oracle(xv)) < 1e-11);
}

TEST_CASE("dispersion solves the half-mass equation") {
  CHECK(rmt::nu(0.0) == 0.0);
  CHECK(rmt::nu(1.0) == 2.0);
  CHECK(rmt::nu(-1.0) == -2.0);
  for (double kappa : {0.1, 0.25, 0.5, 0.75, 0.93, 0.999}) {
    const double v = rmt::nu(kappa);
    CHECK(std::abs(v - nu_oracle(kappa)) < 1e-10);
    CHECK(std::abs(rmt::nu(-kappa) + v) < 1e-14);              // odd
    CHECK(std::abs(2.0 * rmt::semicircle_cdf0(v) - kappa) < 1e-12);  // defining equation
    CHECK(std::abs(rmt::nu_inverse(v) - kappa) < 1e-12);
  }
  // monotone on a grid
  double prev = -2.0;
  for (int i = -20; i <= 20; ++i) {
    const double v = rmt::nu(i / 20.0);
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("dispersion derivative matches finite differences") {
  for (double kappa : {-0.8, -0.3, 0.0, 0.4, 0.9}) {
    const double h = 1e-6;
    const double fd = (rmt::nu(kappa + h) - rmt::nu(kappa - h)) / (2.0 * h);
    CHECK(rmt::nu_prime(kappa) == doctest::Approx(fd).epsilon(1e-6));
  }
  CHECK(std::isinf(rmt::nu_prime(1.0)));
}

TEST_CASE("gue samples are hermitian with the stated entry moments") {
  Rng rng(2024);
  const int half = 30;
  const auto h = rmt::sample_gue(half, rng);
  const int d = 2 * half + 1;
  REQUIRE(h.rows() == d);
  CHECK((h - h.adjoint()).cwiseAbs().maxCoeff() == 0.0);

  // pooled over several draws: E|h_jk|^2 = 1/d off-diagonal, Var h_jj = 1/d
  double off = 0.0, diag = 0.0;
  int noff = 0, ndiag = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const auto m = rmt::sample_gue(half, rng);
    for (int j = 0; j < d; ++j) {
      diag += std::norm(m(j, j));
      ++ndiag;
      for (int k = j + 1; k < d; ++k) {
        off += std::norm(m(j, k));
        ++noff;
      }
    }
  }
  // relative SE ~ sqrt(2/n); 5 sigma bands
  CHECK(std::abs(off / noff * d - 1.0) < 5.0 * std::sqrt(2.0 / noff));
  CHECK(std::abs(diag / ndiag * d - 1.0) < 5.0 * std::sqrt(2.0 / ndiag));
}

TEST_CASE("haar samples are unitary and column-exchangeable in mean") {
  Rng rng(77);
  const int d = 41;
  const auto u = rmt::sample_haar_unitary(d, rng);
  CHECK((u.adjoint() * u - Eigen::MatrixXcd::Identity(d, d)).cwiseAbs().maxCoeff() < 1e-12);

  double m2 = 0.0;
  const int reps = 60;
  for (int rep = 0; rep < reps; ++rep) {
    const auto v = rmt::sample_haar_unitary(d, rng);
    m2 += std::norm(v(0, 0));
  }
  m2 /= reps;
  // |u_00|^2 ~ Beta(1, d-1): mean 1/d, sd ~ 1/d
  CHECK(std::abs(m2 * d - 1.0) < 5.0 / std::sqrt(double(reps)));
}

TEST_CASE("spectral decomposition reconstructs and fixes phases deterministically") {
  Rng rng(11);
  const auto h = rmt::sample_gue(12, rng);
  const auto s1 = rmt::spectral_decompose(h);
  const auto s2 = rmt::spectral_decompose(h);
  CHECK(s1.half_size == 12);
  CHECK((s1.psi - s2.psi).cwiseAbs().maxCoeff() == 0.0);
  for (int i = 1; i < s1.dim(); ++i) CHECK(s1.lambda(i) >= s1.lambda(i - 1));
  const Eigen::MatrixXcd rebuilt =
      s1.psi * s1.lambda.asDiagonal() * s1.psi.adjoint();
  CHECK((rebuilt - h).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((s1.psi.adjoint() * s1.psi - Eigen::MatrixXcd::Identity(s1.dim(), s1.dim()))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
}

TEST_CASE("spectral_decompose rejects malformed input") {
  Eigen::MatrixXcd even = Eigen::MatrixXcd::Zero(4, 4);
  CHECK_THROWS_AS(rmt::spectral_decompose(even), std::invalid_argument);
  Eigen::MatrixXcd nonherm = Eigen::MatrixXcd::Zero(5, 5);
  nonherm(0, 1) = 1.0;
  CHECK_THROWS_AS(rmt::spectral_decompose(nonherm), std::invalid_argument);
}

TEST_CASE("eigenvalue counts track semicircle mass") {
  Rng rng(5150);
  const auto s = rmt::spectral_decompose(rmt::sample_gue(40, rng));
  const auto c = rmt::local_law_count(s, -1.0, 1.0);
  const double expected = s.dim() * 2.0 * rmt::semicircle_cdf0(1.0);
  CHECK(c.prediction == doctest::Approx(expected));
  CHECK(std::abs(c.count - c.prediction) < 8.0 * std::log(double(s.dim())));
  // whole line captures everything
  const auto all = rmt::local_law_count(s, -3.0, 3.0);
  CHECK(all.count == s.dim());
  CHECK(all.prediction == doctest::Approx(double(s.dim())));
}

TEST_CASE("rigidity residuals stay logarithmic at fixed seed") {
  Rng rng(99);
  const auto s = rmt::spectral_decompose(rmt::sample_gue(60, rng));
  const auto r = rmt::rigidity_residuals(s);
  REQUIRE(r.size() == s.dim());
  CHECK(r.cwiseAbs().maxCoeff() < 40.0);
}

TEST_CASE("resolvent sums match a direct eigenvalue evaluation") {
  Rng rng(31);
  const auto s = rmt::spectral_decompose(rmt::sample_gue(15, rng));
  const double alpha = 0.37, big_t = 25.0;
  double direct = 0.0;
  for (int i = 0; i < s.dim(); ++i) direct += 1.0 / (1.0 / big_t + std::abs(s.lambda(i) - alpha));
  CHECK(rmt::resolvent_sum(s, alpha, big_t) == doctest::Approx(direct));
  CHECK_THROWS_AS(rmt::resolvent_sum(s, 0.0, 0.5), std::domain_error);
}

TEST_CASE("spectral data round-trips through json exactly") {
  Rng rng(8);
  const auto s = rmt::spectral_decompose(rmt::sample_gue(6, rng));
  const auto path = std::filesystem::temp_directory_path() / "rmwave_spectral_test.json";
  rmt::save_spectral(s, path.string());
  const auto back = rmt::load_spectral(path.string());
  std::filesystem::remove(path);
  CHECK(back.half_size == s.half_size);
  CHECK((back.lambda - s.lambda).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.psi - s.psi).cwiseAbs().maxCoeff() == 0.0);
}
