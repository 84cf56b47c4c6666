#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include "rmwave/common.hpp"
#include "rmwave/dynamics.hpp"
#include "rmwave/rmt.hpp"
#include "rmwave/weingarten.hpp"

using namespace rmwave;
using dyn::ModelConfig;
using dyn::StateVector;
using cd = std::complex<double>;

namespace {

rmt::SpectralData sampled_spec(int half, std::uint64_t seed) {
  Rng rng(seed);
  return rmt::spectral_decompose(rmt::sample_gue(half, rng));
}

StateVector random_state(int dim, std::uint64_t seed) {
  Rng rng(seed);
  StateVector a(dim);
  for (int i = 0; i < dim; ++i) a(i) = rng.cnormal();
  return a;
}

// Oracle: integrate the plain (non-Wick-ordered) equation
// i a' = Lambda a + (mu^2/N) Psi^*(|Psi a|^2 Psi a) with a-frame RK4.
StateVector integrate_plain(const rmt::SpectralData& spec, double mu, StateVector a, double t_end,
                            double dt) {
  const Eigen::ArrayXd lam = spec.lambda.array();
  const auto rhs = [&](const StateVector& v) -> StateVector {
    const Eigen::VectorXcd w = spec.psi * v;
    StateVector f = spec.psi.adjoint() * (w.array() * w.array().abs2()).matrix();
    f *= mu * mu / spec.half_size;
    f += (lam * v.array()).matrix();
    return cd(0.0, -1.0) * f;
  };
  const int steps = static_cast<int>(std::round(t_end / dt));
  for (int s = 0; s < steps; ++s) {
    const StateVector k1 = rhs(a);
    const StateVector k2 = rhs(a + (dt / 2) * k1);
    const StateVector k3 = rhs(a + (dt / 2) * k2);
    const StateVector k4 = rhs(a + dt * k3);
    a += (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return a;
}

}  // namespace

TEST_CASE("config validation enforces the documented constraints") {
  CHECK_THROWS_AS(ModelConfig::with_beta(8, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(ModelConfig::with_beta(8, 0.5), std::invalid_argument);
  const auto good = ModelConfig::with_beta(8, 0.4);
  CHECK(good.mu == doctest::Approx(std::pow(8.0, 0.4)).epsilon(1e-14));
  auto bad = good;
  bad.mu = 1.7;  // no longer equals N^beta
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = good;
  bad.dt = 0.2;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = good;
  bad.profile = "sawtooth";
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  auto free_mu = ModelConfig::with_mu(8, 1.7);
  free_mu.validate();  // explicit-mu configs carry no beta constraint
  CHECK(free_mu.kinetic_time() == doctest::Approx(64.0 / std::pow(1.7, 4)));
}

TEST_CASE("initial data evaluates the profile on the lattice") {
  auto cfg = ModelConfig::with_mu(2, 1.0);
  cfg.profile = "constant";
  StateVector a = dyn::initial_data(cfg);
  REQUIRE(a.size() == 5);
  for (int i = 0; i < 5; ++i) CHECK(a(i) == cd(1.0, 0.0));

  cfg.profile = "parabola";
  a = dyn::initial_data(cfg);
  CHECK(a(0) == cd(0.0));
  CHECK(a(1) == cd(0.75));
  CHECK(a(2) == cd(1.0));
  CHECK(a(3) == cd(0.75));
  CHECK(a(4) == cd(0.0));
}

TEST_CASE("lattice mass approaches the profile integral like 1/N") {
  // ||a(0)||^2/(2N+1) -> (1/2) integral |A|^2 = 8/15 for the parabola
  const double target = 0.5 * adaptive_simpson(
                                  [](double x) {
                                    const double v = 1.0 - x * x;
                                    return v * v;
                                  },
                                  -1.0, 1.0, 1e-13);
  CHECK(target == doctest::Approx(8.0 / 15.0).epsilon(1e-12));
  double err[2];
  int i = 0;
  for (int n : {50, 100}) {
    auto cfg = ModelConfig::with_mu(n, 1.0);
    cfg.profile = "parabola";
    const StateVector a = dyn::initial_data(cfg);
    err[i++] = std::abs(a.squaredNorm() / (2 * n + 1) - target);
  }
  CHECK(err[0] < 2.0 / 50.0);
  CHECK(err[1] < 0.7 * err[0]);
}

TEST_CASE("nonlinearity closes against the kernel sum oracle") {
  const int half = 3, d = 7;
  const auto spec = sampled_spec(half, 321);
  const StateVector a = random_state(d, 77);
  const double mu = 1.3;
  const StateVector fast = dyn::wick_nonlinearity(a, spec, mu);

  // kernel route: (mu^2/N) sum_{lmn} gamma(k,l,m,n) a_l conj(a_m) a_n
  StateVector slow = StateVector::Zero(d);
  for (int k = 0; k < d; ++k) {
    cd acc = 0.0;
    for (int l = 0; l < d; ++l)
      for (int m = 0; m < d; ++m)
        for (int n = 0; n < d; ++n)
          acc += wg::gamma_kernel(spec.psi, k, l, m, n) * a(l) * std::conj(a(m)) * a(n);
    slow(k) = acc * mu * mu / double(half);
  }
  CHECK((fast - slow).cwiseAbs().maxCoeff() < 1e-12 * fast.cwiseAbs().maxCoeff());

  // zero input, unit-vector hand case with Psi = identity
  CHECK(dyn::wick_nonlinearity(StateVector::Zero(d), spec, mu).cwiseAbs().maxCoeff() == 0.0);
  rmt::SpectralData flat;
  flat.half_size = half;
  flat.lambda = Eigen::VectorXd::Zero(d);
  flat.psi = Eigen::MatrixXcd::Identity(d, d);
  StateVector ek = StateVector::Zero(d);
  ek(2) = 1.0;
  const StateVector out = dyn::wick_nonlinearity(ek, flat, mu);
  const double expect = mu * mu / half * (2.0 * half - 1.0) / (2.0 * half + 1.0);
  CHECK(std::abs(out(2) - cd(expect)) < 1e-14);
  CHECK_THROWS_AS(dyn::wick_nonlinearity(StateVector::Zero(3), spec, mu), std::invalid_argument);
}

TEST_CASE("zero coupling gives the exact linear flow") {
  const int half = 6;
  const auto spec = sampled_spec(half, 9);
  auto cfg = ModelConfig::with_mu(half, 0.0);
  cfg.t_end = 10.0;
  cfg.dt = 0.05;
  const StateVector a0 = random_state(spec.dim(), 4);
  const auto traj = dyn::evolve(cfg, spec, a0, {0.0, 10.0});
  for (int i = 0; i < spec.dim(); ++i) {
    const cd expect = std::exp(cd(0.0, -10.0 * spec.lambda(i))) * a0(i);
    CHECK(std::abs(traj.states[1](i) - expect) < 1e-10);
  }
}

TEST_CASE("mass and hamiltonian are conserved along the flow") {
  const int half = 16;
  const auto spec = sampled_spec(half, 1234);
  auto cfg = ModelConfig::with_beta(16, 0.4);
  cfg.t_end = 5.0;
  cfg.dt = 0.01;
  const auto traj = dyn::evolve(cfg, spec, dyn::initial_data(cfg), {0.0, 5.0});
  const double m0 = traj.mass_log.front();
  const double h0 = traj.hamiltonian_log.front();
  for (double m : traj.mass_log) CHECK(std::abs(m - m0) < 1e-9 * m0);
  for (double h : traj.hamiltonian_log) CHECK(std::abs(h - h0) < 1e-6 * std::abs(h0));
}

TEST_CASE("integrator converges at fourth order") {
  const int half = 4;
  const auto spec = sampled_spec(half, 55);
  auto cfg = ModelConfig::with_mu(half, 2.0);
  cfg.t_end = 1.0;
  const StateVector a0 = dyn::initial_data(cfg);
  const auto run = [&](double dt) {
    auto c = cfg;
    c.dt = dt;
    return dyn::evolve(c, spec, a0, {1.0}).states[0];
  };
  const StateVector ref = run(0.04 / 8);
  const double e1 = (run(0.04) - ref).norm();
  const double e2 = (run(0.02) - ref).norm();
  CHECK(e1 / e2 > 12.0);
  CHECK(e1 / e2 < 20.0);
}

TEST_CASE("global phases commute with the flow") {
  const int half = 5;
  const auto spec = sampled_spec(half, 31);
  auto cfg = ModelConfig::with_mu(half, 1.5);
  cfg.t_end = 2.0;
  cfg.dt = 0.01;
  const StateVector a0 = random_state(spec.dim(), 8);
  const cd phase = std::exp(cd(0.0, 0.8318));
  const auto t1 = dyn::evolve(cfg, spec, a0, {2.0});
  const auto t2 = dyn::evolve(cfg, spec, phase * a0, {2.0});
  CHECK((t2.states[0] - phase * t1.states[0]).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("wick ordering changes only a global phase against the plain flow") {
  const int half = 4;
  const auto spec = sampled_spec(half, 12);
  const double mu = 1.2, t_end = 1.0, dt = 1e-3;
  auto cfg = ModelConfig::with_mu(half, mu);
  cfg.t_end = t_end;
  cfg.dt = dt;
  const StateVector a0 = dyn::initial_data(cfg);
  const StateVector awo = dyn::evolve(cfg, spec, a0, {t_end}).states[0];
  const StateVector plain = integrate_plain(spec, mu, a0, t_end, dt);
  // moduli agree
  CHECK((awo.cwiseAbs() - plain.cwiseAbs()).cwiseAbs().maxCoeff() < 1e-8);
  // and the phase offset is exactly the Wick rotation e^{-ict}, c = (mu^2/N) 2 M/(2N+1)
  const double c = mu * mu / half * 2.0 * a0.squaredNorm() / (2.0 * half + 1.0);
  const StateVector rotated = std::exp(cd(0.0, -c * t_end)) * awo;
  CHECK((rotated - plain).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("conjugate system runs the flow backwards") {
  const int half = 5;
  const auto spec = sampled_spec(half, 2718);
  auto cfg = ModelConfig::with_mu(half, 1.4);
  cfg.t_end = 1.5;
  cfg.dt = 0.005;
  const StateVector a0 = random_state(spec.dim(), 3);
  const StateVector at = dyn::evolve(cfg, spec, a0, {1.5}).states[0];
  rmt::SpectralData conj_spec = spec;
  conj_spec.psi = spec.psi.conjugate();
  const StateVector back =
      dyn::evolve(cfg, conj_spec, at.conjugate(), {1.5}).states[0].conjugate();
  CHECK((back - a0).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("evolve reports blow-up with a time stamp") {
  const int half = 3;
  const auto spec = sampled_spec(half, 66);
  auto cfg = ModelConfig::with_mu(half, 1.0);
  cfg.t_end = 1.0;
  StateVector a0 = StateVector::Ones(spec.dim());
  a0(0) = cd(std::numeric_limits<double>::infinity(), 0.0);
  CHECK_THROWS_AS(dyn::evolve(cfg, spec, a0), std::runtime_error);
}

TEST_CASE("observables agree between matrix and eigenvalue routes") {
  const int half = 6;
  Rng rng(444);
  const auto h = rmt::sample_gue(half, rng);
  const auto spec = rmt::spectral_decompose(h);
  const StateVector a = random_state(spec.dim(), 5);
  const double mu = 1.1;
  const auto obs = dyn::observables(a, h, mu, spec.psi);
  CHECK(obs.mass_a == doctest::Approx(a.squaredNorm()).epsilon(1e-14));
  CHECK(obs.mass_u == doctest::Approx(a.squaredNorm() / half).epsilon(1e-14));
  CHECK(obs.hamiltonian ==
        doctest::Approx(dyn::hamiltonian_from_eigenvalues(a, spec, mu)).epsilon(1e-12));
  const auto zero = dyn::observables(StateVector::Zero(spec.dim()), h, mu, spec.psi);
  CHECK(zero.mass_a == 0.0);
  CHECK(zero.hamiltonian == 0.0);
}

TEST_CASE("ensemble moments: exact linear case and bitwise determinism") {
  auto cfg = ModelConfig::with_mu(4, 0.0);
  cfg.t_end = 2.0;
  cfg.dt = 0.05;
  cfg.profile = "parabola";
  const auto mom = dyn::ensemble_expectation(cfg, 4, 99, {0.0, 2.0}, 2);
  const StateVector a0 = dyn::initial_data(cfg);
  for (const auto& m : mom) {
    CHECK((m.mean - a0.cwiseAbs2().real()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(m.stderr_.maxCoeff() < 1e-12);
  }
  auto cfg2 = ModelConfig::with_beta(4, 0.3);
  cfg2.t_end = 1.0;
  cfg2.dt = 0.02;
  const auto m1 = dyn::ensemble_expectation(cfg2, 6, 2024, {1.0}, 1);
  const auto m4 = dyn::ensemble_expectation(cfg2, 6, 2024, {1.0}, 4);
  CHECK((m1[0].mean - m4[0].mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((m1[0].stderr_ - m4[0].stderr_).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(dyn::ensemble_expectation(cfg2, 1, 1, {1.0}), std::invalid_argument);
}

TEST_CASE("standard errors shrink like one over root n") {
  auto cfg = ModelConfig::with_beta(6, 0.35);
  cfg.t_end = 1.0;
  cfg.dt = 0.02;
  const auto small = dyn::ensemble_expectation(cfg, 32, 7, {1.0}, 0);
  const auto large = dyn::ensemble_expectation(cfg, 128, 7, {1.0}, 0);
  const double r = small[0].stderr_.mean() / large[0].stderr_.mean();
  CHECK(r > 1.5);  // expect ~2 for a 4x sample increase
  CHECK(r < 2.6);
}

TEST_CASE("exports carry the documented columns") {
  auto cfg = ModelConfig::with_mu(2, 0.0);
  cfg.t_end = 1.0;
  cfg.dt = 0.05;
  const auto mom = dyn::ensemble_expectation(cfg, 2, 5, {0.0, 1.0});
  const auto csv = dyn::moments_to_csv(mom, cfg.half_size);
  CHECK(csv.rfind("t,k,mean,stderr\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 5);
  const auto js = dyn::moments_to_json(mom, cfg);
  CHECK(js.find("\"half_size\"") != std::string::npos);
  CHECK(js.find("\"stderr\"") != std::string::npos);
}
