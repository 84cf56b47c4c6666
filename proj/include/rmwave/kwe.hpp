// Homogeneous kinetic wave equation on [-1, 1] with semicircle dispersion:
// collision operator with the resonance delta resolved analytically, RK4 time
// stepping with positivity monitoring, conserved functionals (mass, energy),
// entropy, and the Rayleigh-Jeans stationary family.
//
// The collision operator acts on a spectral density rho(k) >= 0:
//
//   C[rho](k) = (1/2) integral over (l, m) in [-1,1]^2 of
//               (4 - x*^2)_+^{1/2} * { rho(l)rho(m)rho(n*) - rho(k)rho(m)rho(n*)
//                                     + rho(k)rho(l)rho(n*) - rho(k)rho(l)rho(m) }
//
// where x* = nu(k) - nu(l) + nu(m) and n* = nu_inverse(x*) whenever |x*| < 2
// (the integrand vanishes otherwise).  The square-root weight is the exact
// Jacobian of resolving the dispersion delta in the fourth variable.  The
// four-term bracket is division free, so densities with isolated zeros are
// admissible.
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "rmwave/dynamics.hpp"

namespace rmwave::kwe {

// Density samples on the uniform grid k_i = -1 + 2 i / (G - 1), i = 0..G-1.
// Invariant (enforced where consumed): values are non-negative.
struct SpectralDensity {
  Eigen::VectorXd values;

  int grid_size() const { return static_cast<int>(values.size()); }
  double node(int i) const {
    return -1.0 + 2.0 * static_cast<double>(i) / (grid_size() - 1);
  }
  Eigen::VectorXd nodes() const;

  static SpectralDensity from_function(const std::function<double(double)>& f,
                                       int grid_size);
};

// Quadrature settings for the collision integral.
//   quadrature_order  Gauss-Legendre order per axis, at least 16.
//   aligned           true: integrate in resonance-aligned coordinates that
//                     absorb every square-root factor (spectral accuracy on
//                     smooth data; the production default).
//                     false: plain Gauss-Legendre directly in (l, m); retains
//                     the square-root cutoff in the integrand, which limits
//                     convergence to an algebraic rate.  Kept as a diagnostic
//                     because its error decay under order-doubling is a
//                     clean consistency signal.
//   threads           worker threads across output nodes (0 = hardware).
struct CollisionConfig {
  int quadrature_order = 32;
  bool aligned = true;
  int threads = 0;

  void validate() const;  // throws std::invalid_argument on violation
};

// Collision operator on grid data.  Off-grid density values are obtained by
// cubic interpolation through the grid samples, parametrized by the
// dispersion variable x = nu(k) (the natural smooth coordinate for densities
// transported by the resonant dynamics) and clamped to >= 0.
// Throws std::domain_error if any input value is negative.
SpectralDensity collision_operator(const SpectralDensity& rho,
                                   const CollisionConfig& cc);

// Collision operator for an analytically known density profile; evaluates
// rho by calling `rho_of_k` (values clamped to >= 0) instead of
// interpolating grid samples.  Returns C[rho] on the uniform grid.
Eigen::VectorXd collision_operator(const std::function<double(double)>& rho_of_k,
                                   int grid_size, const CollisionConfig& cc);

// C[rho] at a single output position k in [-1, 1] (callable density); the
// same quadrature as the grid variant.  Useful for integrating the collision
// output against test functions at off-grid nodes.
double collision_at(const std::function<double(double)>& rho_of_k, double k,
                    const CollisionConfig& cc);

// Cubic interpolation of grid samples at position k in [-1, 1] (clamped to
// >= 0); the rule used by the grid-data collision operator.
double interpolate_density(const SpectralDensity& rho, double k);

// Brute-force evaluation of the collision integral with the resonance delta
// replaced by a Gaussian of width eps, as a triple integral over (l, m, n)
// in [-1,1]^3 with tensor Gauss-Legendre quadrature of order q per axis.
// Converges to C[rho](k) as eps -> 0 (error O(eps^2)); used as an
// independent oracle for the delta-resolved production path.
double mollified_collision(const std::function<double(double)>& rho_of_k,
                           double k, double eps, int q);

// RK4 time stepping of d(rho)/dt = C[rho].  Positivity is monitored: a step
// driving any node below a small negative tolerance is rejected and retried
// with half the step size; persistent rejection (step size below 2^-10 of
// the requested dt) throws std::runtime_error.  Accepted states have
// within-tolerance negative values floored at zero.  All accepted states are
// recorded, including the initial one.
struct Solution {
  std::vector<double> times;
  std::vector<SpectralDensity> states;
};
Solution solve(const SpectralDensity& rho0, double t_end, double dt,
               const CollisionConfig& cc);

// Composite quadrature weights for the uniform grid.  Interior panels use
// Simpson's rule; the six nodes nearest each endpoint use moment-fitted
// weights that integrate u^{j/3} for j = 0, 2, 3, 4, 5, 6 exactly (u =
// distance to the endpoint).  The fractional powers are deliberate: the
// dispersion nu behaves like 2 - c (1 -+ k)^{2/3} at the edges, so densities
// and collision outputs generically carry (1 -+ k)^{2/3}-type endpoint terms
// which plain Simpson integrates poorly.  Falls back to Simpson (odd G < 15)
// or the trapezoid rule (even G).
Eigen::VectorXd quadrature_weights(int grid_size);

// Mass, energy, and entropy of a density, via quadrature_weights:
//   mass = integral of rho, energy = integral of nu * rho,
//   entropy = integral of log(rho).
// Entropy requires strictly positive values; violations throw
// std::domain_error.  Mass and energy remain well defined for densities
// touching zero: pass include_entropy = false to skip the entropy column
// (it is then reported as -infinity).
struct Functionals {
  double mass = 0.0;
  double energy = 0.0;
  double entropy = 0.0;
};
Functionals functionals(const SpectralDensity& rho, bool include_entropy = true);

// Integral of grid samples with quadrature_weights (no sign restriction);
// the rule behind functionals(), exposed for weak-form residual checks.
double integrate(const Eigen::VectorXd& values_on_grid);

// Stationary Rayleigh-Jeans density alpha / (beta + nu(k)).  Requires
// alpha > 0 (std::invalid_argument) and beta > 2 (std::domain_error; beta
// must exceed the range of nu so the density is positive).
SpectralDensity rayleigh_jeans(double alpha, double beta, int grid_size);

// Leading-order prediction for the squared mode amplitudes of the random
// matrix model with initial profile A: |A(k)|^2 + (t / T_kin) C[|A|^2](k)
// with T_kin = N^2 / mu^4.  The collision term is evaluated from the
// analytic profile.  Requires t >= 0.
SpectralDensity leading_order_prediction(const dyn::ModelConfig& cfg, double t,
                                         int grid_size,
                                         const CollisionConfig& cc);

// CSV export of a time series, header "t,k,rho", 17 significant digits.
std::string solution_to_csv(const Solution& sol);

}  // namespace rmwave::kwe
