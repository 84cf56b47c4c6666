// Random-matrix layer: GUE and Haar sampling, spectral data, semicircle
// dispersion, and spectral-statistics diagnostics.
#pragma once

#include <Eigen/Dense>
#include <string>

#include "rmwave/common.hpp"

namespace rmwave::rmt {

using HermitianMatrix = Eigen::MatrixXcd;
using UnitaryMatrix = Eigen::MatrixXcd;

// Eigen-decomposition of a (2N+1)-dimensional Hermitian matrix with the mode
// index running over k in [-N, N] (storage index k + N).
struct SpectralData {
  int half_size = 0;        // N
  Eigen::VectorXd lambda;   // eigenvalues, ascending
  Eigen::MatrixXcd psi;     // unitary; column k+N is the eigenvector of lambda(k+N)

  int dim() const { return 2 * half_size + 1; }
};

// GUE draw with sqrt(2N+1)-rescaled entries standard normal: complex standard
// normal above the diagonal, real standard normal on it.
HermitianMatrix sample_gue(int half_size, Rng& rng);

// Exact Haar unitary: QR of a complex Ginibre matrix with the R-diagonal
// phase ambiguity removed.
UnitaryMatrix sample_haar_unitary(int dim, Rng& rng);

// Sorted eigensystem with deterministic eigenvector phases (largest-modulus
// entry of each column made real positive). Validates hermiticity and the
// reconstruction residual.
SpectralData spectral_decompose(const HermitianMatrix& h);

// Semicircle measure sigma(x) = (1/2pi) sqrt((4-x^2)_+).
double semicircle_density(double x);
// Closed-form integral of sigma from 0 to x (odd in x, clamped to |x| <= 2).
double semicircle_cdf0(double x);

// Dispersion nu: odd increasing bijection [-1,1] -> [-2,2] defined by
// integral_0^{nu(kappa)} dsigma = kappa/2. Solved by safeguarded Newton.
double nu(double kappa);
double nu_prime(double kappa);   // pi * (4 - nu^2)^{-1/2} on (-1,1)
double nu_inverse(double x);     // closed form: 2 * semicircle_cdf0(x)

// r_k = (lambda_k - nu(k/N)) * N^{2/3} * (N+1-|k|)^{1/3}, k in [-N, N].
Eigen::VectorXd rigidity_residuals(const SpectralData& s);

struct LocalLawCount {
  int count = 0;
  double prediction = 0.0;
};
// Eigenvalue count on [a,b] against (2N+1) * semicircle mass.
LocalLawCount local_law_count(const SpectralData& s, double a, double b);

// sum_k (1/T + |lambda_k - alpha|)^{-1}; requires T >= 1.
double resolvent_sum(const SpectralData& s, double alpha, double T);

// JSON container: {"dim": d, "lambda": [...], "psi": [re,im,...] row-major}.
std::string to_json(const SpectralData& s);
SpectralData spectral_from_json(const std::string& text);
void save_spectral(const SpectralData& s, const std::string& path);
SpectralData load_spectral(const std::string& path);

}  // namespace rmwave::rmt
