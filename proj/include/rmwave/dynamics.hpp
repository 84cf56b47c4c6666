// Wick-ordered cubic dynamics in the eigenbasis of a sampled Hamiltonian:
// initial data profiles, the nonlinearity, an interaction-picture RK4 flow,
// conserved-quantity observables, and seeded parallel ensemble averaging.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rmwave/common.hpp"
#include "rmwave/rmt.hpp"

namespace rmwave::dyn {

// Amplitudes a_k, k = -N..N, stored at index k + N.
using StateVector = Eigen::VectorXcd;

struct ModelConfig {
  int half_size = 8;           // N
  std::optional<double> beta;  // in (1/4, 1/2); when set, mu == N^beta is enforced
  double mu = 1.0;
  std::string profile = "parabola";    // initial data A(x) on [-1, 1]
  std::vector<double> profile_params;  // per-profile parameters, defaulted when empty
  double t_end = 1.0;
  double dt = 0.01;

  static ModelConfig with_beta(int half_size, double beta);
  static ModelConfig with_mu(int half_size, double mu);

  // Throws std::invalid_argument on any violated constraint (N >= 1,
  // beta range and mu = N^beta when beta is set, 0 < dt <= 0.1, t_end >= 0,
  // known profile name).
  void validate() const;

  double evaluate_profile(double x) const;        // A(x)
  double kinetic_time() const;                    // N^2 / mu^4
};

// a_k(0) = A(k/N).
StateVector initial_data(const ModelConfig& cfg);

// (mu^2/N) [ Psi^*(|Psi a|^2 (Psi a)) - (2 ||a||^2 / (2N+1)) a ].
// No linear phases; callers work in the interaction picture.
StateVector wick_nonlinearity(const StateVector& a, const rmt::SpectralData& spec, double mu);

struct Trajectory {
  std::vector<double> times;       // requested sample times, ascending
  std::vector<StateVector> states;
  std::vector<double> step_times;  // every accepted integrator step
  std::vector<double> mass_log;        // ||a||^2 per step
  std::vector<double> hamiltonian_log; // H(u) per step, u = Psi a / sqrt(N)
};

// RK4 on the profile f(t) = e^{it Lambda} a(t); the linear phases are applied
// analytically, so only the nonlinearity is stepped. Sample times are hit
// exactly by shortened steps. Empty sample_times records t = 0 and t_end.
// Throws std::runtime_error with the time stamp if the state stops being
// finite.
Trajectory evolve(const ModelConfig& cfg, const rmt::SpectralData& spec, const StateVector& a0,
                  std::vector<double> sample_times = {});

struct Observables {
  double mass_a = 0.0;       // ||a||^2
  double mass_u = 0.0;       // ||u||^2 = ||a||^2 / N
  double hamiltonian = 0.0;  // <u, H u> + (mu^2/2) ||u||_4^4
};

// Literal evaluation from the matrices with u = Psi a / sqrt(N).
Observables observables(const StateVector& a, const Eigen::MatrixXcd& h, double mu,
                        const Eigen::MatrixXcd& psi);

// Same Hamiltonian through the eigenvalue shortcut <u, H u> = sum_k lambda_k |a_k|^2 / N.
double hamiltonian_from_eigenvalues(const StateVector& a, const rmt::SpectralData& spec,
                                    double mu);

struct EnsembleMoment {
  double t = 0.0;
  Eigen::VectorXd mean;    // per-k mean of |a_k(t)|^2
  Eigen::VectorXd stderr_; // per-k standard error of the mean
  int samples = 0;
};

// Independent (lambda, Psi) per sample from fresh GUE draws seeded by
// derive_seed(master_seed, index). Samples run in parallel; the reduction is
// single threaded in index order, so results are bitwise deterministic for
// any worker count. Any sample failure aborts the run.
std::vector<EnsembleMoment> ensemble_expectation(const ModelConfig& cfg, int n_samples,
                                                 std::uint64_t master_seed,
                                                 const std::vector<double>& sample_times,
                                                 int threads = 0);

// CSV columns: t, k, mean, stderr (17 significant digits).
std::string moments_to_csv(const std::vector<EnsembleMoment>& moments, int half_size);
std::string moments_to_json(const std::vector<EnsembleMoment>& moments,
                            const ModelConfig& cfg);
std::string trajectory_to_csv(const Trajectory& traj, int half_size);
void save_text(const std::string& text, const std::string& path);

}  // namespace rmwave::dyn
