#include "rmwave/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace rmwave::dyn {

namespace {

double default_param(const ModelConfig& cfg, std::size_t i, double fallback) {
  return i < cfg.profile_params.size() ? cfg.profile_params[i] : fallback;
}

}  // namespace

ModelConfig ModelConfig::with_beta(int half_size, double beta) {
  ModelConfig cfg;
  cfg.half_size = half_size;
  cfg.beta = beta;
  cfg.mu = std::pow(static_cast<double>(half_size), beta);
  cfg.validate();
  return cfg;
}

ModelConfig ModelConfig::with_mu(int half_size, double mu) {
  ModelConfig cfg;
  cfg.half_size = half_size;
  cfg.mu = mu;
  cfg.validate();
  return cfg;
}

void ModelConfig::validate() const {
  if (half_size < 1) throw std::invalid_argument("ModelConfig: half_size must be >= 1");
  if (beta) {
    if (!(*beta > 0.25 && *beta < 0.5))
      throw std::invalid_argument("ModelConfig: beta must lie in (1/4, 1/2)");
    const double want = std::pow(static_cast<double>(half_size), *beta);
    if (std::abs(mu - want) > 1e-12 * std::max(1.0, want))
      throw std::invalid_argument("ModelConfig: mu must equal half_size^beta");
  }
  if (!(mu >= 0.0) || !std::isfinite(mu))
    throw std::invalid_argument("ModelConfig: mu must be finite and >= 0");
  if (!(dt > 0.0 && dt <= 0.1))
    throw std::invalid_argument("ModelConfig: dt must lie in (0, 0.1]");
  if (!(t_end >= 0.0)) throw std::invalid_argument("ModelConfig: t_end must be >= 0");
  evaluate_profile(0.0);  // rejects unknown profile names
}

double ModelConfig::evaluate_profile(double x) const {
  if (profile == "constant") return default_param(*this, 0, 1.0);
  if (profile == "parabola") return default_param(*this, 0, 1.0) * (1.0 - x * x);
  if (profile == "gaussian")
    return default_param(*this, 0, 1.0) * std::exp(-default_param(*this, 1, 4.0) * x * x);
  if (profile == "cosine")
    return default_param(*this, 0, 1.0) * 0.5 * (1.0 + std::cos(M_PI * x));
  throw std::invalid_argument("ModelConfig: unknown profile '" + profile + "'");
}

double ModelConfig::kinetic_time() const {
  const double n = half_size;
  return n * n / (mu * mu * mu * mu);
}

StateVector initial_data(const ModelConfig& cfg) {
  cfg.validate();
  const int n = cfg.half_size;
  StateVector a(2 * n + 1);
  for (int k = -n; k <= n; ++k)
    a(k + n) = cfg.evaluate_profile(static_cast<double>(k) / n);
  return a;
}

StateVector wick_nonlinearity(const StateVector& a, const rmt::SpectralData& spec, double mu) {
  const int d = spec.dim();
  if (a.size() != d) throw std::invalid_argument("wick_nonlinearity: dimension mismatch");
  const Eigen::VectorXcd w = spec.psi * a;
  StateVector out = spec.psi.adjoint() * (w.array() * w.array().abs2()).matrix();
  out -= (2.0 * a.squaredNorm() / d) * a;
  out *= mu * mu / spec.half_size;
  return out;
}

double hamiltonian_from_eigenvalues(const StateVector& a, const rmt::SpectralData& spec,
                                    double mu) {
  const int d = spec.dim();
  if (a.size() != d) throw std::invalid_argument("hamiltonian: dimension mismatch");
  const double n = spec.half_size;
  const double quad = spec.lambda.dot(a.cwiseAbs2()) / n;
  const double l4 = (spec.psi * a).array().abs2().square().sum() / (n * n);
  return quad + 0.5 * mu * mu * l4;
}

Observables observables(const StateVector& a, const Eigen::MatrixXcd& h, double mu,
                        const Eigen::MatrixXcd& psi) {
  if (a.size() != h.rows() || h.rows() != h.cols() || psi.rows() != h.rows() ||
      psi.cols() != h.cols())
    throw std::invalid_argument("observables: dimension mismatch");
  const double n = (static_cast<double>(h.rows()) - 1.0) / 2.0;
  Observables obs;
  obs.mass_a = a.squaredNorm();
  obs.mass_u = obs.mass_a / n;
  const Eigen::VectorXcd u = (psi * a) / std::sqrt(n);
  const double quad = (u.adjoint() * (h * u)).value().real();
  obs.hamiltonian = quad + 0.5 * mu * mu * u.array().abs2().square().sum();
  return obs;
}

Trajectory evolve(const ModelConfig& cfg, const rmt::SpectralData& spec, const StateVector& a0,
                  std::vector<double> sample_times) {
  cfg.validate();
  if (spec.half_size != cfg.half_size)
    throw std::invalid_argument("evolve: spectral data does not match config size");
  if (a0.size() != spec.dim()) throw std::invalid_argument("evolve: state dimension mismatch");

  if (sample_times.empty()) sample_times = {0.0, cfg.t_end};
  std::sort(sample_times.begin(), sample_times.end());
  if (sample_times.front() < 0.0 || sample_times.back() > cfg.t_end + 1e-12)
    throw std::invalid_argument("evolve: sample times must lie in [0, t_end]");

  const auto phase = [&](double t) {
    return (std::complex<double>(0.0, -t) * spec.lambda.array().cast<std::complex<double>>())
        .exp();
  };
  // f' = -i e^{i t Lambda} Nl(e^{-i t Lambda} f)
  const auto rhs = [&](double t, const StateVector& f) -> StateVector {
    const auto ph = phase(t);  // e^{-i t lambda}
    const StateVector nl = wick_nonlinearity((f.array() * ph).matrix(), spec, cfg.mu);
    return (std::complex<double>(0.0, -1.0) * nl.array() / ph).matrix();
  };

  Trajectory traj;
  StateVector f = a0;
  double t = 0.0;
  std::size_t next = 0;
  const auto record_step = [&](double tt, const StateVector& ff) {
    traj.step_times.push_back(tt);
    traj.mass_log.push_back(ff.squaredNorm());
    traj.hamiltonian_log.push_back(
        hamiltonian_from_eigenvalues((ff.array() * phase(tt)).matrix(), spec, cfg.mu));
  };
  record_step(0.0, f);
  while (next < sample_times.size() && sample_times[next] <= 1e-14) {
    traj.times.push_back(0.0);
    traj.states.push_back(a0);
    ++next;
  }

  while (next < sample_times.size()) {
    const double target = sample_times[next];
    const double h = std::min(cfg.dt, target - t);
    if (h <= 0) {  // duplicate sample time
      traj.times.push_back(target);
      traj.states.push_back((f.array() * phase(t)).matrix());
      ++next;
      continue;
    }
    const StateVector k1 = rhs(t, f);
    const StateVector k2 = rhs(t + h / 2, f + (h / 2) * k1);
    const StateVector k3 = rhs(t + h / 2, f + (h / 2) * k2);
    const StateVector k4 = rhs(t + h, f + h * k3);
    f += (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
    t += h;
    if (!f.allFinite())
      throw std::runtime_error("evolve: state blew up at t = " + std::to_string(t));
    record_step(t, f);
    if (t >= target - 1e-12) {
      traj.times.push_back(target);
      traj.states.push_back((f.array() * phase(t)).matrix());
      ++next;
    }
  }
  return traj;
}

std::vector<EnsembleMoment> ensemble_expectation(const ModelConfig& cfg, int n_samples,
                                                 std::uint64_t master_seed,
                                                 const std::vector<double>& sample_times,
                                                 int threads) {
  cfg.validate();
  if (n_samples < 2) throw std::invalid_argument("ensemble_expectation: need n_samples >= 2");
  if (sample_times.empty())
    throw std::invalid_argument("ensemble_expectation: need at least one sample time");

  const int d = 2 * cfg.half_size + 1;
  const std::size_t nt = sample_times.size();
  // per-sample |a_k(t)|^2, filled in parallel, reduced in index order
  std::vector<Eigen::MatrixXd> abs2(n_samples);
  std::vector<std::string> failures(n_samples);

  parallel_for(static_cast<std::size_t>(n_samples), threads, [&](std::size_t i) {
    try {
      Rng rng(derive_seed(master_seed, i));
      const auto spec = rmt::spectral_decompose(rmt::sample_gue(cfg.half_size, rng));
      const auto traj = evolve(cfg, spec, initial_data(cfg), sample_times);
      Eigen::MatrixXd m(nt, d);
      for (std::size_t j = 0; j < nt; ++j) m.row(j) = traj.states[j].cwiseAbs2().transpose();
      abs2[i] = std::move(m);
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  });
  for (int i = 0; i < n_samples; ++i)
    if (!failures[i].empty())
      throw std::runtime_error("ensemble_expectation: sample " + std::to_string(i) +
                               " failed: " + failures[i]);

  std::vector<EnsembleMoment> out(nt);
  for (std::size_t j = 0; j < nt; ++j) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(d), sumsq = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < n_samples; ++i) {
      const auto row = abs2[i].row(j).transpose();
      sum += row;
      sumsq += row.cwiseProduct(row);
    }
    EnsembleMoment m;
    m.t = sample_times[j];
    m.samples = n_samples;
    m.mean = sum / n_samples;
    const Eigen::VectorXd var =
        (sumsq - sum.cwiseProduct(sum) / n_samples).cwiseMax(0.0) / (n_samples - 1);
    m.stderr_ = (var / n_samples).cwiseSqrt();
    out[j] = std::move(m);
  }
  return out;
}

std::string moments_to_csv(const std::vector<EnsembleMoment>& moments, int half_size) {
  std::string s = "t,k,mean,stderr\n";
  char buf[128];
  for (const auto& m : moments)
    for (int k = -half_size; k <= half_size; ++k) {
      std::snprintf(buf, sizeof buf, "%.17g,%d,%.17g,%.17g\n", m.t, k, m.mean(k + half_size),
                    m.stderr_(k + half_size));
      s += buf;
    }
  return s;
}

std::string moments_to_json(const std::vector<EnsembleMoment>& moments, const ModelConfig& cfg) {
  nlohmann::json j;
  j["half_size"] = cfg.half_size;
  j["mu"] = cfg.mu;
  if (cfg.beta) j["beta"] = *cfg.beta;
  j["profile"] = cfg.profile;
  j["samples"] = moments.empty() ? 0 : moments.front().samples;
  j["times"] = nlohmann::json::array();
  j["mean"] = nlohmann::json::array();
  j["stderr"] = nlohmann::json::array();
  for (const auto& m : moments) {
    j["times"].push_back(m.t);
    j["mean"].push_back(std::vector<double>(m.mean.data(), m.mean.data() + m.mean.size()));
    j["stderr"].push_back(
        std::vector<double>(m.stderr_.data(), m.stderr_.data() + m.stderr_.size()));
  }
  return j.dump(2);
}

std::string trajectory_to_csv(const Trajectory& traj, int half_size) {
  std::string s = "t,k,re,im\n";
  char buf[160];
  for (std::size_t j = 0; j < traj.times.size(); ++j)
    for (int k = -half_size; k <= half_size; ++k) {
      const auto v = traj.states[j](k + half_size);
      std::snprintf(buf, sizeof buf, "%.17g,%d,%.17g,%.17g\n", traj.times[j], k, v.real(),
                    v.imag());
      s += buf;
    }
  return s;
}

void save_text(const std::string& text, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_text: cannot open " + path);
  out << text;
  if (!out) throw std::runtime_error("save_text: write failed for " + path);
}

}  // namespace rmwave::dyn
