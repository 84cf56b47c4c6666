#include "rmwave/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rmwave/common.hpp"
#include "rmwave/duhamel.hpp"
#include "rmwave/rmt.hpp"
#include "rmwave/weingarten.hpp"

namespace rmwave::harness {

namespace {

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Least-squares slope of y against x.
double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Rebuilds a model at a different lattice size, preserving the scaling rule:
// when beta is set, mu is recomputed as half_size^beta; otherwise mu is kept.
dyn::ModelConfig resize_model(const dyn::ModelConfig& base, int half_size) {
  dyn::ModelConfig out = base.beta
                             ? dyn::ModelConfig::with_beta(half_size, *base.beta)
                             : dyn::ModelConfig::with_mu(half_size, base.mu);
  out.profile = base.profile;
  out.profile_params = base.profile_params;
  out.t_end = base.t_end;
  out.dt = base.dt;
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Averaging kernel
// ---------------------------------------------------------------------------

double phi_kernel(double x) {
  const double ax = std::abs(x);
  if (ax < 1e-4) {
    const double x2 = x * x;
    return 0.25 - x2 / 48.0 + x2 * x2 / 1440.0;
  }
  const double s = std::sin(0.5 * x);
  return s * s / (x * x);
}

DeltaLimitReport delta_limit_check(const std::function<double(double)>& h,
                                   std::vector<double> ts) {
  if (ts.empty()) ts = {4, 8, 16, 32, 64, 128, 256};
  for (double t : ts)
    if (!(t >= 1.0))
      throw std::invalid_argument("delta_limit_check: all t must be >= 1");
  std::sort(ts.begin(), ts.end());

  DeltaLimitReport rep;
  rep.ts = ts;
  const double h0 = h(0.0);
  for (double t : ts) {
    // Panel count tracks the oscillation scale 2pi/t of phi(tx), so the
    // fixed-order panels stay in the spectral regime.
    const int panels = 32 + static_cast<int>(std::ceil(t));
    const double quad = composite_gl(
        [&h, t](double x) { return phi_kernel(t * x) * h(x); }, -2.0, 2.0, 12,
        panels);
    rep.errors.push_back(std::abs(quad - 0.5 * M_PI / t * h0));
  }
  double fitted = 0.0;
  for (size_t i = 0; i < ts.size(); ++i)
    fitted = std::max(fitted, rep.errors[i] * std::pow(ts[i], 1.5));
  rep.fitted_c = fitted;

  const double floor = 1e-12;
  bool all_tiny = true;
  std::vector<double> lx, ly;
  for (size_t i = 0; i < ts.size(); ++i) {
    if (rep.errors[i] > floor) all_tiny = false;
    lx.push_back(std::log(ts[i]));
    ly.push_back(std::log(std::max(rep.errors[i], 1e-300)));
  }
  rep.loglog_slope = ls_slope(lx, ly);

  // Mass of phi over the real line: panel quadrature on [-R, R] (panels of
  // about one oscillation period) plus the analytic tail
  // int_R^inf (1 - cos x)/(2 x^2) dx = 1/(2R) + sin(R)/(2R^2) + O(R^-3),
  // doubled for both tails.
  const double big_r = 600.0;
  const double core =
      composite_gl([](double x) { return phi_kernel(x); }, -big_r, big_r, 10,
                   256);
  rep.phi_mass =
      core + 1.0 / big_r + std::sin(big_r) / (big_r * big_r);

  rep.pass = (all_tiny || rep.loglog_slope <= -1.4) &&
             std::abs(rep.phi_mass - 0.5 * M_PI) <= 1e-6;
  return rep;
}

// ---------------------------------------------------------------------------
// Leading-order experiment
// ---------------------------------------------------------------------------

LotReport lot_experiment(const dyn::ModelConfig& cfg, int ensemble,
                         std::uint64_t seed, double t,
                         const kwe::CollisionConfig& kcc, int threads) {
  cfg.validate();
  if (cfg.half_size > 64)
    throw std::invalid_argument(
        "lot_experiment: half_size must be <= 64 (per-sample expansion cost)");
  if (ensemble < 64)
    throw std::invalid_argument(
        "lot_experiment: ensemble must be >= 64 for statistical power");
  if (!(t >= 0.0) || !std::isfinite(t))
    throw std::invalid_argument("lot_experiment: t must be finite and >= 0");

  dyn::ModelConfig run_cfg = cfg;
  run_cfg.t_end = std::max(cfg.t_end, t);
  const int d = cfg.half_size * 2 + 1;

  Eigen::MatrixXd expansion(d, ensemble);
  Eigen::MatrixXd cross(d, ensemble);
  Eigen::VectorXd mu2(ensemble);
  parallel_for(static_cast<size_t>(ensemble), threads, [&](size_t s) {
    Rng rng(derive_seed(seed, s));
    const auto spec = rmt::spectral_decompose(rmt::sample_gue(cfg.half_size, rng));
    const auto its = duhamel::iterate(spec, run_cfg, 2, {t});
    const Eigen::VectorXcd a0 = its.iterates[0].col(0);
    const Eigen::VectorXcd a1 = its.iterates[1].col(0);
    const Eigen::VectorXcd a2 = its.iterates[2].col(0);
    expansion.col(s) = (a0 + a1).cwiseAbs2() +
                       2.0 * (a0.conjugate().cwiseProduct(a2)).real();
    cross.col(s) = 2.0 * (a0.conjugate().cwiseProduct(a1)).real();
    mu2(s) = cross.col(s).mean();
  });

  LotReport rep;
  rep.half_size = cfg.half_size;
  rep.ensemble = ensemble;
  rep.seed = seed;
  rep.t = t;
  rep.t_kin = cfg.kinetic_time();
  rep.expansion_mean = expansion.rowwise().mean();
  Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
  for (int s = 0; s < ensemble; ++s) {
    const Eigen::VectorXd delta = expansion.col(s) - rep.expansion_mean;
    var += delta.cwiseAbs2();
  }
  rep.expansion_se =
      (var / (ensemble * std::max(1, ensemble - 1))).cwiseSqrt();

  rep.prediction = kwe::leading_order_prediction(cfg, t, d, kcc).values;
  rep.l1_distance = (rep.expansion_mean - rep.prediction).lpNorm<1>() / d;
  const double scale = t / rep.t_kin;
  rep.normalized = (t == 0.0) ? 0.0 : rep.l1_distance / scale;
  rep.bound_shape =
      scale * (t == 0.0 ? 0.0
                        : 1.0 / std::sqrt(t) +
                              std::pow(cfg.half_size, 0.1) * t / cfg.half_size);
  rep.mc_noise = (t == 0.0) ? 0.0 : rep.expansion_se.sum() / d / scale;
  rep.mu2_mean = mu2.mean();
  const double mu2_var =
      (mu2.array() - rep.mu2_mean).square().sum() /
      (ensemble * std::max(1, ensemble - 1));
  rep.mu2_se = std::sqrt(mu2_var);
  rep.mu2_max_sigma = 0.0;
  const Eigen::VectorXd cross_mean = cross.rowwise().mean();
  for (int i = 0; i < d; ++i) {
    double v = 0.0;
    for (int s = 0; s < ensemble; ++s) {
      const double delta = cross(i, s) - cross_mean(i);
      v += delta * delta;
    }
    const double se =
        std::sqrt(v / (ensemble * std::max(1, ensemble - 1)));
    if (se > 0.0)
      rep.mu2_max_sigma =
          std::max(rep.mu2_max_sigma, std::abs(cross_mean(i)) / se);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Full-flow experiment
// ---------------------------------------------------------------------------

TheoremPoint theorem_point(const dyn::ModelConfig& cfg, int ensemble,
                           std::uint64_t seed, double window_fraction,
                           double epsilon, const kwe::CollisionConfig& kcc,
                           int threads) {
  cfg.validate();
  if (cfg.half_size < 32 || cfg.half_size > 256)
    throw std::invalid_argument(
        "theorem_point: half_size must lie in [32, 256]");
  if (!(epsilon > 0.0 && epsilon < 0.5))
    throw std::invalid_argument("theorem_point: epsilon must lie in (0, 0.5)");
  if (!(window_fraction > 0.0 && window_fraction <= 1.0))
    throw std::invalid_argument(
        "theorem_point: window_fraction must lie in (0, 1]");

  const double t_kin = cfg.kinetic_time();
  const double lo = std::pow(cfg.half_size, epsilon);
  const double hi = std::pow(cfg.half_size, -epsilon) * std::pow(t_kin, 2.0 / 3.0);
  const double t = window_fraction * std::pow(t_kin, 2.0 / 3.0);
  if (lo > hi || t < lo || t > hi) {
    std::ostringstream msg;
    msg << "theorem_point: t = " << t
        << " outside the admissible window [" << lo << ", " << hi
        << "] for half_size = " << cfg.half_size
        << "; adjust window_fraction or epsilon";
    throw std::invalid_argument(msg.str());
  }

  dyn::ModelConfig run_cfg = cfg;
  run_cfg.t_end = t;
  const auto moments =
      dyn::ensemble_expectation(run_cfg, ensemble, seed, {t}, threads);
  const auto& mom = moments.back();
  const int d = cfg.half_size * 2 + 1;

  TheoremPoint pt;
  pt.half_size = cfg.half_size;
  pt.ensemble = ensemble;
  pt.t = t;
  pt.t_kin = t_kin;
  pt.window_fraction = window_fraction;
  pt.mc_mean = mom.mean;
  pt.mc_se = mom.stderr_;
  pt.prediction = kwe::leading_order_prediction(cfg, t, d, kcc).values;
  pt.normalized_residual =
      (pt.mc_mean - pt.prediction).lpNorm<1>() / d * (t_kin / t);
  pt.residual_se = pt.mc_se.sum() / d * (t_kin / t);
  return pt;
}

// ---------------------------------------------------------------------------
// Resonance-sum consistency
// ---------------------------------------------------------------------------

namespace {

// sum over the lattice cube of phi(t * (phase_k - phase_l + phase_m -
// phase_n)) * f(rho), with f the division-free bracket product.
Eigen::VectorXd resonance_lattice_sum(const Eigen::VectorXd& phase,
                                      const Eigen::VectorXd& rho, double t,
                                      double prefactor, int threads) {
  const int d = static_cast<int>(phase.size());
  Eigen::VectorXd out(d);
  parallel_for(static_cast<size_t>(d), threads, [&](size_t ki) {
    const double pk = phase(ki);
    const double rk = rho(ki);
    double acc = 0.0;
    for (int l = 0; l < d; ++l) {
      const double rl = rho(l);
      const double w0 = pk - phase(l);
      for (int m = 0; m < d; ++m) {
        const double rm = rho(m);
        const double p1 = rl * rm - rk * rm + rk * rl;
        const double p2 = rk * rl * rm;
        const double w = w0 + phase(m);
        double inner = 0.0;
        for (int n = 0; n < d; ++n)
          inner += phi_kernel(t * (w - phase(n))) * (rho(n) * p1 - p2);
        acc += inner;
      }
    }
    out(ki) = prefactor * acc;
  });
  return out;
}

}  // namespace

IkReport ik_consistency(const dyn::ModelConfig& cfg, int ensemble,
                        std::uint64_t seed, double t, int quadrature_order,
                        int threads) {
  cfg.validate();
  if (cfg.half_size > 64)
    throw std::invalid_argument("ik_consistency: half_size must be <= 64");
  if (ensemble < 1)
    throw std::invalid_argument("ik_consistency: ensemble must be >= 1");
  if (!(t >= 0.0) || !std::isfinite(t))
    throw std::invalid_argument("ik_consistency: t must be finite and >= 0");
  if (quadrature_order < 16)
    throw std::invalid_argument("ik_consistency: quadrature_order must be >= 16");

  const int n_half = cfg.half_size;
  const int d = 2 * n_half + 1;
  Eigen::VectorXd rho(d), nu_det(d);
  for (int i = 0; i < d; ++i) {
    const double x = static_cast<double>(i - n_half) / n_half;
    const double a = cfg.evaluate_profile(x);
    rho(i) = a * a;
    nu_det(i) = rmt::nu(x);
  }
  const double mu4 = std::pow(cfg.mu, 4);
  const double dd = static_cast<double>(d);
  const double pref_sum =
      8.0 * t * t * mu4 /
      (static_cast<double>(n_half) * n_half * dd * dd * dd);

  IkReport rep;
  rep.half_size = n_half;
  rep.ensemble = ensemble;
  rep.t = t;

  // (i) sampled eigenvalue phases, ensemble averaged.
  Eigen::VectorXd eig_acc = Eigen::VectorXd::Zero(d);
  for (int s = 0; s < ensemble; ++s) {
    Rng rng(derive_seed(seed, static_cast<size_t>(s)));
    const auto spec = rmt::spectral_decompose(rmt::sample_gue(n_half, rng));
    eig_acc += resonance_lattice_sum(spec.lambda, rho, t, pref_sum, threads);
  }
  rep.eigenvalue_route = eig_acc / ensemble;

  // (ii) deterministic phases on the same lattice.
  rep.deterministic_route =
      resonance_lattice_sum(nu_det, rho, t, pref_sum, threads);

  // (iii) continuum integral via tensor Gauss-Legendre.
  std::vector<double> gx, gw;
  gauss_legendre(quadrature_order, gx, gw);
  const int q = quadrature_order;
  Eigen::VectorXd nu_q(q), rho_q(q);
  for (int i = 0; i < q; ++i) {
    nu_q(i) = rmt::nu(gx[i]);
    const double a = cfg.evaluate_profile(gx[i]);
    rho_q(i) = a * a;
  }
  const double pref_int = 8.0 * t * t * n_half * mu4 / (dd * dd * dd);
  Eigen::VectorXd cont(d);
  parallel_for(static_cast<size_t>(d), threads, [&](size_t ki) {
    const double pk = nu_det(ki);
    const double rk = rho(ki);
    double acc = 0.0;
    for (int l = 0; l < q; ++l) {
      const double rl = rho_q(l);
      const double w0 = pk - nu_q(l);
      for (int m = 0; m < q; ++m) {
        const double rm = rho_q(m);
        const double p1 = rl * rm - rk * rm + rk * rl;
        const double p2 = rk * rl * rm;
        const double w = w0 + nu_q(m);
        double inner = 0.0;
        for (int n = 0; n < q; ++n)
          inner += gw[n] * phi_kernel(t * (w - nu_q(n))) * (rho_q(n) * p1 - p2);
        acc += gw[l] * gw[m] * inner;
      }
    }
    cont(ki) = pref_int * acc;
  });
  rep.continuum_route = cont;

  rep.gap_eig_det =
      (rep.eigenvalue_route - rep.deterministic_route).lpNorm<1>() / n_half;
  rep.gap_det_cont =
      (rep.deterministic_route - rep.continuum_route).lpNorm<1>() / n_half;
  return rep;
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace {

using SectionMap = std::map<std::string, std::map<std::string, std::string>>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

SectionMap parse_ini(const std::string& text) {
  static const std::map<std::string, std::set<std::string>> kSchema = {
      {"", {"experiment"}},
      {"model", {"half_size", "beta", "mu", "profile", "profile_params"}},
      {"integrator", {"dt", "t_end"}},
      {"ensemble",
       {"size", "seed", "threads", "times", "half_sizes", "epsilon",
        "window_fraction"}},
      {"kwe", {"grid_size", "quadrature_order", "t_end", "dt", "alpha", "beta"}},
      {"output", {"dir", "label"}},
  };
  SectionMap out;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw SchemaError("line " + std::to_string(line_no),
                          "malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (!kSchema.count(section))
        throw SchemaError(section,
                          "unknown section; expected one of [model], "
                          "[integrator], [ensemble], [kwe], [output]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw SchemaError("line " + std::to_string(line_no),
                        "expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& allowed = kSchema.at(section);
    if (!allowed.count(key)) {
      std::string known;
      for (const auto& k : allowed) known += (known.empty() ? "" : ", ") + k;
      throw SchemaError((section.empty() ? key : section + "." + key),
                        "unknown key; valid keys here: " + known);
    }
    out[section][key] = value;
  }
  return out;
}

double to_double(const std::string& field, const std::string& v) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    throw SchemaError(field, "expected a number, got '" + v + "'");
  }
}

long long to_int(const std::string& field, const std::string& v) {
  try {
    size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    throw SchemaError(field, "expected an integer, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& field, const std::string& v) {
  try {
    size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    throw SchemaError(field, "expected an unsigned integer, got '" + v + "'");
  }
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  const SectionMap ini = parse_ini(text);
  ExperimentConfig cfg;
  auto get = [&ini](const std::string& sec,
                    const std::string& key) -> const std::string* {
    const auto s = ini.find(sec);
    if (s == ini.end()) return nullptr;
    const auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  };

  if (const auto* v = get("", "experiment")) cfg.kind = *v;

  // [model] + [integrator] -> ModelConfig.
  int half_size = 8;
  if (const auto* v = get("model", "half_size"))
    half_size = static_cast<int>(to_int("model.half_size", *v));
  const auto* beta = get("model", "beta");
  const auto* mu = get("model", "mu");
  if (beta && mu)
    throw SchemaError("model.mu", "give either beta or mu, not both");
  try {
    if (beta)
      cfg.model = dyn::ModelConfig::with_beta(half_size,
                                              to_double("model.beta", *beta));
    else if (mu)
      cfg.model = dyn::ModelConfig::with_mu(half_size, to_double("model.mu", *mu));
    else
      cfg.model.half_size = half_size;
  } catch (const SchemaError&) {
    throw;
  } catch (const std::exception& e) {
    throw SchemaError(beta ? "model.beta" : "model.mu", e.what());
  }
  if (const auto* v = get("model", "profile")) cfg.model.profile = *v;
  if (const auto* v = get("model", "profile_params")) {
    cfg.model.profile_params.clear();
    for (const auto& item : split_list(*v))
      cfg.model.profile_params.push_back(
          to_double("model.profile_params", item));
  }
  if (const auto* v = get("integrator", "dt"))
    cfg.model.dt = to_double("integrator.dt", *v);
  if (const auto* v = get("integrator", "t_end"))
    cfg.model.t_end = to_double("integrator.t_end", *v);

  if (const auto* v = get("ensemble", "size"))
    cfg.ensemble = static_cast<int>(to_int("ensemble.size", *v));
  if (const auto* v = get("ensemble", "seed"))
    cfg.master_seed = to_u64("ensemble.seed", *v);
  if (const auto* v = get("ensemble", "threads"))
    cfg.threads = static_cast<int>(to_int("ensemble.threads", *v));
  if (const auto* v = get("ensemble", "times")) {
    cfg.times.clear();
    for (const auto& item : split_list(*v))
      cfg.times.push_back(to_double("ensemble.times", item));
  }
  if (const auto* v = get("ensemble", "half_sizes")) {
    cfg.half_sizes.clear();
    for (const auto& item : split_list(*v))
      cfg.half_sizes.push_back(
          static_cast<int>(to_int("ensemble.half_sizes", item)));
  }
  if (const auto* v = get("ensemble", "epsilon"))
    cfg.epsilon = to_double("ensemble.epsilon", *v);
  if (const auto* v = get("ensemble", "window_fraction"))
    cfg.window_fraction = to_double("ensemble.window_fraction", *v);

  if (const auto* v = get("kwe", "grid_size"))
    cfg.kwe_grid = static_cast<int>(to_int("kwe.grid_size", *v));
  if (const auto* v = get("kwe", "quadrature_order"))
    cfg.kwe_quadrature = static_cast<int>(to_int("kwe.quadrature_order", *v));
  if (const auto* v = get("kwe", "t_end"))
    cfg.kwe_t_end = to_double("kwe.t_end", *v);
  if (const auto* v = get("kwe", "dt")) cfg.kwe_dt = to_double("kwe.dt", *v);
  if (const auto* v = get("kwe", "alpha"))
    cfg.rj_alpha = to_double("kwe.alpha", *v);
  if (const auto* v = get("kwe", "beta"))
    cfg.rj_beta = to_double("kwe.beta", *v);

  if (const auto* v = get("output", "dir")) cfg.out_dir = *v;
  if (const auto* v = get("output", "label")) cfg.label = *v;
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void ExperimentConfig::validate() const {
  static const std::set<std::string> kKinds = {
      "lot", "theorem", "kwe", "weingarten-validate", "rigidity"};
  if (!kKinds.count(kind)) {
    std::string known;
    for (const auto& k : kKinds) known += (known.empty() ? "" : ", ") + k;
    throw SchemaError("experiment",
                      "unknown experiment '" + kind + "'; expected one of: " + known);
  }
  try {
    model.validate();
  } catch (const std::exception& e) {
    throw SchemaError("model", e.what());
  }
  if (ensemble < 1) throw SchemaError("ensemble.size", "must be >= 1");
  if (threads < 0) throw SchemaError("ensemble.threads", "must be >= 0");
  for (double t : times)
    if (!(t >= 0.0)) throw SchemaError("ensemble.times", "times must be >= 0");
  for (int n : half_sizes)
    if (n < 1) throw SchemaError("ensemble.half_sizes", "must be >= 1");
  if (!(epsilon > 0.0 && epsilon < 0.5))
    throw SchemaError("ensemble.epsilon", "must lie in (0, 0.5)");
  if (!(window_fraction > 0.0 && window_fraction <= 1.0))
    throw SchemaError("ensemble.window_fraction", "must lie in (0, 1]");
  if (kwe_grid < 4) throw SchemaError("kwe.grid_size", "must be >= 4");
  if (kwe_quadrature < 16)
    throw SchemaError("kwe.quadrature_order", "must be >= 16");
  if (!(kwe_t_end >= 0.0)) throw SchemaError("kwe.t_end", "must be >= 0");
  if (!(kwe_dt > 0.0)) throw SchemaError("kwe.dt", "must be > 0");
  if (!(rj_alpha > 0.0)) throw SchemaError("kwe.alpha", "must be > 0");
  if (!(rj_beta > 2.0)) throw SchemaError("kwe.beta", "must be > 2");
  if (out_dir.empty()) throw SchemaError("output.dir", "must be nonempty");
  if (label.empty()) throw SchemaError("output.label", "must be nonempty");
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

bool ExperimentReport::pass() const {
  for (const auto& m : metrics)
    if (m.checked && !m.pass) return false;
  return true;
}

std::string ExperimentReport::to_json() const {
  nlohmann::json j;
  j["kind"] = kind;
  j["master_seed"] = master_seed;
  j["ensemble"] = ensemble;
  j["threads"] = threads;
  j["wall_seconds"] = wall_seconds;
  j["provenance"] = provenance;
  j["pass"] = pass();
  j["metrics"] = nlohmann::json::array();
  for (const auto& m : metrics) {
    nlohmann::json jm;
    jm["name"] = m.name;
    jm["value"] = m.value;
    jm["checked"] = m.checked;
    if (m.checked) {
      jm["tolerance"] = m.tolerance;
      jm["pass"] = m.pass;
    }
    jm["note"] = m.note;
    j["metrics"].push_back(jm);
  }
  return j.dump(2) + "\n";
}

std::string ExperimentReport::summary() const {
  std::ostringstream out;
  for (const auto& m : metrics) {
    if (!m.checked) continue;
    out << (m.pass ? "PASS" : "FAIL") << "  " << m.name << " = "
        << format_g17(m.value) << "  (tolerance " << format_g17(m.tolerance)
        << ")\n";
  }
  out << (pass() ? "OVERALL PASS" : "OVERALL FAIL") << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Experiment execution
// ---------------------------------------------------------------------------

namespace {

std::vector<int> sweep_sizes(const ExperimentConfig& cfg) {
  return cfg.half_sizes.empty() ? std::vector<int>{cfg.model.half_size}
                                : cfg.half_sizes;
}

kwe::CollisionConfig collision_config(const ExperimentConfig& cfg) {
  kwe::CollisionConfig kcc;
  kcc.quadrature_order = cfg.kwe_quadrature;
  kcc.threads = cfg.threads;
  return kcc;
}

void run_lot(const ExperimentConfig& cfg, ExperimentReport& rep,
             std::string& csv) {
  const auto sizes = sweep_sizes(cfg);
  const double t = cfg.times.empty() ? 2.0 : cfg.times.front();
  const auto kcc = collision_config(cfg);
  std::ostringstream data;
  data << "N,t,k,expansion_mean,expansion_se,prediction\n";
  std::vector<double> normalized;
  for (int n : sizes) {
    const auto model = resize_model(cfg.model, n);
    const auto lot =
        lot_experiment(model, cfg.ensemble, cfg.master_seed, t, kcc, cfg.threads);
    const std::string tag = "[N=" + std::to_string(n) + "]";
    const std::string prov = "ensemble " + std::to_string(cfg.ensemble) +
                             ", t = " + format_g17(t);
    const double sigmas =
        lot.mu2_se > 0.0 ? std::abs(lot.mu2_mean) / lot.mu2_se : 0.0;
    rep.metrics.push_back({"mu2_cancellation_sigmas" + tag, sigmas, 4.0, true,
                           sigmas <= 4.0,
                           "lattice-averaged 2 Re <conj(a0), a1> in units of "
                           "its standard error; " + prov});
    rep.metrics.push_back({"l1_distance" + tag, lot.l1_distance, 0.0, false,
                           true,
                           "lattice-averaged |expansion mean - kinetic "
                           "prediction|; " + prov});
    rep.metrics.push_back({"normalized_distance" + tag, lot.normalized, 0.0,
                           false, true,
                           "l1 distance divided by t/T_kin; " + prov});
    rep.metrics.push_back({"bound_shape" + tag, lot.bound_shape, 0.0, false,
                           true,
                           "(t/T_kin)(t^-1/2 + N^0.1 t/N) comparison scale; " +
                               prov});
    normalized.push_back(lot.normalized);
    for (int i = 0; i < lot.expansion_mean.size(); ++i)
      data << n << ',' << format_g17(t) << ',' << (i - n) << ','
           << format_g17(lot.expansion_mean(i)) << ','
           << format_g17(lot.expansion_se(i)) << ','
           << format_g17(lot.prediction(i)) << '\n';
  }
  if (normalized.size() >= 2) {
    const double ratio = normalized.back() / normalized.front();
    rep.metrics.push_back({"normalized_trend_ratio", ratio, 1.0, true,
                           ratio <= 1.0,
                           "normalized distance at the largest lattice over "
                           "the smallest; decreasing trend expected"});
  }
  csv = data.str();
}

void run_theorem(const ExperimentConfig& cfg, ExperimentReport& rep,
                 std::string& csv) {
  const auto sizes = sweep_sizes(cfg);
  const auto kcc = collision_config(cfg);
  std::ostringstream data;
  data << "N,t,k,mc_mean,mc_se,prediction\n";
  std::vector<double> normalized, slack;
  for (int n : sizes) {
    const auto model = resize_model(cfg.model, n);
    const auto pt = theorem_point(model, cfg.ensemble, cfg.master_seed,
                                  cfg.window_fraction, cfg.epsilon, kcc,
                                  cfg.threads);
    const std::string tag = "[N=" + std::to_string(n) + "]";
    rep.metrics.push_back(
        {"normalized_residual" + tag, pt.normalized_residual, 0.0, false, true,
         "lattice-averaged |E|a_k|^2 - prediction| times T_kin/t at t = " +
             format_g17(pt.t) + ", ensemble " + std::to_string(cfg.ensemble)});
    rep.metrics.push_back(
        {"residual_se" + tag, pt.residual_se, 0.0, false, true,
         "Monte Carlo scale of the normalized residual (lattice-averaged "
         "standard error times T_kin/t)"});
    normalized.push_back(pt.normalized_residual);
    slack.push_back(pt.residual_se);
    for (int i = 0; i < pt.mc_mean.size(); ++i)
      data << n << ',' << format_g17(pt.t) << ',' << (i - n) << ','
           << format_g17(pt.mc_mean(i)) << ',' << format_g17(pt.mc_se(i))
           << ',' << format_g17(pt.prediction(i)) << '\n';
  }
  if (normalized.size() >= 2) {
    double worst = -std::numeric_limits<double>::infinity();
    for (size_t i = 1; i < normalized.size(); ++i)
      worst = std::max(worst, normalized[i] - normalized[i - 1] -
                                  2.0 * (slack[i] + slack[i - 1]));
    rep.metrics.push_back(
        {"trend_excess", worst, 0.0, true, worst <= 0.0,
         "largest increase of the normalized residual across the lattice "
         "sweep beyond twice the Monte Carlo slack; non-positive means the "
         "trend is non-increasing"});
  }
  csv = data.str();
}

void run_kwe(const ExperimentConfig& cfg, ExperimentReport& rep,
             std::string& csv) {
  const auto kcc = collision_config(cfg);
  const auto& model = cfg.model;
  auto rho0 = kwe::SpectralDensity::from_function(
      [&model](double k) {
        const double a = model.evaluate_profile(k);
        return a * a;
      },
      cfg.kwe_grid);
  const auto sol = kwe::solve(rho0, cfg.kwe_t_end, cfg.kwe_dt, kcc);
  const auto f0 = kwe::functionals(sol.states.front(), false);
  const auto f1 = kwe::functionals(sol.states.back(), false);
  const double horizon = std::max(cfg.kwe_t_end, 1e-12);
  const double mass_drift = std::abs(f1.mass - f0.mass) / f0.mass / horizon;
  const double energy_drift =
      std::abs(f1.energy - f0.energy) / f0.mass / horizon;
  const std::string prov = "grid " + std::to_string(cfg.kwe_grid) +
                           ", quadrature " + std::to_string(cfg.kwe_quadrature) +
                           ", dt " + format_g17(cfg.kwe_dt) + ", t_end " +
                           format_g17(cfg.kwe_t_end);
  rep.metrics.push_back({"mass_drift_per_unit_time", mass_drift, 1e-6, true,
                         mass_drift <= 1e-6,
                         "relative mass drift of the kinetic solve; " + prov});
  rep.metrics.push_back({"energy_drift_per_unit_time", energy_drift, 1e-5,
                         true, energy_drift <= 1e-5,
                         "energy drift relative to mass; " + prov});
  if (rho0.values.minCoeff() > 0.0) {
    double min_step = std::numeric_limits<double>::infinity();
    double prev = kwe::functionals(sol.states.front()).entropy;
    for (size_t s = 1; s < sol.states.size(); ++s) {
      const double e = kwe::functionals(sol.states[s]).entropy;
      min_step = std::min(min_step, e - prev);
      prev = e;
    }
    rep.metrics.push_back({"entropy_min_step", min_step, -1e-8, true,
                           min_step >= -1e-8,
                           "smallest per-step entropy increment along the "
                           "solve (non-negative up to 1e-8 slack); " + prov});
  }
  auto rj = kwe::rayleigh_jeans(cfg.rj_alpha, cfg.rj_beta, cfg.kwe_grid);
  const auto rj_sol = kwe::solve(rj, cfg.kwe_t_end, cfg.kwe_dt, kcc);
  const double rj_dev =
      (rj_sol.states.back().values - rj.values).cwiseAbs().maxCoeff();
  rep.metrics.push_back({"stationary_density_drift", rj_dev, 1e-5, true,
                         rj_dev <= 1e-5,
                         "sup deviation of the stationary density after the "
                         "solve; " + prov});
  csv = kwe::solution_to_csv(sol);
}

void run_weingarten(const ExperimentConfig& cfg, ExperimentReport& rep,
                    std::string& csv) {
  std::ostringstream data;
  data << "d,power,exact,mc_mean,mc_se\n";
  for (int d : {4, 8, 16}) {
    const double exact2 =
        wg::haar_moment(wg::build_graph({0}, {0}, {0}, {0}), d)
            .convert_to<double>();
    const double exact4 =
        wg::haar_moment(wg::build_graph({0, 0}, {0, 0}, {0, 0}, {0, 0}), d)
            .convert_to<double>();
    const double dev2 = std::abs(exact2 - 1.0 / d);
    const double dev4 = std::abs(exact4 - 2.0 / (static_cast<double>(d) * (d + 1)));
    const std::string tag = "[d=" + std::to_string(d) + "]";
    rep.metrics.push_back({"exact_m2_deviation" + tag, dev2, 1e-15, true,
                           dev2 <= 1e-15,
                           "second moment of a Haar matrix entry from the "
                           "exact expansion against 1/d"});
    rep.metrics.push_back({"exact_m4_deviation" + tag, dev4, 1e-15, true,
                           dev4 <= 1e-15,
                           "fourth moment of a Haar matrix entry from the "
                           "exact expansion against 2/(d(d+1))"});
    double s2 = 0, s4 = 0, ss2 = 0, ss4 = 0;
    for (int i = 0; i < cfg.ensemble; ++i) {
      Rng rng(derive_seed(cfg.master_seed,
                          static_cast<size_t>(d) * 1000003u + i));
      const auto u = rmt::sample_haar_unitary(d, rng);
      const double m2 = std::norm(u(0, 0));
      const double m4 = m2 * m2;
      s2 += m2;
      s4 += m4;
      ss2 += m2 * m2;
      ss4 += m4 * m4;
    }
    const double n = cfg.ensemble;
    const double mc2 = s2 / n, mc4 = s4 / n;
    const double se2 = std::sqrt(std::max(0.0, ss2 / n - mc2 * mc2) / (n - 1));
    const double se4 = std::sqrt(std::max(0.0, ss4 / n - mc4 * mc4) / (n - 1));
    const double sig2 = se2 > 0 ? std::abs(mc2 - exact2) / se2 : 0.0;
    const double sig4 = se4 > 0 ? std::abs(mc4 - exact4) / se4 : 0.0;
    const std::string prov = "; Monte Carlo over " +
                             std::to_string(cfg.ensemble) + " Haar draws";
    rep.metrics.push_back({"mc_m2_sigmas" + tag, sig2, 5.0, true, sig2 <= 5.0,
                           "Monte Carlo second moment against the exact "
                           "value, in standard errors" + prov});
    rep.metrics.push_back({"mc_m4_sigmas" + tag, sig4, 5.0, true, sig4 <= 5.0,
                           "Monte Carlo fourth moment against the exact "
                           "value, in standard errors" + prov});
    data << d << ",2," << format_g17(exact2) << ',' << format_g17(mc2) << ','
         << format_g17(se2) << '\n';
    data << d << ",4," << format_g17(exact4) << ',' << format_g17(mc4) << ','
         << format_g17(se4) << '\n';
  }
  csv = data.str();
}

void run_rigidity(const ExperimentConfig& cfg, ExperimentReport& rep,
                  std::string& csv) {
  const auto sizes = cfg.half_sizes.empty() ? std::vector<int>{50, 100, 200}
                                            : cfg.half_sizes;
  std::ostringstream data;
  data << "N,p99_rigidity,hist_l1\n";
  std::vector<double> p99s;
  double hist_largest = 0.0;
  for (int n : sizes) {
    const int d = 2 * n + 1;
    std::vector<double> pooled;
    pooled.reserve(static_cast<size_t>(d) * cfg.ensemble);
    Eigen::VectorXd bins = Eigen::VectorXd::Zero(40);
    double outside = 0.0;
    for (int s = 0; s < cfg.ensemble; ++s) {
      Rng rng(derive_seed(cfg.master_seed,
                          static_cast<size_t>(n) * 1000003u + s));
      const auto spec = rmt::spectral_decompose(rmt::sample_gue(n, rng));
      const Eigen::VectorXd r = rmt::rigidity_residuals(spec);
      for (int i = 0; i < d; ++i) {
        pooled.push_back(std::abs(r(i)));
        const double lam = spec.lambda(i);
        if (lam < -2.0 || lam >= 2.0) {
          outside += 1.0;
        } else {
          const int b = std::min(39, static_cast<int>((lam + 2.0) / 0.1));
          bins(b) += 1.0;
        }
      }
    }
    const double total = static_cast<double>(d) * cfg.ensemble;
    double hist_l1 = outside / total;
    for (int b = 0; b < 40; ++b) {
      const double lo = -2.0 + 0.1 * b, hi = lo + 0.1;
      const double sc = rmt::semicircle_cdf0(hi) - rmt::semicircle_cdf0(lo);
      hist_l1 += std::abs(bins(b) / total - sc);
    }
    std::sort(pooled.begin(), pooled.end());
    const double p99 =
        pooled[static_cast<size_t>(0.99 * (pooled.size() - 1))];
    p99s.push_back(p99);
    hist_largest = hist_l1;
    const std::string tag = "[N=" + std::to_string(n) + "]";
    const std::string prov = std::to_string(cfg.ensemble) +
                             " spectra, 40 bins on [-2, 2]";
    rep.metrics.push_back({"hist_l1" + tag, hist_l1, 0.0, false, true,
                           "l1 distance of the pooled eigenvalue histogram "
                           "to the limiting density; " + prov});
    rep.metrics.push_back({"p99_rigidity" + tag, p99, 0.0, false, true,
                           "99th percentile of edge-weighted rigidity "
                           "residuals; " + prov});
    data << n << ',' << format_g17(p99) << ',' << format_g17(hist_l1) << '\n';
  }
  rep.metrics.push_back({"hist_l1_largest", hist_largest, 0.05, true,
                         hist_largest <= 0.05,
                         "histogram distance at the largest lattice size"});
  if (p99s.size() >= 2) {
    double worst = 0.0;
    for (size_t i = 1; i < p99s.size(); ++i)
      worst = std::max(worst, p99s[i] / p99s[i - 1]);
    rep.metrics.push_back({"p99_trend_max_ratio", worst, 1.1, true,
                           worst <= 1.1,
                           "largest step-to-step growth of the rigidity "
                           "percentile across the size sweep; flat to "
                           "decreasing expected"});
  }
  csv = data.str();
}

}  // namespace

RunOutput execute(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  RunOutput out;
  out.report.kind = cfg.kind;
  out.report.master_seed = cfg.master_seed;
  out.report.ensemble = cfg.ensemble;
  out.report.threads = cfg.threads;
  {
    std::ostringstream prov;
    prov << "label " << cfg.label << ", seed " << cfg.master_seed
         << ", ensemble " << cfg.ensemble << ", sweep";
    for (int n : sweep_sizes(cfg)) prov << ' ' << n;
    out.report.provenance = prov.str();
  }

  std::string csv;
  if (cfg.kind == "lot")
    run_lot(cfg, out.report, csv);
  else if (cfg.kind == "theorem")
    run_theorem(cfg, out.report, csv);
  else if (cfg.kind == "kwe")
    run_kwe(cfg, out.report, csv);
  else if (cfg.kind == "weingarten-validate")
    run_weingarten(cfg, out.report, csv);
  else
    run_rigidity(cfg, out.report, csv);

  out.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  out.files.emplace_back(cfg.label + "_data.csv", csv);
  out.files.emplace_back(cfg.label + "_report.json", out.report.to_json());
  out.files.emplace_back(cfg.label + "_summary.txt", out.report.summary());
  return out;
}

int run(const std::string& config_path) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const SchemaError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 3;
  }
  return run(cfg);
}

int run(const ExperimentConfig& cfg) {
  RunOutput out;
  try {
    out = execute(cfg);
  } catch (const SchemaError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "experiment error: %s\n", e.what());
    return 2;
  }
  try {
    std::filesystem::create_directories(cfg.out_dir);
    for (const auto& [name, contents] : out.files) {
      const auto path = std::filesystem::path(cfg.out_dir) / name;
      std::ofstream f(path, std::ios::binary);
      if (!f) throw std::runtime_error("cannot write " + path.string());
      f << contents;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 3;
  }
  std::fputs(out.report.summary().c_str(), stdout);
  return out.report.pass() ? 0 : 1;
}

}  // namespace rmwave::harness
