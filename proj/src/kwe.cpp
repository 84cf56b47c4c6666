#include "rmwave/kwe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "rmwave/common.hpp"
#include "rmwave/rmt.hpp"

namespace rmwave::kwe {

namespace {

// Lagrange cubic through (x[s..s+3], y[s..s+3]) evaluated at q.
double lagrange_cubic(const double* x, const double* y, double q) {
  double acc = 0.0;
  for (int i = 0; i < 4; ++i) {
    double term = y[i];
    for (int j = 0; j < 4; ++j) {
      if (j == i) continue;
      term *= (q - x[j]) / (x[i] - x[j]);
    }
    acc += term;
  }
  return acc;
}

// Density evaluator parametrized by the dispersion variable x = nu(k).
// Grid data: cubic interpolation through samples at x_i = nu(k_i), clamped.
struct GridEvaluator {
  Eigen::VectorXd xs;    // nu at the grid nodes, strictly increasing
  Eigen::VectorXd vals;  // density samples

  explicit GridEvaluator(const SpectralDensity& rho) {
    const int g = rho.grid_size();
    xs.resize(g);
    for (int i = 0; i < g; ++i) xs(i) = rmt::nu(rho.node(i));
    vals = rho.values;
  }

  double operator()(double x) const {
    const int g = static_cast<int>(xs.size());
    x = std::clamp(x, xs(0), xs(g - 1));
    const double* beg = xs.data();
    int cell = static_cast<int>(std::upper_bound(beg, beg + g, x) - beg) - 1;
    cell = std::clamp(cell, 0, g - 2);
    const int s = std::clamp(cell - 1, 0, g - 4);
    return std::max(0.0, lagrange_cubic(beg + s, vals.data() + s, x));
  }
};

constexpr double kTwoOverPiSq = 2.0 / (M_PI * M_PI);

// Collision sum at one output node, resonance-aligned coordinates.  The
// (l, m) integral is rewritten with x_l = 2 sin(phi) and, per x_l, the m
// variable runs over the dispersion interval on which |x*| < 2, parametrized
// as x_m = mid + rad sin(theta).  Both square-root factors then reduce to
// cos(phi) cos(theta) Jacobians times a smooth positive remainder, so the
// tensor Gauss-Legendre rule in (phi, theta) sees a smooth integrand.
template <typename Rho>
double collide_aligned(const Rho& rho_x, double nuk, double rk,
                       const std::vector<double>& gx,
                       const std::vector<double>& gw) {
  const int q = static_cast<int>(gx.size());
  const double phi_star = std::asin(std::clamp(0.5 * nuk, -1.0, 1.0));
  const double bounds[3] = {-0.5 * M_PI, phi_star, 0.5 * M_PI};
  double total = 0.0;
  for (int panel = 0; panel < 2; ++panel) {
    const double half = 0.5 * (bounds[panel + 1] - bounds[panel]);
    if (half < 1e-15) continue;
    const double mid_phi = 0.5 * (bounds[panel + 1] + bounds[panel]);
    for (int i = 0; i < q; ++i) {
      const double phi = mid_phi + half * gx[i];
      const double cphi = std::cos(phi);
      const double xl = 2.0 * std::sin(phi);
      const double rl = rho_x(xl);
      const double w = xl - nuk;
      const double a = std::max(-2.0, -2.0 + w);
      const double b = std::min(2.0, 2.0 + w);
      const double mid_m = 0.5 * (a + b);
      const double rad = 0.5 * (b - a);
      double inner = 0.0;
      for (int j = 0; j < q; ++j) {
        const double theta = 0.5 * M_PI * gx[j];
        const double xm = mid_m + rad * std::sin(theta);
        const double xstar = nuk - xl + xm;
        double rest = (w >= 0.0) ? (2.0 + xm) * (2.0 - xstar)
                                 : (2.0 - xm) * (2.0 + xstar);
        rest = std::max(rest, 0.0);
        const double cth = std::cos(theta);
        const double rm = rho_x(std::clamp(xm, -2.0, 2.0));
        const double rn = rho_x(std::clamp(xstar, -2.0, 2.0));
        const double bracket =
            rl * rm * rn - rk * rm * rn + rk * rl * rn - rk * rl * rm;
        inner += gw[j] * cth * cth * std::sqrt(rest) * bracket;
      }
      total += gw[i] * half * cphi * cphi * rad * rad * (0.5 * M_PI) * inner;
    }
  }
  return kTwoOverPiSq * total;
}

// Collision sum at one output node, plain (l, m) parametrization: the
// square-root weight and its support cutoff stay in the integrand.
template <typename Rho>
double collide_plain(const Rho& rho_x, double nuk, double rk,
                     const std::vector<double>& gx,
                     const std::vector<double>& gw) {
  const int q = static_cast<int>(gx.size());
  std::vector<double> nu_node(q), rho_node(q);
  for (int i = 0; i < q; ++i) {
    nu_node[i] = rmt::nu(gx[i]);
    rho_node[i] = rho_x(nu_node[i]);
  }
  double total = 0.0;
  for (int i = 0; i < q; ++i) {
    const double rl = rho_node[i];
    const double c1 = nuk - nu_node[i];
    for (int j = 0; j < q; ++j) {
      const double xstar = c1 + nu_node[j];
      if (std::abs(xstar) >= 2.0) continue;
      const double rm = rho_node[j];
      const double rn = rho_x(xstar);
      const double bracket =
          rl * rm * rn - rk * rm * rn + rk * rl * rn - rk * rl * rm;
      total += gw[i] * gw[j] * 0.5 * std::sqrt(4.0 - xstar * xstar) * bracket;
    }
  }
  return total;
}

template <typename Rho>
Eigen::VectorXd collide_all(const Rho& rho_x, const Eigen::VectorXd& nu_out,
                            const Eigen::VectorXd& rho_out,
                            const CollisionConfig& cc) {
  std::vector<double> gx, gw;
  gauss_legendre(cc.quadrature_order, gx, gw);
  const int g = static_cast<int>(nu_out.size());
  Eigen::VectorXd out(g);
  parallel_for(static_cast<std::size_t>(g), cc.threads, [&](std::size_t i) {
    out(static_cast<int>(i)) =
        cc.aligned ? collide_aligned(rho_x, nu_out(i), rho_out(i), gx, gw)
                   : collide_plain(rho_x, nu_out(i), rho_out(i), gx, gw);
  });
  return out;
}

void check_grid_size(int grid_size) {
  if (grid_size < 4)
    throw std::invalid_argument("kwe: grid needs at least 4 nodes");
}

}  // namespace

Eigen::VectorXd SpectralDensity::nodes() const {
  const int g = grid_size();
  Eigen::VectorXd out(g);
  for (int i = 0; i < g; ++i) out(i) = node(i);
  return out;
}

SpectralDensity SpectralDensity::from_function(
    const std::function<double(double)>& f, int grid_size) {
  check_grid_size(grid_size);
  SpectralDensity rho;
  rho.values.resize(grid_size);
  for (int i = 0; i < grid_size; ++i) rho.values(i) = f(rho.node(i));
  return rho;
}

void CollisionConfig::validate() const {
  if (quadrature_order < 16)
    throw std::invalid_argument(
        "CollisionConfig: quadrature_order must be >= 16");
  if (threads < 0)
    throw std::invalid_argument("CollisionConfig: threads must be >= 0");
}

SpectralDensity collision_operator(const SpectralDensity& rho,
                                   const CollisionConfig& cc) {
  cc.validate();
  check_grid_size(rho.grid_size());
  if (!rho.values.allFinite())
    throw std::domain_error("collision_operator: non-finite density");
  if (rho.values.minCoeff() < 0.0)
    throw std::domain_error("collision_operator: negative density value");
  const GridEvaluator ev(rho);
  const int g = rho.grid_size();
  Eigen::VectorXd nu_out(g);
  for (int i = 0; i < g; ++i) nu_out(i) = ev.xs(i);
  SpectralDensity out;
  out.values = collide_all(ev, nu_out, rho.values, cc);
  return out;
}

Eigen::VectorXd collision_operator(
    const std::function<double(double)>& rho_of_k, int grid_size,
    const CollisionConfig& cc) {
  cc.validate();
  check_grid_size(grid_size);
  const auto rho_x = [&rho_of_k](double x) {
    const double k =
        std::clamp(rmt::nu_inverse(std::clamp(x, -2.0, 2.0)), -1.0, 1.0);
    return std::max(0.0, rho_of_k(k));
  };
  Eigen::VectorXd nu_out(grid_size), rho_out(grid_size);
  for (int i = 0; i < grid_size; ++i) {
    const double k = -1.0 + 2.0 * static_cast<double>(i) / (grid_size - 1);
    nu_out(i) = rmt::nu(k);
    rho_out(i) = std::max(0.0, rho_of_k(k));
  }
  return collide_all(rho_x, nu_out, rho_out, cc);
}

double collision_at(const std::function<double(double)>& rho_of_k, double k,
                    const CollisionConfig& cc) {
  cc.validate();
  if (!(k >= -1.0) || !(k <= 1.0))
    throw std::invalid_argument("collision_at: k must lie in [-1, 1]");
  const auto rho_x = [&rho_of_k](double x) {
    const double kk =
        std::clamp(rmt::nu_inverse(std::clamp(x, -2.0, 2.0)), -1.0, 1.0);
    return std::max(0.0, rho_of_k(kk));
  };
  std::vector<double> gx, gw;
  gauss_legendre(cc.quadrature_order, gx, gw);
  const double nuk = rmt::nu(k);
  const double rk = std::max(0.0, rho_of_k(k));
  return cc.aligned ? collide_aligned(rho_x, nuk, rk, gx, gw)
                    : collide_plain(rho_x, nuk, rk, gx, gw);
}

double interpolate_density(const SpectralDensity& rho, double k) {
  check_grid_size(rho.grid_size());
  const GridEvaluator ev(rho);
  return ev(rmt::nu(std::clamp(k, -1.0, 1.0)));
}

double mollified_collision(const std::function<double(double)>& rho_of_k,
                           double k, double eps, int q) {
  if (!(eps > 0.0)) throw std::invalid_argument("mollified_collision: eps > 0");
  if (q < 2) throw std::invalid_argument("mollified_collision: q >= 2");
  std::vector<double> gx, gw;
  gauss_legendre(q, gx, gw);
  std::vector<double> nu_node(q), rho_node(q);
  for (int i = 0; i < q; ++i) {
    nu_node[i] = rmt::nu(gx[i]);
    rho_node[i] = std::max(0.0, rho_of_k(gx[i]));
  }
  const double nuk = rmt::nu(std::clamp(k, -1.0, 1.0));
  const double rk = std::max(0.0, rho_of_k(k));
  const double norm = 1.0 / (eps * std::sqrt(2.0 * M_PI));
  const double inv2e2 = 1.0 / (2.0 * eps * eps);
  double total = 0.0;
  for (int i = 0; i < q; ++i) {
    const double rl = rho_node[i];
    const double c1 = nuk - nu_node[i];
    for (int j = 0; j < q; ++j) {
      const double rm = rho_node[j];
      const double c2 = c1 + nu_node[j];
      const double p1 = rl * rm - rk * rm + rk * rl;
      const double p2 = rk * rl * rm;
      const double wij = gw[i] * gw[j];
      double inner = 0.0;
      for (int n = 0; n < q; ++n) {
        const double theta = c2 - nu_node[n];
        inner += gw[n] * std::exp(-theta * theta * inv2e2) *
                 (rho_node[n] * p1 - p2);
      }
      total += wij * inner;
    }
  }
  return 0.5 * M_PI * norm * total;
}

Solution solve(const SpectralDensity& rho0, double t_end, double dt,
               const CollisionConfig& cc) {
  cc.validate();
  check_grid_size(rho0.grid_size());
  if (!(t_end >= 0.0) || !std::isfinite(t_end))
    throw std::invalid_argument("solve: t_end must be finite and >= 0");
  if (!(dt > 0.0)) throw std::invalid_argument("solve: dt must be > 0");
  if (!rho0.values.allFinite() || rho0.values.minCoeff() < 0.0)
    throw std::domain_error("solve: initial density must be finite and >= 0");

  const double floor_tol =
      1e-12 * std::max(1.0, rho0.values.maxCoeff());
  const auto rhs = [&cc](const Eigen::VectorXd& v) {
    SpectralDensity s;
    s.values = v.cwiseMax(0.0);
    return collision_operator(s, cc).values;
  };

  Solution sol;
  sol.times.push_back(0.0);
  sol.states.push_back(rho0);
  Eigen::VectorXd v = rho0.values;
  double t = 0.0;
  double step = dt;
  const double dt_min = dt / 1024.0;
  while (t_end - t > 1e-12 * std::max(1.0, t_end)) {
    const double h = std::min(step, t_end - t);
    const Eigen::VectorXd k1 = rhs(v);
    const Eigen::VectorXd k2 = rhs(v + (0.5 * h) * k1);
    const Eigen::VectorXd k3 = rhs(v + (0.5 * h) * k2);
    const Eigen::VectorXd k4 = rhs(v + h * k3);
    Eigen::VectorXd vn = v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (vn.minCoeff() < -floor_tol) {
      step *= 0.5;
      if (step < dt_min)
        throw std::runtime_error(
            "solve: persistent negativity at the minimal step size");
      continue;
    }
    v = vn.cwiseMax(0.0);
    t += h;
    sol.times.push_back(t);
    SpectralDensity s;
    s.values = v;
    sol.states.push_back(std::move(s));
  }
  return sol;
}

Eigen::VectorXd quadrature_weights(int grid_size) {
  if (grid_size < 2)
    throw std::invalid_argument("quadrature_weights: need at least 2 nodes");
  const int g = grid_size;
  const double h = 2.0 / (g - 1);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(g);
  constexpr int kEnd = 15;  // nodes per moment-fitted end block
  if (g >= 2 * kEnd + 3 && g % 2 == 1) {
    // End blocks exact on u^{j/3} for j = 0, 2, 3, ..., 9 (all powers that
    // appear in semicircle-edge expansions up to u^3), built as the
    // minimum-norm correction of composite-Simpson base weights so the block
    // stays well conditioned.
    constexpr int kMoments = 9;
    const double span = kEnd - 1;
    Eigen::MatrixXd a(kMoments, kEnd);
    Eigen::VectorXd rhs(kMoments);
    for (int p = 0; p < kMoments; ++p) {
      const double e = p == 0 ? 0.0 : (p + 1) / 3.0;
      for (int j = 0; j < kEnd; ++j) a(p, j) = std::pow(j / span, e);
      rhs(p) = span / (e + 1.0);
    }
    Eigen::VectorXd base(kEnd);
    base(0) = base(kEnd - 1) = 1.0 / 3.0;
    for (int j = 1; j < kEnd - 1; ++j)
      base(j) = (j % 2 == 1) ? 4.0 / 3.0 : 2.0 / 3.0;
    const Eigen::VectorXd v =
        base + a.completeOrthogonalDecomposition().solve(rhs - a * base);
    for (int j = 0; j < kEnd; ++j) {
      w(j) += h * v(j);
      w(g - 1 - j) += h * v(j);
    }
    // Composite Simpson over the interior nodes kEnd-1 .. g-kEnd.
    const int lo = kEnd - 1, hi = g - kEnd;
    w(lo) += h / 3.0;
    w(hi) += h / 3.0;
    for (int i = lo + 1; i < hi; ++i)
      w(i) += ((i - lo) % 2 == 1) ? 4.0 * h / 3.0 : 2.0 * h / 3.0;
  } else if (g % 2 == 1) {
    w(0) = w(g - 1) = h / 3.0;
    for (int i = 1; i < g - 1; ++i)
      w(i) = (i % 2 == 1) ? 4.0 * h / 3.0 : 2.0 * h / 3.0;
  } else {
    w(0) = w(g - 1) = 0.5 * h;
    for (int i = 1; i < g - 1; ++i) w(i) = h;
  }
  return w;
}

double integrate(const Eigen::VectorXd& values_on_grid) {
  const Eigen::VectorXd w =
      quadrature_weights(static_cast<int>(values_on_grid.size()));
  return w.dot(values_on_grid);
}

Functionals functionals(const SpectralDensity& rho, bool include_entropy) {
  const int g = rho.grid_size();
  const Eigen::VectorXd w = quadrature_weights(g);
  Functionals f;
  for (int i = 0; i < g; ++i) {
    const double r = rho.values(i);
    f.mass += w(i) * r;
    f.energy += w(i) * rmt::nu(rho.node(i)) * r;
  }
  if (!include_entropy) {
    f.entropy = -std::numeric_limits<double>::infinity();
    return f;
  }
  for (int i = 0; i < g; ++i) {
    const double r = rho.values(i);
    if (!(r > 0.0))
      throw std::domain_error("functionals: entropy needs rho > 0 everywhere");
    f.entropy += w(i) * std::log(r);
  }
  return f;
}

SpectralDensity rayleigh_jeans(double alpha, double beta, int grid_size) {
  if (!(alpha > 0.0))
    throw std::invalid_argument("rayleigh_jeans: alpha must be > 0");
  if (!(beta > 2.0))
    throw std::domain_error("rayleigh_jeans: beta must exceed 2");
  check_grid_size(grid_size);
  return SpectralDensity::from_function(
      [alpha, beta](double k) { return alpha / (beta + rmt::nu(k)); },
      grid_size);
}

SpectralDensity leading_order_prediction(const dyn::ModelConfig& cfg, double t,
                                         int grid_size,
                                         const CollisionConfig& cc) {
  cfg.validate();
  if (!(t >= 0.0) || !std::isfinite(t))
    throw std::invalid_argument(
        "leading_order_prediction: t must be finite and >= 0");
  check_grid_size(grid_size);
  const auto rho0 = [&cfg](double k) {
    const double a = cfg.evaluate_profile(k);
    return a * a;
  };
  const double n = cfg.half_size;
  const double t_kin = n * n / (cfg.mu * cfg.mu * cfg.mu * cfg.mu);
  const Eigen::VectorXd c = collision_operator(rho0, grid_size, cc);
  SpectralDensity out;
  out.values.resize(grid_size);
  for (int i = 0; i < grid_size; ++i) {
    const double k = -1.0 + 2.0 * static_cast<double>(i) / (grid_size - 1);
    out.values(i) = rho0(k) + (t / t_kin) * c(i);
  }
  return out;
}

std::string solution_to_csv(const Solution& sol) {
  std::string out = "t,k,rho\n";
  char line[128];
  for (std::size_t s = 0; s < sol.states.size(); ++s) {
    const SpectralDensity& rho = sol.states[s];
    for (int i = 0; i < rho.grid_size(); ++i) {
      std::snprintf(line, sizeof(line), "%.17g,%.17g,%.17g\n", sol.times[s],
                    rho.node(i), rho.values(i));
      out += line;
    }
  }
  return out;
}

}  // namespace rmwave::kwe
