#include "rmwave/duhamel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rmwave/common.hpp"

namespace rmwave::duhamel {

namespace {

constexpr Complex kI{0.0, 1.0};

// ---------------------------------------------------------------------------
// Oscillatory primitive internals
// ---------------------------------------------------------------------------

// Crossover between the analytic expression and the series around the
// removable singularity, measured in units of |phase| * time.
constexpr double kSeriesThreshold = 1e-4;

// E1 series: t * sum_j (itx)^j / (j! (j+1)), truncated after (itx)^5; the
// omitted tail is below 1e-24 relative at the crossover.
Complex e1_series(double t, double x) {
  const Complex z{0.0, t * x};
  Complex zj{1.0, 0.0};
  Complex sum{0.0, 0.0};
  double jfact = 1.0;
  for (int j = 0; j <= 5; ++j) {
    if (j > 0) {
      zj *= z;
      jfact *= j;
    }
    sum += zj / (jfact * (j + 1));
  }
  return t * sum;
}

// E1 with the oscillatory factor exp(itx) already in hand (callers that sum
// over lattice tuples build it from cached per-site phases).
Complex e1_from_phase(double t, double x, const Complex& eitx) {
  if (std::abs(x * t) < kSeriesThreshold) return e1_series(t, x);
  return (eitx - 1.0) * Complex(0.0, -1.0 / x);
}

// I2 with both oscillatory factors precomputed.  e1x must equal
// osc_e1(t, x).  Falls back to the series routine when y is nearly resonant.
Complex i2_from_phases(double t, double x, double y, const Complex& eitx,
                       const Complex& eity, const Complex& e1x) {
  if (std::abs(y * t) < kSeriesThreshold) return osc_i2(t, x, y);
  const double s = x + y;
  Complex e1s;
  if (std::abs(s * t) < kSeriesThreshold) {
    e1s = e1_series(t, s);
  } else {
    e1s = (eitx * eity - 1.0) * Complex(0.0, -1.0 / s);
  }
  return (e1s - e1x) * Complex(0.0, -1.0 / y);
}

// ---------------------------------------------------------------------------
// Panel Gauss-Legendre machinery for the Duhamel iterates
// ---------------------------------------------------------------------------

// Lagrange basis coefficients at point xi for the given nodes (barycentric).
std::vector<double> lagrange_coeffs(const std::vector<double>& xs, double xi) {
  const int g = static_cast<int>(xs.size());
  std::vector<double> bw(g, 1.0);
  for (int j = 0; j < g; ++j)
    for (int i = 0; i < g; ++i)
      if (i != j) bw[j] /= (xs[j] - xs[i]);
  std::vector<double> c(g, 0.0);
  for (int j = 0; j < g; ++j) {
    if (xi == xs[j]) {
      c[j] = 1.0;
      return c;
    }
  }
  double denom = 0.0;
  for (int j = 0; j < g; ++j) {
    c[j] = bw[j] / (xi - xs[j]);
    denom += c[j];
  }
  for (int j = 0; j < g; ++j) c[j] /= denom;
  return c;
}

// S(i, j) = int_{-1}^{xs[i]} L_j(x) dx, computed exactly (the integrand is a
// polynomial of degree g-1, integrated with a g-point rule).
Eigen::MatrixXd cumulative_integral_matrix(const std::vector<double>& xs) {
  const int g = static_cast<int>(xs.size());
  std::vector<double> qx, qw;
  gauss_legendre(g, qx, qw);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(g, g);
  for (int i = 0; i < g; ++i) {
    const double a = -1.0, b = xs[i];
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (int q = 0; q < g; ++q) {
      const std::vector<double> lj = lagrange_coeffs(xs, mid + half * qx[q]);
      for (int j = 0; j < g; ++j) s(i, j) += half * qw[q] * lj[j];
    }
  }
  return s;
}

std::vector<std::array<int, 3>> compositions_summing_to(int s) {
  std::vector<std::array<int, 3>> out;
  for (int m1 = 0; m1 <= s; ++m1)
    for (int m2 = 0; m2 + m1 <= s; ++m2) out.push_back({m1, m2, s - m1 - m2});
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Interaction histories and collision diagrams
// ---------------------------------------------------------------------------

bool InteractionHistory::valid() const {
  if (order < 0 || static_cast<int>(ell.size()) != order) return false;
  for (int r = 1; r <= order; ++r) {
    const int cap = 2 * (order - r) + 1;
    if (ell[r - 1] < 1 || ell[r - 1] > cap) return false;
  }
  return true;
}

std::vector<InteractionHistory> enumerate_histories(int order) {
  if (order < 0) throw std::invalid_argument("enumerate_histories: order < 0");
  if (order > 4)
    throw std::length_error(
        "enumerate_histories: order capped at 4 (double-factorial growth)");
  std::vector<InteractionHistory> out;
  std::vector<int> ell(order, 1);
  while (true) {
    out.push_back(InteractionHistory{order, ell});
    int r = order - 1;
    while (r >= 0) {
      const int cap = 2 * (order - (r + 1)) + 1;
      if (ell[r] < cap) {
        ++ell[r];
        std::fill(ell.begin() + r + 1, ell.end(), 1);
        break;
      }
      --r;
    }
    if (r < 0) break;
  }
  return out;
}

int FeynmanDiagram::count_role(VertexRole role) const {
  int n = 0;
  for (const auto& v : vertices)
    if (v.role == role) ++n;
  return n;
}

FeynmanDiagram build_diagram(const InteractionHistory& history) {
  if (!history.valid())
    throw std::invalid_argument("build_diagram: invalid interaction history");
  const int m = history.order;
  FeynmanDiagram g;
  g.order = m;
  g.history = history;
  for (int r = 0; r <= m; ++r) {
    const int width = 2 * (m - r) + 1;
    for (int j = 1; j <= width; ++j) {
      VertexRole role = VertexRole::linear;
      if (r == 0)
        role = VertexRole::input;
      else if (j == history.ell[r - 1])
        role = VertexRole::nonlinear;
      g.vertices.push_back(DiagramVertex{r, j, role});
    }
  }
  g.vertices.push_back(DiagramVertex{m + 1, 1, VertexRole::output});
  for (int r = 0; r < m; ++r) {
    const int width = 2 * (m - r) + 1;
    const int merge = history.ell[r];  // merge slot at level r+1
    for (int j = 1; j <= width; ++j) {
      int to = 0;
      if (j < merge)
        to = j;
      else if (j <= merge + 2)
        to = merge;
      else
        to = j - 2;
      g.edges.push_back(DiagramEdge{r, j, to, j % 2 == 0});
    }
  }
  g.edges.push_back(DiagramEdge{m, 1, 1, false});
  return g;
}

std::string to_dot(const FeynmanDiagram& diagram) {
  std::ostringstream os;
  os << "digraph collision_history {\n";
  os << "  rankdir=BT;\n";
  os << "  // merge offsets:";
  for (int l : diagram.history.ell) os << ' ' << l;
  os << "\n";
  const int m = diagram.order;
  for (int r = 0; r <= m + 1; ++r) {
    os << "  { rank=same;";
    for (const auto& v : diagram.vertices) {
      if (v.level != r) continue;
      os << " v" << v.level << "_" << v.slot << ";";
    }
    os << " }\n";
  }
  for (const auto& v : diagram.vertices) {
    const char* style = nullptr;
    switch (v.role) {
      case VertexRole::input:
        style = "shape=circle, style=filled, fillcolor=lightgray";
        break;
      case VertexRole::linear:
        style = "shape=point";
        break;
      case VertexRole::nonlinear:
        style = "shape=doublecircle, style=filled, fillcolor=salmon";
        break;
      case VertexRole::output:
        style = "shape=square, style=filled, fillcolor=lightblue";
        break;
    }
    os << "  v" << v.level << "_" << v.slot << " [label=\"(" << v.level << ","
       << v.slot << ")\", " << style << "];\n";
  }
  for (const auto& e : diagram.edges) {
    os << "  v" << e.level << "_" << e.slot << " -> v" << (e.level + 1) << "_"
       << e.to_slot;
    if (e.conjugated) os << " [style=dashed]";
    os << ";\n";
  }
  os << "}\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Trilinear interaction
// ---------------------------------------------------------------------------

dyn::StateVector nonlinearity_trilinear(const dyn::StateVector& a,
                                             const dyn::StateVector& b,
                                             const dyn::StateVector& c,
                                             const rmt::SpectralData& spec,
                                             double mu) {
  const Eigen::Index d = spec.dim();
  if (a.size() != d || b.size() != d || c.size() != d)
    throw std::invalid_argument(
        "nonlinearity_trilinear: state size does not match spectral data");
  const Eigen::VectorXcd wa = spec.psi * a;
  const Eigen::VectorXcd wb = spec.psi * b;
  const Eigen::VectorXcd wc = spec.psi * c;
  Eigen::VectorXcd out =
      spec.psi.adjoint() *
      (wa.array() * wb.array().conjugate() * wc.array()).matrix();
  const Complex bc = b.dot(c);
  const Complex ba = b.dot(a);
  out -= (bc * a + ba * c) / static_cast<double>(d);
  out *= mu * mu / static_cast<double>(spec.half_size);
  return out;
}

// ---------------------------------------------------------------------------
// Duhamel iterates on a time grid
// ---------------------------------------------------------------------------

IterateSet iterate(const rmt::SpectralData& spec,
                   const dyn::ModelConfig& cfg, int max_order,
                   const std::vector<double>& time_grid) {
  cfg.validate();
  if (spec.half_size != cfg.half_size || spec.psi.rows() != spec.dim() ||
      spec.lambda.size() != spec.dim())
    throw std::invalid_argument("iterate: spectral data does not match config");
  if (max_order < 0) throw std::invalid_argument("iterate: max_order < 0");
  if (max_order > 3)
    throw std::length_error("iterate: max_order capped at 3");
  if (time_grid.empty())
    throw std::invalid_argument("iterate: empty time grid");
  if (!std::is_sorted(time_grid.begin(), time_grid.end()))
    throw std::invalid_argument("iterate: time grid must be ascending");
  for (double t : time_grid)
    if (!(t >= 0.0) || t > cfg.t_end * (1.0 + 1e-12) + 1e-300)
      throw std::invalid_argument(
          "iterate: time grid must lie inside [0, t_end]");

  const int dd = spec.dim();
  const int big_m = max_order;
  const Eigen::Index nt = static_cast<Eigen::Index>(time_grid.size());
  const Eigen::VectorXcd a0 = dyn::initial_data(cfg);
  const Eigen::ArrayXcd lam = spec.lambda.array().cast<Complex>();
  const double mu2n = cfg.mu * cfg.mu / cfg.half_size;
  const double t_max = time_grid.back();

  IterateSet out;
  out.half_size = cfg.half_size;
  out.max_order = big_m;
  out.times = time_grid;
  out.iterates.assign(big_m + 1, Eigen::MatrixXcd::Zero(dd, nt));

  for (Eigen::Index jt = 0; jt < nt; ++jt)
    out.iterates[0].col(jt) =
        ((lam * Complex(0.0, -time_grid[jt])).exp() * a0.array()).matrix();
  if (big_m == 0 || t_max == 0.0) return out;

  const int g = 8;
  std::vector<double> gx, gw;
  gauss_legendre(g, gx, gw);
  const Eigen::MatrixXcd st =
      cumulative_integral_matrix(gx).transpose().cast<Complex>();
  const Eigen::VectorXcd wvec =
      Eigen::Map<const Eigen::VectorXd>(gw.data(), g).cast<Complex>();

  std::vector<std::vector<std::array<int, 3>>> comps(big_m + 1);
  for (int m = 1; m <= big_m; ++m) comps[m] = compositions_summing_to(m - 1);

  std::vector<Eigen::MatrixXcd> prev;
  int panels = std::max(2, static_cast<int>(std::ceil(t_max / 0.5)));
  constexpr int kMaxLevels = 8;
  constexpr double kRelTol = 1e-8;

  for (int level = 0; level < kMaxLevels; ++level, panels *= 2) {
    const Eigen::Index q_total = static_cast<Eigen::Index>(panels) * g;
    const double h = t_max / panels;
    std::vector<double> tnode(q_total);
    for (int p = 0; p < panels; ++p)
      for (int i = 0; i < g; ++i)
        tnode[p * g + i] = p * h + 0.5 * h * (gx[i] + 1.0);

    Eigen::MatrixXcd eph(dd, q_total);  // exp(-i s Lambda) at the nodes
    for (Eigen::Index q = 0; q < q_total; ++q)
      eph.col(q) = (lam * Complex(0.0, -tnode[q])).exp().matrix();

    // Interaction-picture values and their frame images, orders 0..big_m-1.
    std::vector<Eigen::MatrixXcd> uall(big_m), wall(big_m);
    uall[0] = eph.array().colwise() * a0.array();
    wall[0] = spec.psi * uall[0];

    std::vector<Eigen::MatrixXcd> fnode(big_m + 1);  // f^[m] at the nodes
    for (int m = 1; m <= big_m; ++m) {
      if (m - 1 >= 1) {
        uall[m - 1] = eph.array() * fnode[m - 1].array();
        wall[m - 1] = spec.psi * uall[m - 1];
      }
      Eigen::MatrixXcd prodsum = Eigen::MatrixXcd::Zero(dd, q_total);
      Eigen::MatrixXcd deltasum = Eigen::MatrixXcd::Zero(dd, q_total);
      for (const auto& c : comps[m]) {
        prodsum.array() += wall[c[0]].array() *
                           wall[c[1]].array().conjugate() * wall[c[2]].array();
        const Eigen::RowVectorXcd dvw =
            (uall[c[1]].conjugate().array() * uall[c[2]].array())
                .colwise()
                .sum();
        const Eigen::RowVectorXcd dvu =
            (uall[c[1]].conjugate().array() * uall[c[0]].array())
                .colwise()
                .sum();
        deltasum.array() += uall[c[0]].array().rowwise() * dvw.array() +
                            uall[c[2]].array().rowwise() * dvu.array();
      }
      Eigen::MatrixXcd gm = spec.psi.adjoint() * prodsum;
      gm -= deltasum / static_cast<double>(dd);
      gm = (eph.conjugate().array() * gm.array()).matrix() * (-kI * mu2n);

      fnode[m].resize(dd, q_total);
      Eigen::VectorXcd run = Eigen::VectorXcd::Zero(dd);
      for (int p = 0; p < panels; ++p) {
        const auto blk = gm.middleCols(static_cast<Eigen::Index>(p) * g, g);
        fnode[m].middleCols(static_cast<Eigen::Index>(p) * g, g) =
            (0.5 * h) * (blk * st);
        fnode[m]
            .middleCols(static_cast<Eigen::Index>(p) * g, g)
            .colwise() += run;
        run += (0.5 * h) * (blk * wvec);
      }
    }

    // Evaluate at the requested grid by per-panel Lagrange interpolation.
    std::vector<Eigen::MatrixXcd> cur(big_m + 1);
    for (int m = 1; m <= big_m; ++m) cur[m].resize(dd, nt);
    for (Eigen::Index jt = 0; jt < nt; ++jt) {
      const double t = time_grid[jt];
      int p = std::min(panels - 1, static_cast<int>(std::floor(t / h)));
      const double xi =
          std::clamp(2.0 * (t - p * h) / h - 1.0, -1.0, 1.0);
      const std::vector<double> cj = lagrange_coeffs(gx, xi);
      const Eigen::VectorXcd cvec =
          Eigen::Map<const Eigen::VectorXd>(cj.data(), g).cast<Complex>();
      const Eigen::ArrayXcd phase = (lam * Complex(0.0, -t)).exp();
      for (int m = 1; m <= big_m; ++m)
        cur[m].col(jt) =
            (phase *
             (fnode[m].middleCols(static_cast<Eigen::Index>(p) * g, g) * cvec)
                 .array())
                .matrix();
    }

    if (level > 0) {
      double err = 0.0;
      for (int m = 1; m <= big_m; ++m) {
        const double scale =
            std::max(cur[m].cwiseAbs().maxCoeff(), 1e-12);
        err = std::max(
            err, (cur[m] - prev[m]).cwiseAbs().maxCoeff() / scale);
      }
      if (err < kRelTol) {
        for (int m = 1; m <= big_m; ++m) out.iterates[m] = cur[m];
        return out;
      }
    }
    prev = std::move(cur);
  }
  throw std::runtime_error("iterate: panel refinement did not converge");
}

std::string iterates_to_csv(const IterateSet& set) {
  std::string out = "t,k,m,re,im\n";
  char buf[160];
  const int dd = 2 * set.half_size + 1;
  for (std::size_t jt = 0; jt < set.times.size(); ++jt) {
    for (int site = 0; site < dd; ++site) {
      for (int m = 0; m <= set.max_order; ++m) {
        const Complex v = set.iterates[m](site, static_cast<Eigen::Index>(jt));
        std::snprintf(buf, sizeof(buf), "%.17g,%d,%d,%.17g,%.17g\n",
                      set.times[jt], site - set.half_size, m, v.real(),
                      v.imag());
        out += buf;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Closed-form low orders
// ---------------------------------------------------------------------------

std::pair<dyn::StateVector, dyn::StateVector> closed_form_low_order(
    const rmt::SpectralData& spec, const dyn::ModelConfig& cfg,
    double t) {
  cfg.validate();
  if (spec.half_size != cfg.half_size || spec.psi.rows() != spec.dim())
    throw std::invalid_argument(
        "closed_form_low_order: spectral data does not match config");
  if (!(t >= 0.0) || !std::isfinite(t))
    throw std::invalid_argument("closed_form_low_order: t must be >= 0");
  if (cfg.half_size > 16)
    throw std::length_error(
        "closed_form_low_order: half_size capped at 16 (cost grows as the "
        "seventh power of the lattice size)");

  const int dd = spec.dim();
  const std::size_t d2 = static_cast<std::size_t>(dd) * dd;
  const std::size_t d3 = d2 * dd;
  const Eigen::VectorXcd a0 = dyn::initial_data(cfg);
  const Eigen::VectorXd& lam = spec.lambda;
  const double mu2n = cfg.mu * cfg.mu / cfg.half_size;
  const double inv_d = 1.0 / dd;

  // Per-site phases exp(it lambda); tuple phases are products of these.
  Eigen::ArrayXcd ph(dd);
  for (int x = 0; x < dd; ++x) ph(x) = std::polar(1.0, t * lam(x));

  // Fourth-order eigenvector contraction as a (d^2) x (d^2) matrix:
  // core(k*d+l, m*d+n) = sum_j conj(psi_jk) psi_jl conj(psi_jm) psi_jn.
  Eigen::MatrixXcd x(d2, dd);
  for (int k = 0; k < dd; ++k)
    for (int l = 0; l < dd; ++l)
      x.row(static_cast<Eigen::Index>(k) * dd + l) =
          spec.psi.col(k).conjugate().cwiseProduct(spec.psi.col(l)).transpose();
  const Eigen::MatrixXcd core = x * x.transpose();

  auto gamma4 = [&](int a, int b, int c, int e) -> Complex {
    Complex v = core(static_cast<Eigen::Index>(a) * dd + b,
                     static_cast<Eigen::Index>(c) * dd + e);
    const double delta =
        (double(a == b) * double(c == e) + double(a == e) * double(b == c)) *
        inv_d;
    return v - delta;
  };

  // First iterate: f1_k = -i (mu^2/N) sum_{l,m,n} E1(t, Om) gamma a_l
  // conj(a_m) a_n, then rotate back to the lab frame.
  Eigen::VectorXcd f1 = Eigen::VectorXcd::Zero(dd);
  for (int k = 0; k < dd; ++k) {
    Complex acc{0.0, 0.0};
    for (int l = 0; l < dd; ++l) {
      if (a0(l) == Complex(0.0, 0.0)) continue;
      const Complex pkl = ph(k) * std::conj(ph(l));
      const double om_kl = lam(k) - lam(l);
      for (int m = 0; m < dd; ++m) {
        if (a0(m) == Complex(0.0, 0.0)) continue;
        const Complex pklm = pkl * ph(m);
        const double om_klm = om_kl + lam(m);
        const Complex alm = a0(l) * std::conj(a0(m));
        for (int n = 0; n < dd; ++n) {
          if (a0(n) == Complex(0.0, 0.0)) continue;
          const double om = om_klm - lam(n);
          const Complex eit = pklm * std::conj(ph(n));
          acc += e1_from_phase(t, om, eit) * gamma4(k, l, m, n) * alm * a0(n);
        }
      }
    }
    f1(k) = -kI * mu2n * acc;
  }

  // Cached inner-tuple data, indexed by (f, o, p, q) packed as f*d^3 + opq:
  //   gw  = gamma(f,o,p,q) * a_o conj(a_p) a_q
  //   om2 = lam_f - lam_o + lam_p - lam_q,   ph2 = exp(it om2)
  std::vector<Complex> gw(static_cast<std::size_t>(dd) * d3);
  std::vector<Complex> ph2(gw.size());
  std::vector<double> om2(gw.size());
  for (int f = 0; f < dd; ++f) {
    for (int o = 0; o < dd; ++o) {
      const Complex pfo = ph(f) * std::conj(ph(o));
      const double om_fo = lam(f) - lam(o);
      for (int p = 0; p < dd; ++p) {
        const Complex pfop = pfo * ph(p);
        const double om_fop = om_fo + lam(p);
        const Complex aop = a0(o) * std::conj(a0(p));
        for (int q = 0; q < dd; ++q) {
          const std::size_t idx =
              ((static_cast<std::size_t>(f) * dd + o) * dd + p) * dd + q;
          om2[idx] = om_fop - lam(q);
          ph2[idx] = pfop * std::conj(ph(q));
          gw[idx] = gamma4(f, o, p, q) * aop * a0(q);
        }
      }
    }
  }

  // Second iterate: for each output site k,
  //   f2_k = (mu^2/N)^2 [ -2 sum I2(t,Om1,Om2) g(k,l,m,n) g(l,o,p,q)
  //                          a_o conj(a_p) a_q conj(a_m) a_n
  //                        + sum I2(t,Om1,-Om(m,o,p,q)) g(k,l,m,n)
  //                          conj(g(m,o,p,q)) a_l conj(a_o) a_p conj(a_q) a_n ]
  // The A-route counts twice because the histories placing the nested
  // interaction on the first and third strand give identical sums.
  Eigen::VectorXcd f2 = Eigen::VectorXcd::Zero(dd);
  parallel_for(static_cast<std::size_t>(dd), 0, [&](std::size_t kk) {
    const int k = static_cast<int>(kk);
    Complex acc_a{0.0, 0.0};
    Complex acc_b{0.0, 0.0};
    for (int l = 0; l < dd; ++l) {
      const Complex pkl = ph(k) * std::conj(ph(l));
      const double om_kl = lam(k) - lam(l);
      const Complex* gw_l = gw.data() + static_cast<std::size_t>(l) * d3;
      const Complex* ph_l = ph2.data() + static_cast<std::size_t>(l) * d3;
      const double* om_l = om2.data() + static_cast<std::size_t>(l) * d3;
      for (int m = 0; m < dd; ++m) {
        const Complex pklm = pkl * ph(m);
        const double om_klm = om_kl + lam(m);
        const Complex* gw_m = gw.data() + static_cast<std::size_t>(m) * d3;
        const Complex* ph_m = ph2.data() + static_cast<std::size_t>(m) * d3;
        const double* om_m = om2.data() + static_cast<std::size_t>(m) * d3;
        for (int n = 0; n < dd; ++n) {
          const Complex g1 = gamma4(k, l, m, n);
          const Complex ca = g1 * std::conj(a0(m)) * a0(n);
          const Complex cb = g1 * a0(l) * a0(n);
          const bool use_a = ca != Complex(0.0, 0.0);
          const bool use_b = cb != Complex(0.0, 0.0);
          if (!use_a && !use_b) continue;
          const double om1 = om_klm - lam(n);
          const Complex eit1 = pklm * std::conj(ph(n));
          const Complex e1om1 = e1_from_phase(t, om1, eit1);
          if (use_a) {
            Complex inner{0.0, 0.0};
            for (std::size_t idx = 0; idx < d3; ++idx) {
              if (gw_l[idx] == Complex(0.0, 0.0)) continue;
              inner += i2_from_phases(t, om1, om_l[idx], eit1, ph_l[idx],
                                      e1om1) *
                       gw_l[idx];
            }
            acc_a += ca * inner;
          }
          if (use_b) {
            Complex inner{0.0, 0.0};
            for (std::size_t idx = 0; idx < d3; ++idx) {
              if (gw_m[idx] == Complex(0.0, 0.0)) continue;
              inner += i2_from_phases(t, om1, -om_m[idx], eit1,
                                      std::conj(ph_m[idx]), e1om1) *
                       std::conj(gw_m[idx]);
            }
            acc_b += cb * inner;
          }
        }
      }
    }
    f2(k) = (mu2n * mu2n) * (-2.0 * acc_a + acc_b);
  });

  // Rotate both iterates back to the lab frame.
  dyn::StateVector a1(dd), a2(dd);
  for (int k = 0; k < dd; ++k) {
    const Complex back = std::conj(ph(k));  // exp(-it lambda_k)
    a1(k) = back * f1(k);
    a2(k) = back * f2(k);
  }
  return {a1, a2};
}

Complex osc_e1(double t, double x) { return osc_power(t, x, 0); }

Complex osc_power(double t, double x, int p) {
  if (p < 0) throw std::invalid_argument("osc_power: p must be >= 0");
  if (t == 0.0) return Complex(0.0, 0.0);
  const double z = x * t;
  // The upward recursion divides by x at each step, amplifying the error of
  // the previous moment by roughly (p+1)/|z|; it is only stable for |z| of
  // order one and above.  Below that the series converges rapidly anyway.
  if (std::abs(z) < 1.0) {
    const Complex iz{0.0, z};
    Complex zj{1.0, 0.0};
    Complex sum{0.0, 0.0};
    double jfact = 1.0;
    for (int j = 0; j <= 24; ++j) {
      if (j > 0) {
        zj *= iz;
        jfact *= j;
      }
      sum += zj / (jfact * (p + j + 1));
    }
    return std::pow(t, p + 1) * sum;
  }
  const Complex eitx = std::polar(1.0, z);
  const Complex minus_i_over_x{0.0, -1.0 / x};
  Complex cur = (eitx - 1.0) * minus_i_over_x;
  double tq = 1.0;
  for (int q = 1; q <= p; ++q) {
    tq *= t;
    cur = (tq * eitx - static_cast<double>(q) * cur) * minus_i_over_x;
  }
  return cur;
}

Complex osc_i2(double t, double x, double y) {
  if (t == 0.0) return Complex(0.0, 0.0);
  if (std::abs(y * t) < kSeriesThreshold) {
    Complex sum{0.0, 0.0};
    Complex yj{1.0, 0.0};
    double fact = 1.0;
    for (int j = 0; j <= 5; ++j) {
      fact *= (j + 1);
      sum += yj / fact * osc_power(t, x, j + 1);
      yj *= Complex(0.0, y);
    }
    return sum;
  }
  return (osc_e1(t, x + y) - osc_e1(t, x)) * Complex(0.0, -1.0 / y);
}

// ---------------------------------------------------------------------------
// Simplex / resolvent contour identity
// ---------------------------------------------------------------------------

ResolventCheck resolvent_identity_check(const std::vector<double>& omegas,
                                        double t, double T) {
  if (omegas.empty())
    throw std::invalid_argument(
        "resolvent_identity_check: need at least one phase");
  if (!(T > 0.0))
    throw std::invalid_argument("resolvent_identity_check: T must be > 0");
  if (!std::isfinite(t) || std::abs(t) < 1e-3)
    throw std::invalid_argument(
        "resolvent_identity_check: |t| must be at least 1e-3");
  const int m = static_cast<int>(omegas.size()) - 1;
  if (m > 2)
    throw std::length_error(
        "resolvent_identity_check: at most three phases supported");
  for (double w : omegas)
    if (!std::isfinite(w))
      throw std::invalid_argument("resolvent_identity_check: phases finite");

  double wmax = 0.0;
  for (double w : omegas) wmax = std::max(wmax, std::abs(w));

  // --- simplex side -------------------------------------------------------
  Complex lhs{0.0, 0.0};
  if (t >= 0.0) {
    if (m == 0) {
      lhs = std::polar(1.0, t * omegas[0]);
    } else if (m == 1) {
      const auto f = [&](double s0) {
        return std::polar(1.0, s0 * omegas[0] + (t - s0) * omegas[1]);
      };
      const int panels =
          4 + static_cast<int>(std::ceil(t * (std::abs(omegas[0]) +
                                              std::abs(omegas[1]))));
      lhs = composite_gl(f, 0.0, t, 8, panels);
    } else {
      const auto inner = [&](double s0) {
        const auto f1 = [&](double s1) {
          return std::polar(1.0, s0 * omegas[0] + s1 * omegas[1] +
                                     (t - s0 - s1) * omegas[2]);
        };
        const int panels =
            4 + static_cast<int>(std::ceil((t - s0) * (std::abs(omegas[1]) +
                                                       std::abs(omegas[2]))));
        return composite_gl(f1, 0.0, t - s0, 8, panels);
      };
      const int panels =
          4 + static_cast<int>(std::ceil(t * (std::abs(omegas[0]) +
                                              std::abs(omegas[2]))));
      lhs = composite_gl(inner, 0.0, t, 8, panels);
    }
  }

  // --- contour side -------------------------------------------------------
  const Complex shift{0.0, 1.0 / T};
  const auto g = [&](double al) {
    Complex prod{1.0, 0.0};
    for (double w : omegas) prod /= (al + w + shift);
    return prod;
  };
  const auto gprime = [&](double al) {
    Complex s{0.0, 0.0};
    for (double w : omegas) s += 1.0 / (al + w + shift);
    return -g(al) * s;
  };

  const double teff = std::max(std::abs(t), 0.1);
  double margin = 0.0;
  if (m == 0)
    margin = 1.2e5 / teff;
  else if (m == 1)
    margin = std::cbrt(6e9 / (teff * teff));
  else
    margin = std::pow(1.2e10 / (teff * teff), 0.25);
  const double r = wmax + 12.0 + margin;
  const double near_lo = -wmax - 12.0, near_hi = wmax + 12.0;
  const double w_near =
      std::min({1.0 / (4.0 * T), M_PI / (4.0 * teff), 0.25});
  const double w_far = M_PI / (2.0 * teff);

  std::vector<double> edges;
  edges.push_back(-r);
  {
    // far panels up to near_lo, near panels to near_hi, far panels to r
    double a = -r;
    const int nf1 = std::max(1, static_cast<int>(std::ceil((near_lo - a) /
                                                           w_far)));
    for (int i = 1; i <= nf1; ++i)
      edges.push_back(a + (near_lo - a) * i / nf1);
    const int nn = std::max(
        1, static_cast<int>(std::ceil((near_hi - near_lo) / w_near)));
    for (int i = 1; i <= nn; ++i)
      edges.push_back(near_lo + (near_hi - near_lo) * i / nn);
    const int nf2 =
        std::max(1, static_cast<int>(std::ceil((r - near_hi) / w_far)));
    for (int i = 1; i <= nf2; ++i)
      edges.push_back(near_hi + (r - near_hi) * i / nf2);
  }

  std::vector<double> qx, qw;
  gauss_legendre(8, qx, qw);
  Complex integral{0.0, 0.0};
  for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
    const double a = edges[p], b = edges[p + 1];
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    Complex acc{0.0, 0.0};
    for (int i = 0; i < 8; ++i) {
      const double al = mid + half * qx[i];
      acc += qw[i] * g(al) * std::polar(1.0, -al * t);
    }
    integral += half * acc;
  }
  // Two integrations by parts estimate each truncated tail.
  const Complex it{0.0, t};
  integral += std::polar(1.0, -r * t) * (g(r) / it + gprime(r) / (it * it));
  integral -= std::polar(1.0, r * t) * (g(-r) / it + gprime(-r) / (it * it));

  Complex ipow{0.0, 1.0};  // i^(m+1)
  for (int j = 0; j < m; ++j) ipow *= kI;
  const Complex rhs = std::exp(t / T) / (2.0 * M_PI) * ipow * integral;

  ResolventCheck out;
  out.simplex = lhs;
  out.contour = rhs;
  out.residual = std::abs(lhs - rhs);
  return out;
}

}  // namespace rmwave::duhamel
