#pragma once

// Iterated Duhamel expansion for the random-matrix cubic flow, plus the
// oscillatory-phase toolbox used to analyze it:
//
//   * interaction histories and their collision diagrams (with DOT export),
//   * the trilinear interaction underlying the cubic nonlinearity,
//   * numerically integrated Duhamel iterates a^[m](t) on a time grid,
//   * closed-form first and second iterates built from analytic time
//     integrals of oscillatory exponentials,
//   * a dual-route check of the simplex/resolvent contour identity.
//
// Conventions match rmwave/dynamics.hpp: state vectors live on the lattice
// k = -N..N stored at index k+N, and the linear flow acts diagonally via the
// eigenvalues of the sampled matrix ensemble.

#include <complex>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rmwave/dynamics.hpp"
#include "rmwave/rmt.hpp"

namespace rmwave::duhamel {

using Complex = std::complex<double>;

// ---------------------------------------------------------------------------
// Interaction histories and collision diagrams
// ---------------------------------------------------------------------------

// A history of m cubic interactions.  Level r of the expansion carries
// 2(m-r)+1 strands; the r-th interaction merges three adjacent strands at
// offset ell[r-1] (1-based), so ell[r-1] must lie in [1, 2(m-r)+1].
struct InteractionHistory {
  int order = 0;          // m >= 0
  std::vector<int> ell;   // size m; ell[r-1] is the merge offset at level r

  bool valid() const;
};

// All histories of a given order, in lexicographic order of ell.  The number
// of histories is (2m-1)!! = 1, 1, 3, 15, 105 for m = 0..4.  Orders above 4
// throw std::length_error (the enumeration grows factorially).
std::vector<InteractionHistory> enumerate_histories(int order);

enum class VertexRole { input, linear, nonlinear, output };

struct DiagramVertex {
  int level = 0;   // r in [0, m+1]
  int slot = 0;    // j in [1, 2(m-r)+1] for r <= m; j = 1 at r = m+1
  VertexRole role = VertexRole::linear;
};

// Edge from vertex (level, slot) to vertex (level+1, to_slot).  Slots with
// even index carry conjugated amplitudes; their propagators rotate with the
// opposite phase sign.
struct DiagramEdge {
  int level = 0;
  int slot = 0;
  int to_slot = 0;
  bool conjugated = false;  // true when slot is even
};

struct FeynmanDiagram {
  int order = 0;
  InteractionHistory history;
  std::vector<DiagramVertex> vertices;  // (m+1)^2 + 1 of them
  std::vector<DiagramEdge> edges;       // (m+1)^2 of them

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int edge_count() const { return static_cast<int>(edges.size()); }
  int count_role(VertexRole role) const;
};

// Builds the collision diagram of a history: level r holds 2(m-r)+1 vertices,
// the merge at level r+1 receives the three strands ell..ell+2, and all other
// strands pass through with their index shifted past the merge.  Throws
// std::invalid_argument on an invalid history.
FeynmanDiagram build_diagram(const InteractionHistory& history);

// GraphViz rendering (top-down levels, roles color-coded).
std::string to_dot(const FeynmanDiagram& diagram);

// ---------------------------------------------------------------------------
// Trilinear interaction
// ---------------------------------------------------------------------------

// The trilinear form N[a,b,c] whose diagonal N[a,a,a] is the cubic
// nonlinearity of the flow:
//
//   N[a,b,c] = (mu^2/N) [ Psi^* ((Psi a) .* conj(Psi b) .* (Psi c))
//                         - ( <b,c> a + <b,a> c ) / (2N+1) ],
//
// with <x,y> = sum_i conj(x_i) y_i.  Middle argument enters conjugated.
dyn::StateVector nonlinearity_trilinear(const dyn::StateVector& a,
                                             const dyn::StateVector& b,
                                             const dyn::StateVector& c,
                                             const rmt::SpectralData& spec,
                                             double mu);

// ---------------------------------------------------------------------------
// Duhamel iterates on a time grid
// ---------------------------------------------------------------------------

struct IterateSet {
  int half_size = 0;            // N
  int max_order = 0;            // M
  std::vector<double> times;    // requested grid, ascending
  // iterates[m] has one column per grid time; column j holds a^[m](times[j]).
  std::vector<Eigen::MatrixXcd> iterates;
};

// Computes a^[0..M] on the given time grid for the flow defined by cfg and
// the sampled spectral data.  a^[0](t) = exp(-it Lambda) a0 with a0 built
// from the configured profile; higher iterates solve
//
//   a^[m](t) = -i sum_{m1+m2+m3=m-1} int_0^t exp(-i(t-s)Lambda)
//              N[a^[m1], a^[m2], a^[m3]](s) ds
//
// by panel-based Gauss-Legendre integration in the interaction picture, with
// panel doubling until successive refinements agree to 1e-8 in the relative
// sup norm (throws std::runtime_error if that never happens).  Requirements:
// max_order in [0, 3] (std::length_error above), grid nonempty, ascending,
// inside [0, cfg.t_end] (std::invalid_argument otherwise).
IterateSet iterate(const rmt::SpectralData& spec,
                   const dyn::ModelConfig& cfg, int max_order,
                   const std::vector<double>& time_grid);

// CSV rows "t,k,m,re,im" for every grid time, lattice site, and order.
std::string iterates_to_csv(const IterateSet& set);

// ---------------------------------------------------------------------------
// Closed-form low orders
// ---------------------------------------------------------------------------

// First and second iterates at a single time, evaluated from the explicit
// sums over lattice tuples with analytic time integrals (no quadrature):
//
//   a^[1]_k(t) = exp(-it lambda_k) f1_k,
//   f1_k = -i (mu^2/N) sum_{l,m,n} E1(t, Om(k,l,m,n))
//          gamma(k,l,m,n) a_l conj(a_m) a_n,
//
// and the corresponding double sum for a^[2] with the nested oscillatory
// integral I2; here Om(k,l,m,n) = lambda_k - lambda_l + lambda_m - lambda_n
// and gamma is the centered fourth-order eigenvector average.  Cost grows as
// the seventh power of the lattice size, so half_size is capped at 16
// (std::length_error above).  Returns {a1, a2}.
std::pair<dyn::StateVector, dyn::StateVector> closed_form_low_order(
    const rmt::SpectralData& spec, const dyn::ModelConfig& cfg, double t);

// Oscillatory primitives, exposed for testing.  Each switches to a series
// near the removable singularity; the two branches agree at the crossover.
//   osc_e1(t, x)        = int_0^t exp(isx) ds = (exp(itx) - 1)/(ix)
//   osc_power(t, x, p)  = int_0^t s^p exp(isx) ds
//   osc_i2(t, x, y)     = int_0^t exp(isx) osc_e1(s, y) ds
Complex osc_e1(double t, double x);
Complex osc_power(double t, double x, int p);
Complex osc_i2(double t, double x, double y);

// ---------------------------------------------------------------------------
// Simplex / resolvent contour identity
// ---------------------------------------------------------------------------

struct ResolventCheck {
  Complex simplex;   // int over {s_r >= 0, sum s = t} of prod_r exp(i s_r w_r)
  Complex contour;   // (exp(t/T)/2pi) i^{m+1} int prod_r (a+w_r+i/T)^{-1}
                     //   exp(-iat) da over the real line
  double residual = 0.0;  // |simplex - contour|
};

// Evaluates both sides of the simplex/resolvent identity for the phase
// factors omegas (m+1 of them, m in [0, 2]) at time t with regularization
// T > 0.  The simplex side is zero for t < 0; the contour side must vanish
// there too.  Throws std::invalid_argument for T <= 0 or empty omegas and
// std::length_error for m > 2.
ResolventCheck resolvent_identity_check(const std::vector<double>& omegas,
                                        double t, double T);

}  // namespace rmwave::duhamel
