// Exact Weingarten calculus for Haar unitary moments: cycle types, exact and
// leading-order Weingarten values, bipartite moment graphs, circuit coverings,
// centered-product (penalty) moments, and gamma-kernel moments.
#pragma once

#include <Eigen/Dense>
#include <array>
#include <boost/multiprecision/cpp_int.hpp>
#include <complex>
#include <cstdint>
#include <utility>
#include <vector>

#include "rmwave/common.hpp"

namespace rmwave::wg {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

// Permutation of {0,...,q-1}; img[i] is the image of i.
struct Permutation {
  std::vector<int> img;

  static Permutation identity(int q);
  int size() const { return static_cast<int>(img.size()); }
  Permutation inverse() const;
  // (a.compose(b))(x) = a(b(x))
  Permutation compose(const Permutation& b) const;
  std::vector<int> cycle_parts() const;  // unsorted cycle lengths
  int cycle_count() const;
};

// Partition of q as parts sorted descending; canonical key for class functions.
struct CycleType {
  std::vector<int> parts;

  static CycleType of(std::vector<int> parts);
  static CycleType of_perm(const Permutation& p);
  int q() const;
  int cycles() const { return static_cast<int>(parts.size()); }
  bool operator<(const CycleType& o) const { return parts < o.parts; }
  bool operator==(const CycleType& o) const { return parts == o.parts; }
};

// Product over cycles of (-1)^{C-1} Catalan(C-1).
BigInt mobius(const CycleType& ct);

// Exact rational Weingarten value for S_q at dimension d (stable range d >= q).
// Computed once per (q,d) by inverting the class function omega -> d^{#cycles}
// in the center of the group algebra, then memoized.
Rational wg_exact(const CycleType& ct, int q, int d);

// First-order value d^{-2q + #cycles} * mobius.
double wg_leading(const CycleType& ct, int q, int d);

// Bipartite moment graph: psi factors are (row, col) edges black->white,
// psibar factors white->black. Row and column index spaces are disjoint.
struct WeingartenGraph {
  std::vector<std::pair<int, int>> psi;
  std::vector<std::pair<int, int>> psibar;

  bool balanced() const { return psi.size() == psibar.size(); }
  int order() const { return static_cast<int>(psi.size()); }
};

WeingartenGraph build_graph(const std::vector<int>& rows, const std::vector<int>& cols,
                            const std::vector<int>& rows_bar, const std::vector<int>& cols_bar);

// Admissible pairing (sigma, tau): sigma matches psi slot l to psibar slot
// sigma[l] with equal column; tau likewise with equal row. Circuits are the
// cycles of sigma o tau^{-1} (an n-cycle is a 2n-circuit).
struct CircuitCovering {
  std::vector<int> sigma;
  std::vector<int> tau;

  CycleType circuit_type() const;  // cycle type of sigma o tau^{-1}
  int circuit_count() const;
};

// All admissible pairings. Unbalanced graphs or per-index count mismatches
// yield an empty list; order() above `cap` raises std::length_error.
std::vector<CircuitCovering> enumerate_coverings(const WeingartenGraph& g, int cap = 8);

// Exact Haar moment E[Psi_G] = sum over coverings of Wg(sigma tau^{-1}, d).
// Zero (exactly) when no covering exists.
Rational haar_moment(const WeingartenGraph& g, int d, int cap = 8);

// Power-counting exponent: |E[Psi_G]| = O(d^p) with p = max(-q, c - V), where
// c counts connected components and V the distinct vertices. Requires balance.
int graph_order_bound(const WeingartenGraph& g);

// gamma(k,l,m,n) = sum_j conj(psi_jk) psi_jl conj(psi_jm) psi_jn
//                  - (delta_kl delta_mn + delta_kn delta_lm) / d.
std::complex<double> gamma_kernel(const Eigen::MatrixXcd& psi, int k, int l, int m, int n);

// Exact E[gamma^p conj(gamma)^q] for the index pattern (equality pattern of
// (k,l,m,n) given by repeated labels). Expands the row sums over set
// partitions with falling-factorial counts and closes each cell with
// haar_moment.
Rational gamma_moment_exact(const std::array<int, 4>& pattern, int p, int q, int d, int cap = 8);

// Penalty coefficients: rho_0 = 1, rho_{2k} = (2k-1)!!,
// rho_{2k+1}(omega) = (2k)!! sum_{l=0}^{k} [(2k-2l-1)!!/(2k-2l)!!]
//                     (4l + sum_i (4 C_i^2 - 2 C_i)/(C_i + 1)).
Rational rho_penalty(int K, const CycleType& omega);

struct CenteredMoment {
  Rational exact;      // E[prod_l (|psi_{a_l b_l}|^2 - 1/d) * Psi_G], inclusion-exclusion
  double predicted;    // covering sum with penalty d^{-2 floor((a+1)/2)} rho_a * leading Wg
};

// Atoms are (row, col) pairs, each contributing the centered factor
// |psi_{a b}|^2 - 1/d. An atom counts as taken by a covering exactly when its
// own psi/psibar pair forms a 2-circuit.
CenteredMoment centered_product_moment(const std::vector<std::pair<int, int>>& atoms,
                                       const WeingartenGraph& g, int d, int cap = 8);

// Residual of the one-point recursion
// Wg(oσ,d) - (1/d) Wg(σ,d) + (1/d) sum_{i in σ} Wg((i,o)σ, d); exact zero.
Rational one_step_identity_residual(const CycleType& ct, int q, int d);

// All partitions of q, descending parts, deterministic order.
std::vector<CycleType> partitions_of(int q);

}  // namespace rmwave::wg
