#include "rmwave/weingarten.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <stdexcept>

namespace rmwave::wg {

// ---------------------------------------------------------------- permutations

Permutation Permutation::identity(int q) {
  Permutation p;
  p.img.resize(q);
  std::iota(p.img.begin(), p.img.end(), 0);
  return p;
}

Permutation Permutation::inverse() const {
  Permutation r;
  r.img.resize(img.size());
  for (int i = 0; i < size(); ++i) r.img[img[i]] = i;
  return r;
}

Permutation Permutation::compose(const Permutation& b) const {
  if (size() != b.size()) throw std::invalid_argument("compose: size mismatch");
  Permutation r;
  r.img.resize(img.size());
  for (int i = 0; i < size(); ++i) r.img[i] = img[b.img[i]];
  return r;
}

std::vector<int> Permutation::cycle_parts() const {
  std::vector<int> parts;
  std::vector<char> seen(img.size(), 0);
  for (int i = 0; i < size(); ++i) {
    if (seen[i]) continue;
    int len = 0, j = i;
    while (!seen[j]) {
      seen[j] = 1;
      j = img[j];
      ++len;
    }
    parts.push_back(len);
  }
  return parts;
}

int Permutation::cycle_count() const {
  int c = 0;
  std::vector<char> seen(img.size(), 0);
  for (int i = 0; i < size(); ++i) {
    if (seen[i]) continue;
    ++c;
    int j = i;
    while (!seen[j]) {
      seen[j] = 1;
      j = img[j];
    }
  }
  return c;
}

CycleType CycleType::of(std::vector<int> parts) {
  for (int p : parts)
    if (p < 1) throw std::invalid_argument("CycleType: parts must be positive");
  std::sort(parts.begin(), parts.end(), std::greater<int>());
  CycleType ct;
  ct.parts = std::move(parts);
  return ct;
}

CycleType CycleType::of_perm(const Permutation& p) { return of(p.cycle_parts()); }

int CycleType::q() const { return std::accumulate(parts.begin(), parts.end(), 0); }

std::vector<CycleType> partitions_of(int q) {
  if (q < 0) throw std::invalid_argument("partitions_of: q must be >= 0");
  std::vector<CycleType> out;
  std::vector<int> cur;
  const std::function<void(int, int)> rec = [&](int rem, int maxp) {
    if (rem == 0) {
      CycleType ct;
      ct.parts = cur;
      out.push_back(ct);
      return;
    }
    for (int p = std::min(rem, maxp); p >= 1; --p) {
      cur.push_back(p);
      rec(rem - p, p);
      cur.pop_back();
    }
  };
  rec(q, q);
  return out;
}

// ------------------------------------------------------------------- factorials

static BigInt catalan_big(int n) {
  // binom(2n, n) / (n+1)
  BigInt num = 1, den = 1;
  for (int i = 1; i <= n; ++i) {
    num *= (n + i);
    den *= i;
  }
  return num / den / (n + 1);
}

static BigInt double_factorial(int n) {
  // (-1)!! = 0!! = 1
  BigInt r = 1;
  for (int i = n; i >= 2; i -= 2) r *= i;
  return r;
}

BigInt mobius(const CycleType& ct) {
  BigInt r = 1;
  for (int c : ct.parts) {
    r *= catalan_big(c - 1);
    if ((c - 1) % 2 == 1) r = -r;
  }
  return r;
}

// ------------------------------------------------------- class-algebra Wg tables

namespace {

Permutation representative(const CycleType& ct) {
  Permutation p;
  p.img.reserve(ct.q());
  int base = 0;
  for (int c : ct.parts) {
    for (int i = 0; i < c; ++i) p.img.push_back(base + (i + 1) % c);
    base += c;
  }
  return p;
}

struct ClassData {
  std::vector<CycleType> types;
  std::map<std::vector<int>, int> index;
  // counts[nu][mu][c] = #{beta of type mu : cycles(rep_nu o beta^{-1}) = c}
  std::vector<std::vector<std::vector<std::int64_t>>> counts;
};

const ClassData& class_data(int q) {
  static std::map<int, ClassData> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lk(mu);
  auto it = cache.find(q);
  if (it != cache.end()) return it->second;
  if (q > 9) throw std::length_error("weingarten: symmetric-group order exceeds enumeration budget");

  ClassData cd;
  cd.types = partitions_of(q);
  const int np = static_cast<int>(cd.types.size());
  for (int i = 0; i < np; ++i) cd.index[cd.types[i].parts] = i;
  cd.counts.assign(np, std::vector<std::vector<std::int64_t>>(
                           np, std::vector<std::int64_t>(q + 1, 0)));

  std::vector<Permutation> reps;
  reps.reserve(np);
  for (const auto& t : cd.types) reps.push_back(representative(t));

  std::vector<int> beta(q);
  std::iota(beta.begin(), beta.end(), 0);
  std::vector<int> beta_inv(q), comp(q), parts;
  std::vector<char> seen(q);
  do {
    for (int i = 0; i < q; ++i) beta_inv[beta[i]] = i;
    // type of beta
    parts.clear();
    std::fill(seen.begin(), seen.end(), 0);
    for (int i = 0; i < q; ++i) {
      if (seen[i]) continue;
      int len = 0, j = i;
      while (!seen[j]) {
        seen[j] = 1;
        j = beta[j];
        ++len;
      }
      parts.push_back(len);
    }
    std::sort(parts.begin(), parts.end(), std::greater<int>());
    const int mu = cd.index.at(parts);
    for (int nu = 0; nu < np; ++nu) {
      const auto& rep = reps[nu].img;
      for (int i = 0; i < q; ++i) comp[i] = rep[beta_inv[i]];
      int cyc = 0;
      std::fill(seen.begin(), seen.end(), 0);
      for (int i = 0; i < q; ++i) {
        if (seen[i]) continue;
        ++cyc;
        int j = i;
        while (!seen[j]) {
          seen[j] = 1;
          j = comp[j];
        }
      }
      ++cd.counts[nu][mu][cyc];
    }
  } while (std::next_permutation(beta.begin(), beta.end()));

  auto [pos, ok] = cache.emplace(q, std::move(cd));
  (void)ok;
  return pos->second;
}

// Solve M w = rhs over rationals (square, invertible in the stable range).
std::vector<Rational> solve_rational(std::vector<std::vector<Rational>> m,
                                     std::vector<Rational> rhs) {
  const int n = static_cast<int>(m.size());
  for (int col = 0; col < n; ++col) {
    int piv = -1;
    for (int r = col; r < n; ++r)
      if (m[r][col] != 0) {
        piv = r;
        break;
      }
    if (piv < 0) throw std::runtime_error("weingarten: singular class-function system");
    std::swap(m[piv], m[col]);
    std::swap(rhs[piv], rhs[col]);
    const Rational inv = Rational(1) / m[col][col];
    for (int c = col; c < n; ++c) m[col][c] *= inv;
    rhs[col] *= inv;
    for (int r = 0; r < n; ++r) {
      if (r == col || m[r][col] == 0) continue;
      const Rational f = m[r][col];
      for (int c = col; c < n; ++c) m[r][c] -= f * m[col][c];
      rhs[r] -= f * rhs[col];
    }
  }
  return rhs;
}

const std::map<std::vector<int>, Rational>& wg_table(int q, int d) {
  static std::map<std::pair<int, int>, std::map<std::vector<int>, Rational>> cache;
  static std::mutex mu;
  {
    std::lock_guard<std::mutex> lk(mu);
    auto it = cache.find({q, d});
    if (it != cache.end()) return it->second;
  }
  const ClassData& cd = class_data(q);
  const int np = static_cast<int>(cd.types.size());

  std::vector<BigInt> dpow(q + 1);
  dpow[0] = 1;
  for (int c = 1; c <= q; ++c) dpow[c] = dpow[c - 1] * d;

  std::vector<std::vector<Rational>> m(np, std::vector<Rational>(np));
  for (int nu = 0; nu < np; ++nu)
    for (int muc = 0; muc < np; ++muc) {
      BigInt acc = 0;
      for (int c = 1; c <= q; ++c)
        if (cd.counts[nu][muc][c] != 0) acc += dpow[c] * cd.counts[nu][muc][c];
      m[nu][muc] = Rational(acc);
    }

  std::vector<Rational> rhs(np, Rational(0));
  const std::vector<int> ident(q, 1);
  rhs[cd.index.at(ident)] = 1;

  std::vector<Rational> w = solve_rational(std::move(m), std::move(rhs));
  std::map<std::vector<int>, Rational> table;
  for (int i = 0; i < np; ++i) table[cd.types[i].parts] = w[i];

  std::lock_guard<std::mutex> lk(mu);
  auto [pos, ok] = cache.emplace(std::make_pair(q, d), std::move(table));
  (void)ok;
  return pos->second;
}

}  // namespace

Rational wg_exact(const CycleType& ct, int q, int d) {
  if (q < 1) throw std::invalid_argument("wg_exact: q must be >= 1");
  if (ct.q() != q) throw std::invalid_argument("wg_exact: cycle type does not partition q");
  if (d < q) throw std::domain_error("wg_exact: stable range requires d >= q");
  return wg_table(q, d).at(ct.parts);
}

double wg_leading(const CycleType& ct, int q, int d) {
  if (ct.q() != q) throw std::invalid_argument("wg_leading: cycle type does not partition q");
  return mobius(ct).convert_to<double>() *
         std::pow(static_cast<double>(d), -2.0 * q + ct.cycles());
}

// -------------------------------------------------------------- moment graphs

WeingartenGraph build_graph(const std::vector<int>& rows, const std::vector<int>& cols,
                            const std::vector<int>& rows_bar, const std::vector<int>& cols_bar) {
  if (rows.size() != cols.size() || rows_bar.size() != cols_bar.size())
    throw std::invalid_argument("build_graph: row/col lists must have equal length");
  WeingartenGraph g;
  g.psi.reserve(rows.size());
  g.psibar.reserve(rows_bar.size());
  for (std::size_t i = 0; i < rows.size(); ++i) g.psi.emplace_back(rows[i], cols[i]);
  for (std::size_t i = 0; i < rows_bar.size(); ++i) g.psibar.emplace_back(rows_bar[i], cols_bar[i]);
  return g;
}

CycleType CircuitCovering::circuit_type() const {
  Permutation s, t;
  s.img = sigma;
  t.img = tau;
  return CycleType::of_perm(s.compose(t.inverse()));
}

int CircuitCovering::circuit_count() const {
  return static_cast<int>(circuit_type().parts.size());
}

namespace {

// Generates all slot assignments psi-slot -> psibar-slot consistent with the
// grouping key (column for sigma, row for tau).
std::vector<std::vector<int>> grouped_assignments(const WeingartenGraph& g, bool by_col) {
  const int q = g.order();
  std::map<int, std::pair<std::vector<int>, std::vector<int>>> groups;
  for (int i = 0; i < q; ++i)
    groups[by_col ? g.psi[i].second : g.psi[i].first].first.push_back(i);
  for (int i = 0; i < q; ++i)
    groups[by_col ? g.psibar[i].second : g.psibar[i].first].second.push_back(i);

  std::vector<std::vector<int>> acc;
  acc.push_back(std::vector<int>(q, -1));
  for (auto& [key, grp] : groups) {
    (void)key;
    if (grp.first.size() != grp.second.size()) return {};
    std::vector<int> tgt = grp.second;
    std::sort(tgt.begin(), tgt.end());
    std::vector<std::vector<int>> next;
    do {
      for (const auto& base : acc) {
        auto v = base;
        for (std::size_t i = 0; i < grp.first.size(); ++i) v[grp.first[i]] = tgt[i];
        next.push_back(std::move(v));
      }
    } while (std::next_permutation(tgt.begin(), tgt.end()));
    acc = std::move(next);
    if (acc.size() > 200000) throw std::length_error("enumerate_coverings: assignment set too large");
  }
  return acc;
}

template <typename Fn>
void for_each_covering(const WeingartenGraph& g, int cap, Fn&& fn) {
  if (!g.balanced()) return;
  const int q = g.order();
  if (q > cap) throw std::length_error("enumerate_coverings: order exceeds enumeration cap");
  if (q == 0) {
    fn(std::vector<int>{}, std::vector<int>{});
    return;
  }
  const auto sigmas = grouped_assignments(g, true);
  if (sigmas.empty()) return;
  const auto taus = grouped_assignments(g, false);
  if (taus.empty()) return;
  if (sigmas.size() * taus.size() > 80000000ULL)
    throw std::length_error("enumerate_coverings: covering set too large");
  for (const auto& s : sigmas)
    for (const auto& t : taus) fn(s, t);
}

std::vector<int> sorted_cycle_parts_of_pair(const std::vector<int>& sigma,
                                            const std::vector<int>& tau,
                                            std::vector<int>& tau_inv,
                                            std::vector<char>& seen) {
  const int q = static_cast<int>(sigma.size());
  for (int i = 0; i < q; ++i) tau_inv[tau[i]] = i;
  std::vector<int> parts;
  std::fill(seen.begin(), seen.end(), 0);
  for (int i = 0; i < q; ++i) {
    if (seen[i]) continue;
    int len = 0, j = i;
    while (!seen[j]) {
      seen[j] = 1;
      j = sigma[tau_inv[j]];
      ++len;
    }
    parts.push_back(len);
  }
  std::sort(parts.begin(), parts.end(), std::greater<int>());
  return parts;
}

}  // namespace

std::vector<CircuitCovering> enumerate_coverings(const WeingartenGraph& g, int cap) {
  std::vector<CircuitCovering> out;
  for_each_covering(g, cap, [&](const std::vector<int>& s, const std::vector<int>& t) {
    out.push_back(CircuitCovering{s, t});
  });
  return out;
}

Rational haar_moment(const WeingartenGraph& g, int d, int cap) {
  if (!g.balanced()) return Rational(0);
  const int q = g.order();
  if (q == 0) return Rational(1);
  if (d < q) throw std::domain_error("haar_moment: stable range requires d >= order");
  std::map<std::vector<int>, std::int64_t> type_counts;
  std::vector<int> tau_inv(q);
  std::vector<char> seen(q);
  for_each_covering(g, cap, [&](const std::vector<int>& s, const std::vector<int>& t) {
    ++type_counts[sorted_cycle_parts_of_pair(s, t, tau_inv, seen)];
  });
  Rational acc = 0;
  for (const auto& [parts, n] : type_counts) {
    CycleType ct;
    ct.parts = parts;
    acc += Rational(n) * wg_exact(ct, q, d);
  }
  return acc;
}

int graph_order_bound(const WeingartenGraph& g) {
  if (!g.balanced()) throw std::invalid_argument("graph_order_bound: graph must be balanced");
  const int q = g.order();
  std::map<std::pair<int, int>, int> vid;  // (0,row) or (1,col) -> id
  const auto id_of = [&](int kind, int key) {
    auto [it, fresh] = vid.emplace(std::make_pair(kind, key), static_cast<int>(vid.size()));
    (void)fresh;
    return it->second;
  };
  std::vector<int> parent;
  const std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  const auto unite = [&](int a, int b) { parent[find(a)] = find(b); };
  const auto add_edge = [&](const std::pair<int, int>& e) {
    const int a = id_of(0, e.first), b = id_of(1, e.second);
    while (static_cast<int>(parent.size()) < static_cast<int>(vid.size()))
      parent.push_back(static_cast<int>(parent.size()));
    unite(a, b);
  };
  for (const auto& e : g.psi) add_edge(e);
  for (const auto& e : g.psibar) add_edge(e);
  const int v = static_cast<int>(vid.size());
  int c = 0;
  for (int i = 0; i < v; ++i)
    if (find(i) == i) ++c;
  return std::max(-q, c - v);
}

// ------------------------------------------------------------- gamma moments

std::complex<double> gamma_kernel(const Eigen::MatrixXcd& psi, int k, int l, int m, int n) {
  const int d = static_cast<int>(psi.rows());
  if (k < 0 || l < 0 || m < 0 || n < 0 || k >= d || l >= d || m >= d || n >= d)
    throw std::invalid_argument("gamma_kernel: column index out of range");
  const std::complex<double> s = (psi.col(k).conjugate().cwiseProduct(psi.col(l)))
                                     .cwiseProduct(psi.col(m).conjugate().cwiseProduct(psi.col(n)))
                                     .sum();
  double corr = 0.0;
  if (k == l && m == n) corr += 1.0;
  if (k == n && l == m) corr += 1.0;
  return s - corr / static_cast<double>(d);
}

namespace {

Rational falling_factorial(int d, int b) {
  Rational r = 1;
  for (int i = 0; i < b; ++i) r *= (d - i);
  return r;
}

std::int64_t binom_small(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::int64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// All set partitions of {0..n-1} as restricted growth strings.
std::vector<std::vector<int>> set_partitions(int n) {
  std::vector<std::vector<int>> out;
  std::vector<int> a(n, 0);
  const std::function<void(int, int)> rec = [&](int i, int maxb) {
    if (i == n) {
      out.push_back(a);
      return;
    }
    for (int b = 0; b <= maxb + 1; ++b) {
      a[i] = b;
      rec(i + 1, std::max(maxb, b));
    }
  };
  if (n == 0)
    out.push_back({});
  else
    rec(0, -1);
  return out;
}

}  // namespace

Rational gamma_moment_exact(const std::array<int, 4>& pattern, int p, int q, int d, int cap) {
  if (p < 0 || q < 0) throw std::invalid_argument("gamma_moment_exact: powers must be >= 0");
  if (2 * (p + q) > cap)
    throw std::length_error("gamma_moment_exact: Haar degree exceeds enumeration cap");
  int corr = 0;
  if (pattern[0] == pattern[1] && pattern[2] == pattern[3]) ++corr;
  if (pattern[0] == pattern[3] && pattern[1] == pattern[2]) ++corr;
  const Rational c(corr, d);

  Rational total = 0;
  for (int r = 0; r <= p; ++r) {
    for (int s = 0; s <= q; ++s) {
      // E[S^r conj(S)^s] via set partitions of the row indices
      Rational es = 0;
      for (const auto& part : set_partitions(r + s)) {
        const int nblocks = part.empty() ? 0 : *std::max_element(part.begin(), part.end()) + 1;
        std::vector<int> rows, cols, rows_bar, cols_bar;
        for (int i = 0; i < r + s; ++i) {
          const int b = part[i];
          if (i < r) {  // X_j = conj(psi_jk) psi_jl conj(psi_jm) psi_jn
            rows.push_back(b), cols.push_back(pattern[1]);
            rows.push_back(b), cols.push_back(pattern[3]);
            rows_bar.push_back(b), cols_bar.push_back(pattern[0]);
            rows_bar.push_back(b), cols_bar.push_back(pattern[2]);
          } else {  // conj(X_j)
            rows.push_back(b), cols.push_back(pattern[0]);
            rows.push_back(b), cols.push_back(pattern[2]);
            rows_bar.push_back(b), cols_bar.push_back(pattern[1]);
            rows_bar.push_back(b), cols_bar.push_back(pattern[3]);
          }
        }
        const Rational mom = haar_moment(build_graph(rows, cols, rows_bar, cols_bar), d, cap);
        if (mom != 0) es += falling_factorial(d, nblocks) * mom;
      }
      if (es == 0) continue;
      // (-c)^{(p-r)+(q-s)} with binomial weights
      Rational coef(binom_small(p, r) * binom_small(q, s));
      for (int i = 0; i < (p - r) + (q - s); ++i) coef *= -c;
      total += coef * es;
    }
  }
  return total;
}

Rational rho_penalty(int K, const CycleType& omega) {
  if (K < 0) throw std::invalid_argument("rho_penalty: K must be >= 0");
  if (K == 0) return Rational(1);
  if (K % 2 == 0) return Rational(double_factorial(K - 1));
  const int k = K / 2;
  Rational s = 0;
  for (int ci : omega.parts) s += Rational(4LL * ci * ci - 2LL * ci, ci + 1);
  Rational acc = 0;
  for (int l = 0; l <= k; ++l)
    acc += Rational(double_factorial(2 * k - 2 * l - 1), double_factorial(2 * k - 2 * l)) *
           (Rational(4 * l) + s);
  return Rational(double_factorial(2 * k)) * acc;
}

CenteredMoment centered_product_moment(const std::vector<std::pair<int, int>>& atoms,
                                       const WeingartenGraph& g, int d, int cap) {
  const int lcnt = static_cast<int>(atoms.size());
  if (lcnt > 16) throw std::length_error("centered_product_moment: too many atoms");

  // inclusion-exclusion over atom subsets
  Rational exact = 0;
  for (unsigned mask = 0; mask < (1u << lcnt); ++mask) {
    WeingartenGraph sub = g;
    int taken = 0;
    for (int l = 0; l < lcnt; ++l)
      if (mask & (1u << l)) {
        sub.psi.push_back(atoms[l]);
        sub.psibar.push_back(atoms[l]);
        ++taken;
      }
    Rational term = haar_moment(sub, d, cap);
    if (term == 0) continue;
    Rational coef = 1;
    for (int i = 0; i < lcnt - taken; ++i) coef *= Rational(-1, d);
    exact += coef * term;
  }

  // covering sum with penalty weights on the full graph, atoms in slots 0..L-1
  WeingartenGraph full;
  for (const auto& a : atoms) {
    full.psi.push_back(a);
    full.psibar.push_back(a);
  }
  full.psi.insert(full.psi.end(), g.psi.begin(), g.psi.end());
  full.psibar.insert(full.psibar.end(), g.psibar.begin(), g.psibar.end());

  double predicted = 0.0;
  if (full.balanced() && full.order() > 0) {
    const int qf = full.order();
    std::vector<int> tau_inv(qf);
    std::vector<char> seen(qf);
    for_each_covering(full, cap, [&](const std::vector<int>& s, const std::vector<int>& t) {
      int taken = 0;
      std::vector<char> is_taken(qf, 0);
      for (int l = 0; l < lcnt; ++l)
        if (s[l] == l && t[l] == l) {
          ++taken;
          is_taken[l] = 1;
        }
      for (int i = 0; i < qf; ++i) tau_inv[t[i]] = i;
      std::vector<int> full_parts, omega_parts;
      std::fill(seen.begin(), seen.end(), 0);
      for (int i = 0; i < qf; ++i) {
        if (seen[i]) continue;
        int len = 0, j = i;
        bool atom_fixed = false;
        while (!seen[j]) {
          seen[j] = 1;
          j = s[tau_inv[j]];
          ++len;
        }
        if (len == 1 && is_taken[i]) atom_fixed = true;
        full_parts.push_back(len);
        if (!atom_fixed) omega_parts.push_back(len);
      }
      CycleType full_ct = CycleType::of(full_parts);
      CycleType omega_ct;
      if (!omega_parts.empty()) omega_ct = CycleType::of(omega_parts);
      const double rho = rho_penalty(taken, omega_ct).convert_to<double>();
      predicted += std::pow(static_cast<double>(d), -2.0 * ((taken + 1) / 2)) * rho *
                   wg_leading(full_ct, qf, d);
    });
  } else if (full.order() == 0) {
    predicted = 1.0;
  }
  return CenteredMoment{exact, predicted};
}

Rational one_step_identity_residual(const CycleType& ct, int q, int d) {
  if (ct.q() != q) throw std::invalid_argument("one_step_identity_residual: type does not partition q");
  if (d < q + 1) throw std::domain_error("one_step_identity_residual: requires d >= q+1");
  // extension by a new fixed point
  std::vector<int> ext = ct.parts;
  ext.push_back(1);
  Rational r = wg_exact(CycleType::of(ext), q + 1, d) - Rational(1, d) * wg_exact(ct, q, d);
  // transposition insertions (i, new): the cycle containing i grows by one
  for (std::size_t idx = 0; idx < ct.parts.size(); ++idx) {
    std::vector<int> grown = ct.parts;
    grown[idx] += 1;
    r += Rational(ct.parts[idx], d) * wg_exact(CycleType::of(grown), q + 1, d);
  }
  return r;
}

}  // namespace rmwave::wg
