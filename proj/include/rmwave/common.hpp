// Shared utilities: seeded RNG streams, parallel loops, quadrature helpers.
#pragma once

#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

namespace rmwave {

using cplx = std::complex<double>;

// --- deterministic seed derivation ------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Independent per-task stream seed; collision-free over the index ranges used here.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t s = master ^ (0xD1B54A32D192ED03ULL * (index + 1));
  std::uint64_t a = splitmix64(s);
  std::uint64_t b = splitmix64(s);
  return a ^ (b << 1) ^ index;
}

// --- RNG with explicit, platform-stable draw paths ---------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t raw() { return eng_(); }

  // in [0,1), 53-bit resolution
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // standard normal via Box-Muller, second value cached
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * M_PI * u2;
    spare_ = r * std::sin(th);
    have_spare_ = true;
    return r * std::cos(th);
  }

  // complex normal with E|z|^2 = 1
  cplx cnormal() {
    const double re = normal();
    const double im = normal();
    return cplx(re * M_SQRT1_2, im * M_SQRT1_2);
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// --- parallel loop with deterministic work partition --------------------------

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0,n). Results must be written to per-index slots so the
// outcome is independent of the thread count.
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t)>& fn) {
  const int t = resolve_threads(threads);
  if (t <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic_size_t next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  const int nt = static_cast<int>(std::min<std::size_t>(t, n));
  pool.reserve(nt);
  for (int w = 0; w < nt; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mu);
          if (!err) err = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

// --- Gauss-Legendre nodes/weights on [-1,1] ----------------------------------

inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: order must be >= 1");
  static std::map<int, std::pair<std::vector<double>, std::vector<double>>> cache;
  static std::mutex mu;
  {
    std::lock_guard<std::mutex> lk(mu);
    auto it = cache.find(n);
    if (it != cache.end()) {
      x = it->second.first;
      w = it->second.second;
      return;
    }
  }
  std::vector<double> xs(n), ws(n);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    xs[i] = -z;
    xs[n - 1 - i] = z;
    ws[i] = 2.0 / ((1.0 - z * z) * pp * pp);
    ws[n - 1 - i] = ws[i];
  }
  {
    std::lock_guard<std::mutex> lk(mu);
    cache[n] = {xs, ws};
  }
  x = std::move(xs);
  w = std::move(ws);
}

// Composite Gauss-Legendre over [a,b] with `panels` equal panels.
template <typename F>
auto composite_gl(const F& f, double a, double b, int order, int panels)
    -> decltype(f(0.0)) {
  std::vector<double> x, w;
  gauss_legendre(order, x, w);
  using R = decltype(f(0.0));
  R acc{};
  const double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    const double lo = a + p * h;
    const double mid = lo + 0.5 * h;
    for (int i = 0; i < order; ++i) acc += R(w[i] * 0.5 * h) * f(mid + 0.5 * h * x[i]);
  }
  return acc;
}

// --- adaptive Simpson ---------------------------------------------------------

namespace detail {
template <typename F, typename R>
R adapt_simpson_rec(const F& f, double a, double b, R fa, R fm, R fb, R whole,
                    double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const R flm = f(lm), frm = f(rm);
  const R left = R((m - a) / 6.0) * (fa + R(4.0) * flm + fm);
  const R right = R((b - m) / 6.0) * (fm + R(4.0) * frm + fb);
  const R delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
    return left + right + delta / R(15.0);
  return adapt_simpson_rec(f, a, m, fa, flm, fm, left, tol * 0.5, depth - 1) +
         adapt_simpson_rec(f, m, b, fm, frm, fb, right, tol * 0.5, depth - 1);
}
}  // namespace detail

template <typename F>
auto adaptive_simpson(const F& f, double a, double b, double tol, int max_depth = 40)
    -> decltype(f(0.0)) {
  using R = decltype(f(0.0));
  const R fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const R whole = R((b - a) / 6.0) * (fa + R(4.0) * fm + fb);
  return detail::adapt_simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

}  // namespace rmwave
