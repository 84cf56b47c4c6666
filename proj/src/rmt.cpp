#include "rmwave/rmt.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace rmwave::rmt {

HermitianMatrix sample_gue(int half_size, Rng& rng) {
  if (half_size < 0) throw std::invalid_argument("sample_gue: half_size must be >= 0");
  const int d = 2 * half_size + 1;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  HermitianMatrix h(d, d);
  for (int j = 0; j < d; ++j) {
    h(j, j) = scale * rng.normal();
    for (int k = j + 1; k < d; ++k) {
      const cplx z = scale * rng.cnormal();
      h(j, k) = z;
      h(k, j) = std::conj(z);
    }
  }
  return h;
}

UnitaryMatrix sample_haar_unitary(int dim, Rng& rng) {
  if (dim < 1) throw std::invalid_argument("sample_haar_unitary: dim must be >= 1");
  Eigen::MatrixXcd g(dim, dim);
  for (int j = 0; j < dim; ++j)
    for (int k = 0; k < dim; ++k) g(j, k) = rng.cnormal();
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(g);
  Eigen::MatrixXcd q = qr.householderQ();
  const Eigen::MatrixXcd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int k = 0; k < dim; ++k) {
    const cplx rkk = r(k, k);
    const double m = std::abs(rkk);
    if (m == 0.0) throw std::runtime_error("sample_haar_unitary: singular Ginibre draw");
    q.col(k) *= rkk / m;
  }
  return q;
}

SpectralData spectral_decompose(const HermitianMatrix& h) {
  if (h.rows() != h.cols()) throw std::invalid_argument("spectral_decompose: matrix must be square");
  const int d = static_cast<int>(h.rows());
  if (d % 2 == 0) throw std::invalid_argument("spectral_decompose: dimension must be odd (2N+1)");
  const double hnorm = std::max(1.0, h.cwiseAbs().maxCoeff());
  if ((h - h.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * hnorm)
    throw std::invalid_argument("spectral_decompose: matrix is not Hermitian");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("spectral_decompose: eigensolver failed to converge");

  SpectralData s;
  s.half_size = (d - 1) / 2;
  s.lambda = es.eigenvalues();
  s.psi = es.eigenvectors();
  for (int c = 0; c < d; ++c) {
    int imax = 0;
    double best = -1.0;
    for (int j = 0; j < d; ++j) {
      const double a = std::abs(s.psi(j, c));
      if (a > best + 1e-15) {
        best = a;
        imax = j;
      }
    }
    const cplx pivot = s.psi(imax, c);
    if (std::abs(pivot) > 0.0) s.psi.col(c) *= std::conj(pivot) / std::abs(pivot);
  }

  const double resid =
      (h * s.psi - s.psi * s.lambda.asDiagonal().toDenseMatrix().cast<cplx>()).cwiseAbs().maxCoeff();
  if (resid > 1e-10 * hnorm)
    throw std::runtime_error("spectral_decompose: reconstruction residual too large");
  return s;
}

double semicircle_density(double x) {
  const double t = 4.0 - x * x;
  return t > 0.0 ? std::sqrt(t) / (2.0 * M_PI) : 0.0;
}

double semicircle_cdf0(double x) {
  const double xc = std::clamp(x, -2.0, 2.0);
  return (0.5 * xc * std::sqrt(4.0 - xc * xc) + 2.0 * std::asin(0.5 * xc)) / (2.0 * M_PI);
}

double nu(double kappa) {
  if (kappa < -1.0 || kappa > 1.0) throw std::domain_error("nu: kappa must lie in [-1,1]");
  const double k = std::abs(kappa);
  if (k == 0.0) return 0.0;
  if (k == 1.0) return kappa > 0 ? 2.0 : -2.0;
  const double target = 0.5 * k;
  double lo = 0.0, hi = 2.0;
  double x = 2.0 * std::sin(M_PI * k / 4.0);  // rough initial guess, exact bracket below
  for (int it = 0; it < 200; ++it) {
    const double f = semicircle_cdf0(x) - target;
    if (f > 0.0) hi = x; else lo = x;
    const double dens = semicircle_density(x);
    double xn = dens > 1e-18 ? x - f / dens : 0.5 * (lo + hi);
    if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
    const double dx = std::abs(xn - x);
    x = xn;
    if (dx < 1e-12 && std::abs(semicircle_cdf0(x) - target) < 1e-15) break;
    if (hi - lo < 1e-15) break;
  }
  return kappa > 0 ? x : -x;
}

double nu_prime(double kappa) {
  const double v = nu(kappa);
  const double t = 4.0 - v * v;
  if (t <= 0.0) return std::numeric_limits<double>::infinity();
  return M_PI / std::sqrt(t);
}

double nu_inverse(double x) { return 2.0 * semicircle_cdf0(x); }

Eigen::VectorXd rigidity_residuals(const SpectralData& s) {
  const int n = s.half_size;
  if (n < 1) throw std::invalid_argument("rigidity_residuals: half_size must be >= 1");
  const int d = s.dim();
  Eigen::VectorXd r(d);
  const double n23 = std::pow(static_cast<double>(n), 2.0 / 3.0);
  for (int i = 0; i < d; ++i) {
    const int k = i - n;
    const double edge = std::cbrt(static_cast<double>(n + 1 - std::abs(k)));
    r(i) = (s.lambda(i) - nu(static_cast<double>(k) / n)) * n23 * edge;
  }
  return r;
}

LocalLawCount local_law_count(const SpectralData& s, double a, double b) {
  if (!(a <= b)) throw std::invalid_argument("local_law_count: requires a <= b");
  LocalLawCount out;
  for (int i = 0; i < s.lambda.size(); ++i)
    if (s.lambda(i) >= a && s.lambda(i) <= b) ++out.count;
  out.prediction = s.dim() * (semicircle_cdf0(b) - semicircle_cdf0(a));
  return out;
}

double resolvent_sum(const SpectralData& s, double alpha, double T) {
  if (T < 1.0) throw std::domain_error("resolvent_sum: requires T >= 1");
  double acc = 0.0;
  for (int i = 0; i < s.lambda.size(); ++i)
    acc += 1.0 / (1.0 / T + std::abs(s.lambda(i) - alpha));
  return acc;
}

std::string to_json(const SpectralData& s) {
  nlohmann::json j;
  j["dim"] = s.dim();
  std::vector<double> lam(s.lambda.data(), s.lambda.data() + s.lambda.size());
  j["lambda"] = lam;
  std::vector<double> psi;
  psi.reserve(2 * s.dim() * s.dim());
  for (int r = 0; r < s.dim(); ++r)
    for (int c = 0; c < s.dim(); ++c) {
      psi.push_back(s.psi(r, c).real());
      psi.push_back(s.psi(r, c).imag());
    }
  j["psi"] = psi;
  return j.dump();
}

SpectralData spectral_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  const int d = j.at("dim").get<int>();
  if (d < 1 || d % 2 == 0) throw std::invalid_argument("spectral_from_json: dim must be odd and positive");
  SpectralData s;
  s.half_size = (d - 1) / 2;
  const auto lam = j.at("lambda").get<std::vector<double>>();
  const auto psi = j.at("psi").get<std::vector<double>>();
  if (static_cast<int>(lam.size()) != d || static_cast<int>(psi.size()) != 2 * d * d)
    throw std::invalid_argument("spectral_from_json: array sizes do not match dim");
  s.lambda = Eigen::Map<const Eigen::VectorXd>(lam.data(), d);
  s.psi.resize(d, d);
  std::size_t p = 0;
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) {
      s.psi(r, c) = cplx(psi[p], psi[p + 1]);
      p += 2;
    }
  return s;
}

void save_spectral(const SpectralData& s, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_spectral: cannot open " + path);
  f << to_json(s);
}

SpectralData load_spectral(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_spectral: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return spectral_from_json(ss.str());
}

}  // namespace rmwave::rmt
