#include "ssvep/spd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "ssvep/errors.hpp"

namespace ssvep {
namespace riem {

namespace {

constexpr double kSymTol = 1e-10;
constexpr double kEigFloor = 1e-14;

void require_symmetric(const Matrix& a, const char* what) {
  if (a.rows != a.cols) throw NumericalError(std::string(what) + ": matrix not square");
  double scale = std::max(frobenius_norm(a), 1e-300);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = i + 1; j < a.cols; ++j)
      if (std::abs(a(i, j) - a(j, i)) > kSymTol * scale)
        throw NumericalError(std::string(what) + ": matrix not symmetric");
}

double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

}  // namespace

void SpdMatrix::validate() const {
  require_symmetric(values, "SpdMatrix");
  EigenDecomposition eig = sym_eig(values);
  if (eig.eigenvalues.empty() || eig.eigenvalues.back() <= 0.0)
    throw NumericalError("SpdMatrix: not positive definite (min eigenvalue " +
                         std::to_string(eig.eigenvalues.empty() ? 0.0
                                                                : eig.eigenvalues.back()) +
                         ")");
}

EigenDecomposition sym_eig(const Matrix& input) {
  require_symmetric(input, "sym_eig");
  const std::size_t n = input.rows;
  Matrix a = symmetrize(input);
  Matrix v = Matrix::identity(n);
  const double target = 1e-12 * std::max(frobenius_norm(a), 1e-300);

  bool converged = n < 2;
  for (std::size_t sweep = 0; sweep < 100 && !converged; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double apq = a(p, q);
        if (std::abs(apq) < 1e-300) continue;
        double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t = (tau >= 0.0 ? 1.0 : -1.0) /
                   (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double s = t * c;

        for (std::size_t k = 0; k < n; ++k) {
          double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    converged = off_diagonal_norm(a) < target;
  }
  if (!converged)
    throw NumericalError("sym_eig: Jacobi iteration did not converge in 100 sweeps");

  EigenDecomposition out;
  out.eigenvalues.resize(n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
  out.eigenvectors = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.eigenvalues[j] = a(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, j) = v(i, order[j]);
  }
  return out;
}

SpdMatrix sample_covariance(const Matrix& x, double shrinkage) {
  if (x.cols < 2) throw ConfigError("sample_covariance: need at least 2 samples");
  if (shrinkage < 0.0 || shrinkage > 1.0)
    throw ConfigError("sample_covariance: shrinkage must lie in [0, 1]");
  const std::size_t n = x.rows, t_len = x.cols;

  Matrix centered = x;
  for (std::size_t r = 0; r < n; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < t_len; ++c) mean += centered(r, c);
    mean /= double(t_len);
    for (std::size_t c = 0; c < t_len; ++c) centered(r, c) -= mean;
  }

  Matrix cov(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      const double* ri = centered.row(i);
      const double* rj = centered.row(j);
      for (std::size_t c = 0; c < t_len; ++c) s += ri[c] * rj[c];
      cov(i, j) = cov(j, i) = s / double(t_len - 1);
    }
  }

  if (shrinkage > 0.0) {
    double mu = trace(cov) / double(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        cov(i, j) = (1.0 - shrinkage) * cov(i, j) + (i == j ? shrinkage * mu : 0.0);
  }

  SpdMatrix out{std::move(cov)};
  EigenDecomposition eig = sym_eig(out.values);
  if (eig.eigenvalues.back() <= 0.0)
    throw NumericalError(
        "sample_covariance: result not positive definite (min eigenvalue " +
        std::to_string(eig.eigenvalues.back()) +
        "); increase shrinkage or supply richer data");
  return out;
}

Matrix spd_map(const SpdMatrix& a, SpdFn fn) {
  EigenDecomposition eig = sym_eig(a.values);
  const std::size_t n = a.dim();
  std::vector<double> mapped(n);
  for (std::size_t i = 0; i < n; ++i) {
    double lambda = eig.eigenvalues[i];
    switch (fn) {
      case SpdFn::Log:
        if (lambda <= kEigFloor)
          throw NumericalError("spd_map: log of near-singular matrix (eigenvalue " +
                               std::to_string(lambda) + ")");
        mapped[i] = std::log(lambda);
        break;
      case SpdFn::Exp:
        mapped[i] = std::exp(lambda);
        break;
      case SpdFn::Sqrt:
        if (lambda < 0.0)
          throw NumericalError("spd_map: sqrt of indefinite matrix");
        mapped[i] = std::sqrt(lambda);
        break;
      case SpdFn::InvSqrt:
        if (lambda <= kEigFloor)
          throw NumericalError("spd_map: invsqrt of near-singular matrix (eigenvalue " +
                               std::to_string(lambda) + ")");
        mapped[i] = 1.0 / std::sqrt(lambda);
        break;
    }
  }
  Matrix scaled = eig.eigenvectors;  // V * diag(mapped)
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) scaled(i, j) *= mapped[j];
  return symmetrize(matmul(scaled, transpose(eig.eigenvectors)));
}

namespace {

// log(R^-1/2 C R^-1/2), the workhorse of distance and tangent projection.
Matrix whitened_log(const SpdMatrix& c, const SpdMatrix& reference) {
  if (c.dim() != reference.dim())
    throw ConfigError("spd: dimension mismatch (" + std::to_string(c.dim()) + " vs " +
                      std::to_string(reference.dim()) + ")");
  Matrix w = spd_map(reference, SpdFn::InvSqrt);
  Matrix m = symmetrize(matmul(matmul(w, c.values), w));
  return spd_map(SpdMatrix{std::move(m)}, SpdFn::Log);
}

}  // namespace

double riemann_distance(const SpdMatrix& a, const SpdMatrix& b) {
  return frobenius_norm(whitened_log(b, a));
}

SpdMatrix geometric_mean(const std::vector<SpdMatrix>& ms, double tol,
                         std::size_t max_iter) {
  if (ms.empty()) throw ConfigError("geometric_mean: empty input");
  const std::size_t n = ms[0].dim();
  for (const SpdMatrix& m : ms)
    if (m.dim() != n) throw ConfigError("geometric_mean: dimension mismatch");
  if (ms.size() == 1) return ms[0];

  Matrix g(n, n);
  for (const SpdMatrix& m : ms)
    for (std::size_t i = 0; i < n * n; ++i) g.data[i] += m.values.data[i] / double(ms.size());

  std::vector<double> residuals;
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    SpdMatrix current{g};
    Matrix g_sqrt = spd_map(current, SpdFn::Sqrt);
    Matrix g_invsqrt = spd_map(current, SpdFn::InvSqrt);

    Matrix mean_log(n, n);
    for (const SpdMatrix& m : ms) {
      Matrix whitened = symmetrize(matmul(matmul(g_invsqrt, m.values), g_invsqrt));
      Matrix lg = spd_map(SpdMatrix{std::move(whitened)}, SpdFn::Log);
      for (std::size_t i = 0; i < n * n; ++i) mean_log.data[i] += lg.data[i] / double(ms.size());
    }

    double residual = frobenius_norm(mean_log);
    residuals.push_back(residual);
    if (residual < tol) return SpdMatrix{std::move(g)};

    Matrix step = spd_map(SpdMatrix{std::move(mean_log)}, SpdFn::Exp);
    g = symmetrize(matmul(matmul(g_sqrt, step), g_sqrt));
  }

  std::ostringstream trace_msg;
  trace_msg << "geometric_mean: no convergence after " << max_iter
            << " iterations; residual trace:";
  for (double r : residuals) trace_msg << " " << r;
  throw NumericalError(trace_msg.str());
}

TangentVector tangent_map(const SpdMatrix& c, const SpdMatrix& reference) {
  Matrix s = whitened_log(c, reference);
  const std::size_t n = s.rows;
  TangentVector out;
  out.coords.reserve(n * (n + 1) / 2);
  const double root2 = std::sqrt(2.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j)
      out.coords.push_back(i == j ? s(i, j) : root2 * s(i, j));
  return out;
}

}  // namespace riem
}  // namespace ssvep
