#include <doctest.h>

#include <cmath>

#include "ssvep/errors.hpp"
#include "ssvep/rng.hpp"
#include "ssvep/spd.hpp"

using namespace ssvep;
using namespace ssvep::riem;

namespace {

Matrix random_symmetric(std::size_t n, CounterRng& rng) {
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) a(i, j) = a(j, i) = rng.uniform(-1.0, 1.0);
  return a;
}

// SPD via A = B B^T + eps I.
SpdMatrix random_spd(std::size_t n, CounterRng& rng, double eps = 0.1) {
  Matrix b(n, n);
  for (double& v : b.data) v = rng.gaussian();
  Matrix a = matmul(b, transpose(b));
  for (std::size_t i = 0; i < n; ++i) a(i, i) += eps;
  return SpdMatrix{symmetrize(a)};
}

Matrix random_invertible(std::size_t n, CounterRng& rng) {
  // Gaussian matrices are invertible with probability 1; nudge the diagonal
  // to keep the conditioning comfortable.
  Matrix w(n, n);
  for (double& v : w.data) v = rng.gaussian();
  for (std::size_t i = 0; i < n; ++i) w(i, i) += 2.0;
  return w;
}

SpdMatrix congruence(const Matrix& w, const SpdMatrix& a) {
  return SpdMatrix{symmetrize(matmul(matmul(transpose(w), a.values), w))};
}

Matrix diag2(double a, double b) {
  Matrix m(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

}  // namespace

TEST_CASE("sym_eig solves diagonal and identity cases exactly") {
  EigenDecomposition id = sym_eig(Matrix::identity(4));
  for (double v : id.eigenvalues) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

  EigenDecomposition d = sym_eig(diag2(3.0, 1.0));
  CHECK(d.eigenvalues[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(d.eigenvalues[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sym_eig reconstruction and orthonormality on random symmetric 7x7") {
  CounterRng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix a = random_symmetric(7, rng);
    EigenDecomposition eig = sym_eig(a);

    // eigenvalues descending
    for (std::size_t i = 1; i < 7; ++i) CHECK(eig.eigenvalues[i - 1] >= eig.eigenvalues[i]);

    // V^T V = I
    Matrix vtv = matmul(transpose(eig.eigenvectors), eig.eigenvectors);
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t j = 0; j < 7; ++j)
        CHECK(vtv(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9).scale(1.0));

    // A = V diag V^T
    Matrix scaled = eig.eigenvectors;
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t j = 0; j < 7; ++j) scaled(i, j) *= eig.eigenvalues[j];
    Matrix recon = matmul(scaled, transpose(eig.eigenvectors));
    double err = 0.0, norm = frobenius_norm(a);
    for (std::size_t i = 0; i < recon.data.size(); ++i)
      err += (recon.data[i] - a.data[i]) * (recon.data[i] - a.data[i]);
    CHECK(std::sqrt(err) < 1e-9 * std::max(norm, 1.0));
  }
}

TEST_CASE("sym_eig rejects asymmetric input") {
  Matrix a(2, 2);
  a(0, 1) = 1.0;
  a(1, 0) = 0.0;
  CHECK_THROWS_AS(sym_eig(a), NumericalError);
}

TEST_CASE("sample_covariance matches hand arithmetic") {
  Matrix x(2, 2);
  x(0, 0) = 1.0;
  x(0, 1) = -1.0;
  x(1, 0) = -1.0;
  x(1, 1) = 1.0;
  SUBCASE("alpha 0 raw covariance") {
    // Row means are zero; C = X X^T / (T-1) = [[2,-2],[-2,2]], which is
    // singular, so construction must flag the violation.
    CHECK_THROWS_AS(sample_covariance(x, 0.0), NumericalError);
  }
  SUBCASE("values before the definiteness check") {
    // Verified through full shrinkage toward (tr(C)/n) I = 2 I.
    SpdMatrix c = sample_covariance(x, 1.0);
    CHECK(c.values(0, 0) == doctest::Approx(2.0));
    CHECK(c.values(1, 1) == doctest::Approx(2.0));
    CHECK(c.values(0, 1) == doctest::Approx(0.0));
  }
  SUBCASE("small shrinkage keeps hand values") {
    Matrix y(2, 3);
    y(0, 0) = 1.0; y(0, 1) = 0.0; y(0, 2) = -1.0;
    y(1, 0) = 0.5; y(1, 1) = -0.5; y(1, 2) = 0.0;
    SpdMatrix c = sample_covariance(y, 0.0);
    CHECK(c.values(0, 0) == doctest::Approx(1.0));
    CHECK(c.values(0, 1) == doctest::Approx(0.25));
    CHECK(c.values(1, 1) == doctest::Approx(0.25));
  }
  SUBCASE("constant input with zero shrinkage is flagged") {
    Matrix z(2, 5);
    for (double& v : z.data) v = 4.2;
    CHECK_THROWS_AS(sample_covariance(z, 0.0), NumericalError);
  }
}

TEST_CASE("spd_map closed forms") {
  SpdMatrix id{Matrix::identity(3)};
  Matrix log_id = spd_map(id, SpdFn::Log);
  for (double v : log_id.data) CHECK(v == doctest::Approx(0.0).scale(1.0));

  SpdMatrix d{diag2(4.0, 9.0)};
  Matrix root = spd_map(d, SpdFn::Sqrt);
  CHECK(root(0, 0) == doctest::Approx(2.0));
  CHECK(root(1, 1) == doctest::Approx(3.0));
  CHECK(root(0, 1) == doctest::Approx(0.0).scale(1.0));

  CounterRng rng(7);
  SpdMatrix a = random_spd(5, rng);
  Matrix back = spd_map(SpdMatrix{spd_map(a, SpdFn::Log)}, SpdFn::Exp);
  // exp(log(A)) = A
  double err = 0.0;
  for (std::size_t i = 0; i < back.data.size(); ++i)
    err += (back.data[i] - a.values.data[i]) * (back.data[i] - a.values.data[i]);
  CHECK(std::sqrt(err) < 1e-8 * frobenius_norm(a.values));

  SpdMatrix tiny{diag2(1e-16, 1.0)};
  CHECK_THROWS_AS(spd_map(tiny, SpdFn::Log), NumericalError);
  CHECK_THROWS_AS(spd_map(tiny, SpdFn::InvSqrt), NumericalError);
}

TEST_CASE("riemann_distance closed forms and metric properties") {
  SpdMatrix id{Matrix::identity(2)};
  SpdMatrix e2{diag2(std::exp(2.0), 1.0)};
  CHECK(riemann_distance(id, id) == doctest::Approx(0.0).scale(1.0));
  CHECK(riemann_distance(id, e2) == doctest::Approx(2.0).epsilon(1e-10));

  CounterRng rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    SpdMatrix a = random_spd(7, rng), b = random_spd(7, rng), c = random_spd(7, rng);
    double ab = riemann_distance(a, b);
    double ba = riemann_distance(b, a);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-10));

    // triangle inequality with the documented slack
    CHECK(ab <= riemann_distance(a, c) + riemann_distance(c, b) + 1e-8);

    // congruence invariance
    Matrix w = random_invertible(7, rng);
    double transformed = riemann_distance(congruence(w, a), congruence(w, b));
    CHECK(transformed == doctest::Approx(ab).epsilon(1e-8));
  }

  SpdMatrix small{Matrix::identity(3)};
  CHECK_THROWS_AS(riemann_distance(id, small), ConfigError);
}

TEST_CASE("geometric_mean closed forms") {
  CounterRng rng(55);
  SpdMatrix a = random_spd(6, rng);

  SUBCASE("idempotence") {
    SpdMatrix g = geometric_mean({a, a});
    double err = 0.0;
    for (std::size_t i = 0; i < g.values.data.size(); ++i)
      err += (g.values.data[i] - a.values.data[i]) * (g.values.data[i] - a.values.data[i]);
    CHECK(std::sqrt(err) < 1e-8 * frobenius_norm(a.values));
  }

  SUBCASE("commuting pair gives the elementwise geometric mean") {
    SpdMatrix id{Matrix::identity(2)};
    SpdMatrix four{diag2(4.0, 4.0)};
    SpdMatrix g = geometric_mean({id, four});
    CHECK(g.values(0, 0) == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(g.values(1, 1) == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(g.values(0, 1) == doctest::Approx(0.0).scale(1.0));
  }

  SUBCASE("stationarity condition on 20 random 7x7") {
    std::vector<SpdMatrix> ms;
    for (int i = 0; i < 20; ++i) ms.push_back(random_spd(7, rng));
    SpdMatrix g = geometric_mean(ms);

    Matrix g_invsqrt = spd_map(g, SpdFn::InvSqrt);
    Matrix mean_log(7, 7);
    for (const SpdMatrix& m : ms) {
      Matrix whitened = symmetrize(matmul(matmul(g_invsqrt, m.values), g_invsqrt));
      Matrix lg = spd_map(SpdMatrix{whitened}, SpdFn::Log);
      for (std::size_t i = 0; i < 49; ++i) mean_log.data[i] += lg.data[i] / 20.0;
    }
    CHECK(frobenius_norm(mean_log) < 1e-8);
  }

  SUBCASE("empty input is rejected") {
    CHECK_THROWS_AS(geometric_mean({}), ConfigError);
  }
}

TEST_CASE("tangent_map dimensions and norm identity") {
  CounterRng rng(77);
  SpdMatrix r = random_spd(7, rng);

  TangentVector zero = tangent_map(r, r);
  CHECK(zero.coords.size() == 28);
  for (double v : zero.coords) CHECK(v == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));

  for (int trial = 0; trial < 30; ++trial) {
    SpdMatrix c = random_spd(7, rng);
    TangentVector t = tangent_map(c, r);
    double norm = 0.0;
    for (double v : t.coords) norm += v * v;
    norm = std::sqrt(norm);
    CHECK(norm == doctest::Approx(riemann_distance(c, r)).epsilon(1e-8));
  }
}

TEST_CASE("spd validation catches violations") {
  SpdMatrix bad{diag2(1.0, -0.5)};
  CHECK_THROWS_AS(bad.validate(), NumericalError);

  Matrix asym(2, 2);
  asym(0, 1) = 0.3;
  SpdMatrix not_sym{asym};
  CHECK_THROWS_AS(not_sym.validate(), NumericalError);
}
