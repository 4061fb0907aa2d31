#include <doctest.h>

#include <cmath>
#include <sstream>

#include "ssvep/classic.hpp"
#include "ssvep/errors.hpp"
#include "ssvep/rng.hpp"

using namespace ssvep;
using namespace ssvep::classic;

namespace {

// Two well-separated Gaussian blobs in 2D.
void make_blobs(std::vector<FeatureVector>& xs, std::vector<int>& ys, CounterRng& rng,
                std::size_t per_class = 20) {
  for (std::size_t i = 0; i < per_class; ++i) {
    xs.push_back({rng.gaussian() * 0.5, rng.gaussian() * 0.5});
    ys.push_back(0);
    xs.push_back({10.0 + rng.gaussian() * 0.5, 10.0 + rng.gaussian() * 0.5});
    ys.push_back(1);
  }
}

riem::SpdMatrix spd2(double a, double b, double c) {
  Matrix m(2, 2);
  m(0, 0) = a;
  m(0, 1) = m(1, 0) = b;
  m(1, 1) = c;
  return riem::SpdMatrix{m};
}

}  // namespace

TEST_CASE("lda separates distant blobs perfectly") {
  CounterRng rng(11);
  std::vector<FeatureVector> xs;
  std::vector<int> ys;
  make_blobs(xs, ys, rng);
  LdaModel m = lda_train(xs, ys);

  for (std::size_t i = 0; i < xs.size(); ++i)
    CHECK(lda_classify(m, xs[i]).first == ys[i]);

  SUBCASE("equal class counts give uniform priors") {
    for (double p : m.class_priors) CHECK(p == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("posteriors are normalized") {
    auto [label, post] = lda_classify(m, {5.0, 4.0});
    double sum = 0.0;
    for (double p : post) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("class mean classifies to its class") {
    CHECK(lda_classify(m, m.class_means[0]).first == 0);
    CHECK(lda_classify(m, m.class_means[1]).first == 1);
  }
  SUBCASE("midpoint of two equal-prior means has equal posteriors") {
    FeatureVector mid(2);
    for (std::size_t j = 0; j < 2; ++j)
      mid[j] = 0.5 * (m.class_means[0][j] + m.class_means[1][j]);
    auto [label, post] = lda_classify(m, mid);
    CHECK(post[0] == doctest::Approx(post[1]).epsilon(1e-9));
  }
}

TEST_CASE("lda flags singular pooled covariance") {
  // Duplicate feature column makes the pooled covariance rank deficient.
  std::vector<FeatureVector> xs = {{1.0, 1.0}, {2.0, 2.0}, {5.0, 5.0}, {6.0, 6.0}};
  std::vector<int> ys = {0, 0, 1, 1};
  CHECK_THROWS_WITH_AS(lda_train(xs, ys, 0.0), doctest::Contains("ridge"), NumericalError);
  // An explicit ridge rescues it.
  CHECK_NOTHROW(lda_train(xs, ys, 1e-3));
}

TEST_CASE("mdm closed-form behavior") {
  riem::SpdMatrix a = spd2(2.0, 0.3, 1.0);
  riem::SpdMatrix b = spd2(5.0, -0.2, 3.0);

  SUBCASE("single covariance per class becomes the class mean") {
    MdmModel m = mdm_train({a, b}, {0, 1});
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(m.class_means[0].values.data[i] == doctest::Approx(a.values.data[i]));
    auto [label, dists] = mdm_classify(m, a);
    CHECK(label == 0);
    CHECK(dists[0] == doctest::Approx(0.0).scale(1.0));
  }
  SUBCASE("duplicated member gives idempotent mean") {
    MdmModel m = mdm_train({a, a, b}, {0, 0, 1});
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(m.class_means[0].values.data[i] ==
            doctest::Approx(a.values.data[i]).epsilon(1e-8));
  }
  SUBCASE("tie breaks to the lowest class index") {
    MdmModel m = mdm_train({a, a}, {0, 1});
    CHECK(mdm_classify(m, b).first == 0);
  }
}

TEST_CASE("mdm prediction is invariant under joint congruence") {
  CounterRng rng(23);
  std::vector<riem::SpdMatrix> cs;
  std::vector<int> ys;
  for (int i = 0; i < 12; ++i) {
    Matrix b(4, 4);
    for (double& v : b.data) v = rng.gaussian();
    Matrix base = matmul(b, transpose(b));
    for (std::size_t d = 0; d < 4; ++d) base(d, d) += (i % 2 == 0 ? 0.5 : 3.0);
    cs.push_back(riem::SpdMatrix{symmetrize(base)});
    ys.push_back(i % 2);
  }
  MdmModel plain = mdm_train(cs, ys);

  Matrix w(4, 4);
  for (double& v : w.data) v = rng.gaussian();
  for (std::size_t d = 0; d < 4; ++d) w(d, d) += 2.0;

  std::vector<riem::SpdMatrix> transformed;
  for (const auto& c : cs)
    transformed.push_back(riem::SpdMatrix{symmetrize(matmul(matmul(transpose(w), c.values), w))});
  MdmModel congruent = mdm_train(transformed, ys);

  for (std::size_t i = 0; i < cs.size(); ++i)
    CHECK(mdm_classify(plain, cs[i]).first == mdm_classify(congruent, transformed[i]).first);
}

TEST_CASE("svm two-point geometry") {
  std::vector<FeatureVector> xs = {{0.0, 0.0}, {2.0, 0.0}};
  std::vector<int> ys = {0, 1};
  SvmModel m = svm_train(xs, ys, Kernel{KernelKind::Linear, 0.0}, 1.0, 1e-4, 3);

  CHECK(svm_classify(m, {0.0, 0.0}).first == 0);
  CHECK(svm_classify(m, {2.0, 0.0}).first == 1);
  // Decision boundary at the perpendicular bisector.
  auto [label, decisions] = svm_classify(m, {1.0, 0.0});
  CHECK(decisions[0] == doctest::Approx(-decisions[1]).epsilon(1e-6).scale(1.0));
  CHECK(std::abs(decisions[0]) < 1e-6);
}

TEST_CASE("svm solves xor with a gaussian kernel") {
  std::vector<FeatureVector> xs = {{0, 0}, {1, 1}, {0, 1}, {1, 0}};
  std::vector<int> ys = {0, 0, 1, 1};
  SvmModel m = svm_train(xs, ys, Kernel{KernelKind::Gaussian, 2.0}, 10.0, 1e-4, 3);
  for (std::size_t i = 0; i < xs.size(); ++i) CHECK(svm_classify(m, xs[i]).first == ys[i]);
}

TEST_CASE("svm dual feasibility and kkt residual") {
  CounterRng rng(41);
  std::vector<FeatureVector> xs;
  std::vector<int> ys;
  make_blobs(xs, ys, rng, 15);
  const double c = 1.5;
  SvmModel m = svm_train(xs, ys, Kernel{KernelKind::Gaussian, 0.0}, c, 1e-3, 9);

  CHECK(m.kernel.gamma > 0.0);  // auto gamma resolved
  CHECK(m.kkt_residual <= 1e-3);
  for (const BinarySvm& machine : m.machines)
    for (double coef : machine.coefficients) {
      CHECK(std::abs(coef) > 0.0);
      CHECK(std::abs(coef) <= c + 1e-12);
    }
  for (std::size_t i = 0; i < xs.size(); ++i) CHECK(svm_classify(m, xs[i]).first == ys[i]);
}

TEST_CASE("svm determinism under a fixed seed") {
  CounterRng rng(43);
  std::vector<FeatureVector> xs;
  std::vector<int> ys;
  make_blobs(xs, ys, rng, 10);
  SvmModel a = svm_train(xs, ys, Kernel{KernelKind::Gaussian, 0.5}, 1.0, 1e-3, 7);
  SvmModel b = svm_train(xs, ys, Kernel{KernelKind::Gaussian, 0.5}, 1.0, 1e-3, 7);
  REQUIRE(a.machines.size() == b.machines.size());
  for (std::size_t k = 0; k < a.machines.size(); ++k) {
    CHECK(a.machines[k].bias == b.machines[k].bias);
    CHECK(a.machines[k].coefficients == b.machines[k].coefficients);
  }
}

TEST_CASE("classifier input validation") {
  CHECK_THROWS_AS(lda_train({}, {}), ConfigError);
  CHECK_THROWS_AS(svm_train({{1.0}}, {0}, Kernel{}, 1.0), ConfigError);
  CHECK_THROWS_AS(svm_train({{1.0}, {2.0}}, {0, 1}, Kernel{}, -1.0), ConfigError);

  std::vector<FeatureVector> xs = {{0.0, 0.0}, {1.0, 1.0}, {0.1, 0.1}, {0.9, 0.9}};
  std::vector<int> ys = {0, 1, 0, 1};
  LdaModel lda = lda_train(xs, ys);
  CHECK_THROWS_AS(lda_classify(lda, {1.0, 2.0, 3.0}), ConfigError);
  SvmModel svm = svm_train(xs, ys, Kernel{}, 1.0);
  CHECK_THROWS_AS(svm_classify(svm, {1.0, 2.0, 3.0}), ConfigError);
  MdmModel mdm = mdm_train({spd2(1, 0, 1), spd2(2, 0, 2)}, {0, 1});
  Matrix wrong = Matrix::identity(3);
  CHECK_THROWS_AS(mdm_classify(mdm, riem::SpdMatrix{wrong}), ConfigError);
}

TEST_CASE("classic models round-trip through the textual schema") {
  CounterRng rng(59);
  std::vector<FeatureVector> xs;
  std::vector<int> ys;
  make_blobs(xs, ys, rng, 8);

  SUBCASE("lda") {
    LdaModel m = lda_train(xs, ys);
    std::stringstream ss;
    save_lda(m, ss);
    LdaModel back = load_lda(ss);
    CHECK(back.class_priors == m.class_priors);
    CHECK(back.class_means == m.class_means);
    CHECK(back.covariance_inverse.data == m.covariance_inverse.data);
    for (std::size_t i = 0; i < xs.size(); ++i)
      CHECK(lda_classify(back, xs[i]).first == lda_classify(m, xs[i]).first);
  }
  SUBCASE("svm") {
    SvmModel m = svm_train(xs, ys, Kernel{KernelKind::Gaussian, 0.8}, 2.0, 1e-3, 5);
    std::stringstream ss;
    save_svm(m, ss);
    SvmModel back = load_svm(ss);
    CHECK(back.kernel.gamma == m.kernel.gamma);
    CHECK(back.c == m.c);
    for (std::size_t i = 0; i < xs.size(); ++i)
      CHECK(svm_classify(back, xs[i]).first == svm_classify(m, xs[i]).first);
  }
  SUBCASE("mdm") {
    MdmModel m = mdm_train({spd2(2, 0.4, 1.5), spd2(6, -0.8, 4)}, {0, 1});
    std::stringstream ss;
    save_mdm(m, ss);
    MdmModel back = load_mdm(ss);
    REQUIRE(back.class_means.size() == 2);
    for (std::size_t k = 0; k < 2; ++k)
      CHECK(back.class_means[k].values.data == m.class_means[k].values.data);
  }
  SUBCASE("schema violations are rejected") {
    std::stringstream empty("not-a-model\n");
    CHECK_THROWS_AS(load_lda(empty), DataError);
    std::stringstream wrong_type;
    save_mdm(mdm_train({spd2(1, 0, 1)}, {0}), wrong_type);
    CHECK_THROWS_AS(load_lda(wrong_type), DataError);
  }
}
