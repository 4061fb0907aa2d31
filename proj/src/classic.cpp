#include "ssvep/classic.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "ssvep/errors.hpp"
#include "ssvep/rng.hpp"

namespace ssvep {
namespace classic {

namespace {

std::size_t class_count(const std::vector<int>& ys) {
  int max_label = -1;
  for (int y : ys) {
    if (y < 0) throw ConfigError("classifier: negative label");
    max_label = std::max(max_label, y);
  }
  return std::size_t(max_label) + 1;
}

void require_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want)
    throw ConfigError(std::string(what) + ": feature dimension " + std::to_string(got) +
                      " does not match model dimension " + std::to_string(want));
}

int argmax_lowest(const std::vector<double>& v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = int(i);
  return best;
}

}  // namespace

LdaModel lda_train(const std::vector<FeatureVector>& xs, const std::vector<int>& ys,
                   std::optional<double> ridge) {
  if (xs.size() != ys.size() || xs.empty())
    throw ConfigError("lda_train: empty or mismatched inputs");
  const std::size_t n = xs.size(), d = xs[0].size();
  const std::size_t k = class_count(ys);
  if (k < 2) throw ConfigError("lda_train: need at least 2 classes");

  std::vector<std::size_t> counts(k, 0);
  for (int y : ys) ++counts[std::size_t(y)];
  for (std::size_t c = 0; c < k; ++c)
    if (counts[c] < 2)
      throw ConfigError("lda_train: class " + std::to_string(c) +
                        " has fewer than 2 samples");

  LdaModel m;
  m.class_means.assign(k, FeatureVector(d, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) m.class_means[std::size_t(ys[i])][j] += xs[i][j];
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < d; ++j) m.class_means[c][j] /= double(counts[c]);

  Matrix pooled(d, d);
  for (std::size_t i = 0; i < n; ++i) {
    const FeatureVector& mu = m.class_means[std::size_t(ys[i])];
    for (std::size_t a = 0; a < d; ++a) {
      double da = xs[i][a] - mu[a];
      for (std::size_t b = a; b < d; ++b) pooled(a, b) += da * (xs[i][b] - mu[b]);
    }
  }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < a; ++b) pooled(a, b) = pooled(b, a);
  for (double& v : pooled.data) v /= double(n - k);

  m.ridge = ridge.value_or(1e-6 * trace(pooled) / double(d));
  if (m.ridge < 0.0) m.ridge = 1e-6 * trace(pooled) / double(d);
  for (std::size_t a = 0; a < d; ++a) pooled(a, a) += m.ridge;

  riem::EigenDecomposition eig = riem::sym_eig(pooled);
  double lambda_max = eig.eigenvalues.front();
  if (eig.eigenvalues.back() <= 1e-12 * std::max(lambda_max, 1e-300))
    throw NumericalError(
        "lda_train: pooled covariance is singular; supply a positive ridge");
  Matrix scaled = eig.eigenvectors;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) scaled(i, j) /= eig.eigenvalues[j];
  m.covariance_inverse = symmetrize(matmul(scaled, transpose(eig.eigenvectors)));

  m.class_priors.resize(k);
  for (std::size_t c = 0; c < k; ++c) m.class_priors[c] = double(counts[c]) / double(n);
  return m;
}

std::pair<int, std::vector<double>> lda_classify(const LdaModel& m,
                                                 const FeatureVector& x) {
  const std::size_t k = m.class_means.size(), d = m.covariance_inverse.rows;
  require_dim(x.size(), d, "lda_classify");

  std::vector<double> disc(k);
  for (std::size_t c = 0; c < k; ++c) {
    // w = Sigma^-1 mu_c; disc = x.w - mu_c.w/2 + log prior
    std::vector<double> w(d, 0.0);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) w[a] += m.covariance_inverse(a, b) * m.class_means[c][b];
    double xw = 0.0, mw = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      xw += x[a] * w[a];
      mw += m.class_means[c][a] * w[a];
    }
    disc[c] = xw - 0.5 * mw + std::log(m.class_priors[c]);
  }

  double peak = *std::max_element(disc.begin(), disc.end());
  std::vector<double> post(k);
  double z = 0.0;
  for (std::size_t c = 0; c < k; ++c) z += (post[c] = std::exp(disc[c] - peak));
  for (double& p : post) p /= z;
  return {argmax_lowest(disc), post};
}

MdmModel mdm_train(const std::vector<riem::SpdMatrix>& cs, const std::vector<int>& ys) {
  if (cs.size() != ys.size() || cs.empty())
    throw ConfigError("mdm_train: empty or mismatched inputs");
  const std::size_t k = class_count(ys);
  MdmModel m;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<riem::SpdMatrix> members;
    for (std::size_t i = 0; i < cs.size(); ++i)
      if (std::size_t(ys[i]) == c) members.push_back(cs[i]);
    if (members.empty())
      throw ConfigError("mdm_train: class " + std::to_string(c) + " has no samples");
    m.class_means.push_back(riem::geometric_mean(members));
  }
  return m;
}

std::pair<int, std::vector<double>> mdm_classify(const MdmModel& m,
                                                 const riem::SpdMatrix& c) {
  std::vector<double> dists(m.class_means.size());
  for (std::size_t i = 0; i < m.class_means.size(); ++i)
    dists[i] = riem::riemann_distance(c, m.class_means[i]);
  int best = 0;
  for (std::size_t i = 1; i < dists.size(); ++i)
    if (dists[i] < dists[best]) best = int(i);
  return {best, dists};
}

namespace {

double kernel_eval(const Kernel& k, const FeatureVector& a, const FeatureVector& b) {
  if (k.kind == KernelKind::Linear) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  }
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    d2 += d * d;
  }
  return std::exp(-k.gamma * d2);
}

// Soft-margin binary SMO on +-1 labels.
struct BinaryFit {
  BinarySvm machine;
  double kkt_residual{0.0};
};

BinaryFit smo_fit(const std::vector<FeatureVector>& xs, const std::vector<double>& ys,
                  const Kernel& kernel, double c, double tol, CounterRng& rng) {
  const std::size_t n = xs.size();
  std::vector<double> alpha(n, 0.0);
  double bias = 0.0;

  Matrix gram(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j)
      gram(i, j) = gram(j, i) = kernel_eval(kernel, xs[i], xs[j]);

  // errors[i] = f(x_i) - y_i, kept incrementally current.
  std::vector<double> errors(n);
  for (std::size_t i = 0; i < n; ++i) errors[i] = bias - ys[i];

  const std::size_t max_updates = 10 * n * n + 1000;
  std::size_t updates = 0;

  auto is_free = [&](std::size_t i) { return alpha[i] > 0.0 && alpha[i] < c; };

  auto take_step = [&](std::size_t i1, std::size_t i2) {
    if (i1 == i2) return false;
    const double a1_old = alpha[i1], a2_old = alpha[i2];
    const double y1 = ys[i1], y2 = ys[i2];
    const double e1 = errors[i1], e2 = errors[i2];
    const double s = y1 * y2;

    double lo, hi;
    if (y1 != y2) {
      lo = std::max(0.0, a2_old - a1_old);
      hi = std::min(c, c + a2_old - a1_old);
    } else {
      lo = std::max(0.0, a1_old + a2_old - c);
      hi = std::min(c, a1_old + a2_old);
    }
    if (lo >= hi) return false;

    const double k11 = gram(i1, i1), k12 = gram(i1, i2), k22 = gram(i2, i2);
    const double eta = k11 + k22 - 2.0 * k12;
    double a2;
    if (eta > 0.0) {
      a2 = std::clamp(a2_old + y2 * (e1 - e2) / eta, lo, hi);
    } else {
      // Flat direction: compare the dual objective at both clip bounds.
      const double f1 = y1 * e1 - a1_old * k11 - s * a2_old * k12;
      const double f2 = y2 * e2 - a2_old * k22 - s * a1_old * k12;
      const double l1 = a1_old + s * (a2_old - lo);
      const double h1 = a1_old + s * (a2_old - hi);
      double obj_lo = l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11 + 0.5 * lo * lo * k22 +
                      s * lo * l1 * k12;
      double obj_hi = h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11 + 0.5 * hi * hi * k22 +
                      s * hi * h1 * k12;
      if (obj_lo < obj_hi - 1e-12)
        a2 = lo;
      else if (obj_lo > obj_hi + 1e-12)
        a2 = hi;
      else
        return false;
    }
    if (std::abs(a2 - a2_old) < 1e-10 * (a2 + a2_old + 1e-10)) return false;
    const double a1 = a1_old + s * (a2_old - a2);

    const double b1 = bias - e1 - y1 * (a1 - a1_old) * k11 - y2 * (a2 - a2_old) * k12;
    const double b2 = bias - e2 - y1 * (a1 - a1_old) * k12 - y2 * (a2 - a2_old) * k22;
    double new_bias;
    if (a1 > 0.0 && a1 < c)
      new_bias = b1;
    else if (a2 > 0.0 && a2 < c)
      new_bias = b2;
    else
      new_bias = 0.5 * (b1 + b2);

    const double d1 = y1 * (a1 - a1_old);
    const double d2 = y2 * (a2 - a2_old);
    const double db = new_bias - bias;
    for (std::size_t j = 0; j < n; ++j)
      errors[j] += d1 * gram(i1, j) + d2 * gram(i2, j) + db;
    alpha[i1] = a1;
    alpha[i2] = a2;
    bias = new_bias;

    if (++updates > max_updates)
      throw NumericalError("svm_train: SMO exceeded " + std::to_string(max_updates) +
                           " pair updates without satisfying KKT conditions");
    return true;
  };

  auto examine = [&](std::size_t i2) {
    const double r2 = errors[i2] * ys[i2];
    const bool violates = (r2 < -tol && alpha[i2] < c) || (r2 > tol && alpha[i2] > 0.0);
    if (!violates) return false;

    // Second-choice heuristic: largest |E1 - E2| over free vectors.
    std::size_t best = n;
    double best_gap = -1.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!is_free(j)) continue;
      double gap = std::abs(errors[j] - errors[i2]);
      if (gap > best_gap) {
        best_gap = gap;
        best = j;
      }
    }
    if (best < n && take_step(best, i2)) return true;

    const std::size_t offset = std::size_t(rng.below(n));
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t j = (k + offset) % n;
      if (is_free(j) && take_step(j, i2)) return true;
    }
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t j = (k + offset) % n;
      if (take_step(j, i2)) return true;
    }
    return false;
  };

  bool examine_all = true;
  std::size_t changed = 0;
  while (changed > 0 || examine_all) {
    changed = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (examine_all || is_free(i))
        if (examine(i)) ++changed;
    if (examine_all)
      examine_all = false;
    else if (changed == 0)
      examine_all = true;
  }

  // Raw decisions with the bias removed; errors[] tracked the running bias.
  std::vector<double> raw(n);
  for (std::size_t i = 0; i < n; ++i) raw[i] = errors[i] + ys[i] - bias;

  // Recenter the bias at the violation-minimizing midpoint before recording
  // the residual.
  double lo = -1e300, hi = 1e300;
  for (std::size_t i = 0; i < n; ++i) {
    if (ys[i] > 0.0) {
      if (alpha[i] < c) lo = std::max(lo, 1.0 - raw[i]);
      if (alpha[i] > 0.0) hi = std::min(hi, 1.0 - raw[i]);
    } else {
      if (alpha[i] < c) hi = std::min(hi, -1.0 - raw[i]);
      if (alpha[i] > 0.0) lo = std::max(lo, -1.0 - raw[i]);
    }
  }
  if (lo > -1e299 && hi < 1e299)
    bias = 0.5 * (lo + hi);
  else if (lo > -1e299)
    bias = lo;
  else if (hi < 1e299)
    bias = hi;

  double residual = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double margin = ys[i] * (raw[i] + bias);
    if (alpha[i] <= 0.0)
      residual = std::max(residual, 1.0 - margin);
    else if (alpha[i] >= c)
      residual = std::max(residual, margin - 1.0);
    else
      residual = std::max(residual, std::abs(margin - 1.0));
  }

  BinaryFit fit;
  fit.kkt_residual = std::max(0.0, residual);
  for (std::size_t i = 0; i < n; ++i) {
    if (alpha[i] > 0.0) {
      fit.machine.support_vectors.push_back(xs[i]);
      fit.machine.coefficients.push_back(alpha[i] * ys[i]);
    }
  }
  fit.machine.bias = bias;
  return fit;
}

}  // namespace

SvmModel svm_train(const std::vector<FeatureVector>& xs, const std::vector<int>& ys,
                   Kernel kernel, double c, double tol, std::uint64_t seed) {
  if (xs.size() != ys.size() || xs.empty())
    throw ConfigError("svm_train: empty or mismatched inputs");
  if (c <= 0.0) throw ConfigError("svm_train: regularization c must be positive");
  const std::size_t k = class_count(ys);
  if (k < 2) throw ConfigError("svm_train: need at least 2 classes");
  const std::size_t d = xs[0].size();

  if (kernel.kind == KernelKind::Gaussian && kernel.gamma <= 0.0) {
    double var_sum = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0.0, sq = 0.0;
      for (const auto& x : xs) mean += x[j];
      mean /= double(xs.size());
      for (const auto& x : xs) sq += (x[j] - mean) * (x[j] - mean);
      var_sum += sq / double(xs.size());
    }
    double mean_var = var_sum / double(d);
    kernel.gamma = 1.0 / std::max(double(d) * mean_var, 1e-12);
  }

  SvmModel model;
  model.kernel = kernel;
  model.c = c;
  for (std::size_t target = 0; target < k; ++target) {
    std::vector<double> binary(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
      binary[i] = std::size_t(ys[i]) == target ? 1.0 : -1.0;
    CounterRng rng = CounterRng::derive(seed, 0x5653u, target);
    BinaryFit fit = smo_fit(xs, binary, kernel, c, tol, rng);
    model.kkt_residual = std::max(model.kkt_residual, fit.kkt_residual);
    model.machines.push_back(std::move(fit.machine));
  }
  return model;
}

std::pair<int, std::vector<double>> svm_classify(const SvmModel& m,
                                                 const FeatureVector& x) {
  if (m.machines.empty()) throw ConfigError("svm_classify: untrained model");
  for (const BinarySvm& b : m.machines)
    if (!b.support_vectors.empty())
      require_dim(x.size(), b.support_vectors[0].size(), "svm_classify");

  std::vector<double> decisions(m.machines.size());
  for (std::size_t c = 0; c < m.machines.size(); ++c) {
    const BinarySvm& b = m.machines[c];
    double f = b.bias;
    for (std::size_t i = 0; i < b.support_vectors.size(); ++i)
      f += b.coefficients[i] * kernel_eval(m.kernel, b.support_vectors[i], x);
    decisions[c] = f;
  }
  return {argmax_lowest(decisions), decisions};
}

namespace {

constexpr char kSchema[] = "classic-v1";

void write_vector(std::ostream& out, const std::string& key,
                  const std::vector<double>& v) {
  out << key << " =";
  out << std::setprecision(17);
  for (double x : v) out << " " << x;
  out << "\n";
}

class KvDocument {
 public:
  explicit KvDocument(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kSchema)
      throw DataError("classic model: missing schema header");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto eq = line.find(" = ");
      if (eq == std::string::npos)
        eq = line.find(" =");  // empty value list
      if (eq == std::string::npos) throw DataError("classic model: malformed line: " + line);
      entries_.emplace_back(line.substr(0, eq), line.substr(std::min(line.size(), eq + 3)));
    }
  }

  std::string text(const std::string& key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return v;
    throw DataError("classic model: missing key '" + key + "'");
  }

  std::vector<double> numbers(const std::string& key) const {
    std::istringstream ss(text(key));
    std::vector<double> out;
    double x;
    while (ss >> x) out.push_back(x);
    return out;
  }

  std::vector<std::pair<std::string, std::string>> with_prefix(const std::string& p) const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& e : entries_)
      if (e.first.rfind(p, 0) == 0) out.push_back(e);
    return out;
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace

void save_lda(const LdaModel& m, std::ostream& out) {
  out << kSchema << "\ntype = lda\n";
  out << "classes = " << m.class_means.size() << "\n";
  out << "dim = " << m.covariance_inverse.rows << "\n";
  out << std::setprecision(17) << "ridge = " << m.ridge << "\n";
  write_vector(out, "priors", m.class_priors);
  for (std::size_t c = 0; c < m.class_means.size(); ++c)
    write_vector(out, "mean" + std::to_string(c), m.class_means[c]);
  write_vector(out, "cov_inv", m.covariance_inverse.data);
}

LdaModel load_lda(std::istream& in) {
  KvDocument doc(in);
  if (doc.text("type") != "lda") throw DataError("classic model: not an lda document");
  std::size_t k = std::size_t(doc.numbers("classes").at(0));
  std::size_t d = std::size_t(doc.numbers("dim").at(0));
  LdaModel m;
  m.ridge = doc.numbers("ridge").at(0);
  m.class_priors = doc.numbers("priors");
  for (std::size_t c = 0; c < k; ++c) m.class_means.push_back(doc.numbers("mean" + std::to_string(c)));
  m.covariance_inverse = Matrix(d, d);
  m.covariance_inverse.data = doc.numbers("cov_inv");
  if (m.covariance_inverse.data.size() != d * d || m.class_priors.size() != k)
    throw DataError("classic model: lda field sizes inconsistent");
  return m;
}

void save_mdm(const MdmModel& m, std::ostream& out) {
  out << kSchema << "\ntype = mdm\n";
  out << "classes = " << m.class_means.size() << "\n";
  out << "dim = " << (m.class_means.empty() ? 0 : m.class_means[0].dim()) << "\n";
  for (std::size_t c = 0; c < m.class_means.size(); ++c)
    write_vector(out, "mean" + std::to_string(c), m.class_means[c].values.data);
}

MdmModel load_mdm(std::istream& in) {
  KvDocument doc(in);
  if (doc.text("type") != "mdm") throw DataError("classic model: not an mdm document");
  std::size_t k = std::size_t(doc.numbers("classes").at(0));
  std::size_t d = std::size_t(doc.numbers("dim").at(0));
  MdmModel m;
  for (std::size_t c = 0; c < k; ++c) {
    Matrix values(d, d);
    values.data = doc.numbers("mean" + std::to_string(c));
    if (values.data.size() != d * d) throw DataError("classic model: mdm mean size mismatch");
    m.class_means.push_back(riem::SpdMatrix{std::move(values)});
  }
  return m;
}

void save_svm(const SvmModel& m, std::ostream& out) {
  out << kSchema << "\ntype = svm\n";
  out << "kernel = " << (m.kernel.kind == KernelKind::Linear ? "linear" : "gaussian") << "\n";
  out << std::setprecision(17) << "gamma = " << m.kernel.gamma << "\n";
  out << std::setprecision(17) << "c = " << m.c << "\n";
  out << std::setprecision(17) << "kkt_residual = " << m.kkt_residual << "\n";
  out << "classes = " << m.machines.size() << "\n";
  for (std::size_t c = 0; c < m.machines.size(); ++c) {
    const BinarySvm& b = m.machines[c];
    std::string p = "m" + std::to_string(c) + ".";
    out << p << "n_sv = " << b.support_vectors.size() << "\n";
    out << std::setprecision(17) << p << "bias = " << b.bias << "\n";
    write_vector(out, p + "coef", b.coefficients);
    for (std::size_t i = 0; i < b.support_vectors.size(); ++i)
      write_vector(out, p + "sv" + std::to_string(i), b.support_vectors[i]);
  }
}

SvmModel load_svm(std::istream& in) {
  KvDocument doc(in);
  if (doc.text("type") != "svm") throw DataError("classic model: not an svm document");
  SvmModel m;
  std::string kernel = doc.text("kernel");
  if (kernel == "linear")
    m.kernel.kind = KernelKind::Linear;
  else if (kernel == "gaussian")
    m.kernel.kind = KernelKind::Gaussian;
  else
    throw DataError("classic model: unknown kernel '" + kernel + "'");
  m.kernel.gamma = doc.numbers("gamma").at(0);
  m.c = doc.numbers("c").at(0);
  m.kkt_residual = doc.numbers("kkt_residual").at(0);
  std::size_t k = std::size_t(doc.numbers("classes").at(0));
  for (std::size_t c = 0; c < k; ++c) {
    std::string p = "m" + std::to_string(c) + ".";
    BinarySvm b;
    std::size_t n_sv = std::size_t(doc.numbers(p + "n_sv").at(0));
    b.bias = doc.numbers(p + "bias").at(0);
    b.coefficients = doc.numbers(p + "coef");
    for (std::size_t i = 0; i < n_sv; ++i)
      b.support_vectors.push_back(doc.numbers(p + "sv" + std::to_string(i)));
    if (b.coefficients.size() != n_sv)
      throw DataError("classic model: svm coefficient count mismatch");
    m.machines.push_back(std::move(b));
  }
  return m;
}

}  // namespace classic
}  // namespace ssvep
