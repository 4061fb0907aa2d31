#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ssvep/spd.hpp"

namespace ssvep {
namespace classic {

using FeatureVector = std::vector<double>;

struct LdaModel {
  std::vector<FeatureVector> class_means;  // indexed by label
  Matrix covariance_inverse;
  std::vector<double> class_priors;
  double ridge{0.0};
};

// Shared-covariance Gaussian discriminant. Negative/absent ridge selects
// 1e-6 * tr(pooled)/d.
LdaModel lda_train(const std::vector<FeatureVector>& xs, const std::vector<int>& ys,
                   std::optional<double> ridge = std::nullopt);
// Returns (label, softmax posteriors); ties resolve to the lowest label.
std::pair<int, std::vector<double>> lda_classify(const LdaModel& m,
                                                 const FeatureVector& x);

struct MdmModel {
  std::vector<riem::SpdMatrix> class_means;  // geometric means, indexed by label
};

MdmModel mdm_train(const std::vector<riem::SpdMatrix>& cs, const std::vector<int>& ys);
// Returns (label, per-class Riemannian distances); argmin, lowest label on ties.
std::pair<int, std::vector<double>> mdm_classify(const MdmModel& m,
                                                 const riem::SpdMatrix& c);

enum class KernelKind { Linear, Gaussian };

struct Kernel {
  KernelKind kind{KernelKind::Linear};
  double gamma{0.0};  // <= 0 requests 1/(d * mean feature variance) at fit time
};

struct BinarySvm {
  std::vector<FeatureVector> support_vectors;
  std::vector<double> coefficients;  // alpha_i * y_i
  double bias{0.0};
};

struct SvmModel {
  Kernel kernel;
  double c{1.0};
  double kkt_residual{0.0};  // max KKT violation recorded at fit time
  std::vector<BinarySvm> machines;  // one-vs-rest, indexed by label
};

// Soft-margin one-vs-rest machines fitted by SMO-style pair updates until
// every KKT violation is within tol.
SvmModel svm_train(const std::vector<FeatureVector>& xs, const std::vector<int>& ys,
                   Kernel kernel, double c = 1.0, double tol = 1e-3,
                   std::uint64_t seed = 0);
// Returns (label, one-vs-rest decision values); argmax, lowest label on ties.
std::pair<int, std::vector<double>> svm_classify(const SvmModel& m,
                                                 const FeatureVector& x);

// Textual key-value serialization, schema "classic-v1".
void save_lda(const LdaModel& m, std::ostream& out);
void save_mdm(const MdmModel& m, std::ostream& out);
void save_svm(const SvmModel& m, std::ostream& out);
LdaModel load_lda(std::istream& in);
MdmModel load_mdm(std::istream& in);
SvmModel load_svm(std::istream& in);

}  // namespace classic
}  // namespace ssvep
