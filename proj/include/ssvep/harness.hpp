#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ssvep/classic.hpp"
#include "ssvep/dataio.hpp"
#include "ssvep/dsp.hpp"
#include "ssvep/models.hpp"

namespace ssvep {
namespace harness {

struct FoldPlan {
  std::size_t k{10};
  std::vector<std::size_t> assignments;  // trial index -> fold index
  std::uint64_t seed{0};
};

// Seeded stratified split: per-class fold counts differ by at most one.
FoldPlan kfold_split(const Dataset& ds, std::size_t k, std::uint64_t seed);
FoldPlan kfold_split_indices(const std::vector<int>& labels, std::size_t k,
                             std::uint64_t seed);

struct ConfusionMatrix {
  std::size_t n_classes{4};
  std::vector<std::size_t> counts;  // row = true class, column = predicted

  explicit ConfusionMatrix(std::size_t k = 4) : n_classes(k), counts(k * k, 0) {}
  void add(int truth, int predicted);
  std::size_t at(std::size_t truth, std::size_t predicted) const {
    return counts[truth * n_classes + predicted];
  }
  std::size_t total() const;
  std::size_t diagonal() const;
};

struct ExperimentReport {
  std::string design;
  std::string method;
  bool preprocessed{false};
  std::string subject;  // per-subject/unseen rows; empty otherwise
  std::vector<double> per_fold_accuracy;
  double mean{0.0};
  double stddev{0.0};  // population standard deviation over folds
  ConfusionMatrix confusion;
  std::string config_fingerprint;
};

enum class Method { Cnn, DeepScu, Rnn, Lstm, Gru, SvmLinear, SvmGaussian, Lda, Mdm };

struct MethodSpec {
  Method method{Method::Cnn};
  std::size_t deep_blocks{5};  // deep-scu:N
};

// Accepts cnn | deep-scu:N | rnn | lstm | gru | svm-linear | svm-gaussian |
// lda | mdm.
MethodSpec parse_method(const std::string& name);
std::string method_name(const MethodSpec& m);
bool is_neural(Method m);

enum class Design { SingleSubject, PerSubject, Pooled, UnseenSubject };

// Accepts single | per-subject | pooled | unseen.
Design parse_design(const std::string& name);
std::string design_name(Design d);

struct HarnessConfig {
  std::size_t k_folds{10};
  std::uint64_t seed{0};
  bool preprocess{false};
  dsp::PreprocessConfig pre{};
  models::TrainConfig train{};
  double svm_c{1.0};
  double svm_tol{1e-3};
  double svm_gamma{0.0};  // <= 0 selects 1/(d * mean feature variance)
  double lda_ridge{-1.0};  // negative selects the automatic ridge
  double shrinkage{1e-3};
  std::size_t rnn_hidden{64};
  std::string holdout_subject;  // unseen design; empty selects the last subject
  std::size_t threads{1};
};

struct ExperimentResult {
  std::vector<ExperimentReport> reports;         // one per evaluated pool
  std::optional<ExperimentReport> subject_mean;  // per-subject designs only
};

// single: 10-fold CV on the first subject's trials. per-subject: independent
// CV per subject plus a cross-subject mean row. pooled: CV over everything.
// unseen: train once on all other subjects, evaluate every trial of the
// held-out subject.
ExperimentResult run_experiment(Design design, const Dataset& ds,
                                const MethodSpec& method, const HarnessConfig& cfg);

using GridPoint = std::map<std::string, double>;

struct GridScore {
  GridPoint point;
  double accuracy{0.0};
};

struct GridResult {
  GridPoint best;
  double best_accuracy{0.0};
  std::vector<GridScore> table;  // one row per grid point, input order
};

// Exhaustive search over hyperparameter overrides (keys: lr, l2, epochs,
// batch, svm_c, gamma, ridge, shrinkage); ties keep the earliest point.
GridResult grid_search(const std::vector<GridPoint>& grid, const Dataset& ds,
                       const std::vector<std::size_t>& train_idx,
                       const std::vector<std::size_t>& validation_idx,
                       const MethodSpec& method, const HarnessConfig& cfg);

enum class ReportFormat { Text, Csv, Svg };

ReportFormat parse_format(const std::string& name);
std::string emit_report(const ExperimentReport& r, ReportFormat format);
ExperimentReport parse_report_csv(const std::string& csv);

// Repo-pinned synthetic corpora used by the bundled experiments.
SynthConfig preset_synth_single();
SynthConfig preset_synth_multi();
SynthConfig preset_synth_unseen();
Montage preset_montage();

}  // namespace harness
}  // namespace ssvep
