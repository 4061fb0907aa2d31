#include "ssvep/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <numeric>
#include <set>
#include <sstream>

#include "ssvep/errors.hpp"
#include "ssvep/rng.hpp"
#include "ssvep/spd.hpp"

namespace ssvep {
namespace harness {

namespace {

std::string format_double(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string fingerprint_string(Design design, const MethodSpec& method,
                               const HarnessConfig& cfg) {
  std::ostringstream ss;
  ss << "design=" << design_name(design) << ";method=" << method_name(method)
     << ";k=" << cfg.k_folds << ";seed=" << cfg.seed
     << ";pre=" << (cfg.preprocess ? "on" : "off") << ";notch=" << cfg.pre.notch_hz
     << ";q=" << cfg.pre.notch_q << ";band=" << cfg.pre.band_lo_hz << ":"
     << cfg.pre.band_hi_hz << ";order=" << cfg.pre.band_order
     << ";epochs=" << cfg.train.epochs << ";batch=" << cfg.train.batch_size
     << ";lr=" << cfg.train.lr << ";l2=" << cfg.train.lambda_l2
     << ";shuffle=" << cfg.train.shuffle << ";svm_c=" << cfg.svm_c
     << ";svm_tol=" << cfg.svm_tol << ";svm_gamma=" << cfg.svm_gamma
     << ";ridge=" << cfg.lda_ridge << ";shrinkage=" << cfg.shrinkage
     << ";hidden=" << cfg.rnn_hidden << ";holdout=" << cfg.holdout_subject;
  return ss.str();
}

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

FoldPlan kfold_split_indices(const std::vector<int>& labels, std::size_t k,
                             std::uint64_t seed) {
  if (k == 0) throw ConfigError("kfold: k must be positive");
  if (labels.empty()) throw ConfigError("kfold: empty dataset");

  std::size_t n_classes = 0;
  for (int y : labels) n_classes = std::max(n_classes, std::size_t(y) + 1);

  std::vector<std::vector<std::size_t>> per_class(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i)
    per_class[std::size_t(labels[i])].push_back(i);

  for (std::size_t c = 0; c < n_classes; ++c)
    if (per_class[c].size() < k)
      throw ConfigError("kfold: class " + std::to_string(c) + " has " +
                        std::to_string(per_class[c].size()) +
                        " trials, fewer than k=" + std::to_string(k));

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.assignments.assign(labels.size(), 0);
  std::size_t rotation = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    auto& idx = per_class[c];
    CounterRng rng = CounterRng::derive(seed, 0xF01Du, c);
    for (std::size_t i = idx.size(); i-- > 1;)
      std::swap(idx[i], idx[rng.below(i + 1)]);
    for (std::size_t i = 0; i < idx.size(); ++i)
      plan.assignments[idx[i]] = (i + rotation) % k;
    rotation = (rotation + idx.size()) % k;
  }
  return plan;
}

FoldPlan kfold_split(const Dataset& ds, std::size_t k, std::uint64_t seed) {
  std::vector<int> labels;
  labels.reserve(ds.trials.size());
  for (const Trial& t : ds.trials) labels.push_back(t.label);
  return kfold_split_indices(labels, k, seed);
}

void ConfusionMatrix::add(int truth, int predicted) {
  if (truth < 0 || std::size_t(truth) >= n_classes || predicted < 0 ||
      std::size_t(predicted) >= n_classes)
    throw DataError("confusion: label out of range");
  ++counts[std::size_t(truth) * n_classes + std::size_t(predicted)];
}

std::size_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t(0));
}

std::size_t ConfusionMatrix::diagonal() const {
  std::size_t s = 0;
  for (std::size_t i = 0; i < n_classes; ++i) s += at(i, i);
  return s;
}

MethodSpec parse_method(const std::string& name) {
  MethodSpec m;
  if (name == "cnn") {
    m.method = Method::Cnn;
  } else if (name.rfind("deep-scu:", 0) == 0) {
    m.method = Method::DeepScu;
    try {
      m.deep_blocks = std::stoul(name.substr(9));
    } catch (...) {
      throw ConfigError("method: malformed deep-scu spec '" + name + "'");
    }
    if (m.deep_blocks < 1 || m.deep_blocks > models::kMaxScuBlocks)
      throw ConfigError("method: deep-scu depth must lie in 1.." +
                        std::to_string(models::kMaxScuBlocks));
  } else if (name == "rnn") {
    m.method = Method::Rnn;
  } else if (name == "lstm") {
    m.method = Method::Lstm;
  } else if (name == "gru") {
    m.method = Method::Gru;
  } else if (name == "svm-linear") {
    m.method = Method::SvmLinear;
  } else if (name == "svm-gaussian") {
    m.method = Method::SvmGaussian;
  } else if (name == "lda") {
    m.method = Method::Lda;
  } else if (name == "mdm") {
    m.method = Method::Mdm;
  } else {
    throw ConfigError("method: unknown method '" + name + "'");
  }
  return m;
}

std::string method_name(const MethodSpec& m) {
  switch (m.method) {
    case Method::Cnn:
      return "cnn";
    case Method::DeepScu:
      return "deep-scu:" + std::to_string(m.deep_blocks);
    case Method::Rnn:
      return "rnn";
    case Method::Lstm:
      return "lstm";
    case Method::Gru:
      return "gru";
    case Method::SvmLinear:
      return "svm-linear";
    case Method::SvmGaussian:
      return "svm-gaussian";
    case Method::Lda:
      return "lda";
    case Method::Mdm:
      return "mdm";
  }
  return "?";
}

bool is_neural(Method m) {
  return m == Method::Cnn || m == Method::DeepScu || m == Method::Rnn ||
         m == Method::Lstm || m == Method::Gru;
}

Design parse_design(const std::string& name) {
  if (name == "single") return Design::SingleSubject;
  if (name == "per-subject") return Design::PerSubject;
  if (name == "pooled") return Design::Pooled;
  if (name == "unseen") return Design::UnseenSubject;
  throw ConfigError("design: unknown design '" + name + "'");
}

std::string design_name(Design d) {
  switch (d) {
    case Design::SingleSubject:
      return "single";
    case Design::PerSubject:
      return "per-subject";
    case Design::Pooled:
      return "pooled";
    case Design::UnseenSubject:
      return "unseen";
  }
  return "?";
}

ReportFormat parse_format(const std::string& name) {
  if (name == "text") return ReportFormat::Text;
  if (name == "csv") return ReportFormat::Csv;
  if (name == "svg") return ReportFormat::Svg;
  throw ConfigError("format: unknown format '" + name + "'");
}

// ---------------------------------------------------------------------------
// Fold evaluation

namespace {

struct FoldOutcome {
  double accuracy{0.0};
  std::vector<std::pair<int, int>> truth_predicted;
};

void require_disjoint(const std::vector<std::size_t>& a,
                      const std::vector<std::size_t>& b) {
  std::set<std::size_t> seen(a.begin(), a.end());
  for (std::size_t i : b)
    if (seen.count(i))
      throw DataError("harness: train and evaluation pools overlap at trial " +
                      std::to_string(i));
}

std::vector<int> labels_of(const Dataset& ds, const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(ds.trials[i].label);
  return out;
}

// Covariance of the data channels only; a stored reference row never reaches
// feature extraction.
riem::SpdMatrix trial_covariance(const Trial& t, std::size_t data_channels,
                                 double shrinkage) {
  Matrix x(data_channels, t.samples.cols);
  for (std::size_t c = 0; c < data_channels; ++c)
    std::copy(t.samples.row(c), t.samples.row(c) + t.samples.cols, x.row(c));
  return riem::sample_covariance(x, shrinkage);
}

struct TangentScaler {
  std::vector<double> mean, stddev;
};

TangentScaler fit_scaler(const std::vector<classic::FeatureVector>& xs) {
  TangentScaler s;
  const std::size_t d = xs.at(0).size();
  s.mean.assign(d, 0.0);
  s.stddev.assign(d, 0.0);
  for (const auto& x : xs)
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += x[j];
  for (double& m : s.mean) m /= double(xs.size());
  for (const auto& x : xs)
    for (std::size_t j = 0; j < d; ++j)
      s.stddev[j] += (x[j] - s.mean[j]) * (x[j] - s.mean[j]);
  for (double& v : s.stddev) v = std::max(std::sqrt(v / double(xs.size())), 1e-12);
  return s;
}

classic::FeatureVector apply_scaler(const TangentScaler& s,
                                    const classic::FeatureVector& x) {
  classic::FeatureVector out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - s.mean[j]) / s.stddev[j];
  return out;
}

nn::Network build_method_network(const MethodSpec& method, std::size_t channels,
                                 std::size_t length, const HarnessConfig& cfg) {
  switch (method.method) {
    case Method::Cnn: {
      models::ScuSpec spec;
      spec.in_channels = channels;
      spec.in_length = length;
      return models::build_scu_cnn(spec);
    }
    case Method::DeepScu: {
      models::ScuSpec spec;
      spec.n_scu_blocks = method.deep_blocks;
      spec.in_channels = channels;
      spec.in_length = length;
      return models::build_deep_scu_cnn(spec);
    }
    case Method::Rnn:
      return models::build_recurrent(nn::CellKind::Vanilla, cfg.rnn_hidden, channels);
    case Method::Lstm:
      return models::build_recurrent(nn::CellKind::Lstm, cfg.rnn_hidden, channels);
    case Method::Gru:
      return models::build_recurrent(nn::CellKind::Gru, cfg.rnn_hidden, channels);
    default:
      throw ConfigError("harness: not a neural method");
  }
}

// Train on train_idx, score test_idx. `source` already reflects the
// preprocessing choice; trial-level filtering carries no cross-trial state,
// so fold isolation is preserved.
FoldOutcome evaluate_split(const Dataset& source, const std::vector<std::size_t>& train_idx,
                           const std::vector<std::size_t>& test_idx,
                           const MethodSpec& method, const HarnessConfig& cfg,
                           std::uint64_t unit_seed) {
  require_disjoint(train_idx, test_idx);
  if (train_idx.empty() || test_idx.empty())
    throw ConfigError("harness: empty train or test pool");

  const std::vector<int> train_labels = labels_of(source, train_idx);
  const std::vector<int> test_labels = labels_of(source, test_idx);
  std::vector<int> predicted;

  if (is_neural(method.method)) {
    nn::Tensor train_x = models::trials_to_tensor(source, train_idx);
    nn::Tensor test_x = models::trials_to_tensor(source, test_idx);
    nn::Network net =
        build_method_network(method, train_x.dim(1), train_x.dim(2), cfg);
    models::TrainConfig tc = cfg.train;
    tc.seed = unit_seed;
    models::train(net, train_x, train_labels, tc);
    predicted = models::predict(net, test_x).first;
  } else {
    const std::size_t channels = source.montage.data_channels();
    std::vector<riem::SpdMatrix> train_cov, test_cov;
    train_cov.reserve(train_idx.size());
    test_cov.reserve(test_idx.size());
    for (std::size_t i : train_idx)
      train_cov.push_back(trial_covariance(source.trials[i], channels, cfg.shrinkage));
    for (std::size_t i : test_idx)
      test_cov.push_back(trial_covariance(source.trials[i], channels, cfg.shrinkage));

    if (method.method == Method::Mdm) {
      classic::MdmModel model = classic::mdm_train(train_cov, train_labels);
      for (const auto& c : test_cov)
        predicted.push_back(classic::mdm_classify(model, c).first);
    } else {
      // Tangent reference and feature scaling come from the training fold only.
      riem::SpdMatrix reference = riem::geometric_mean(train_cov);
      std::vector<classic::FeatureVector> train_feat, test_feat;
      for (const auto& c : train_cov)
        train_feat.push_back(riem::tangent_map(c, reference).coords);
      for (const auto& c : test_cov)
        test_feat.push_back(riem::tangent_map(c, reference).coords);
      TangentScaler scaler = fit_scaler(train_feat);
      for (auto& x : train_feat) x = apply_scaler(scaler, x);
      for (auto& x : test_feat) x = apply_scaler(scaler, x);

      if (method.method == Method::Lda) {
        std::optional<double> ridge;
        if (cfg.lda_ridge >= 0.0) ridge = cfg.lda_ridge;
        classic::LdaModel model = classic::lda_train(train_feat, train_labels, ridge);
        for (const auto& x : test_feat)
          predicted.push_back(classic::lda_classify(model, x).first);
      } else {
        classic::Kernel kernel;
        kernel.kind = method.method == Method::SvmLinear ? classic::KernelKind::Linear
                                                         : classic::KernelKind::Gaussian;
        kernel.gamma = cfg.svm_gamma;
        classic::SvmModel model = classic::svm_train(train_feat, train_labels, kernel,
                                                     cfg.svm_c, cfg.svm_tol, unit_seed);
        for (const auto& x : test_feat)
          predicted.push_back(classic::svm_classify(model, x).first);
      }
    }
  }

  FoldOutcome out;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test_idx.size(); ++i) {
    out.truth_predicted.emplace_back(test_labels[i], predicted[i]);
    if (test_labels[i] == predicted[i]) ++correct;
  }
  out.accuracy = double(correct) / double(test_idx.size());
  return out;
}

std::size_t count_classes(const Dataset& ds) {
  std::size_t k = 0;
  for (const Trial& t : ds.trials) k = std::max(k, std::size_t(t.label) + 1);
  return std::max<std::size_t>(k, 1);
}

ExperimentReport aggregate(Design design, const MethodSpec& method,
                           const HarnessConfig& cfg, std::size_t n_classes,
                           const std::vector<FoldOutcome>& folds,
                           const std::string& subject) {
  ExperimentReport r;
  r.design = design_name(design);
  r.method = method_name(method);
  r.preprocessed = cfg.preprocess;
  r.subject = subject;
  r.confusion = ConfusionMatrix(n_classes);
  r.config_fingerprint = hex16(fnv1a(fingerprint_string(design, method, cfg)));
  for (const FoldOutcome& f : folds) {
    r.per_fold_accuracy.push_back(f.accuracy);
    for (auto [truth, pred] : f.truth_predicted) r.confusion.add(truth, pred);
  }
  double mean = 0.0;
  for (double a : r.per_fold_accuracy) mean += a;
  mean /= double(r.per_fold_accuracy.size());
  double var = 0.0;
  for (double a : r.per_fold_accuracy) var += (a - mean) * (a - mean);
  r.mean = mean;
  r.stddev = std::sqrt(var / double(r.per_fold_accuracy.size()));
  return r;
}

ExperimentReport evaluate_cv(Design design, const Dataset& source,
                             const std::vector<std::size_t>& pool,
                             const MethodSpec& method, const HarnessConfig& cfg,
                             const std::string& subject) {
  if (cfg.k_folds < 2)
    throw ConfigError("harness: evaluation needs k >= 2 folds, got " +
                      std::to_string(cfg.k_folds));
  FoldPlan plan = kfold_split_indices(labels_of(source, pool), cfg.k_folds, cfg.seed);

  std::vector<FoldOutcome> outcomes(cfg.k_folds);
  const std::size_t workers = std::max<std::size_t>(1, cfg.threads);
  for (std::size_t base = 0; base < cfg.k_folds; base += workers) {
    std::vector<std::future<FoldOutcome>> batch;
    const std::size_t end = std::min(cfg.k_folds, base + workers);
    for (std::size_t f = base; f < end; ++f) {
      batch.push_back(std::async(std::launch::async, [&, f] {
        std::vector<std::size_t> train_idx, test_idx;
        for (std::size_t i = 0; i < pool.size(); ++i)
          (plan.assignments[i] == f ? test_idx : train_idx).push_back(pool[i]);
        std::uint64_t unit_seed = CounterRng::derive(cfg.seed, 0xF09Au, f).next_u64();
        return evaluate_split(source, train_idx, test_idx, method, cfg, unit_seed);
      }));
    }
    for (std::size_t f = base; f < end; ++f) outcomes[f] = batch[f - base].get();
  }
  return aggregate(design, method, cfg, count_classes(source), outcomes, subject);
}

std::vector<std::size_t> subject_pool(const Dataset& ds, const std::string& subject) {
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < ds.trials.size(); ++i)
    if (ds.trials[i].subject_id == subject) pool.push_back(i);
  return pool;
}

}  // namespace

ExperimentResult run_experiment(Design design, const Dataset& ds,
                                const MethodSpec& method, const HarnessConfig& cfg) {
  ds.validate();
  if (ds.trials.empty()) throw ConfigError("harness: empty dataset");

  // Preprocessing is per-trial and stateless, so it is applied once up front.
  Dataset processed;
  const Dataset& source = cfg.preprocess ? processed : ds;
  if (cfg.preprocess) processed = dsp::preprocess_dataset(ds, cfg.pre);

  std::vector<std::string> subjects = ds.subject_ids();
  ExperimentResult result;

  switch (design) {
    case Design::SingleSubject: {
      std::vector<std::size_t> pool = subject_pool(source, subjects.front());
      result.reports.push_back(
          evaluate_cv(design, source, pool, method, cfg, subjects.front()));
      break;
    }
    case Design::Pooled: {
      std::vector<std::size_t> pool(source.trials.size());
      std::iota(pool.begin(), pool.end(), 0);
      result.reports.push_back(evaluate_cv(design, source, pool, method, cfg, ""));
      break;
    }
    case Design::PerSubject: {
      for (const std::string& s : subjects) {
        std::vector<std::size_t> pool = subject_pool(source, s);
        result.reports.push_back(evaluate_cv(design, source, pool, method, cfg, s));
      }
      // Cross-subject mean row: per-fold slots hold the per-subject means.
      std::vector<FoldOutcome> rows;
      for (const ExperimentReport& r : result.reports) {
        FoldOutcome f;
        f.accuracy = r.mean;
        rows.push_back(f);
      }
      ExperimentReport mean_row =
          aggregate(design, method, cfg, count_classes(source), rows, "mean");
      for (const ExperimentReport& r : result.reports)
        for (std::size_t i = 0; i < r.confusion.counts.size(); ++i)
          mean_row.confusion.counts[i] += r.confusion.counts[i];
      result.subject_mean = std::move(mean_row);
      break;
    }
    case Design::UnseenSubject: {
      if (subjects.size() < 2)
        throw ConfigError("harness: unseen design needs at least 2 subjects");
      std::string holdout = cfg.holdout_subject.empty() ? subjects.back()
                                                        : cfg.holdout_subject;
      if (std::find(subjects.begin(), subjects.end(), holdout) == subjects.end())
        throw ConfigError("harness: holdout subject '" + holdout +
                          "' not present in dataset");
      std::vector<std::size_t> train_idx, test_idx;
      for (std::size_t i = 0; i < source.trials.size(); ++i)
        (source.trials[i].subject_id == holdout ? test_idx : train_idx).push_back(i);
      for (std::size_t i : train_idx)
        if (source.trials[i].subject_id == holdout)
          throw DataError("harness: held-out subject leaked into the training pool");
      std::uint64_t unit_seed = CounterRng::derive(cfg.seed, 0x405Eu, 0).next_u64();
      FoldOutcome shot = evaluate_split(source, train_idx, test_idx, method, cfg, unit_seed);
      result.reports.push_back(
          aggregate(design, method, cfg, count_classes(source), {shot}, holdout));
      break;
    }
  }
  return result;
}

GridResult grid_search(const std::vector<GridPoint>& grid, const Dataset& ds,
                       const std::vector<std::size_t>& train_idx,
                       const std::vector<std::size_t>& validation_idx,
                       const MethodSpec& method, const HarnessConfig& cfg) {
  if (grid.empty()) throw ConfigError("grid_search: empty grid");
  require_disjoint(train_idx, validation_idx);

  Dataset processed;
  const Dataset& source = cfg.preprocess ? processed : ds;
  if (cfg.preprocess) processed = dsp::preprocess_dataset(ds, cfg.pre);

  GridResult result;
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    HarnessConfig point_cfg = cfg;
    for (const auto& [key, value] : grid[gi]) {
      if (key == "lr")
        point_cfg.train.lr = value;
      else if (key == "l2")
        point_cfg.train.lambda_l2 = value;
      else if (key == "epochs")
        point_cfg.train.epochs = std::size_t(value);
      else if (key == "batch")
        point_cfg.train.batch_size = std::size_t(value);
      else if (key == "svm_c")
        point_cfg.svm_c = value;
      else if (key == "gamma")
        point_cfg.svm_gamma = value;
      else if (key == "ridge")
        point_cfg.lda_ridge = value;
      else if (key == "shrinkage")
        point_cfg.shrinkage = value;
      else if (key == "hidden")
        point_cfg.rnn_hidden = std::size_t(value);
      else
        throw ConfigError("grid_search: unknown hyperparameter '" + key + "'");
    }
    std::uint64_t unit_seed = CounterRng::derive(cfg.seed, 0x6D1Du, gi).next_u64();
    FoldOutcome outcome =
        evaluate_split(source, train_idx, validation_idx, method, point_cfg, unit_seed);
    result.table.push_back({grid[gi], outcome.accuracy});
    if (outcome.accuracy > result.best_accuracy ||
        (result.table.size() == 1 && result.best.empty())) {
      result.best = grid[gi];
      result.best_accuracy = outcome.accuracy;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Report emission

std::string emit_report(const ExperimentReport& r, ReportFormat format) {
  const std::size_t k = r.confusion.n_classes;
  std::vector<double> per_class(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t row = 0;
    for (std::size_t j = 0; j < k; ++j) row += r.confusion.at(i, j);
    per_class[i] = row == 0 ? 0.0 : double(r.confusion.at(i, i)) / double(row);
  }

  if (format == ReportFormat::Text) {
    std::ostringstream out;
    out << "fingerprint: " << r.config_fingerprint << "\n";
    out << "design: " << r.design << "\n";
    out << "method: " << r.method << "\n";
    out << "preprocess: " << (r.preprocessed ? "on" : "off") << "\n";
    if (!r.subject.empty()) out << "subject: " << r.subject << "\n";
    out << "folds:";
    for (double a : r.per_fold_accuracy) out << " " << format_double("%.6f", a);
    out << "\n";
    out << "accuracy: " << format_double("%.2f", r.mean) << "±"
        << format_double("%.2f", r.stddev) << "\n";
    out << "confusion (rows = true, cols = predicted):\n";
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j)
        out << (j ? " " : "  ") << r.confusion.at(i, j);
      out << "\n";
    }
    out << "per-class accuracy:";
    for (double a : per_class) out << " " << format_double("%.4f", a);
    out << "\n";
    return out.str();
  }

  if (format == ReportFormat::Csv) {
    std::ostringstream out;
    out << "ssvep-report-v1\n";
    out << "fingerprint," << r.config_fingerprint << "\n";
    out << "design," << r.design << "\n";
    out << "method," << r.method << "\n";
    out << "preprocess," << (r.preprocessed ? "on" : "off") << "\n";
    out << "subject," << r.subject << "\n";
    out << "classes," << k << "\n";
    for (std::size_t i = 0; i < r.per_fold_accuracy.size(); ++i)
      out << "fold," << i << "," << format_double("%.6f", r.per_fold_accuracy[i]) << "\n";
    out << "mean," << format_double("%.6f", r.mean) << "\n";
    out << "std," << format_double("%.6f", r.stddev) << "\n";
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j)
        out << "confusion," << i << "," << j << "," << r.confusion.at(i, j) << "\n";
    return out.str();
  }

  // Row-normalized confusion heatmap with per-class accuracy on the diagonal.
  static const char* kClassNames[4] = {"10Hz", "12Hz", "15Hz", "30Hz"};
  const int cell = 64, margin = 72;
  const int width = margin + cell * int(k) + 24, height = margin + cell * int(k) + 24;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\">\n";
  out << "<text x=\"" << margin << "\" y=\"20\" font-size=\"13\">" << r.method
      << " / " << r.design << " (" << format_double("%.2f", r.mean) << "±"
      << format_double("%.2f", r.stddev) << ")</text>\n";
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t row_total = 0;
    for (std::size_t j = 0; j < k; ++j) row_total += r.confusion.at(i, j);
    for (std::size_t j = 0; j < k; ++j) {
      double v = row_total == 0 ? 0.0 : double(r.confusion.at(i, j)) / double(row_total);
      int shade = int(std::lround(255.0 * (1.0 - v)));
      int x = margin + cell * int(j), y = margin + cell * int(i);
      out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell
          << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << "," << shade
          << ",255)\" stroke=\"black\"/>\n";
      out << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
          << "\" font-size=\"12\" text-anchor=\"middle\""
          << (v > 0.55 ? " fill=\"white\"" : "") << ">" << format_double("%.2f", v)
          << "</text>\n";
    }
    const char* label = i < 4 ? kClassNames[i] : "?";
    out << "<text x=\"" << margin - 8 << "\" y=\"" << margin + cell * int(i) + cell / 2 + 4
        << "\" font-size=\"11\" text-anchor=\"end\">" << label << "</text>\n";
    out << "<text x=\"" << margin + cell * int(i) + cell / 2 << "\" y=\"" << margin - 8
        << "\" font-size=\"11\" text-anchor=\"middle\">" << label << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

ExperimentReport parse_report_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != "ssvep-report-v1")
    throw DataError("report: missing ssvep-report-v1 header");

  ExperimentReport r;
  std::size_t classes = 4;
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> cells;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> parts;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) parts.push_back(field);
    if (parts.empty()) continue;
    const std::string& key = parts[0];
    try {
      if (key == "fingerprint")
        r.config_fingerprint = parts.at(1);
      else if (key == "design")
        r.design = parts.at(1);
      else if (key == "method")
        r.method = parts.at(1);
      else if (key == "preprocess")
        r.preprocessed = parts.at(1) == "on";
      else if (key == "subject")
        r.subject = parts.size() > 1 ? parts[1] : "";
      else if (key == "classes")
        classes = std::stoul(parts.at(1));
      else if (key == "fold")
        r.per_fold_accuracy.push_back(std::stod(parts.at(2)));
      else if (key == "mean")
        r.mean = std::stod(parts.at(1));
      else if (key == "std")
        r.stddev = std::stod(parts.at(1));
      else if (key == "confusion")
        cells.emplace_back(std::stoul(parts.at(1)), std::stoul(parts.at(2)),
                           std::stoul(parts.at(3)));
      else
        throw DataError("report: unknown row '" + key + "'");
    } catch (const std::logic_error&) {
      throw DataError("report: malformed row '" + line + "'");
    }
  }
  r.confusion = ConfusionMatrix(classes);
  for (auto [i, j, v] : cells) {
    if (i >= classes || j >= classes) throw DataError("report: confusion index out of range");
    r.confusion.counts[i * classes + j] = v;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Pinned synthetic corpora

Montage preset_montage() { return default_montage_with_reference(); }

SynthConfig preset_synth_single() {
  SynthConfig cfg;
  cfg.subjects = {{"S01", 100, 1.0, 0.3, 1.0}};
  cfg.seed = 42;
  return cfg;
}

SynthConfig preset_synth_multi() {
  SynthConfig cfg;
  cfg.subjects = {{"S01", 20, 1.0, 0.4, 1.0},
                  {"S02", 20, 0.85, 1.5, 1.15},
                  {"S03", 20, 1.15, 2.6, 0.9}};
  cfg.seed = 1234;
  return cfg;
}

SynthConfig preset_synth_unseen() {
  SynthConfig cfg;
  cfg.subjects = {{"S01", 100, 1.0, 0.4, 1.0},
                  {"S02", 20, 0.9, 1.4, 1.1},
                  {"S03", 20, 1.1, 2.5, 0.95},
                  {"S04", 20, 0.95, 3.4, 1.05}};
  cfg.seed = 2025;
  return cfg;
}

}  // namespace harness
}  // namespace ssvep
