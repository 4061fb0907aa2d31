// Command-line front end: synthetic data generation, preprocessing, feature
// export, model training, cross-validated experiments and report rendering.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "ssvep/classic.hpp"
#include "ssvep/dataio.hpp"
#include "ssvep/dsp.hpp"
#include "ssvep/errors.hpp"
#include "ssvep/harness.hpp"
#include "ssvep/models.hpp"
#include "ssvep/spd.hpp"

namespace fs = std::filesystem;
using namespace ssvep;

namespace {

struct SharedOpts {
  std::uint64_t seed{0};
  std::size_t threads{1};
  std::string format{"text"};
};

std::map<std::string, std::string> parse_kv_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (!key.empty()) kv[key] = value;
  }
  return kv;
}

models::TrainConfig train_config_from_file(const fs::path& path, std::uint64_t seed) {
  models::TrainConfig cfg;
  cfg.seed = seed;
  if (path.empty()) return cfg;
  for (const auto& [key, value] : parse_kv_file(path)) {
    try {
      if (key == "epochs")
        cfg.epochs = std::stoul(value);
      else if (key == "batch" || key == "batch_size")
        cfg.batch_size = std::stoul(value);
      else if (key == "lr")
        cfg.lr = std::stod(value);
      else if (key == "l2" || key == "lambda_l2")
        cfg.lambda_l2 = std::stod(value);
      else if (key == "l2_preset")
        cfg.lambda_l2 = value == "grid" ? models::kL2GridAlternative : models::kL2Default;
      else if (key == "seed")
        cfg.seed = std::stoull(value);
      else if (key == "shuffle")
        cfg.shuffle = value == "true" || value == "1" || value == "on";
      else if (key == "dropout" || key == "filters" || key == "hidden") {
        // consumed by the architecture block below via the same file
      } else
        throw ConfigError("config: unknown key '" + key + "'");
    } catch (const std::logic_error&) {
      throw ConfigError("config: malformed value for '" + key + "'");
    }
  }
  return cfg;
}

void write_or_print(const std::string& content, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw DataError("cannot open output file " + out_path);
  out << content;
}

std::string report_extension(harness::ReportFormat f) {
  switch (f) {
    case harness::ReportFormat::Text:
      return ".txt";
    case harness::ReportFormat::Csv:
      return ".csv";
    case harness::ReportFormat::Svg:
      return ".svg";
  }
  return ".txt";
}

int run(int argc, char** argv) {
  CLI::App app{"SSVEP signal classification workbench"};
  app.require_subcommand(1);

  SharedOpts shared;
  app.add_option("--seed", shared.seed, "Global RNG seed")->capture_default_str();
  app.add_option("--threads", shared.threads, "Worker threads for fold evaluation")
      ->capture_default_str();
  app.add_option("--format", shared.format, "Report format: text|csv|svg")
      ->capture_default_str();

  // gen -----------------------------------------------------------------
  auto* gen = app.add_subcommand("gen", "Generate a synthetic SSVEP archive");
  std::string gen_out, gen_preset;
  std::size_t gen_subjects = 1, gen_trials = 100;
  double gen_gain = 1.0, gen_noise = 1.0, gen_line = 2.0, gen_pink = 1.0,
         gen_alpha = 0.5, gen_decay = 0.5;
  std::size_t gen_harmonics = 3;
  bool gen_with_ref = false;
  gen->add_option("--out", gen_out, "Output archive directory")->required();
  gen->add_option("--preset", gen_preset, "Pinned corpus: single|multi|unseen");
  gen->add_option("--subjects", gen_subjects, "Subject count")->capture_default_str();
  gen->add_option("--trials-per-class", gen_trials, "Trials per class per subject")
      ->capture_default_str();
  gen->add_option("--gain", gen_gain, "Stimulus response gain")->capture_default_str();
  gen->add_option("--noise", gen_noise, "White sensor noise sigma")->capture_default_str();
  gen->add_option("--line", gen_line, "50 Hz line amplitude")->capture_default_str();
  gen->add_option("--pink", gen_pink, "Pink noise amplitude")->capture_default_str();
  gen->add_option("--alpha", gen_alpha, "Alpha burst amplitude")->capture_default_str();
  gen->add_option("--harmonics", gen_harmonics, "Harmonic count")->capture_default_str();
  gen->add_option("--decay", gen_decay, "Harmonic amplitude decay")->capture_default_str();
  gen->add_flag("--with-ref", gen_with_ref, "Store the Fz reference row");

  // preprocess ------------------------------------------------------------
  auto* pre = app.add_subcommand("preprocess", "Apply the baseline filter chain");
  std::string pre_in, pre_out, pre_band = "9:100";
  dsp::PreprocessConfig pre_cfg;
  pre->add_option("--in", pre_in, "Input archive")->required();
  pre->add_option("--out", pre_out, "Output archive")->required();
  pre->add_option("--notch-hz", pre_cfg.notch_hz, "Notch center (Hz)")->capture_default_str();
  pre->add_option("--notch-q", pre_cfg.notch_q, "Notch quality factor")->capture_default_str();
  pre->add_option("--band", pre_band, "Bandpass edges lo:hi (Hz)")->capture_default_str();
  pre->add_option("--order", pre_cfg.band_order, "Bandpass order (even)")->capture_default_str();

  // features ----------------------------------------------------------------
  auto* feat = app.add_subcommand("features", "Export tangent-space features");
  std::string feat_in, feat_out;
  double feat_shrinkage = 1e-3;
  feat->add_option("--in", feat_in, "Input archive")->required();
  feat->add_option("--out", feat_out, "Output text table");
  feat->add_option("--shrinkage", feat_shrinkage, "Covariance shrinkage")
      ->capture_default_str();

  // train ---------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "Train a network on an archive");
  std::string train_arch = "scu", train_in, train_cfg_path, train_out;
  train_cmd->add_option("--arch", train_arch, "scu|deep-scu:N|rnn|lstm|gru")
      ->capture_default_str();
  train_cmd->add_option("--in", train_in, "Training archive")->required();
  train_cmd->add_option("--cfg", train_cfg_path, "Key-value training config file");
  train_cmd->add_option("--out", train_out, "Checkpoint path")->required();

  // xval ------------------------------------------------------------------
  auto* xval = app.add_subcommand("xval", "Cross-validated experiment");
  std::string xval_design = "single", xval_method = "cnn", xval_pre = "off",
              xval_in, xval_out, xval_holdout;
  harness::HarnessConfig xval_cfg;
  xval->add_option("--design", xval_design, "single|per-subject|pooled|unseen")
      ->capture_default_str();
  xval->add_option("--method", xval_method,
                   "cnn|deep-scu:N|rnn|lstm|gru|svm-linear|svm-gaussian|lda|mdm")
      ->capture_default_str();
  xval->add_option("--pre", xval_pre, "Preprocessing on|off")->capture_default_str();
  xval->add_option("--in", xval_in, "Input archive")->required();
  xval->add_option("--k", xval_cfg.k_folds, "Fold count")->capture_default_str();
  xval->add_option("--holdout", xval_holdout, "Held-out subject (unseen design)");
  xval->add_option("--epochs", xval_cfg.train.epochs, "Training epochs")
      ->capture_default_str();
  xval->add_option("--batch", xval_cfg.train.batch_size, "Mini-batch size")
      ->capture_default_str();
  xval->add_option("--lr", xval_cfg.train.lr, "Learning rate")->capture_default_str();
  xval->add_option("--l2", xval_cfg.train.lambda_l2, "L2 penalty scale")
      ->capture_default_str();
  xval->add_option("--svm-c", xval_cfg.svm_c, "SVM regularization")->capture_default_str();
  xval->add_option("--gamma", xval_cfg.svm_gamma, "Gaussian kernel gamma (<=0 auto)")
      ->capture_default_str();
  xval->add_option("--hidden", xval_cfg.rnn_hidden, "Recurrent hidden size")
      ->capture_default_str();
  xval->add_option("--shrinkage", xval_cfg.shrinkage, "Covariance shrinkage")
      ->capture_default_str();
  xval->add_option("--ridge", xval_cfg.lda_ridge, "LDA ridge (<0 auto)")
      ->capture_default_str();
  xval->add_option("--out", xval_out, "Report file base name (stdout when absent)");

  // eval ------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on an archive");
  std::string eval_ckpt, eval_in, eval_pre = "off", eval_out;
  eval_cmd->add_option("--ckpt", eval_ckpt, "Model checkpoint")->required();
  eval_cmd->add_option("--in", eval_in, "Evaluation archive")->required();
  eval_cmd->add_option("--pre", eval_pre, "Preprocessing on|off")->capture_default_str();
  eval_cmd->add_option("--out", eval_out, "Report file (stdout when absent)");

  // report ----------------------------------------------------------------
  auto* report_cmd = app.add_subcommand("report", "Re-render a saved csv report");
  std::string report_in, report_out;
  report_cmd->add_option("--in", report_in, "Input csv report")->required();
  report_cmd->add_option("--out", report_out, "Output file (stdout when absent)");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    SynthConfig cfg;
    Montage montage;
    if (!gen_preset.empty()) {
      if (gen_preset == "single")
        cfg = harness::preset_synth_single();
      else if (gen_preset == "multi")
        cfg = harness::preset_synth_multi();
      else if (gen_preset == "unseen")
        cfg = harness::preset_synth_unseen();
      else
        throw ConfigError("gen: unknown preset '" + gen_preset + "'");
      montage = harness::preset_montage();
    } else {
      montage = gen_with_ref ? default_montage_with_reference() : default_montage();
      cfg.seed = shared.seed;
      cfg.harmonics = gen_harmonics;
      cfg.harmonic_decay = gen_decay;
      cfg.line_noise_amp = gen_line;
      cfg.pink_noise_amp = gen_pink;
      cfg.alpha_burst_amp = gen_alpha;
      for (std::size_t s = 0; s < gen_subjects; ++s) {
        char id[8];
        std::snprintf(id, sizeof(id), "S%02zu", s + 1);
        cfg.subjects.push_back({id, gen_trials, gen_gain,
                                0.4 + 1.1 * double(s), gen_noise});
      }
    }
    Dataset ds = synth_dataset(cfg, montage);
    write_archive(ds, gen_out);
    std::cout << "wrote " << ds.trials.size() << " trials to " << gen_out << "\n";
    return kExitOk;
  }

  if (pre->parsed()) {
    auto colon = pre_band.find(':');
    if (colon == std::string::npos)
      throw ConfigError("preprocess: --band expects lo:hi");
    try {
      pre_cfg.band_lo_hz = std::stod(pre_band.substr(0, colon));
      pre_cfg.band_hi_hz = std::stod(pre_band.substr(colon + 1));
    } catch (const std::logic_error&) {
      throw ConfigError("preprocess: malformed --band value '" + pre_band + "'");
    }
    Dataset ds = read_archive(pre_in);
    Dataset out = dsp::preprocess_dataset(ds, pre_cfg);
    write_archive(out, pre_out);
    std::cout << "preprocessed " << out.trials.size() << " trials at "
              << out.montage.sample_rate_hz << " Hz to " << pre_out << "\n";
    return kExitOk;
  }

  if (feat->parsed()) {
    Dataset ds = read_archive(feat_in);
    if (ds.trials.empty()) throw DataError("features: empty archive");
    const std::size_t channels = ds.montage.data_channels();
    std::vector<riem::SpdMatrix> covs;
    for (const Trial& t : ds.trials) {
      Matrix x(channels, t.samples.cols);
      for (std::size_t c = 0; c < channels; ++c)
        std::copy(t.samples.row(c), t.samples.row(c) + t.samples.cols, x.row(c));
      covs.push_back(riem::sample_covariance(x, feat_shrinkage));
    }
    riem::SpdMatrix reference = riem::geometric_mean(covs);
    std::ostringstream table;
    table << "# subject label tangent-coordinates (" << channels * (channels + 1) / 2
          << " values, reference = geometric mean over the archive)\n";
    for (std::size_t i = 0; i < ds.trials.size(); ++i) {
      table << ds.trials[i].subject_id << " " << ds.trials[i].label;
      for (double v : riem::tangent_map(covs[i], reference).coords) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), " %.12g", v);
        table << buf;
      }
      table << "\n";
    }
    write_or_print(table.str(), feat_out);
    return kExitOk;
  }

  if (train_cmd->parsed()) {
    Dataset ds = read_archive(train_in);
    models::TrainConfig cfg = train_config_from_file(
        train_cfg_path.empty() ? fs::path() : fs::path(train_cfg_path), shared.seed);

    double dropout = 0.5, hidden = 64, filters = 16;
    if (!train_cfg_path.empty())
      for (const auto& [key, value] : parse_kv_file(train_cfg_path)) {
        if (key == "dropout") dropout = std::stod(value);
        if (key == "hidden") hidden = std::stod(value);
        if (key == "filters") filters = std::stod(value);
      }

    nn::Tensor inputs = models::trials_to_tensor(ds);
    std::vector<int> labels;
    for (const Trial& t : ds.trials) labels.push_back(t.label);

    nn::Network net;
    harness::MethodSpec arch = harness::parse_method(train_arch == "scu" ? "cnn" : train_arch);
    if (arch.method == harness::Method::Cnn || arch.method == harness::Method::DeepScu) {
      models::ScuSpec spec;
      spec.n_scu_blocks = arch.method == harness::Method::Cnn ? 1 : arch.deep_blocks;
      spec.filters = std::size_t(filters);
      spec.dropout_p = dropout;
      spec.in_channels = inputs.dim(1);
      spec.in_length = inputs.dim(2);
      net = models::build_deep_scu_cnn(spec);
    } else {
      nn::CellKind kind = arch.method == harness::Method::Rnn ? nn::CellKind::Vanilla
                          : arch.method == harness::Method::Lstm ? nn::CellKind::Lstm
                                                                 : nn::CellKind::Gru;
      net = models::build_recurrent(kind, std::size_t(hidden), inputs.dim(1));
    }

    models::TrainResult result = models::train(net, inputs, labels, cfg);
    models::save_checkpoint(net, train_out);
    std::cout << "trained " << train_arch << " for " << cfg.epochs
              << " epochs; final loss " << result.epoch_loss.back() << "; saved to "
              << train_out << "\n";
    return kExitOk;
  }

  if (xval->parsed()) {
    if (xval_pre != "on" && xval_pre != "off")
      throw ConfigError("xval: --pre expects on|off");
    xval_cfg.preprocess = xval_pre == "on";
    xval_cfg.seed = shared.seed;
    xval_cfg.train.seed = shared.seed;
    xval_cfg.threads = shared.threads;
    xval_cfg.holdout_subject = xval_holdout;

    Dataset ds = read_archive(xval_in);
    harness::Design design = harness::parse_design(xval_design);
    harness::MethodSpec method = harness::parse_method(xval_method);
    harness::ExperimentResult result = harness::run_experiment(design, ds, method, xval_cfg);
    harness::ReportFormat format = harness::parse_format(shared.format);

    std::vector<const harness::ExperimentReport*> reports;
    for (const auto& r : result.reports) reports.push_back(&r);
    if (result.subject_mean) reports.push_back(&*result.subject_mean);

    for (const harness::ExperimentReport* r : reports) {
      std::string rendered = harness::emit_report(*r, format);
      if (xval_out.empty()) {
        std::cout << rendered;
        if (format == harness::ReportFormat::Text) std::cout << "\n";
      } else {
        std::string suffix = r->subject.empty() ? "" : "-" + r->subject;
        write_or_print(rendered, xval_out + suffix + report_extension(format));
      }
    }
    return kExitOk;
  }

  if (eval_cmd->parsed()) {
    if (eval_pre != "on" && eval_pre != "off")
      throw ConfigError("eval: --pre expects on|off");
    Dataset ds = read_archive(eval_in);
    if (eval_pre == "on") ds = dsp::preprocess_dataset(ds);
    nn::Network net = models::load_checkpoint(eval_ckpt);
    nn::Tensor inputs = models::trials_to_tensor(ds);
    std::vector<int> predicted = models::predict(net, inputs).first;

    harness::ExperimentReport r;
    r.design = "eval";
    r.method = fs::path(eval_ckpt).filename().string();
    r.preprocessed = eval_pre == "on";
    r.confusion = harness::ConfusionMatrix(4);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
      r.confusion.add(ds.trials[i].label, predicted[i]);
      if (ds.trials[i].label == predicted[i]) ++correct;
    }
    r.mean = double(correct) / double(predicted.size());
    r.per_fold_accuracy = {r.mean};
    r.stddev = 0.0;
    r.config_fingerprint = "eval";
    write_or_print(harness::emit_report(r, harness::parse_format(shared.format)), eval_out);
    return kExitOk;
  }

  if (report_cmd->parsed()) {
    std::ifstream in(report_in);
    if (!in) throw DataError("report: cannot open " + report_in);
    std::stringstream buffer;
    buffer << in.rdbuf();
    harness::ExperimentReport r = harness::parse_report_csv(buffer.str());
    write_or_print(harness::emit_report(r, harness::parse_format(shared.format)), report_out);
    return kExitOk;
  }

  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
