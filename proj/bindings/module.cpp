#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ssvep/classic.hpp"
#include "ssvep/dataio.hpp"
#include "ssvep/dsp.hpp"
#include "ssvep/errors.hpp"
#include "ssvep/harness.hpp"
#include "ssvep/models.hpp"
#include "ssvep/spd.hpp"

namespace py = pybind11;
using namespace ssvep;

namespace {

Matrix matrix_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw ConfigError("expected a 2D array");
  Matrix m(std::size_t(a.shape(0)), std::size_t(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.data.begin());
  return m;
}

py::array_t<double> array_from_matrix(const Matrix& m) {
  py::array_t<double> out({m.rows, m.cols});
  std::copy(m.data.begin(), m.data.end(), out.mutable_data());
  return out;
}

nn::Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 3) throw ConfigError("expected a [n, channels, time] array");
  nn::Tensor t({std::size_t(a.shape(0)), std::size_t(a.shape(1)), std::size_t(a.shape(2))});
  std::copy(a.data(), a.data() + a.size(), t.data.begin());
  return t;
}

py::dict report_to_dict(const harness::ExperimentReport& r) {
  py::dict d;
  d["design"] = r.design;
  d["method"] = r.method;
  d["preprocessed"] = r.preprocessed;
  d["subject"] = r.subject;
  d["folds"] = r.per_fold_accuracy;
  d["mean"] = r.mean;
  d["std"] = r.stddev;
  d["fingerprint"] = r.config_fingerprint;
  const std::size_t k = r.confusion.n_classes;
  py::array_t<std::size_t> confusion({k, k});
  std::copy(r.confusion.counts.begin(), r.confusion.counts.end(),
            confusion.mutable_data());
  d["confusion"] = confusion;
  return d;
}

// Thin training facade for the convolutional stacks.
class ScuClassifier {
 public:
  ScuClassifier(std::size_t n_blocks, std::size_t filters, double dropout_p)
      : n_blocks_(n_blocks), filters_(filters), dropout_p_(dropout_p) {}

  std::vector<double> fit(const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
                          const std::vector<int>& labels, std::size_t epochs,
                          std::size_t batch_size, double lr, double lambda_l2,
                          std::uint64_t seed) {
    nn::Tensor inputs = tensor_from_array(x);
    models::ScuSpec spec;
    spec.n_scu_blocks = n_blocks_;
    spec.filters = filters_;
    spec.dropout_p = dropout_p_;
    spec.in_channels = inputs.dim(1);
    spec.in_length = inputs.dim(2);
    std::size_t n_classes = 0;
    for (int y : labels) n_classes = std::max(n_classes, std::size_t(y) + 1);
    spec.n_classes = std::max<std::size_t>(n_classes, 2);
    net_ = models::build_deep_scu_cnn(spec);

    models::TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.lr = lr;
    cfg.lambda_l2 = lambda_l2;
    cfg.seed = seed;
    return models::train(net_, inputs, labels, cfg).epoch_loss;
  }

  std::vector<int> predict(const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
    return models::predict(net_, tensor_from_array(x)).first;
  }

  py::array_t<double> predict_proba(
      const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
    nn::Tensor probs = models::predict(net_, tensor_from_array(x)).second;
    py::array_t<double> out({probs.dim(0), probs.dim(1)});
    std::copy(probs.data.begin(), probs.data.end(), out.mutable_data());
    return out;
  }

  void save(const std::filesystem::path& path) { models::save_checkpoint(net_, path); }
  void load(const std::filesystem::path& path) { net_ = models::load_checkpoint(path); }

 private:
  std::size_t n_blocks_, filters_;
  double dropout_p_;
  nn::Network net_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "SSVEP classification workbench core";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<DataError>(m, "DataError");
  py::register_exception<NumericalError>(m, "NumericalError");

  py::class_<Montage>(m, "Montage")
      .def(py::init<>())
      .def_readwrite("channel_names", &Montage::channel_names)
      .def_readwrite("sample_rate_hz", &Montage::sample_rate_hz)
      .def_readwrite("reference_name", &Montage::reference_name)
      .def("data_channels", &Montage::data_channels)
      .def("total_channels", &Montage::total_channels);
  m.def("default_montage", &default_montage);
  m.def("default_montage_with_reference", &default_montage_with_reference);

  py::class_<Trial>(m, "Trial")
      .def(py::init<>())
      .def_readwrite("subject_id", &Trial::subject_id)
      .def_readwrite("label", &Trial::label)
      .def_readwrite("sample_rate_hz", &Trial::sample_rate_hz)
      .def_property(
          "samples", [](const Trial& t) { return array_from_matrix(t.samples); },
          [](Trial& t, const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
            t.samples = matrix_from_array(a);
          });

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<>())
      .def_readwrite("montage", &Dataset::montage)
      .def_readwrite("trials", &Dataset::trials)
      .def("subject_ids", &Dataset::subject_ids)
      .def("__len__", [](const Dataset& d) { return d.trials.size(); });

  py::class_<SubjectSynth>(m, "SubjectSynth")
      .def(py::init<>())
      .def_readwrite("id", &SubjectSynth::id)
      .def_readwrite("trials_per_class", &SubjectSynth::trials_per_class)
      .def_readwrite("gain", &SubjectSynth::gain)
      .def_readwrite("phase_offset_rad", &SubjectSynth::phase_offset_rad)
      .def_readwrite("noise_sigma", &SubjectSynth::noise_sigma);

  py::class_<SynthConfig>(m, "SynthConfig")
      .def(py::init<>())
      .def_readwrite("subjects", &SynthConfig::subjects)
      .def_readwrite("class_freqs_hz", &SynthConfig::class_freqs_hz)
      .def_readwrite("harmonics", &SynthConfig::harmonics)
      .def_readwrite("harmonic_decay", &SynthConfig::harmonic_decay)
      .def_readwrite("line_noise_amp", &SynthConfig::line_noise_amp)
      .def_readwrite("pink_noise_amp", &SynthConfig::pink_noise_amp)
      .def_readwrite("alpha_burst_amp", &SynthConfig::alpha_burst_amp)
      .def_readwrite("seed", &SynthConfig::seed);

  m.def("synth_dataset", &synth_dataset, py::arg("cfg"), py::arg("montage"));
  m.def("write_archive", &write_archive, py::arg("dataset"), py::arg("path"));
  m.def("read_archive", &read_archive, py::arg("path"));

  py::class_<dsp::PreprocessConfig>(m, "PreprocessConfig")
      .def(py::init<>())
      .def_readwrite("notch_hz", &dsp::PreprocessConfig::notch_hz)
      .def_readwrite("notch_q", &dsp::PreprocessConfig::notch_q)
      .def_readwrite("band_lo_hz", &dsp::PreprocessConfig::band_lo_hz)
      .def_readwrite("band_hi_hz", &dsp::PreprocessConfig::band_hi_hz)
      .def_readwrite("band_order", &dsp::PreprocessConfig::band_order);
  m.def("preprocess_dataset", &dsp::preprocess_dataset, py::arg("dataset"),
        py::arg("cfg") = dsp::PreprocessConfig{});

  m.def(
      "sym_eig",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
        riem::EigenDecomposition eig = riem::sym_eig(matrix_from_array(a));
        return py::make_tuple(eig.eigenvalues, array_from_matrix(eig.eigenvectors));
      },
      py::arg("a"));
  m.def(
      "sample_covariance",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
         double shrinkage) {
        return array_from_matrix(riem::sample_covariance(matrix_from_array(x), shrinkage).values);
      },
      py::arg("x"), py::arg("shrinkage") = 1e-3);
  m.def(
      "riemann_distance",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
        return riem::riemann_distance(riem::SpdMatrix{matrix_from_array(a)},
                                      riem::SpdMatrix{matrix_from_array(b)});
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "geometric_mean",
      [](const std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>& ms) {
        std::vector<riem::SpdMatrix> spd;
        for (const auto& a : ms) spd.push_back(riem::SpdMatrix{matrix_from_array(a)});
        return array_from_matrix(riem::geometric_mean(spd).values);
      },
      py::arg("matrices"));
  m.def(
      "tangent_map",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& c,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& reference) {
        return riem::tangent_map(riem::SpdMatrix{matrix_from_array(c)},
                                 riem::SpdMatrix{matrix_from_array(reference)})
            .coords;
      },
      py::arg("c"), py::arg("reference"));

  m.def(
      "kfold_assignments",
      [](const std::vector<int>& labels, std::size_t k, std::uint64_t seed) {
        return harness::kfold_split_indices(labels, k, seed).assignments;
      },
      py::arg("labels"), py::arg("k"), py::arg("seed") = 0);

  py::class_<harness::HarnessConfig>(m, "HarnessConfig")
      .def(py::init<>())
      .def_readwrite("k_folds", &harness::HarnessConfig::k_folds)
      .def_readwrite("seed", &harness::HarnessConfig::seed)
      .def_readwrite("preprocess", &harness::HarnessConfig::preprocess)
      .def_readwrite("svm_c", &harness::HarnessConfig::svm_c)
      .def_readwrite("svm_gamma", &harness::HarnessConfig::svm_gamma)
      .def_readwrite("shrinkage", &harness::HarnessConfig::shrinkage)
      .def_readwrite("rnn_hidden", &harness::HarnessConfig::rnn_hidden)
      .def_readwrite("holdout_subject", &harness::HarnessConfig::holdout_subject)
      .def_readwrite("threads", &harness::HarnessConfig::threads)
      .def_property(
          "epochs", [](const harness::HarnessConfig& c) { return c.train.epochs; },
          [](harness::HarnessConfig& c, std::size_t v) { c.train.epochs = v; })
      .def_property(
          "batch_size", [](const harness::HarnessConfig& c) { return c.train.batch_size; },
          [](harness::HarnessConfig& c, std::size_t v) { c.train.batch_size = v; })
      .def_property(
          "lr", [](const harness::HarnessConfig& c) { return c.train.lr; },
          [](harness::HarnessConfig& c, double v) { c.train.lr = v; })
      .def_property(
          "lambda_l2", [](const harness::HarnessConfig& c) { return c.train.lambda_l2; },
          [](harness::HarnessConfig& c, double v) { c.train.lambda_l2 = v; });

  m.def(
      "run_experiment",
      [](const std::string& design, const Dataset& ds, const std::string& method,
         const harness::HarnessConfig& cfg) {
        harness::ExperimentResult result = harness::run_experiment(
            harness::parse_design(design), ds, harness::parse_method(method), cfg);
        py::list out;
        for (const auto& r : result.reports) out.append(report_to_dict(r));
        if (result.subject_mean) out.append(report_to_dict(*result.subject_mean));
        return out;
      },
      py::arg("design"), py::arg("dataset"), py::arg("method"), py::arg("cfg"));

  m.def("preset_synth_single", &harness::preset_synth_single);
  m.def("preset_synth_multi", &harness::preset_synth_multi);
  m.def("preset_synth_unseen", &harness::preset_synth_unseen);
  m.def("preset_montage", &harness::preset_montage);

  py::class_<ScuClassifier>(m, "ScuClassifier")
      .def(py::init<std::size_t, std::size_t, double>(), py::arg("n_blocks") = 1,
           py::arg("filters") = 16, py::arg("dropout_p") = 0.5)
      .def("fit", &ScuClassifier::fit, py::arg("x"), py::arg("labels"),
           py::arg("epochs") = 100, py::arg("batch_size") = 32, py::arg("lr") = 1e-3,
           py::arg("lambda_l2") = models::kL2Default, py::arg("seed") = 0)
      .def("predict", &ScuClassifier::predict, py::arg("x"))
      .def("predict_proba", &ScuClassifier::predict_proba, py::arg("x"))
      .def("save", &ScuClassifier::save, py::arg("path"))
      .def("load", &ScuClassifier::load, py::arg("path"));
}
