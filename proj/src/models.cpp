#include "ssvep/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "ssvep/errors.hpp"
#include "ssvep/rng.hpp"

namespace ssvep {
namespace models {

namespace {

void validate_spec(const ScuSpec& spec) {
  if (spec.n_scu_blocks < 1)
    throw ConfigError("scu: need at least one block");
  if (spec.n_scu_blocks > kMaxScuBlocks)
    throw ConfigError("scu: at most " + std::to_string(kMaxScuBlocks) +
                      " blocks are supported, got " + std::to_string(spec.n_scu_blocks));
  if (spec.filters == 0 || spec.n_classes < 2 || spec.in_channels == 0)
    throw ConfigError("scu: degenerate layer sizes");
  if (spec.dropout_p < 0.0 || spec.dropout_p >= 1.0)
    throw ConfigError("scu: dropout_p must lie in [0, 1)");
}

}  // namespace

std::vector<std::size_t> scu_length_trace(const ScuSpec& spec) {
  validate_spec(spec);
  std::vector<std::size_t> trace{spec.in_length};
  std::size_t len = spec.in_length;
  for (std::size_t b = 1; b <= spec.n_scu_blocks; ++b) {
    std::size_t kernel = b == 1 ? spec.first_kernel : spec.later_kernel;
    std::size_t stride = b == 1 ? spec.first_stride : spec.later_stride;
    std::size_t pool = b == 1 ? spec.first_pool : spec.later_pool;
    if (len < kernel)
      throw ConfigError("scu block " + std::to_string(b) + ": length " +
                        std::to_string(len) + " underflows kernel " +
                        std::to_string(kernel));
    len = (len - kernel) / stride + 1;
    if (len < pool)
      throw ConfigError("scu block " + std::to_string(b) + ": length " +
                        std::to_string(len) + " underflows pool window " +
                        std::to_string(pool));
    len /= pool;
    trace.push_back(len);
  }
  return trace;
}

namespace {

nn::Network build_scu_network(const ScuSpec& spec) {
  std::vector<std::size_t> trace = scu_length_trace(spec);
  nn::Network net;
  std::size_t in_c = spec.in_channels;
  for (std::size_t b = 1; b <= spec.n_scu_blocks; ++b) {
    std::size_t kernel = b == 1 ? spec.first_kernel : spec.later_kernel;
    std::size_t stride = b == 1 ? spec.first_stride : spec.later_stride;
    std::size_t pool = b == 1 ? spec.first_pool : spec.later_pool;
    net.add(std::make_unique<nn::Conv1d>(in_c, spec.filters, kernel, stride));
    net.add(std::make_unique<nn::BatchNorm1d>(spec.filters));
    net.add(std::make_unique<nn::Relu>());
    net.add(std::make_unique<nn::MaxPool1d>(pool));
    in_c = spec.filters;
  }
  net.add(std::make_unique<nn::Flatten>());
  net.add(std::make_unique<nn::Dropout>(spec.dropout_p));
  net.add(std::make_unique<nn::Dense>(spec.filters * trace.back(), spec.n_classes));
  return net;
}

}  // namespace

nn::Network build_scu_cnn(const ScuSpec& spec) {
  if (spec.n_scu_blocks != 1)
    throw ConfigError("build_scu_cnn: the single-unit model has exactly one block");
  return build_scu_network(spec);
}

nn::Network build_deep_scu_cnn(const ScuSpec& spec) { return build_scu_network(spec); }

nn::Network build_recurrent(nn::CellKind kind, std::size_t hidden,
                            std::size_t in_channels, std::size_t n_classes,
                            double dropout_p) {
  if (hidden == 0) throw ConfigError("build_recurrent: hidden size must be positive");
  nn::Network net;
  net.add(std::make_unique<nn::RecurrentCell>(kind, in_channels, hidden));
  net.add(std::make_unique<nn::Dropout>(dropout_p));
  net.add(std::make_unique<nn::Dense>(hidden, n_classes));
  return net;
}

TrainResult train(nn::Network& net, const nn::Tensor& inputs,
                  const std::vector<int>& labels, const TrainConfig& cfg) {
  if (cfg.epochs < 1 || cfg.batch_size < 1)
    throw ConfigError("train: epochs and batch_size must be >= 1");
  if (inputs.rank() != 3 || inputs.dim(0) == 0)
    throw ConfigError("train: expected a nonempty [n, channels, length] input");
  if (inputs.dim(0) != labels.size())
    throw ConfigError("train: input/label count mismatch");

  const std::size_t n = inputs.dim(0);
  const std::size_t channels = inputs.dim(1), length = inputs.dim(2);
  std::size_t n_classes = 0;
  for (int y : labels) {
    if (y < 0) throw ConfigError("train: negative label");
    n_classes = std::max(n_classes, std::size_t(y) + 1);
  }

  net.initialize(cfg.seed);
  std::vector<nn::Param*> params = net.params();
  nn::AdamState adam;
  adam.lr = cfg.lr;
  adam.attach(params);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  CounterRng shuffle_rng = CounterRng::derive(cfg.seed, 0x5u, 0x4855u);

  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle)
      for (std::size_t i = n; i-- > 1;)
        std::swap(order[i], order[shuffle_rng.below(i + 1)]);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t bs = std::min(cfg.batch_size, n - start);
      nn::Tensor xb({bs, channels, length});
      std::vector<int> yb(bs);
      for (std::size_t i = 0; i < bs; ++i) {
        const std::size_t src = order[start + i];
        std::memcpy(&xb.at3(i, 0, 0), &inputs.data[src * channels * length],
                    channels * length * sizeof(double));
        yb[i] = labels[src];
      }
      double loss;
      try {
        loss = net.loss_and_gradients(xb, nn::one_hot(yb, n_classes), cfg.lambda_l2).first;
      } catch (const NumericalError& e) {
        throw NumericalError("train: epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(start / cfg.batch_size) + ": " + e.what());
      }
      if (!std::isfinite(loss))
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(start / cfg.batch_size));
      adam_step(adam, params);
      loss_sum += loss * double(bs);
    }
    result.epoch_loss.push_back(loss_sum / double(n));
  }
  return result;
}

std::pair<std::vector<int>, nn::Tensor> predict(nn::Network& net,
                                                const nn::Tensor& inputs) {
  nn::Tensor probs = nn::softmax(net.forward(inputs, nn::Mode::Eval));
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (probs.at2(i, j) > probs.at2(i, best)) best = j;
    labels[i] = int(best);
  }
  return {labels, probs};
}

nn::Tensor trials_to_tensor(const Dataset& ds, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ConfigError("trials_to_tensor: empty selection");
  const std::size_t channels = ds.montage.data_channels();
  const std::size_t length = ds.trials.at(indices[0]).samples.cols;
  nn::Tensor out({indices.size(), channels, length});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Trial& t = ds.trials.at(indices[i]);
    if (t.samples.cols != length)
      throw DataError("trials_to_tensor: inconsistent trial lengths");
    for (std::size_t c = 0; c < channels; ++c)
      std::memcpy(&out.at3(i, c, 0), t.samples.row(c), length * sizeof(double));
  }
  return out;
}

nn::Tensor trials_to_tensor(const Dataset& ds) {
  std::vector<std::size_t> all(ds.trials.size());
  std::iota(all.begin(), all.end(), 0);
  return trials_to_tensor(ds, all);
}

namespace {

constexpr char kCheckpointMagic[8] = {'S', 'C', 'U', 'N', 'E', 'T', '0', '1'};

void write_u32_le(std::ofstream& out, std::uint32_t v) {
  char buf[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                 char((v >> 24) & 0xff)};
  out.write(buf, 4);
}

void write_f64_le(std::ofstream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = char((bits >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

std::uint32_t read_u32_le(std::istream& in) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  return std::uint32_t(buf[0]) | (std::uint32_t(buf[1]) << 8) |
         (std::uint32_t(buf[2]) << 16) | (std::uint32_t(buf[3]) << 24);
}

double read_f64_le(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t(buf[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::unique_ptr<nn::Layer> layer_from_spec(const nn::LayerSpec& spec) {
  auto attr = [&](const char* key) {
    auto it = spec.attrs.find(key);
    if (it == spec.attrs.end())
      throw DataError("checkpoint: layer '" + spec.type + "' missing attribute '" +
                      key + "'");
    return it->second;
  };
  if (spec.type == "conv1d")
    return std::make_unique<nn::Conv1d>(std::size_t(attr("in")), std::size_t(attr("out")),
                                        std::size_t(attr("kernel")),
                                        std::size_t(attr("stride")));
  if (spec.type == "batchnorm1d")
    return std::make_unique<nn::BatchNorm1d>(std::size_t(attr("channels")), attr("eps"),
                                             attr("momentum"));
  if (spec.type == "relu") return std::make_unique<nn::Relu>();
  if (spec.type == "maxpool1d")
    return std::make_unique<nn::MaxPool1d>(std::size_t(attr("window")));
  if (spec.type == "dropout") return std::make_unique<nn::Dropout>(attr("p"));
  if (spec.type == "flatten") return std::make_unique<nn::Flatten>();
  if (spec.type == "dense")
    return std::make_unique<nn::Dense>(std::size_t(attr("in")), std::size_t(attr("out")));
  if (spec.type == "recurrent")
    return std::make_unique<nn::RecurrentCell>(nn::CellKind(int(attr("kind"))),
                                               std::size_t(attr("in")),
                                               std::size_t(attr("hidden")));
  throw DataError("checkpoint: unknown layer type '" + spec.type + "'");
}

}  // namespace

void save_checkpoint(nn::Network& net, const std::filesystem::path& path) {
  nlohmann::json arch = nlohmann::json::array();
  for (const nn::LayerSpec& spec : net.layer_specs()) {
    nlohmann::json entry;
    entry["type"] = spec.type;
    for (const auto& [k, v] : spec.attrs) entry["attrs"][k] = v;
    arch.push_back(entry);
  }
  std::string descriptor = arch.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("save_checkpoint: cannot open " + path.string());
  out.write(kCheckpointMagic, 8);
  write_u32_le(out, std::uint32_t(descriptor.size()));
  out.write(descriptor.data(), std::streamsize(descriptor.size()));
  for (nn::Param* p : net.params())
    for (double v : p->value.data) write_f64_le(out, v);
  for (auto& [name, tensor] : net.buffers())
    for (double v : tensor->data) write_f64_le(out, v);
  if (!out) throw DataError("save_checkpoint: I/O failure on " + path.string());
}

nn::Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw DataError("load_checkpoint: magic mismatch in " + path.string());

  std::uint32_t desc_len = read_u32_le(in);
  std::string descriptor(desc_len, '\0');
  in.read(descriptor.data(), desc_len);
  if (!in) throw DataError("load_checkpoint: truncated descriptor");

  nlohmann::json arch;
  try {
    arch = nlohmann::json::parse(descriptor);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("load_checkpoint: descriptor parse failure: ") + e.what());
  }

  nn::Network net;
  for (const auto& entry : arch) {
    nn::LayerSpec spec;
    spec.type = entry.at("type").get<std::string>();
    if (entry.contains("attrs"))
      for (auto it = entry["attrs"].begin(); it != entry["attrs"].end(); ++it)
        spec.attrs[it.key()] = it.value().get<double>();
    net.add(layer_from_spec(spec));
  }

  for (nn::Param* p : net.params())
    for (double& v : p->value.data) v = read_f64_le(in);
  for (auto& [name, tensor] : net.buffers())
    for (double& v : tensor->data) v = read_f64_le(in);
  if (!in) throw DataError("load_checkpoint: truncated parameter payload");
  return net;
}

}  // namespace models
}  // namespace ssvep
