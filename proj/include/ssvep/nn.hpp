#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ssvep/rng.hpp"
#include "ssvep/tensor.hpp"

namespace ssvep {
namespace nn {

enum class Mode { Train, Eval };

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool decay{false};  // counted by the L2 penalty
};

// Serializable layer description used by model checkpoints.
struct LayerSpec {
  std::string type;
  std::map<std::string, double> attrs;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void init(CounterRng& rng) { (void)rng; }
  virtual std::vector<Param*> params() { return {}; }
  virtual std::vector<std::pair<std::string, Tensor*>> buffers() { return {}; }
  virtual LayerSpec spec() const = 0;
};

// Valid cross-correlation over the time axis: [B, C_in, L] -> [B, F, L_out]
// with L_out = (L - k)/stride + 1.
class Conv1d : public Layer {
 public:
  Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void init(CounterRng& rng) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  LayerSpec spec() const override;

  static std::size_t out_length(std::size_t length, std::size_t kernel,
                                std::size_t stride);

 private:
  std::size_t in_c_, out_c_, kernel_, stride_;
  Param weight_;  // [out, in, k]
  Param bias_;    // [out]
  Tensor cached_input_;
};

// Per-channel normalization over batch x time with learned scale and shift.
class BatchNorm1d : public Layer {
 public:
  explicit BatchNorm1d(std::size_t channels, double eps = 1e-5,
                       double momentum = 0.1);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&gamma_, &beta_}; }
  std::vector<std::pair<std::string, Tensor*>> buffers() override;
  LayerSpec spec() const override;
  bool has_statistics() const { return stats_seen_.data[0] > 0.0; }

 private:
  std::size_t channels_;
  double eps_, momentum_;
  Param gamma_, beta_;
  Tensor running_mean_, running_var_;
  Tensor stats_seen_;  // [1], > 0 once train-mode statistics exist
  Tensor cached_xhat_, cached_centered_;
  std::vector<double> cached_invstd_;
};

class Relu : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  LayerSpec spec() const override { return {"relu", {}}; }

 private:
  Tensor cached_input_;
};

// Non-overlapping window maxima; gradient routes to the first argmax.
class MaxPool1d : public Layer {
 public:
  explicit MaxPool1d(std::size_t window);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  LayerSpec spec() const override { return {"maxpool1d", {{"window", double(window_)}}}; }

 private:
  std::size_t window_;
  std::vector<std::size_t> cached_argmax_;
  std::vector<std::size_t> cached_shape_;
};

// Inverted dropout: train mode zeroes with probability p and scales survivors
// by 1/(1-p); eval mode is the identity.
class Dropout : public Layer {
 public:
  explicit Dropout(double p);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  LayerSpec spec() const override { return {"dropout", {{"p", p_}}}; }
  void seed_stream(std::uint64_t seed, std::uint64_t stream);
  void freeze_mask(bool frozen) { frozen_ = frozen; mask_valid_ = false; }

 private:
  double p_;
  CounterRng rng_;
  bool frozen_{false};
  bool mask_valid_{false};
  Tensor mask_;
};

class Flatten : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  LayerSpec spec() const override { return {"flatten", {}}; }

 private:
  std::vector<std::size_t> cached_shape_;
};

class Dense : public Layer {
 public:
  Dense(std::size_t in_features, std::size_t out_features);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void init(CounterRng& rng) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  LayerSpec spec() const override;

 private:
  std::size_t in_f_, out_f_;
  Param weight_;  // [out, in]
  Param bias_;
  Tensor cached_input_;
};

enum class CellKind { Vanilla, Lstm, Gru };

// Recurrent cell consuming [B, C, T] one time-step vector at a time from a
// zero initial state; emits the final hidden state [B, H]. Gradients flow
// back through time across every step.
class RecurrentCell : public Layer {
 public:
  RecurrentCell(CellKind kind, std::size_t in_channels, std::size_t hidden);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void init(CounterRng& rng) override;
  std::vector<Param*> params() override;
  LayerSpec spec() const override;

 private:
  Tensor forward_vanilla(const Tensor& x, bool keep);
  Tensor forward_lstm(const Tensor& x, bool keep);
  Tensor forward_gru(const Tensor& x, bool keep);
  Tensor backward_vanilla(const Tensor& g);
  Tensor backward_lstm(const Tensor& g);
  Tensor backward_gru(const Tensor& g);

  CellKind kind_;
  std::size_t in_c_, hidden_;
  Param w_input_, w_hidden_, bias_, bias_hidden_;
  Tensor cached_input_;
  std::vector<Tensor> hs_, cs_, gates_, hn_lin_;  // per-step activations
};

// Numerically safe row-wise softmax; rows sum to 1.
Tensor softmax(const Tensor& logits);

// Mean categorical cross-entropy over the batch; probabilities are clamped
// to [1e-12, 1 - 1e-12] before the logarithm.
double cce_loss(const Tensor& probs, const Tensor& onehot);

// lambda * sum of squared weights over decay-flagged parameters.
double l2_penalty(const std::vector<Param*>& params, double lambda);

struct AdamState {
  std::size_t step{0};
  double lr{1e-3};
  double beta1{0.9};
  double beta2{0.999};
  double eps{1e-8};
  std::vector<Tensor> m, v;

  void attach(const std::vector<Param*>& params);
};

// Bias-corrected Adam update applied to every parameter in place.
void adam_step(AdamState& state, const std::vector<Param*>& params);

// Sequential stack with a softmax/cross-entropy head.
class Network {
 public:
  void add(std::unique_ptr<Layer> layer);
  std::size_t layer_count() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }

  // Deterministic parameter init plus per-dropout-layer rng streams.
  void initialize(std::uint64_t seed);
  Tensor forward(const Tensor& x, Mode mode);
  // Forward, softmax, CCE + L2; fills every parameter gradient (including the
  // 2*lambda*w term). Returns (objective value, probabilities).
  std::pair<double, Tensor> loss_and_gradients(const Tensor& x, const Tensor& onehot,
                                               double lambda_l2,
                                               Mode mode = Mode::Train);
  std::vector<Param*> params();
  std::vector<std::pair<std::string, Tensor*>> buffers();
  std::vector<LayerSpec> layer_specs() const;
  // Frozen dropout masks so repeated forwards see identical randomness.
  void set_train_deterministic(bool on);

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Central-difference check of every parameter gradient of the full objective
// (CCE + L2) on a probe batch; returns the maximum relative error.
double grad_check(Network& net, const Tensor& x, const Tensor& onehot,
                  double lambda_l2 = 1e-2, double epsilon = 1e-5);

Tensor one_hot(const std::vector<int>& labels, std::size_t n_classes);

}  // namespace nn
}  // namespace ssvep
