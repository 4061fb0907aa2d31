#include "ssvep/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace ssvep {
namespace nn {

namespace {

Param make_param(std::string name, std::vector<std::size_t> shape, bool decay) {
  Param p;
  p.name = std::move(name);
  p.value = Tensor(shape);
  p.grad = Tensor(std::move(shape));
  p.decay = decay;
  return p;
}

void init_fan_in_uniform(Tensor& w, std::size_t fan_in, CounterRng& rng) {
  double bound = std::sqrt(6.0 / double(fan_in));
  for (double& v : w.data) v = rng.uniform(-bound, bound);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

// ---------------------------------------------------------------------------
// Conv1d

Conv1d::Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
               std::size_t stride)
    : in_c_(in_channels),
      out_c_(out_channels),
      kernel_(kernel),
      stride_(stride),
      weight_(make_param("conv.weight", {out_channels, in_channels, kernel}, true)),
      bias_(make_param("conv.bias", {out_channels}, false)) {
  if (kernel == 0 || stride == 0) throw ConfigError("conv1d: kernel and stride must be positive");
}

std::size_t Conv1d::out_length(std::size_t length, std::size_t kernel,
                               std::size_t stride) {
  if (length < kernel)
    throw ConfigError("conv1d: input length " + std::to_string(length) +
                      " shorter than kernel " + std::to_string(kernel));
  return (length - kernel) / stride + 1;
}

void Conv1d::init(CounterRng& rng) {
  init_fan_in_uniform(weight_.value, in_c_ * kernel_, rng);
  bias_.value.fill(0.0);
}

Tensor Conv1d::forward(const Tensor& x, Mode) {
  if (x.rank() != 3 || x.dim(1) != in_c_)
    throw ConfigError("conv1d: expected [batch, " + std::to_string(in_c_) +
                      ", length] input, got " + shape_string(x));
  const std::size_t batch = x.dim(0), length = x.dim(2);
  const std::size_t lo = out_length(length, kernel_, stride_);

  Tensor out({batch, out_c_, lo});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t oc = 0; oc < out_c_; ++oc) {
      double* dst = out.row3(b, oc);
      const double bias = bias_.value.data[oc];
      for (std::size_t t = 0; t < lo; ++t) dst[t] = bias;
      for (std::size_t ic = 0; ic < in_c_; ++ic) {
        const double* src = x.row3(b, ic);
        const double* w = &weight_.value.data[(oc * in_c_ + ic) * kernel_];
        for (std::size_t t = 0; t < lo; ++t) {
          const double* window = src + t * stride_;
          double acc = 0.0;
          for (std::size_t j = 0; j < kernel_; ++j) acc += w[j] * window[j];
          dst[t] += acc;
        }
      }
    }
  }
  cached_input_ = x;
  return out;
}

Tensor Conv1d::backward(const Tensor& g) {
  const Tensor& x = cached_input_;
  const std::size_t batch = x.dim(0), length = x.dim(2), lo = g.dim(2);
  weight_.grad.fill(0.0);
  bias_.grad.fill(0.0);
  Tensor gx({batch, in_c_, length});

  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t oc = 0; oc < out_c_; ++oc) {
      const double* grow = g.row3(b, oc);
      double gb = 0.0;
      for (std::size_t t = 0; t < lo; ++t) gb += grow[t];
      bias_.grad.data[oc] += gb;
      for (std::size_t ic = 0; ic < in_c_; ++ic) {
        const double* src = x.row3(b, ic);
        double* gsrc = gx.row3(b, ic);
        const double* w = &weight_.value.data[(oc * in_c_ + ic) * kernel_];
        double* gw = &weight_.grad.data[(oc * in_c_ + ic) * kernel_];
        for (std::size_t t = 0; t < lo; ++t) {
          const double gt = grow[t];
          if (gt == 0.0) continue;
          const std::size_t base = t * stride_;
          for (std::size_t j = 0; j < kernel_; ++j) {
            gw[j] += gt * src[base + j];
            gsrc[base + j] += gt * w[j];
          }
        }
      }
    }
  }
  return gx;
}

LayerSpec Conv1d::spec() const {
  return {"conv1d",
          {{"in", double(in_c_)},
           {"out", double(out_c_)},
           {"kernel", double(kernel_)},
           {"stride", double(stride_)}}};
}

// ---------------------------------------------------------------------------
// BatchNorm1d

BatchNorm1d::BatchNorm1d(std::size_t channels, double eps, double momentum)
    : channels_(channels),
      eps_(eps),
      momentum_(momentum),
      gamma_(make_param("bn.gamma", {channels}, false)),
      beta_(make_param("bn.beta", {channels}, false)),
      running_mean_({channels}),
      running_var_({channels}),
      stats_seen_({1}) {
  gamma_.value.fill(1.0);
  running_var_.fill(1.0);
}

std::vector<std::pair<std::string, Tensor*>> BatchNorm1d::buffers() {
  return {{"running_mean", &running_mean_},
          {"running_var", &running_var_},
          {"stats_seen", &stats_seen_}};
}

Tensor BatchNorm1d::forward(const Tensor& x, Mode mode) {
  if (x.rank() != 3 || x.dim(1) != channels_)
    throw ConfigError("batchnorm1d: expected [batch, " + std::to_string(channels_) +
                      ", length] input, got " + shape_string(x));
  const std::size_t batch = x.dim(0), length = x.dim(2);
  const std::size_t n = batch * length;
  Tensor out(x.shape);

  if (mode == Mode::Eval) {
    if (!has_statistics())
      throw ConfigError("batchnorm1d: eval requested before any training statistics");
    for (std::size_t c = 0; c < channels_; ++c) {
      double invstd = 1.0 / std::sqrt(running_var_.data[c] + eps_);
      double g = gamma_.value.data[c], sh = beta_.value.data[c];
      double mu = running_mean_.data[c];
      for (std::size_t b = 0; b < batch; ++b) {
        const double* src = x.row3(b, c);
        double* dst = out.row3(b, c);
        for (std::size_t t = 0; t < length; ++t) dst[t] = g * (src[t] - mu) * invstd + sh;
      }
    }
    return out;
  }

  if (n < 2) throw ConfigError("batchnorm1d: train mode needs batch*length >= 2");
  cached_xhat_ = Tensor(x.shape);
  cached_centered_ = Tensor(x.shape);
  cached_invstd_.assign(channels_, 0.0);

  for (std::size_t c = 0; c < channels_; ++c) {
    double mean = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* src = x.row3(b, c);
      for (std::size_t t = 0; t < length; ++t) mean += src[t];
    }
    mean /= double(n);
    double var = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* src = x.row3(b, c);
      for (std::size_t t = 0; t < length; ++t) {
        double d = src[t] - mean;
        var += d * d;
      }
    }
    var /= double(n);
    double invstd = 1.0 / std::sqrt(var + eps_);
    cached_invstd_[c] = invstd;

    double g = gamma_.value.data[c], sh = beta_.value.data[c];
    for (std::size_t b = 0; b < batch; ++b) {
      const double* src = x.row3(b, c);
      double* ctr = cached_centered_.row3(b, c);
      double* xh = cached_xhat_.row3(b, c);
      double* dst = out.row3(b, c);
      for (std::size_t t = 0; t < length; ++t) {
        ctr[t] = src[t] - mean;
        xh[t] = ctr[t] * invstd;
        dst[t] = g * xh[t] + sh;
      }
    }
    running_mean_.data[c] = (1.0 - momentum_) * running_mean_.data[c] + momentum_ * mean;
    running_var_.data[c] = (1.0 - momentum_) * running_var_.data[c] + momentum_ * var;
  }
  stats_seen_.data[0] = 1.0;
  return out;
}

Tensor BatchNorm1d::backward(const Tensor& g) {
  const std::size_t batch = g.dim(0), length = g.dim(2);
  const double n = double(batch * length);
  Tensor gx(g.shape);
  gamma_.grad.fill(0.0);
  beta_.grad.fill(0.0);

  for (std::size_t c = 0; c < channels_; ++c) {
    const double gam = gamma_.value.data[c];
    const double invstd = cached_invstd_[c];
    double sum_g = 0.0, sum_gx = 0.0, sum_gc = 0.0, sum_c = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* grow = g.row3(b, c);
      const double* xh = cached_xhat_.row3(b, c);
      const double* ctr = cached_centered_.row3(b, c);
      for (std::size_t t = 0; t < length; ++t) {
        sum_g += grow[t];
        sum_gx += grow[t] * xh[t];
        sum_gc += grow[t] * ctr[t];
        sum_c += ctr[t];
      }
    }
    gamma_.grad.data[c] = sum_gx;
    beta_.grad.data[c] = sum_g;

    const double dvar = gam * sum_gc * (-0.5) * invstd * invstd * invstd;
    const double dmean = -gam * invstd * sum_g + dvar * (-2.0 / n) * sum_c;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* grow = g.row3(b, c);
      const double* ctr = cached_centered_.row3(b, c);
      double* dst = gx.row3(b, c);
      for (std::size_t t = 0; t < length; ++t)
        dst[t] = gam * grow[t] * invstd + dvar * 2.0 * ctr[t] / n + dmean / n;
    }
  }
  return gx;
}

LayerSpec BatchNorm1d::spec() const {
  return {"batchnorm1d", {{"channels", double(channels_)}, {"eps", eps_}, {"momentum", momentum_}}};
}

// ---------------------------------------------------------------------------
// Relu / MaxPool1d / Dropout / Flatten

Tensor Relu::forward(const Tensor& x, Mode) {
  cached_input_ = x;
  Tensor out = x;
  for (double& v : out.data) v = std::max(0.0, v);
  return out;
}

Tensor Relu::backward(const Tensor& g) {
  Tensor gx = g;
  for (std::size_t i = 0; i < gx.data.size(); ++i)
    if (cached_input_.data[i] <= 0.0) gx.data[i] = 0.0;
  return gx;
}

MaxPool1d::MaxPool1d(std::size_t window) : window_(window) {
  if (window == 0) throw ConfigError("maxpool1d: window must be positive");
}

Tensor MaxPool1d::forward(const Tensor& x, Mode) {
  if (x.rank() != 3) throw ConfigError("maxpool1d: expected 3D input");
  const std::size_t batch = x.dim(0), channels = x.dim(1), length = x.dim(2);
  if (length < window_)
    throw ConfigError("maxpool1d: input length " + std::to_string(length) +
                      " shorter than window " + std::to_string(window_));
  const std::size_t lo = length / window_;

  Tensor out({batch, channels, lo});
  cached_argmax_.assign(batch * channels * lo, 0);
  cached_shape_ = x.shape;
  std::size_t flat = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double* src = x.row3(b, c);
      double* dst = out.row3(b, c);
      for (std::size_t t = 0; t < lo; ++t, ++flat) {
        std::size_t base = t * window_;
        std::size_t best = base;
        for (std::size_t j = 1; j < window_; ++j)
          if (src[base + j] > src[best]) best = base + j;
        dst[t] = src[best];
        cached_argmax_[flat] = best;
      }
    }
  }
  return out;
}

Tensor MaxPool1d::backward(const Tensor& g) {
  Tensor gx(cached_shape_);
  const std::size_t batch = g.dim(0), channels = g.dim(1), lo = g.dim(2);
  std::size_t flat = 0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c) {
      double* dst = gx.row3(b, c);
      const double* grow = g.row3(b, c);
      for (std::size_t t = 0; t < lo; ++t, ++flat) dst[cached_argmax_[flat]] += grow[t];
    }
  return gx;
}

Dropout::Dropout(double p) : p_(p), rng_(0) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: p must lie in [0, 1)");
}

void Dropout::seed_stream(std::uint64_t seed, std::uint64_t stream) {
  rng_ = CounterRng::derive(seed, 0xD20u, stream);
  mask_valid_ = false;
}

Tensor Dropout::forward(const Tensor& x, Mode mode) {
  if (mode == Mode::Eval || p_ == 0.0) {
    mask_ = Tensor(x.shape);
    mask_.fill(1.0);
    return x;
  }
  if (!frozen_ || !mask_valid_ || !mask_.same_shape(x)) {
    mask_ = Tensor(x.shape);
    const double keep_scale = 1.0 / (1.0 - p_);
    for (double& m : mask_.data) m = rng_.uniform() < p_ ? 0.0 : keep_scale;
    mask_valid_ = true;
  }
  Tensor out = x;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask_.data[i];
  return out;
}

Tensor Dropout::backward(const Tensor& g) {
  Tensor gx = g;
  for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] *= mask_.data[i];
  return gx;
}

Tensor Flatten::forward(const Tensor& x, Mode) {
  cached_shape_ = x.shape;
  Tensor out = x;
  std::size_t rest = x.size() / x.dim(0);
  out.shape = {x.dim(0), rest};
  return out;
}

Tensor Flatten::backward(const Tensor& g) {
  Tensor gx = g;
  gx.shape = cached_shape_;
  return gx;
}

// ---------------------------------------------------------------------------
// Dense

Dense::Dense(std::size_t in_features, std::size_t out_features)
    : in_f_(in_features),
      out_f_(out_features),
      weight_(make_param("dense.weight", {out_features, in_features}, true)),
      bias_(make_param("dense.bias", {out_features}, false)) {}

void Dense::init(CounterRng& rng) {
  init_fan_in_uniform(weight_.value, in_f_, rng);
  bias_.value.fill(0.0);
}

Tensor Dense::forward(const Tensor& x, Mode) {
  if (x.rank() != 2 || x.dim(1) != in_f_)
    throw ConfigError("dense: expected [batch, " + std::to_string(in_f_) +
                      "] input, got " + shape_string(x));
  cached_input_ = x;
  const std::size_t batch = x.dim(0);
  Tensor out({batch, out_f_});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* src = x.row2(b);
    for (std::size_t o = 0; o < out_f_; ++o) {
      const double* w = &weight_.value.at2(o, 0);
      double acc = bias_.value.data[o];
      for (std::size_t i = 0; i < in_f_; ++i) acc += w[i] * src[i];
      out.at2(b, o) = acc;
    }
  }
  return out;
}

Tensor Dense::backward(const Tensor& g) {
  const Tensor& x = cached_input_;
  const std::size_t batch = x.dim(0);
  weight_.grad.fill(0.0);
  bias_.grad.fill(0.0);
  Tensor gx({batch, in_f_});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* grow = g.row2(b);
    const double* src = x.row2(b);
    double* gsrc = gx.row2(b);
    for (std::size_t o = 0; o < out_f_; ++o) {
      const double go = grow[o];
      bias_.grad.data[o] += go;
      if (go == 0.0) continue;
      double* gw = &weight_.grad.at2(o, 0);
      const double* w = &weight_.value.at2(o, 0);
      for (std::size_t i = 0; i < in_f_; ++i) {
        gw[i] += go * src[i];
        gsrc[i] += go * w[i];
      }
    }
  }
  return gx;
}

LayerSpec Dense::spec() const {
  return {"dense", {{"in", double(in_f_)}, {"out", double(out_f_)}}};
}

// ---------------------------------------------------------------------------
// RecurrentCell

RecurrentCell::RecurrentCell(CellKind kind, std::size_t in_channels, std::size_t hidden)
    : kind_(kind), in_c_(in_channels), hidden_(hidden) {
  if (hidden == 0) throw ConfigError("recurrent: hidden size must be positive");
  std::size_t gates = kind == CellKind::Vanilla ? 1 : (kind == CellKind::Lstm ? 4 : 3);
  w_input_ = make_param("rnn.w_input", {gates * hidden, in_channels}, true);
  w_hidden_ = make_param("rnn.w_hidden", {gates * hidden, hidden}, true);
  bias_ = make_param("rnn.bias", {gates * hidden}, false);
  if (kind == CellKind::Gru)
    bias_hidden_ = make_param("rnn.bias_hidden", {gates * hidden}, false);
}

std::vector<Param*> RecurrentCell::params() {
  std::vector<Param*> out{&w_input_, &w_hidden_, &bias_};
  if (kind_ == CellKind::Gru) out.push_back(&bias_hidden_);
  return out;
}

void RecurrentCell::init(CounterRng& rng) {
  init_fan_in_uniform(w_input_.value, in_c_, rng);
  init_fan_in_uniform(w_hidden_.value, hidden_, rng);
  bias_.value.fill(0.0);
  if (kind_ == CellKind::Gru) bias_hidden_.value.fill(0.0);
}

namespace {

// pre[b, :] += x_row[b, :] * W^T for one time step.
void affine_step(const Tensor& w, const double* src, double* dst, std::size_t rows,
                 std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = &w.data[r * cols];
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * src[c];
    dst[r] += acc;
  }
}

// acc_w[r, c] += g[r] * src[c]
void outer_accumulate(Tensor& gw, const double* g, const double* src, std::size_t rows,
                      std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* dst = &gw.data[r * cols];
    const double gr = g[r];
    if (gr == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) dst[c] += gr * src[c];
  }
}

// dst[c] += sum_r w[r, c] * g[r]
void transpose_apply(const Tensor& w, const double* g, double* dst, std::size_t rows,
                     std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = &w.data[r * cols];
    const double gr = g[r];
    if (gr == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) dst[c] += gr * wr[c];
  }
}

}  // namespace

Tensor RecurrentCell::forward(const Tensor& x, Mode mode) {
  if (x.rank() != 3 || x.dim(1) != in_c_)
    throw ConfigError("recurrent: expected [batch, " + std::to_string(in_c_) +
                      ", length] input, got " + shape_string(x));
  const bool keep = mode == Mode::Train;
  cached_input_ = keep ? x : Tensor();
  hs_.clear();
  cs_.clear();
  gates_.clear();
  hn_lin_.clear();
  switch (kind_) {
    case CellKind::Vanilla:
      return forward_vanilla(x, keep);
    case CellKind::Lstm:
      return forward_lstm(x, keep);
    case CellKind::Gru:
      return forward_gru(x, keep);
  }
  throw ConfigError("recurrent: unknown cell kind");
}

Tensor RecurrentCell::forward_vanilla(const Tensor& x, bool keep) {
  const std::size_t batch = x.dim(0), steps = x.dim(2);
  Tensor h({batch, hidden_});
  if (keep) hs_.push_back(h);
  std::vector<double> x_t(in_c_);
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor next({batch, hidden_});
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < in_c_; ++c) x_t[c] = x.at3(b, c, t);
      double* pre = next.row2(b);
      for (std::size_t i = 0; i < hidden_; ++i) pre[i] = bias_.value.data[i];
      affine_step(w_input_.value, x_t.data(), pre, hidden_, in_c_);
      affine_step(w_hidden_.value, h.row2(b), pre, hidden_, hidden_);
      for (std::size_t i = 0; i < hidden_; ++i) pre[i] = std::tanh(pre[i]);
    }
    h = next;
    if (keep) hs_.push_back(h);
  }
  return h;
}

Tensor RecurrentCell::backward_vanilla(const Tensor& g) {
  const Tensor& x = cached_input_;
  const std::size_t batch = x.dim(0), steps = x.dim(2);
  w_input_.grad.fill(0.0);
  w_hidden_.grad.fill(0.0);
  bias_.grad.fill(0.0);
  Tensor gx(x.shape);
  Tensor dh = g;
  std::vector<double> x_t(in_c_), da(hidden_), gx_t(in_c_);

  for (std::size_t t = steps; t-- > 0;) {
    const Tensor& h_t = hs_[t + 1];
    const Tensor& h_prev = hs_[t];
    Tensor dh_prev({batch, hidden_});
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < in_c_; ++c) x_t[c] = x.at3(b, c, t);
      const double* hrow = h_t.row2(b);
      const double* drow = dh.row2(b);
      for (std::size_t i = 0; i < hidden_; ++i) {
        da[i] = drow[i] * (1.0 - hrow[i] * hrow[i]);
        bias_.grad.data[i] += da[i];
      }
      outer_accumulate(w_input_.grad, da.data(), x_t.data(), hidden_, in_c_);
      outer_accumulate(w_hidden_.grad, da.data(), h_prev.row2(b), hidden_, hidden_);
      std::fill(gx_t.begin(), gx_t.end(), 0.0);
      transpose_apply(w_input_.value, da.data(), gx_t.data(), hidden_, in_c_);
      for (std::size_t c = 0; c < in_c_; ++c) gx.at3(b, c, t) = gx_t[c];
      transpose_apply(w_hidden_.value, da.data(), dh_prev.row2(b), hidden_, hidden_);
    }
    dh = dh_prev;
  }
  return gx;
}

Tensor RecurrentCell::forward_lstm(const Tensor& x, bool keep) {
  const std::size_t batch = x.dim(0), steps = x.dim(2);
  Tensor h({batch, hidden_}), c({batch, hidden_});
  if (keep) {
    hs_.push_back(h);
    cs_.push_back(c);
  }
  std::vector<double> x_t(in_c_);
  const std::size_t gh = 4 * hidden_;
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor gates({batch, gh});
    Tensor h_next({batch, hidden_}), c_next({batch, hidden_});
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t cc = 0; cc < in_c_; ++cc) x_t[cc] = x.at3(b, cc, t);
      double* pre = gates.row2(b);
      for (std::size_t i = 0; i < gh; ++i) pre[i] = bias_.value.data[i];
      affine_step(w_input_.value, x_t.data(), pre, gh, in_c_);
      affine_step(w_hidden_.value, h.row2(b), pre, gh, hidden_);
      const double* c_prev = c.row2(b);
      double* hn = h_next.row2(b);
      double* cn = c_next.row2(b);
      for (std::size_t i = 0; i < hidden_; ++i) {
        double gi = sigmoid(pre[i]);
        double gf = sigmoid(pre[hidden_ + i]);
        double gg = std::tanh(pre[2 * hidden_ + i]);
        double go = sigmoid(pre[3 * hidden_ + i]);
        pre[i] = gi;
        pre[hidden_ + i] = gf;
        pre[2 * hidden_ + i] = gg;
        pre[3 * hidden_ + i] = go;
        cn[i] = gf * c_prev[i] + gi * gg;
        hn[i] = go * std::tanh(cn[i]);
      }
    }
    h = h_next;
    c = c_next;
    if (keep) {
      hs_.push_back(h);
      cs_.push_back(c);
      gates_.push_back(std::move(gates));
    }
  }
  return h;
}

Tensor RecurrentCell::backward_lstm(const Tensor& g) {
  const Tensor& x = cached_input_;
  const std::size_t batch = x.dim(0), steps = x.dim(2);
  const std::size_t gh = 4 * hidden_;
  w_input_.grad.fill(0.0);
  w_hidden_.grad.fill(0.0);
  bias_.grad.fill(0.0);
  Tensor gx(x.shape);
  Tensor dh = g;
  Tensor dc({batch, hidden_});
  std::vector<double> x_t(in_c_), da(gh), gx_t(in_c_);

  for (std::size_t t = steps; t-- > 0;) {
    const Tensor& gates = gates_[t];
    const Tensor& c_t = cs_[t + 1];
    const Tensor& c_prev = cs_[t];
    const Tensor& h_prev = hs_[t];
    Tensor dh_prev({batch, hidden_});
    Tensor dc_prev({batch, hidden_});
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t cc = 0; cc < in_c_; ++cc) x_t[cc] = x.at3(b, cc, t);
      const double* gate = gates.row2(b);
      const double* crow = c_t.row2(b);
      const double* cprev = c_prev.row2(b);
      const double* drow = dh.row2(b);
      double* dcrow = dc.row2(b);
      double* dcprev = dc_prev.row2(b);
      for (std::size_t i = 0; i < hidden_; ++i) {
        const double gi = gate[i], gf = gate[hidden_ + i];
        const double gg = gate[2 * hidden_ + i], go = gate[3 * hidden_ + i];
        const double tc = std::tanh(crow[i]);
        const double d_o = drow[i] * tc;
        const double dct = dcrow[i] + drow[i] * go * (1.0 - tc * tc);
        const double d_i = dct * gg;
        const double d_g = dct * gi;
        const double d_f = dct * cprev[i];
        dcprev[i] = dct * gf;
        da[i] = d_i * gi * (1.0 - gi);
        da[hidden_ + i] = d_f * gf * (1.0 - gf);
        da[2 * hidden_ + i] = d_g * (1.0 - gg * gg);
        da[3 * hidden_ + i] = d_o * go * (1.0 - go);
      }
      for (std::size_t i = 0; i < gh; ++i) bias_.grad.data[i] += da[i];
      outer_accumulate(w_input_.grad, da.data(), x_t.data(), gh, in_c_);
      outer_accumulate(w_hidden_.grad, da.data(), h_prev.row2(b), gh, hidden_);
      std::fill(gx_t.begin(), gx_t.end(), 0.0);
      transpose_apply(w_input_.value, da.data(), gx_t.data(), gh, in_c_);
      for (std::size_t cc = 0; cc < in_c_; ++cc) gx.at3(b, cc, t) = gx_t[cc];
      transpose_apply(w_hidden_.value, da.data(), dh_prev.row2(b), gh, hidden_);
    }
    dh = dh_prev;
    dc = dc_prev;
  }
  return gx;
}

Tensor RecurrentCell::forward_gru(const Tensor& x, bool keep) {
  const std::size_t batch = x.dim(0), steps = x.dim(2);
  Tensor h({batch, hidden_});
  if (keep) hs_.push_back(h);
  std::vector<double> x_t(in_c_), xa(3 * hidden_), ha(3 * hidden_);
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor gates({batch, 3 * hidden_});
    Tensor hn_lin({batch, hidden_});
    Tensor h_next({batch, hidden_});
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t cc = 0; cc < in_c_; ++cc) x_t[cc] = x.at3(b, cc, t);
      for (std::size_t i = 0; i < 3 * hidden_; ++i) {
        xa[i] = bias_.value.data[i];
        ha[i] = bias_hidden_.value.data[i];
      }
      affine_step(w_input_.value, x_t.data(), xa.data(), 3 * hidden_, in_c_);
      affine_step(w_hidden_.value, h.row2(b), ha.data(), 3 * hidden_, hidden_);
      const double* hrow = h.row2(b);
      double* grow = gates.row2(b);
      double* hl = hn_lin.row2(b);
      double* hn = h_next.row2(b);
      for (std::size_t i = 0; i < hidden_; ++i) {
        double r = sigmoid(xa[i] + ha[i]);
        double z = sigmoid(xa[hidden_ + i] + ha[hidden_ + i]);
        hl[i] = ha[2 * hidden_ + i];
        double n = std::tanh(xa[2 * hidden_ + i] + r * hl[i]);
        grow[i] = r;
        grow[hidden_ + i] = z;
        grow[2 * hidden_ + i] = n;
        hn[i] = (1.0 - z) * n + z * hrow[i];
      }
    }
    h = h_next;
    if (keep) {
      hs_.push_back(h);
      gates_.push_back(std::move(gates));
      hn_lin_.push_back(std::move(hn_lin));
    }
  }
  return h;
}

Tensor RecurrentCell::backward_gru(const Tensor& g) {
  const Tensor& x = cached_input_;
  const std::size_t batch = x.dim(0), steps = x.dim(2);
  const std::size_t gh = 3 * hidden_;
  w_input_.grad.fill(0.0);
  w_hidden_.grad.fill(0.0);
  bias_.grad.fill(0.0);
  bias_hidden_.grad.fill(0.0);
  Tensor gx(x.shape);
  Tensor dh = g;
  std::vector<double> x_t(in_c_), dxa(gh), dha(gh), gx_t(in_c_);

  for (std::size_t t = steps; t-- > 0;) {
    const Tensor& gates = gates_[t];
    const Tensor& hn_lin = hn_lin_[t];
    const Tensor& h_prev = hs_[t];
    Tensor dh_prev({batch, hidden_});
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t cc = 0; cc < in_c_; ++cc) x_t[cc] = x.at3(b, cc, t);
      const double* grow = gates.row2(b);
      const double* hl = hn_lin.row2(b);
      const double* hprev = h_prev.row2(b);
      const double* drow = dh.row2(b);
      double* dhp = dh_prev.row2(b);
      for (std::size_t i = 0; i < hidden_; ++i) {
        const double r = grow[i], z = grow[hidden_ + i], n = grow[2 * hidden_ + i];
        const double dz = drow[i] * (hprev[i] - n);
        const double dn = drow[i] * (1.0 - z);
        dhp[i] += drow[i] * z;
        const double dan = dn * (1.0 - n * n);
        const double dr = dan * hl[i];
        const double d_hn_lin = dan * r;
        const double dar = dr * r * (1.0 - r);
        const double daz = dz * z * (1.0 - z);
        dxa[i] = dar;
        dxa[hidden_ + i] = daz;
        dxa[2 * hidden_ + i] = dan;
        dha[i] = dar;
        dha[hidden_ + i] = daz;
        dha[2 * hidden_ + i] = d_hn_lin;
      }
      for (std::size_t i = 0; i < gh; ++i) {
        bias_.grad.data[i] += dxa[i];
        bias_hidden_.grad.data[i] += dha[i];
      }
      outer_accumulate(w_input_.grad, dxa.data(), x_t.data(), gh, in_c_);
      outer_accumulate(w_hidden_.grad, dha.data(), hprev, gh, hidden_);
      std::fill(gx_t.begin(), gx_t.end(), 0.0);
      transpose_apply(w_input_.value, dxa.data(), gx_t.data(), gh, in_c_);
      for (std::size_t cc = 0; cc < in_c_; ++cc) gx.at3(b, cc, t) = gx_t[cc];
      transpose_apply(w_hidden_.value, dha.data(), dhp, gh, hidden_);
    }
    dh = dh_prev;
  }
  return gx;
}

Tensor RecurrentCell::backward(const Tensor& g) {
  if (cached_input_.size() == 0)
    throw ConfigError("recurrent: backward requires a train-mode forward pass");
  switch (kind_) {
    case CellKind::Vanilla:
      return backward_vanilla(g);
    case CellKind::Lstm:
      return backward_lstm(g);
    case CellKind::Gru:
      return backward_gru(g);
  }
  throw ConfigError("recurrent: unknown cell kind");
}

LayerSpec RecurrentCell::spec() const {
  return {"recurrent",
          {{"kind", double(int(kind_))}, {"in", double(in_c_)}, {"hidden", double(hidden_)}}};
}

// ---------------------------------------------------------------------------
// Losses, softmax, Adam

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) throw ConfigError("softmax: expected [batch, classes]");
  check_finite(logits, "softmax input");
  Tensor out = logits;
  const std::size_t batch = logits.dim(0), k = logits.dim(1);
  for (std::size_t b = 0; b < batch; ++b) {
    double* row = out.row2(b);
    double peak = row[0];
    for (std::size_t j = 1; j < k; ++j) peak = std::max(peak, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (row[j] = std::exp(row[j] - peak));
    for (std::size_t j = 0; j < k; ++j) row[j] /= z;
  }
  return out;
}

double cce_loss(const Tensor& probs, const Tensor& onehot) {
  if (!probs.same_shape(onehot))
    throw ConfigError("cce_loss: probability and label shapes differ");
  const std::size_t batch = probs.dim(0), k = probs.dim(1);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    double prob_sum = 0.0, label_sum = 0.0;
    std::size_t ones = 0;
    for (std::size_t j = 0; j < k; ++j) {
      prob_sum += probs.at2(b, j);
      double y = onehot.at2(b, j);
      if (y != 0.0 && y != 1.0)
        throw ConfigError("cce_loss: label row " + std::to_string(b) + " not one-hot");
      if (y == 1.0) ++ones;
      label_sum += y;
    }
    if (std::abs(prob_sum - 1.0) > 1e-6)
      throw ConfigError("cce_loss: probability row " + std::to_string(b) +
                        " does not sum to 1");
    if (ones != 1 || label_sum != 1.0)
      throw ConfigError("cce_loss: label row " + std::to_string(b) + " not one-hot");
    for (std::size_t j = 0; j < k; ++j) {
      if (onehot.at2(b, j) == 1.0) {
        double p = std::clamp(probs.at2(b, j), 1e-12, 1.0 - 1e-12);
        loss -= std::log(p);
      }
    }
  }
  return loss / double(batch);
}

double l2_penalty(const std::vector<Param*>& params, double lambda) {
  if (lambda < 0.0) throw ConfigError("l2_penalty: lambda must be >= 0");
  double sq = 0.0;
  for (const Param* p : params)
    if (p->decay)
      for (double w : p->value.data) sq += w * w;
  return lambda * sq;
}

void AdamState::attach(const std::vector<Param*>& params) {
  m.clear();
  v.clear();
  for (const Param* p : params) {
    m.emplace_back(p->value.shape);
    v.emplace_back(p->value.shape);
  }
}

void adam_step(AdamState& state, const std::vector<Param*>& params) {
  if (state.m.size() != params.size()) state.attach(params);
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!state.m[i].same_shape(params[i]->value))
      throw ConfigError("adam_step: moment/parameter shape mismatch");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    for (std::size_t j = 0; j < p.value.data.size(); ++j) {
      const double g = p.grad.data[j];
      double& m_j = state.m[i].data[j];
      double& v_j = state.v[i].data[j];
      m_j = state.beta1 * m_j + (1.0 - state.beta1) * g;
      v_j = state.beta2 * v_j + (1.0 - state.beta2) * g * g;
      const double m_hat = m_j / bc1;
      const double v_hat = v_j / bc2;
      p.value.data[j] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Network

void Network::add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

void Network::initialize(std::uint64_t seed) {
  CounterRng rng = CounterRng::derive(seed, 0x1417u);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->init(rng);
    if (auto* drop = dynamic_cast<Dropout*>(layers_[i].get()))
      drop->seed_stream(seed, i);
  }
}

Tensor Network::forward(const Tensor& x, Mode mode) {
  Tensor cur = x;
  for (auto& layer : layers_) {
    cur = layer->forward(cur, mode);
    check_finite(cur, "network forward");
  }
  return cur;
}

std::pair<double, Tensor> Network::loss_and_gradients(const Tensor& x,
                                                      const Tensor& onehot,
                                                      double lambda_l2, Mode mode) {
  Tensor logits = forward(x, mode);
  Tensor probs = softmax(logits);
  double loss = cce_loss(probs, onehot) + l2_penalty(params(), lambda_l2);

  // Combined softmax + cross-entropy gradient at the logits.
  const std::size_t batch = probs.dim(0);
  Tensor grad = probs;
  for (std::size_t i = 0; i < grad.data.size(); ++i)
    grad.data[i] = (grad.data[i] - onehot.data[i]) / double(batch);

  for (std::size_t i = layers_.size(); i-- > 0;) {
    grad = layers_[i]->backward(grad);
    check_finite(grad, "network backward");
  }

  if (lambda_l2 > 0.0)
    for (Param* p : params())
      if (p->decay)
        for (std::size_t j = 0; j < p->value.data.size(); ++j)
          p->grad.data[j] += 2.0 * lambda_l2 * p->value.data[j];
  return {loss, probs};
}

std::vector<Param*> Network::params() {
  std::vector<Param*> out;
  for (auto& layer : layers_)
    for (Param* p : layer->params()) out.push_back(p);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> Network::buffers() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (auto& layer : layers_)
    for (auto& b : layer->buffers()) out.push_back(b);
  return out;
}

std::vector<LayerSpec> Network::layer_specs() const {
  std::vector<LayerSpec> out;
  for (const auto& layer : layers_) out.push_back(layer->spec());
  return out;
}

void Network::set_train_deterministic(bool on) {
  for (auto& layer : layers_)
    if (auto* drop = dynamic_cast<Dropout*>(layer.get())) drop->freeze_mask(on);
}

namespace {

double objective_only(Network& net, const Tensor& x, const Tensor& onehot,
                      double lambda_l2) {
  Tensor probs = softmax(net.forward(x, Mode::Train));
  return cce_loss(probs, onehot) + l2_penalty(net.params(), lambda_l2);
}

}  // namespace

double grad_check(Network& net, const Tensor& x, const Tensor& onehot, double lambda_l2,
                  double epsilon) {
  net.set_train_deterministic(true);
  net.loss_and_gradients(x, onehot, lambda_l2, Mode::Train);

  std::vector<Tensor> analytic;
  for (Param* p : net.params()) analytic.push_back(p->grad);

  double max_rel = 0.0;
  std::vector<Param*> params = net.params();
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& value = params[pi]->value;
    for (std::size_t j = 0; j < value.data.size(); ++j) {
      const double saved = value.data[j];
      value.data[j] = saved + epsilon;
      double plus = objective_only(net, x, onehot, lambda_l2);
      value.data[j] = saved - epsilon;
      double minus = objective_only(net, x, onehot, lambda_l2);
      value.data[j] = saved;

      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double a = analytic[pi].data[j];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      max_rel = std::max(max_rel, rel);
    }
  }
  net.set_train_deterministic(false);
  return max_rel;
}

Tensor one_hot(const std::vector<int>& labels, std::size_t n_classes) {
  Tensor out({labels.size(), n_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || std::size_t(labels[i]) >= n_classes)
      throw ConfigError("one_hot: label " + std::to_string(labels[i]) + " out of range");
    out.at2(i, std::size_t(labels[i])) = 1.0;
  }
  return out;
}

}  // namespace nn
}  // namespace ssvep
