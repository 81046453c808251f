#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "madgan/conv.hpp"
#include "madgan/rng.hpp"
#include "madgan/tape.hpp"

namespace madgan::nn {

// Flat registry of named tensors. Layers keep aliases of the stored tensors
// (shared buffers), so the optimizer and checkpoint code can treat a model as
// a list of (name, tensor) pairs.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable;
  };

  Tensor& add(const std::string& name, Tensor t, bool trainable = true) {
    for (const auto& e : entries_)
      if (e.name == name) throw ConfigError("duplicate parameter name " + name);
    entries_.push_back({name, std::move(t), trainable});
    return entries_.back().value;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  Tensor& find(const std::string& name) {
    for (auto& e : entries_)
      if (e.name == name) return e.value;
    throw ConfigError("no parameter named " + name);
  }

  int64_t trainable_count() const {
    int64_t n = 0;
    for (const auto& e : entries_)
      if (e.trainable) n += e.value.numel();
    return n;
  }

 private:
  std::vector<Entry> entries_;
};

constexpr float kLeakySlope = 0.2f;
constexpr float kInitStddev = 0.02f;

struct Conv2d {
  Tensor w, b;
  ops::ConvGeom geom;

  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& name, int64_t in_ch, int64_t out_ch,
         ops::ConvGeom g, Rng& rng)
      : geom(g) {
    w = store.add(name + ".w", Tensor::randn({out_ch, in_ch, g.kh, g.kw}, rng, kInitStddev));
    b = store.add(name + ".b", Tensor::zeros({out_ch}));
  }

  Var forward(Tape& t, Var x) const {
    Var y = ops::conv2d(t, x, t.param(w), geom);
    return ops::add(t, y, ops::channel_expand(t, t.param(b), t.value(y).shape()));
  }
};

// Transposed convolution; with the default 4/2/1 geometry it exactly doubles
// the spatial dimensions.
struct ConvTranspose2d {
  Tensor w, b;  // w is [in_ch, out_ch, kh, kw]
  ops::ConvGeom geom;

  ConvTranspose2d() = default;
  ConvTranspose2d(ParamStore& store, const std::string& name, int64_t in_ch,
                  int64_t out_ch, ops::ConvGeom g, Rng& rng)
      : geom(g) {
    w = store.add(name + ".w", Tensor::randn({in_ch, out_ch, g.kh, g.kw}, rng, kInitStddev));
    b = store.add(name + ".b", Tensor::zeros({out_ch}));
  }

  Var forward(Tape& t, Var x) const {
    const Tensor& xv = t.value(x);
    const int64_t h_out = (xv.dim(2) - 1) * geom.sh - 2 * geom.ph + geom.kh;
    const int64_t w_out = (xv.dim(3) - 1) * geom.sw - 2 * geom.pw + geom.kw;
    Var y = ops::conv2d_bwd_input(t, x, t.param(w), geom, h_out, w_out);
    return ops::add(t, y, ops::channel_expand(t, t.param(b), t.value(y).shape()));
  }
};

struct BatchNorm2d {
  Tensor gamma, beta;
  Tensor run_mean, run_var;
  float eps = 1e-5f;
  float momentum = 0.1f;

  BatchNorm2d() = default;
  BatchNorm2d(ParamStore& store, const std::string& name, int64_t ch) {
    gamma = store.add(name + ".gamma", Tensor::full({ch}, 1.0f));
    beta = store.add(name + ".beta", Tensor::zeros({ch}));
    run_mean = store.add(name + ".run_mean", Tensor::zeros({ch}), /*trainable=*/false);
    run_var = store.add(name + ".run_var", Tensor::full({ch}, 1.0f), /*trainable=*/false);
  }

  Var forward(Tape& t, Var x, bool train) {
    const auto shape = t.value(x).shape();
    const int64_t n = shape[0], c = shape[1];
    const int64_t s = t.value(x).numel() / (n * c);
    const float inv_count = 1.0f / static_cast<float>(n * s);
    if (train) {
      Var mu = ops::scale(t, ops::sum_ex_channel(t, x), inv_count);
      Var xc = ops::sub(t, x, ops::channel_expand(t, mu, shape));
      Var var = ops::scale(t, ops::sum_ex_channel(t, ops::mul(t, xc, xc)), inv_count);
      Var inv = ops::rsqrt_eps(t, var, eps);
      Var xn = ops::mul(t, xc, ops::channel_expand(t, inv, shape));
      update_running(t.value(mu), t.value(var), static_cast<double>(n) * s);
      Var y = ops::mul(t, xn, ops::channel_expand(t, t.param(gamma), shape));
      return ops::add(t, y, ops::channel_expand(t, t.param(beta), shape));
    }
    Tensor inv_eval({c});
    for (int64_t i = 0; i < c; ++i)
      inv_eval[i] = 1.0f / std::sqrt(run_var[i] + eps);
    Var xc = ops::sub(t, x, ops::channel_expand(t, t.leaf(run_mean), shape));
    Var xn = ops::mul(t, xc, ops::channel_expand(t, t.leaf(std::move(inv_eval)), shape));
    Var y = ops::mul(t, xn, ops::channel_expand(t, t.param(gamma), shape));
    return ops::add(t, y, ops::channel_expand(t, t.param(beta), shape));
  }

 private:
  void update_running(const Tensor& mu, const Tensor& var, double count) {
    // Unbiased variance goes into the running estimate.
    const float unbias = count > 1 ? static_cast<float>(count / (count - 1.0)) : 1.0f;
    for (int64_t i = 0; i < run_mean.numel(); ++i) {
      run_mean[i] = (1.0f - momentum) * run_mean[i] + momentum * mu[i];
      run_var[i] = (1.0f - momentum) * run_var[i] + momentum * var[i] * unbias;
    }
  }
};

struct Dense {
  Tensor w, b;  // w is [in, out]

  Dense() = default;
  Dense(ParamStore& store, const std::string& name, int64_t in, int64_t out, Rng& rng) {
    w = store.add(name + ".w", Tensor::randn({in, out}, rng, kInitStddev));
    b = store.add(name + ".b", Tensor::zeros({out}));
  }

  Var forward(Tape& t, Var x) const {
    Var y = ops::matmul(t, x, t.param(w));
    return ops::add(t, y, ops::channel_expand(t, t.param(b), t.value(y).shape()));
  }
};

// Inverted dropout; the mask comes from the caller's RNG so a training step is
// reproducible from (seed, step) alone.
inline Var dropout(Tape& t, Var x, float rate, Rng& rng) {
  if (rate <= 0.0f) return x;
  const Tensor& xv = t.value(x);
  Tensor mask(xv.shape());
  const float keep = 1.0f - rate;
  const float scale = 1.0f / keep;
  for (int64_t i = 0, n = mask.numel(); i < n; ++i)
    mask[i] = rng.uniform() < keep ? scale : 0.0f;
  return ops::mul(t, x, t.leaf(std::move(mask)));
}

// SAGAN-style self-attention block: out = x + gamma * (V softmax(Q^T K)^T)
// with 1x1 projections; gamma starts at 0 so the block is the identity at
// initialization. Query/key width is channels/8.
struct SelfAttention2d {
  Tensor wq, wk, wv;  // 1x1 projection kernels
  Tensor gamma;
  int64_t channels = 0;

  SelfAttention2d() = default;
  SelfAttention2d(ParamStore& store, const std::string& name, int64_t ch, Rng& rng)
      : channels(ch) {
    if (ch < 8) throw ConfigError("self-attention needs >= 8 channels, got " +
                                  std::to_string(ch));
    const int64_t cq = ch / 8;
    wq = store.add(name + ".wq", Tensor::randn({cq, ch, 1, 1}, rng, kInitStddev));
    wk = store.add(name + ".wk", Tensor::randn({cq, ch, 1, 1}, rng, kInitStddev));
    wv = store.add(name + ".wv", Tensor::randn({ch, ch, 1, 1}, rng, kInitStddev));
    gamma = store.add(name + ".gamma", Tensor::zeros({1}));
  }

  Var forward(Tape& t, Var x) const {
    const Tensor& xv = t.value(x);
    const int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    if (c != channels)
      throw ShapeError("self-attention built for " + std::to_string(channels) +
                       " channels, got " + xv.shape_str());
    const int64_t p = h * w;
    const int64_t cq = c / 8;
    const ops::ConvGeom one{1, 1, 1, 1, 0, 0};
    Var q = ops::conv2d(t, x, t.param(wq), one);
    Var k = ops::conv2d(t, x, t.param(wk), one);
    Var v = ops::conv2d(t, x, t.param(wv), one);
    std::vector<Var> outs;
    outs.reserve(n);
    for (int64_t i = 0; i < n; ++i) {
      Var qn = ops::reshape(t, ops::select_sample(t, q, i), {cq, p});
      Var kn = ops::reshape(t, ops::select_sample(t, k, i), {cq, p});
      Var vn = ops::reshape(t, ops::select_sample(t, v, i), {c, p});
      Var attn = ops::softmax_rows(t, ops::matmul(t, qn, kn, /*trans_a=*/true));
      outs.push_back(ops::matmul(t, vn, attn, false, /*trans_b=*/true));
    }
    Var stacked = ops::reshape(t, ops::stack_samples(t, outs), {n, c, h, w});
    return ops::add(t, x, ops::scale_by(t, stacked, t.param(gamma)));
  }

  // Attention map of one sample, for tests and introspection.
  Tensor attention_map(const Tensor& x, int64_t sample) const {
    Tape t;
    Var xl = t.leaf(x);
    const int64_t c = x.dim(1), p = x.dim(2) * x.dim(3);
    const ops::ConvGeom one{1, 1, 1, 1, 0, 0};
    Var q = ops::conv2d(t, xl, t.param(wq), one);
    Var k = ops::conv2d(t, xl, t.param(wk), one);
    Var qn = ops::reshape(t, ops::select_sample(t, q, sample), {c / 8, p});
    Var kn = ops::reshape(t, ops::select_sample(t, k, sample), {c / 8, p});
    return t.value(ops::softmax_rows(t, ops::matmul(t, qn, kn, true))).clone();
  }
};

}  // namespace madgan::nn
