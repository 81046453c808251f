#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "madgan/blas.hpp"
#include "madgan/errors.hpp"
#include "madgan/tensor.hpp"

namespace madgan {

using Var = int32_t;

// Eager autodiff tape. Every operation computes its value immediately and
// records how to emit the gradient of its inputs *as new tape operations*, so
// gradients are themselves differentiable. That is what makes the WGAN-GP
// term trainable: the penalty is a function of an input-gradient, and its
// parameter gradient is obtained by differentiating through the first
// backward pass.
class Tape {
 public:
  struct BackwardCtx {
    Var self;
    Var grad;
    // True when the gradient w.r.t. input slot i is actually needed.
    std::function<bool(int)> wants;
    std::function<void(int, Var)> emit;
  };
  using BackwardFn = std::function<void(Tape&, const BackwardCtx&)>;

  struct Node {
    Tensor value;
    std::vector<Var> inputs;
    BackwardFn backward;  // empty for leaves and stop-gradient nodes
    bool requires_grad = false;
    const char* op = "leaf";
  };

  Var leaf(Tensor value, bool requires_grad = false) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return push(std::move(n));
  }

  // Binds a persistent parameter tensor as a gradient-tracked leaf. Binding
  // the same underlying buffer twice yields the same Var, so a parameter used
  // in several places accumulates one gradient.
  Var param(const Tensor& p) {
    auto it = param_vars_.find(p.buffer_id());
    if (it != param_vars_.end()) return it->second;
    Var v = leaf(p, true);
    param_vars_[p.buffer_id()] = v;
    return v;
  }

  Var emit(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.backward = std::move(backward);
    for (Var v : n.inputs)
      if (nodes_[v].requires_grad) {
        n.requires_grad = true;
        break;
      }
    return push(std::move(n));
  }

  const Tensor& value(Var v) const { return nodes_[v].value; }
  const Node& node(Var v) const { return nodes_[v]; }
  size_t size() const { return nodes_.size(); }

  // Gradients of a scalar `loss` w.r.t. `wrt`. Only subgraphs that connect a
  // wrt leaf to the loss are differentiated. Returned gradients are tape
  // variables (differentiable in turn). nullopt = no path.
  std::vector<std::optional<Var>> grad(Var loss, std::span<const Var> wrt) {
    if (value(loss).numel() != 1)
      throw ShapeError("grad: loss must be scalar, got " + value(loss).shape_str());

    const size_t n = nodes_.size();
    std::vector<bool> reach(n, false);
    for (Var w : wrt) reach[w] = true;
    for (size_t i = 0; i < n; ++i) {
      if (reach[i]) continue;
      for (Var in : nodes_[i].inputs)
        if (reach[in]) {
          reach[i] = true;
          break;
        }
    }

    std::vector<bool> anc(n, false);
    anc[loss] = true;
    for (int64_t i = loss; i >= 0; --i) {
      if (!anc[i]) continue;
      for (Var in : nodes_[i].inputs) anc[in] = true;
    }

    std::vector<Var> gvar(n, -1);
    gvar[loss] = leaf(Tensor::full(value(loss).shape(), 1.0f));

    for (int64_t i = loss; i >= 0; --i) {
      auto& nd = nodes_[i];
      if (gvar[i] < 0 || !anc[i] || !reach[i] || !nd.backward || !nd.requires_grad)
        continue;
      BackwardCtx ctx;
      ctx.self = static_cast<Var>(i);
      ctx.grad = gvar[i];
      ctx.wants = [&, i](int slot) {
        Var in = nodes_[i].inputs[slot];
        return nodes_[in].requires_grad && reach[in];
      };
      ctx.emit = [&, i](int slot, Var g) {
        Var in = nodes_[i].inputs[slot];
        if (!(nodes_[in].requires_grad && reach[in])) return;
        if (!value(g).same_shape(value(in)))
          throw ShapeError(std::string("backward of ") + nodes_[i].op +
                           ": grad shape " + value(g).shape_str() + " vs input " +
                           value(in).shape_str());
        gvar[in] = (gvar[in] < 0) ? g : add_vars(gvar[in], g);
      };
      nd.backward(*this, ctx);
    }

    std::vector<std::optional<Var>> out;
    out.reserve(wrt.size());
    for (Var w : wrt)
      out.push_back(gvar[w] >= 0 ? std::optional<Var>(gvar[w]) : std::nullopt);
    return out;
  }

 private:
  Var add_vars(Var a, Var b);  // defined after ops below

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
  }

  // deque: node references stay valid while new ops are emitted
  std::deque<Node> nodes_;
  std::unordered_map<const void*, Var> param_vars_;
};

namespace ops {

inline void check_same_shape(const Tape& t, Var a, Var b, const char* what) {
  if (!t.value(a).same_shape(t.value(b)))
    throw ShapeError(std::string(what) + ": " + t.value(a).shape_str() + " vs " +
                     t.value(b).shape_str());
}

inline Var add(Tape& t, Var a, Var b) {
  check_same_shape(t, a, b, "add");
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  Tensor out(x.shape());
  const float* px = x.data();
  const float* py = y.data();
  float* po = out.data();
  for (int64_t i = 0, n = x.numel(); i < n; ++i) po[i] = px[i] + py[i];
  return t.emit("add", std::move(out), {a, b}, [](Tape&, const Tape::BackwardCtx& c) {
    c.emit(0, c.grad);
    c.emit(1, c.grad);
  });
}

inline Var neg(Tape& t, Var a) {
  const Tensor& x = t.value(a);
  Tensor out(x.shape());
  for (int64_t i = 0, n = x.numel(); i < n; ++i) out[i] = -x[i];
  return t.emit("neg", std::move(out), {a}, [](Tape& t2, const Tape::BackwardCtx& c) {
    c.emit(0, neg(t2, c.grad));
  });
}

inline Var sub(Tape& t, Var a, Var b) {
  check_same_shape(t, a, b, "sub");
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  Tensor out(x.shape());
  for (int64_t i = 0, n = x.numel(); i < n; ++i) out[i] = x[i] - y[i];
  return t.emit("sub", std::move(out), {a, b}, [](Tape& t2, const Tape::BackwardCtx& c) {
    c.emit(0, c.grad);
    if (c.wants(1)) c.emit(1, neg(t2, c.grad));
  });
}

inline Var mul(Tape& t, Var a, Var b) {
  check_same_shape(t, a, b, "mul");
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  Tensor out(x.shape());
  for (int64_t i = 0, n = x.numel(); i < n; ++i) out[i] = x[i] * y[i];
  return t.emit("mul", std::move(out), {a, b}, [a, b](Tape& t2, const Tape::BackwardCtx& c) {
    if (c.wants(0)) c.emit(0, mul(t2, c.grad, b));
    if (c.wants(1)) c.emit(1, mul(t2, c.grad, a));
  });
}

inline Var scale(Tape& t, Var a, float s) {
  const Tensor& x = t.value(a);
  Tensor out(x.shape());
  for (int64_t i = 0, n = x.numel(); i < n; ++i) out[i] = x[i] * s;
  return t.emit("scale", std::move(out), {a}, [s](Tape& t2, const Tape::BackwardCtx& c) {
    c.emit(0, scale(t2, c.grad, s));
  });
}

inline Var add_const(Tape& t, Var a, float s) {
  const Tensor& x = t.value(a);
  Tensor out(x.shape());
  for (int64_t i = 0, n = x.numel(); i < n; ++i) out[i] = x[i] + s;
  return t.emit("add_const", std::move(out), {a}, [](Tape&, const Tape::BackwardCtx& c) {
    c.emit(0, c.grad);
  });
}

// Piecewise-constant masks carry no gradient of their own.
inline Var lrelu_mask(Tape& t, Var a, float slope) {
  const Tensor& x = t.value(a);
  Tensor out(x.shape());
  for (int64_t i = 0, n = x.numel(); i < n; ++i) out[i] = x[i] > 0.0f ? 1.0f : slope;
  return t.emit("lrelu_mask", std::move(out), {a}, nullptr);
}

inline Var sign_mask(Tape& t, Var a) {
  const Tensor& x = t.value(a);
  Tensor out(x.shape());
  for (int64_t i = 0, n = x.numel(); i < n; ++i)
    out[i] = x[i] > 0.0f ? 1.0f : (x[i] < 0.0f ? -1.0f : 0.0f);
  return t.emit("sign_mask", std::move(out), {a}, nullptr);
}

inline Var leaky_relu(Tape& t, Var a, float slope) {
  const Tensor& x = t.value(a);
  Tensor out(x.shape());
  for (int64_t i = 0, n = x.numel(); i < n; ++i)
    out[i] = x[i] > 0.0f ? x[i] : slope * x[i];
  return t.emit("leaky_relu", std::move(out), {a},
                [a, slope](Tape& t2, const Tape::BackwardCtx& c) {
                  c.emit(0, mul(t2, c.grad, lrelu_mask(t2, a, slope)));
                });
}

inline Var relu(Tape& t, Var a) { return leaky_relu(t, a, 0.0f); }

inline Var abs(Tape& t, Var a) {
  const Tensor& x = t.value(a);
  Tensor out(x.shape());
  for (int64_t i = 0, n = x.numel(); i < n; ++i) out[i] = std::fabs(x[i]);
  return t.emit("abs", std::move(out), {a}, [a](Tape& t2, const Tape::BackwardCtx& c) {
    c.emit(0, mul(t2, c.grad, sign_mask(t2, a)));
  });
}

inline Var sigmoid(Tape& t, Var a) {
  const Tensor& x = t.value(a);
  Tensor out(x.shape());
  for (int64_t i = 0, n = x.numel(); i < n; ++i)
    out[i] = 1.0f / (1.0f + std::exp(-x[i]));
  return t.emit("sigmoid", std::move(out), {a}, [](Tape& t2, const Tape::BackwardCtx& c) {
    // dy/dx = y (1 - y)
    Var y = c.self;
    Var one_minus = add_const(t2, neg(t2, y), 1.0f);
    c.emit(0, mul(t2, c.grad, mul(t2, y, one_minus)));
  });
}

inline Var recip(Tape& t, Var a) {
  const Tensor& x = t.value(a);
  Tensor out(x.shape());
  for (int64_t i = 0, n = x.numel(); i < n; ++i) out[i] = 1.0f / x[i];
  return t.emit("recip", std::move(out), {a}, [](Tape& t2, const Tape::BackwardCtx& c) {
    Var y2 = mul(t2, c.self, c.self);
    c.emit(0, neg(t2, mul(t2, c.grad, y2)));
  });
}

inline Var sqrt(Tape& t, Var a) {
  const Tensor& x = t.value(a);
  Tensor out(x.shape());
  for (int64_t i = 0, n = x.numel(); i < n; ++i) out[i] = std::sqrt(x[i]);
  return t.emit("sqrt", std::move(out), {a}, [](Tape& t2, const Tape::BackwardCtx& c) {
    c.emit(0, mul(t2, c.grad, scale(t2, recip(t2, c.self), 0.5f)));
  });
}

// y = 1/sqrt(x + eps), used by batch normalization.
inline Var rsqrt_eps(Tape& t, Var a, float eps) {
  const Tensor& x = t.value(a);
  Tensor out(x.shape());
  for (int64_t i = 0, n = x.numel(); i < n; ++i) out[i] = 1.0f / std::sqrt(x[i] + eps);
  return t.emit("rsqrt_eps", std::move(out), {a}, [](Tape& t2, const Tape::BackwardCtx& c) {
    // dy/dx = -0.5 y^3
    Var y3 = mul(t2, mul(t2, c.self, c.self), c.self);
    c.emit(0, mul(t2, c.grad, scale(t2, y3, -0.5f)));
  });
}

inline Var sum_all(Tape& t, Var a);

// x * s where s is a learned scalar (shape [1]).
inline Var scale_by(Tape& t, Var a, Var s) {
  const Tensor& x = t.value(a);
  const Tensor& sv = t.value(s);
  if (sv.numel() != 1) throw ShapeError("scale_by expects scalar second arg");
  const float f = sv[0];
  Tensor out(x.shape());
  for (int64_t i = 0, n = x.numel(); i < n; ++i) out[i] = x[i] * f;
  return t.emit("scale_by", std::move(out), {a, s},
                [a, s](Tape& t2, const Tape::BackwardCtx& c) {
                  if (c.wants(0)) c.emit(0, scale_by(t2, c.grad, s));
                  if (c.wants(1)) c.emit(1, sum_all(t2, mul(t2, c.grad, a)));
                });
}

inline Var detach(Tape& t, Var a) { return t.leaf(t.value(a), false); }

inline Var reshape(Tape& t, Var a, std::vector<int64_t> shape) {
  Tensor out = t.value(a).reshaped(shape);
  auto orig = t.value(a).shape();
  return t.emit("reshape", std::move(out), {a},
                [orig](Tape& t2, const Tape::BackwardCtx& c) {
                  c.emit(0, reshape(t2, c.grad, orig));
                });
}

// ---- reductions / broadcasts -------------------------------------------

inline Var sum_all(Tape& t, Var a);

inline Var expand_full(Tape& t, Var a, std::vector<int64_t> shape) {
  const Tensor& x = t.value(a);
  if (x.numel() != 1) throw ShapeError("expand_full expects scalar");
  Tensor out = Tensor::full(shape, x[0]);
  return t.emit("expand_full", std::move(out), {a},
                [](Tape& t2, const Tape::BackwardCtx& c) {
                  c.emit(0, sum_all(t2, c.grad));
                });
}

inline Var sum_all(Tape& t, Var a) {
  const Tensor& x = t.value(a);
  double acc = 0.0;
  for (int64_t i = 0, n = x.numel(); i < n; ++i) acc += x[i];
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  auto shape = x.shape();
  return t.emit("sum_all", std::move(out), {a},
                [shape](Tape& t2, const Tape::BackwardCtx& c) {
                  c.emit(0, expand_full(t2, c.grad, shape));
                });
}

inline Var mean_all(Tape& t, Var a) {
  return scale(t, sum_all(t, a), 1.0f / static_cast<float>(t.value(a).numel()));
}

inline Var sum_per_sample(Tape& t, Var a);

// v[N] broadcast to an [N, ...] shape.
inline Var sample_expand(Tape& t, Var a, std::vector<int64_t> shape) {
  const Tensor& x = t.value(a);
  const int64_t n_samples = shape.at(0);
  if (x.numel() != n_samples) throw ShapeError("sample_expand: size mismatch");
  Tensor out(shape);
  const int64_t inner = out.numel() / n_samples;
  for (int64_t n = 0; n < n_samples; ++n) {
    float v = x[n];
    float* po = out.data() + n * inner;
    for (int64_t i = 0; i < inner; ++i) po[i] = v;
  }
  return t.emit("sample_expand", std::move(out), {a},
                [](Tape& t2, const Tape::BackwardCtx& c) {
                  c.emit(0, sum_per_sample(t2, c.grad));
                });
}

inline Var sum_per_sample(Tape& t, Var a) {
  const Tensor& x = t.value(a);
  const int64_t n_samples = x.dim(0);
  const int64_t inner = x.numel() / n_samples;
  Tensor out({n_samples});
  for (int64_t n = 0; n < n_samples; ++n) {
    double acc = 0.0;
    const float* px = x.data() + n * inner;
    for (int64_t i = 0; i < inner; ++i) acc += px[i];
    out[n] = static_cast<float>(acc);
  }
  auto shape = x.shape();
  return t.emit("sum_per_sample", std::move(out), {a},
                [shape](Tape& t2, const Tape::BackwardCtx& c) {
                  c.emit(0, sample_expand(t2, c.grad, shape));
                });
}

// The (N, C, spatial...) channel views used by batchnorm and bias terms.
namespace detail {
inline void ncs(const Tensor& x, int64_t& n, int64_t& c, int64_t& s) {
  if (x.ndim() < 2) throw ShapeError("channel op needs rank >= 2, got " + x.shape_str());
  n = x.dim(0);
  c = x.dim(1);
  s = x.numel() / (n * c);
}
}  // namespace detail

inline Var sum_ex_channel(Tape& t, Var a);

// v[C] broadcast to an [N, C, ...] shape.
inline Var channel_expand(Tape& t, Var a, std::vector<int64_t> shape) {
  const Tensor& x = t.value(a);
  Tensor out(shape);
  int64_t n, c, s;
  detail::ncs(out, n, c, s);
  if (x.numel() != c) throw ShapeError("channel_expand: size mismatch");
  for (int64_t in = 0; in < n; ++in)
    for (int64_t ic = 0; ic < c; ++ic) {
      float v = x[ic];
      float* po = out.data() + (in * c + ic) * s;
      for (int64_t i = 0; i < s; ++i) po[i] = v;
    }
  return t.emit("channel_expand", std::move(out), {a},
                [](Tape& t2, const Tape::BackwardCtx& c2) {
                  c2.emit(0, sum_ex_channel(t2, c2.grad));
                });
}

// Sum over every axis except channel (axis 1): [N, C, ...] -> [C].
inline Var sum_ex_channel(Tape& t, Var a) {
  const Tensor& x = t.value(a);
  int64_t n, c, s;
  detail::ncs(x, n, c, s);
  Tensor out({c});
  std::vector<double> acc(c, 0.0);
  for (int64_t in = 0; in < n; ++in)
    for (int64_t ic = 0; ic < c; ++ic) {
      const float* px = x.data() + (in * c + ic) * s;
      double a2 = 0.0;
      for (int64_t i = 0; i < s; ++i) a2 += px[i];
      acc[ic] += a2;
    }
  for (int64_t ic = 0; ic < c; ++ic) out[ic] = static_cast<float>(acc[ic]);
  auto shape = x.shape();
  return t.emit("sum_ex_channel", std::move(out), {a},
                [shape](Tape& t2, const Tape::BackwardCtx& c2) {
                  c2.emit(0, channel_expand(t2, c2.grad, shape));
                });
}

// Row-wise ops on [R, C] matrices (attention).
inline Var sum_rows(Tape& t, Var a);

inline Var rows_expand(Tape& t, Var a, int64_t cols) {
  const Tensor& x = t.value(a);
  const int64_t rows = x.numel();
  Tensor out({rows, cols});
  for (int64_t r = 0; r < rows; ++r) {
    float v = x[r];
    float* po = out.data() + r * cols;
    for (int64_t j = 0; j < cols; ++j) po[j] = v;
  }
  return t.emit("rows_expand", std::move(out), {a},
                [](Tape& t2, const Tape::BackwardCtx& c) {
                  c.emit(0, sum_rows(t2, c.grad));
                });
}

inline Var sum_rows(Tape& t, Var a) {
  const Tensor& x = t.value(a);
  if (x.ndim() != 2) throw ShapeError("sum_rows expects rank 2");
  const int64_t rows = x.dim(0), cols = x.dim(1);
  Tensor out({rows});
  for (int64_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    const float* px = x.data() + r * cols;
    for (int64_t j = 0; j < cols; ++j) acc += px[j];
    out[r] = static_cast<float>(acc);
  }
  return t.emit("sum_rows", std::move(out), {a},
                [cols](Tape& t2, const Tape::BackwardCtx& c) {
                  c.emit(0, rows_expand(t2, c.grad, cols));
                });
}

inline Var softmax_rows(Tape& t, Var a) {
  const Tensor& x = t.value(a);
  if (x.ndim() != 2) throw ShapeError("softmax_rows expects rank 2");
  const int64_t rows = x.dim(0), cols = x.dim(1);
  Tensor out(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const float* px = x.data() + r * cols;
    float* po = out.data() + r * cols;
    float mx = px[0];
    for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, px[j]);
    double z = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      po[j] = std::exp(px[j] - mx);
      z += po[j];
    }
    const float inv = static_cast<float>(1.0 / z);
    for (int64_t j = 0; j < cols; ++j) po[j] *= inv;
  }
  return t.emit("softmax_rows", std::move(out), {a},
                [cols](Tape& t2, const Tape::BackwardCtx& c) {
                  // dx = y * (g - rowsum(g * y))
                  Var gy = mul(t2, c.grad, c.self);
                  Var s = rows_expand(t2, sum_rows(t2, gy), cols);
                  c.emit(0, mul(t2, c.self, sub(t2, c.grad, s)));
                });
}

// ---- matmul --------------------------------------------------------------

inline Var matmul(Tape& t, Var a, Var b, bool trans_a = false, bool trans_b = false) {
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  if (x.ndim() != 2 || y.ndim() != 2) throw ShapeError("matmul expects rank 2");
  const int64_t m = trans_a ? x.dim(1) : x.dim(0);
  const int64_t k = trans_a ? x.dim(0) : x.dim(1);
  const int64_t kb = trans_b ? y.dim(1) : y.dim(0);
  const int64_t n = trans_b ? y.dim(0) : y.dim(1);
  if (k != kb)
    throw ShapeError("matmul inner dims: " + x.shape_str() + " x " + y.shape_str());
  Tensor out({m, n});
  sgemm(trans_a, trans_b, static_cast<int>(m), static_cast<int>(n),
        static_cast<int>(k), x.data(), y.data(), out.data());
  return t.emit("matmul", std::move(out), {a, b},
                [a, b, trans_a, trans_b](Tape& t2, const Tape::BackwardCtx& c) {
                  if (c.wants(0)) {
                    Var ga = trans_a ? matmul(t2, b, c.grad, trans_b, true)
                                     : matmul(t2, c.grad, b, false, !trans_b);
                    c.emit(0, ga);
                  }
                  if (c.wants(1)) {
                    Var gb = trans_b ? matmul(t2, c.grad, a, true, trans_a)
                                     : matmul(t2, a, c.grad, !trans_a, false);
                    c.emit(1, gb);
                  }
                });
}

// ---- channel concat / slice / sample packing ------------------------------

inline Var slice_channels(Tape& t, Var a, int64_t c0, int64_t c1);

inline Var pad_channels(Tape& t, Var a, int64_t c0, int64_t c_total) {
  const Tensor& x = t.value(a);
  int64_t n, cs, s;
  detail::ncs(x, n, cs, s);
  auto shape = x.shape();
  shape[1] = c_total;
  Tensor out(shape);
  for (int64_t in = 0; in < n; ++in)
    for (int64_t ic = 0; ic < cs; ++ic) {
      const float* px = x.data() + (in * cs + ic) * s;
      float* po = out.data() + (in * c_total + c0 + ic) * s;
      for (int64_t i = 0; i < s; ++i) po[i] = px[i];
    }
  return t.emit("pad_channels", std::move(out), {a},
                [c0, cs](Tape& t2, const Tape::BackwardCtx& c) {
                  c.emit(0, slice_channels(t2, c.grad, c0, c0 + cs));
                });
}

inline Var slice_channels(Tape& t, Var a, int64_t c0, int64_t c1) {
  const Tensor& x = t.value(a);
  int64_t n, c, s;
  detail::ncs(x, n, c, s);
  if (c0 < 0 || c1 > c || c0 >= c1) throw ShapeError("slice_channels range");
  auto shape = x.shape();
  shape[1] = c1 - c0;
  Tensor out(shape);
  for (int64_t in = 0; in < n; ++in)
    for (int64_t ic = c0; ic < c1; ++ic) {
      const float* px = x.data() + (in * c + ic) * s;
      float* po = out.data() + (in * (c1 - c0) + (ic - c0)) * s;
      for (int64_t i = 0; i < s; ++i) po[i] = px[i];
    }
  return t.emit("slice_channels", std::move(out), {a},
                [c0, c](Tape& t2, const Tape::BackwardCtx& c2) {
                  c2.emit(0, pad_channels(t2, c2.grad, c0, c));
                });
}

inline Var concat_channels(Tape& t, Var a, Var b) {
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  int64_t n, ca, s, n2, cb, s2;
  detail::ncs(x, n, ca, s);
  detail::ncs(y, n2, cb, s2);
  if (n != n2 || s != s2)
    throw ShapeError("concat_channels: " + x.shape_str() + " vs " + y.shape_str());
  auto shape = x.shape();
  shape[1] = ca + cb;
  Tensor out(shape);
  for (int64_t in = 0; in < n; ++in) {
    std::copy(x.data() + in * ca * s, x.data() + (in + 1) * ca * s,
              out.data() + in * (ca + cb) * s);
    std::copy(y.data() + in * cb * s, y.data() + (in + 1) * cb * s,
              out.data() + (in * (ca + cb) + ca) * s);
  }
  return t.emit("concat_channels", std::move(out), {a, b},
                [ca, cb](Tape& t2, const Tape::BackwardCtx& c) {
                  if (c.wants(0)) c.emit(0, slice_channels(t2, c.grad, 0, ca));
                  if (c.wants(1)) c.emit(1, slice_channels(t2, c.grad, ca, ca + cb));
                });
}

inline Var stack_samples(Tape& t, const std::vector<Var>& parts);

inline Var select_sample(Tape& t, Var a, int64_t n) {
  const Tensor& x = t.value(a);
  const int64_t ns = x.dim(0);
  const int64_t inner = x.numel() / ns;
  std::vector<int64_t> shape(x.shape().begin() + 1, x.shape().end());
  Tensor out(shape);
  std::copy(x.data() + n * inner, x.data() + (n + 1) * inner, out.data());
  return t.emit("select_sample", std::move(out), {a},
                [n, ns](Tape& t2, const Tape::BackwardCtx& c) {
                  // scatter grad back into an all-zero [N, ...] tensor
                  const Tensor& g = t2.value(c.grad);
                  std::vector<int64_t> shape;
                  shape.push_back(ns);
                  for (auto d : g.shape()) shape.push_back(d);
                  Tensor out(shape);
                  std::copy(g.data(), g.data() + g.numel(), out.data() + n * g.numel());
                  Var v = t2.emit("scatter_sample", std::move(out), {c.grad},
                                  [n](Tape& t3, const Tape::BackwardCtx& c2) {
                                    c2.emit(0, select_sample(t3, c2.grad, n));
                                  });
                  c.emit(0, v);
                });
}

inline Var stack_samples(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("stack_samples: empty");
  const Tensor& first = t.value(parts[0]);
  std::vector<int64_t> shape;
  shape.push_back(static_cast<int64_t>(parts.size()));
  for (auto d : first.shape()) shape.push_back(d);
  Tensor out(shape);
  const int64_t inner = first.numel();
  for (size_t i = 0; i < parts.size(); ++i) {
    const Tensor& p = t.value(parts[i]);
    if (!p.same_shape(first)) throw ShapeError("stack_samples: ragged parts");
    std::copy(p.data(), p.data() + inner, out.data() + static_cast<int64_t>(i) * inner);
  }
  return t.emit("stack_samples", std::move(out), parts,
                [](Tape& t2, const Tape::BackwardCtx& c) {
                  const auto& nd = t2.node(c.self);
                  for (size_t i = 0; i < nd.inputs.size(); ++i)
                    if (c.wants(static_cast<int>(i)))
                      c.emit(static_cast<int>(i),
                             select_sample(t2, c.grad, static_cast<int64_t>(i)));
                });
}

}  // namespace ops

inline Var Tape::add_vars(Var a, Var b) { return ops::add(*this, a, b); }

}  // namespace madgan
