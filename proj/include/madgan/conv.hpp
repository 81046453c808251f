#pragma once

#include <vector>

#include "madgan/tape.hpp"

namespace madgan::ops {

struct ConvGeom {
  int64_t kh = 4, kw = 4;
  int64_t sh = 2, sw = 2;
  int64_t ph = 1, pw = 1;

  int64_t out_h(int64_t h) const { return (h + 2 * ph - kh) / sh + 1; }
  int64_t out_w(int64_t w) const { return (w + 2 * pw - kw) / sw + 1; }
};

namespace detail {

// col[(ci*kh+i)*kw+j, ho*wo_n+wo] = x[ci, ho*sh+i-ph, wo*sw+j-pw], one sample.
inline void im2col(const float* x, int64_t ci_n, int64_t h, int64_t w,
                   const ConvGeom& g, float* col) {
  const int64_t ho_n = g.out_h(h), wo_n = g.out_w(w);
  const int64_t p = ho_n * wo_n;
  for (int64_t ci = 0; ci < ci_n; ++ci) {
    const float* xc = x + ci * h * w;
    for (int64_t i = 0; i < g.kh; ++i)
      for (int64_t j = 0; j < g.kw; ++j) {
        float* row = col + ((ci * g.kh + i) * g.kw + j) * p;
        for (int64_t ho = 0; ho < ho_n; ++ho) {
          const int64_t y = ho * g.sh + i - g.ph;
          if (y < 0 || y >= h) {
            for (int64_t wo = 0; wo < wo_n; ++wo) row[ho * wo_n + wo] = 0.0f;
            continue;
          }
          const float* xr = xc + y * w;
          for (int64_t wo = 0; wo < wo_n; ++wo) {
            const int64_t xcol = wo * g.sw + j - g.pw;
            row[ho * wo_n + wo] = (xcol >= 0 && xcol < w) ? xr[xcol] : 0.0f;
          }
        }
      }
  }
}

// Transpose of im2col: scatter-add columns back into the image.
inline void col2im(const float* col, int64_t ci_n, int64_t h, int64_t w,
                   const ConvGeom& g, float* x) {
  const int64_t ho_n = g.out_h(h), wo_n = g.out_w(w);
  const int64_t p = ho_n * wo_n;
  for (int64_t ci = 0; ci < ci_n; ++ci) {
    float* xc = x + ci * h * w;
    for (int64_t i = 0; i < g.kh; ++i)
      for (int64_t j = 0; j < g.kw; ++j) {
        const float* row = col + ((ci * g.kh + i) * g.kw + j) * p;
        for (int64_t ho = 0; ho < ho_n; ++ho) {
          const int64_t y = ho * g.sh + i - g.ph;
          if (y < 0 || y >= h) continue;
          float* xr = xc + y * w;
          for (int64_t wo = 0; wo < wo_n; ++wo) {
            const int64_t xcol = wo * g.sw + j - g.pw;
            if (xcol >= 0 && xcol < w) xr[xcol] += row[ho * wo_n + wo];
          }
        }
      }
  }
}

inline bool is_1x1(const ConvGeom& g) {
  return g.kh == 1 && g.kw == 1 && g.sh == 1 && g.sw == 1 && g.ph == 0 && g.pw == 0;
}

}  // namespace detail

Var conv2d(Tape& t, Var x, Var w, const ConvGeom& g);
Var conv2d_bwd_input(Tape& t, Var gy, Var w, const ConvGeom& g, int64_t h, int64_t w_in);
Var conv2d_bwd_weight(Tape& t, Var x, Var gy, const ConvGeom& g);

// y[n,co,:,:] = sum_ci w[co,ci,:,:] * x[n,ci,:,:]  (cross-correlation)
inline Var conv2d(Tape& t, Var x, Var w, const ConvGeom& g) {
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(w);
  if (xv.ndim() != 4 || wv.ndim() != 4) throw ShapeError("conv2d expects rank-4 x and w");
  const int64_t n = xv.dim(0), ci = xv.dim(1), h = xv.dim(2), wi = xv.dim(3);
  const int64_t co = wv.dim(0);
  if (wv.dim(1) != ci || wv.dim(2) != g.kh || wv.dim(3) != g.kw)
    throw ShapeError("conv2d weight " + wv.shape_str() + " vs input " + xv.shape_str());
  const int64_t ho = g.out_h(h), wo = g.out_w(wi);
  if (ho <= 0 || wo <= 0) throw ShapeError("conv2d: input smaller than kernel");
  const int64_t k = ci * g.kh * g.kw, p = ho * wo;
  Tensor out({n, co, ho, wo});
  std::vector<float> col;
  if (!detail::is_1x1(g)) col.resize(static_cast<size_t>(k) * p);
  for (int64_t in = 0; in < n; ++in) {
    const float* xp = xv.data() + in * ci * h * wi;
    const float* cp = xp;
    if (!detail::is_1x1(g)) {
      detail::im2col(xp, ci, h, wi, g, col.data());
      cp = col.data();
    }
    sgemm(false, false, static_cast<int>(co), static_cast<int>(p),
          static_cast<int>(k), wv.data(), cp, out.data() + in * co * p);
  }
  return t.emit("conv2d", std::move(out), {x, w},
                [g, h, wi](Tape& t2, const Tape::BackwardCtx& c) {
                  const auto& nd = t2.node(c.self);
                  Var x2 = nd.inputs[0], w2 = nd.inputs[1];
                  if (c.wants(0)) c.emit(0, conv2d_bwd_input(t2, c.grad, w2, g, h, wi));
                  if (c.wants(1)) c.emit(1, conv2d_bwd_weight(t2, x2, c.grad, g));
                });
}

// Adjoint of conv2d in its input: maps a [n,co,ho,wo] tensor back to
// [n,ci,h,w]. Also serves as the forward pass of transposed convolution.
inline Var conv2d_bwd_input(Tape& t, Var gy, Var w, const ConvGeom& g, int64_t h,
                            int64_t w_in) {
  const Tensor& gv = t.value(gy);
  const Tensor& wv = t.value(w);
  if (gv.ndim() != 4 || wv.ndim() != 4)
    throw ShapeError("conv2d_bwd_input expects rank-4 tensors");
  const int64_t n = gv.dim(0), co = gv.dim(1), ho = gv.dim(2), wo = gv.dim(3);
  const int64_t ci = wv.dim(1);
  if (wv.dim(0) != co || ho != g.out_h(h) || wo != g.out_w(w_in))
    throw ShapeError("conv2d_bwd_input geometry mismatch");
  const int64_t k = ci * g.kh * g.kw, p = ho * wo;
  Tensor out({n, ci, h, w_in});
  std::vector<float> col;
  if (!detail::is_1x1(g)) col.resize(static_cast<size_t>(k) * p);
  for (int64_t in = 0; in < n; ++in) {
    const float* gp = gv.data() + in * co * p;
    float* xp = out.data() + in * ci * h * w_in;
    if (detail::is_1x1(g)) {
      sgemm(true, false, static_cast<int>(k), static_cast<int>(p),
            static_cast<int>(co), wv.data(), gp, xp);
    } else {
      sgemm(true, false, static_cast<int>(k), static_cast<int>(p),
            static_cast<int>(co), wv.data(), gp, col.data());
      detail::col2im(col.data(), ci, h, w_in, g, xp);
    }
  }
  return t.emit("conv2d_bwd_input", std::move(out), {gy, w},
                [g](Tape& t2, const Tape::BackwardCtx& c) {
                  const auto& nd = t2.node(c.self);
                  Var gy2 = nd.inputs[0], w2 = nd.inputs[1];
                  if (c.wants(0)) c.emit(0, conv2d(t2, c.grad, w2, g));
                  if (c.wants(1)) c.emit(1, conv2d_bwd_weight(t2, c.grad, gy2, g));
                });
}

// Adjoint of conv2d in its weight: [n,ci,h,w] x [n,co,ho,wo] -> [co,ci,kh,kw].
inline Var conv2d_bwd_weight(Tape& t, Var x, Var gy, const ConvGeom& g) {
  const Tensor& xv = t.value(x);
  const Tensor& gv = t.value(gy);
  const int64_t n = xv.dim(0), ci = xv.dim(1), h = xv.dim(2), wi = xv.dim(3);
  const int64_t co = gv.dim(1), ho = gv.dim(2), wo = gv.dim(3);
  if (gv.dim(0) != n || ho != g.out_h(h) || wo != g.out_w(wi))
    throw ShapeError("conv2d_bwd_weight geometry mismatch");
  const int64_t k = ci * g.kh * g.kw, p = ho * wo;
  Tensor out({co, ci, g.kh, g.kw});
  std::vector<float> col;
  if (!detail::is_1x1(g)) col.resize(static_cast<size_t>(k) * p);
  for (int64_t in = 0; in < n; ++in) {
    const float* xp = xv.data() + in * ci * h * wi;
    const float* cp = xp;
    if (!detail::is_1x1(g)) {
      detail::im2col(xp, ci, h, wi, g, col.data());
      cp = col.data();
    }
    sgemm(false, true, static_cast<int>(co), static_cast<int>(k),
          static_cast<int>(p), gv.data() + in * co * p, cp, out.data(),
          /*accumulate=*/in > 0);
  }
  const int64_t hh = h, ww = wi;
  return t.emit("conv2d_bwd_weight", std::move(out), {x, gy},
                [g, hh, ww](Tape& t2, const Tape::BackwardCtx& c) {
                  const auto& nd = t2.node(c.self);
                  Var x2 = nd.inputs[0], gy2 = nd.inputs[1];
                  if (c.wants(0)) c.emit(0, conv2d_bwd_input(t2, gy2, c.grad, g, hh, ww));
                  if (c.wants(1)) c.emit(1, conv2d(t2, x2, c.grad, g));
                });
}

}  // namespace madgan::ops
