#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "madgan/rng.hpp"
#include "madgan/tape.hpp"
#include "madgan/tensor.hpp"

namespace madgan {

// ---- scalar reconstruction metrics ----------------------------------------
//
// These are the diagnosis-side quantities: plain sums over pixels, accumulated
// in double so they can be checked against brute-force oracles tightly.

inline void check_metric_pair(const Tensor& x, const Tensor& y) {
  if (!x.same_shape(y))
    throw ShapeError("metric on mismatched shapes " + x.shape_str() + " vs " +
                     y.shape_str());
}

// sum_i |x_i - y_i|
inline double l1_loss(const Tensor& x, const Tensor& y) {
  check_metric_pair(x, y);
  double acc = 0.0;
  for (int64_t i = 0, n = x.numel(); i < n; ++i)
    acc += std::fabs(static_cast<double>(x[i]) - static_cast<double>(y[i]));
  return acc;
}

// sum_i (x_i - y_i)^2
inline double l2_loss(const Tensor& x, const Tensor& y) {
  check_metric_pair(x, y);
  double acc = 0.0;
  for (int64_t i = 0, n = x.numel(); i < n; ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    acc += d * d;
  }
  return acc;
}

inline double l1_loss_mean(const Tensor& x, const Tensor& y) {
  return l1_loss(x, y) / static_cast<double>(x.numel());
}

inline double l2_loss_mean(const Tensor& x, const Tensor& y) {
  return l2_loss(x, y) / static_cast<double>(x.numel());
}

// Unsummed squared-difference image, consumed by the overlay renderer.
inline Tensor l2_map(const Tensor& x, const Tensor& y) {
  check_metric_pair(x, y);
  Tensor out(x.shape());
  for (int64_t i = 0, n = x.numel(); i < n; ++i) {
    const float d = x[i] - y[i];
    out[i] = d * d;
  }
  return out;
}

// ---- training objectives ---------------------------------------------------

// Per-step scalar record written to the loss log.
struct LossReport {
  int64_t step = 0;
  double l1 = 0.0;  // Eq.-style pixel sum, averaged over the batch
  double l2 = 0.0;
  double critic_real = 0.0;
  double critic_fake = 0.0;
  double gp = 0.0;
  double g_total = 0.0;
  double d_total = 0.0;

  bool finite() const {
    return std::isfinite(l1) && std::isfinite(l2) && std::isfinite(critic_real) &&
           std::isfinite(critic_fake) && std::isfinite(gp) &&
           std::isfinite(g_total) && std::isfinite(d_total);
  }
};

using CriticFn = std::function<Var(Tape&, Var)>;

// E[(||grad_xhat critic(xhat)||_2 - 1)^2], xhat = eps*real + (1-eps)*fake with
// per-sample eps ~ U[0,1). The returned Var stays differentiable w.r.t. the
// critic parameters through the taped first backward pass.
inline Var gradient_penalty(Tape& t, const CriticFn& critic, const Tensor& real,
                            const Tensor& fake, Rng& rng) {
  if (!real.same_shape(fake))
    throw ShapeError("gradient_penalty: real " + real.shape_str() + " vs fake " +
                     fake.shape_str());
  const int64_t n = real.dim(0);
  const int64_t inner = real.numel() / n;
  Tensor xhat(real.shape());
  for (int64_t i = 0; i < n; ++i) {
    const float eps = static_cast<float>(rng.uniform());
    const float* pr = real.data() + i * inner;
    const float* pf = fake.data() + i * inner;
    float* po = xhat.data() + i * inner;
    for (int64_t j = 0; j < inner; ++j) po[j] = eps * pr[j] + (1.0f - eps) * pf[j];
  }
  Var x = t.leaf(std::move(xhat), /*requires_grad=*/true);
  Var scores = critic(t, x);
  Var seed = ops::sum_all(t, scores);
  Var wrt[] = {x};
  auto grads = t.grad(seed, wrt);
  if (!grads[0].has_value())
    throw NumericalError("gradient_penalty: critic does not depend on its input");
  Var g = *grads[0];
  const Tensor& gv = t.value(g);
  for (int64_t i = 0, m = gv.numel(); i < m; ++i)
    if (!std::isfinite(gv[i]))
      throw NumericalError("gradient_penalty: non-finite input gradient");
  Var norm = ops::sqrt(t, ops::sum_per_sample(t, ops::mul(t, g, g)));
  Var diff = ops::add_const(t, norm, -1.0f);
  return ops::mean_all(t, ops::mul(t, diff, diff));
}

// -mean(critic(fake)) + lambda_l1 * mean|fake - target|; lambda_l1 = 0 is the
// "w/o l1" ablation.
inline Var generator_loss(Tape& t, Var critic_fake_scores, Var fake, Var target,
                          float lambda_l1) {
  Var adv = ops::neg(t, ops::mean_all(t, critic_fake_scores));
  if (lambda_l1 == 0.0f) return adv;
  Var l1 = ops::mean_all(t, ops::abs(t, ops::sub(t, fake, target)));
  return ops::add(t, adv, ops::scale(t, l1, lambda_l1));
}

// mean(critic(fake)) - mean(critic(real)) + lambda_gp * gp. With
// `flip_labels`, the real/fake roles swap (the paper's "once in three times"
// label flipping); the penalty term is symmetric in the pair and unaffected.
inline Var critic_loss(Tape& t, Var scores_real, Var scores_fake, Var gp,
                       float lambda_gp, bool flip_labels) {
  Var mr = ops::mean_all(t, scores_real);
  Var mf = ops::mean_all(t, scores_fake);
  Var base = flip_labels ? ops::sub(t, mr, mf) : ops::sub(t, mf, mr);
  return ops::add(t, base, ops::scale(t, gp, lambda_gp));
}

}  // namespace madgan
