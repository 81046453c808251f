#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "madgan/conv.hpp"
#include "madgan/losses.hpp"
#include "madgan/tape.hpp"

using namespace madgan;

namespace {

// Central finite differences on one tensor entry of a scalar-valued function.
double fd(const std::function<double()>& eval, Tensor& x, int64_t i, double h) {
  const float orig = x[i];
  x[i] = static_cast<float>(orig + h);
  const double hi = eval();
  x[i] = static_cast<float>(orig - h);
  const double lo = eval();
  x[i] = orig;
  return (hi - lo) / (2.0 * h);
}

// Compares taped gradients of `build` (a scalar function of the inputs bound
// through tape leaves) against finite differences, every coordinate.
void check_grads(std::vector<Tensor*> inputs,
                 const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                 double h = 3e-3, double tol = 2e-2) {
  Tape t;
  std::vector<Var> vars;
  for (Tensor* in : inputs) vars.push_back(t.leaf(*in, true));
  Var loss = build(t, vars);
  auto grads = t.grad(loss, vars);

  auto eval = [&]() {
    Tape t2;
    std::vector<Var> vs;
    for (Tensor* in : inputs) vs.push_back(t2.leaf(*in, true));
    return static_cast<double>(t2.value(build(t2, vs))[0]);
  };

  for (size_t k = 0; k < inputs.size(); ++k) {
    REQUIRE(grads[k].has_value());
    const Tensor& g = t.value(*grads[k]);
    double gmax = 0.0;
    for (int64_t i = 0; i < g.numel(); ++i) gmax = std::max(gmax, (double)std::fabs(g[i]));
    const double atol = tol * (gmax + 1e-6);
    for (int64_t i = 0; i < inputs[k]->numel(); ++i) {
      const double num = fd(eval, *inputs[k], i, h);
      const double ana = g[i];
      INFO("input " << k << " coord " << i << " analytic " << ana << " numeric " << num);
      CHECK(std::fabs(num - ana) < atol + tol * std::fabs(ana));
    }
  }
}

Rng test_rng(uint64_t n) { return Rng::derive(20240601, "autodiff-test", n); }

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
  Rng rng = test_rng(1);
  Tensor a = Tensor::randn({2, 3}, rng);
  Tensor b = Tensor::randn({2, 3}, rng);
  check_grads({&a, &b}, [](Tape& t, const std::vector<Var>& v) {
    Var x = ops::mul(t, ops::add(t, v[0], v[1]), ops::sub(t, v[0], v[1]));
    Var y = ops::sigmoid(t, ops::scale(t, x, 0.7f));
    return ops::sum_all(t, y);
  });
}

TEST_CASE("abs and leaky relu gradients away from kinks") {
  Rng rng = test_rng(2);
  Tensor a({2, 4});
  for (int64_t i = 0; i < a.numel(); ++i)
    a[i] = static_cast<float>(rng.uniform(0.2, 1.0) * (rng.bernoulli(0.5) ? 1 : -1));
  check_grads({&a}, [](Tape& t, const std::vector<Var>& v) {
    Var x = ops::leaky_relu(t, v[0], 0.2f);
    return ops::sum_all(t, ops::abs(t, x));
  });
}

TEST_CASE("sqrt recip rsqrt") {
  Rng rng = test_rng(3);
  Tensor a = Tensor::rand_uniform({5}, rng, 0.5f, 2.0f);
  check_grads({&a}, [](Tape& t, const std::vector<Var>& v) {
    Var s = ops::sqrt(t, v[0]);
    Var r = ops::recip(t, ops::add_const(t, v[0], 1.0f));
    Var q = ops::rsqrt_eps(t, v[0], 0.1f);
    return ops::sum_all(t, ops::add(t, s, ops::add(t, r, q)));
  });
}

TEST_CASE("matmul gradients incl. transposes") {
  Rng rng = test_rng(4);
  Tensor a = Tensor::randn({3, 4}, rng);
  Tensor b = Tensor::randn({4, 2}, rng);
  check_grads({&a, &b}, [](Tape& t, const std::vector<Var>& v) {
    return ops::sum_all(t, ops::matmul(t, v[0], v[1]));
  });
  Tensor at = Tensor::randn({4, 3}, rng);
  check_grads({&at, &b}, [](Tape& t, const std::vector<Var>& v) {
    return ops::sum_all(t, ops::matmul(t, v[0], v[1], true, false));
  });
  Tensor bt = Tensor::randn({2, 4}, rng);
  check_grads({&a, &bt}, [](Tape& t, const std::vector<Var>& v) {
    return ops::sum_all(t, ops::matmul(t, v[0], v[1], false, true));
  });
}

TEST_CASE("reductions and broadcasts") {
  Rng rng = test_rng(5);
  Tensor a = Tensor::randn({2, 3, 2, 2}, rng);
  Tensor c = Tensor::randn({3}, rng);
  check_grads({&a, &c}, [](Tape& t, const std::vector<Var>& v) {
    Var x = ops::mul(t, v[0], ops::channel_expand(t, v[1], t.value(v[0]).shape()));
    Var per = ops::sum_per_sample(t, x);
    return ops::sum_all(t, ops::mul(t, per, per));
  });
}

TEST_CASE("softmax rows: stochasticity and gradient") {
  Rng rng = test_rng(6);
  Tensor a = Tensor::randn({4, 5}, rng);
  {
    Tape t;
    Var y = ops::softmax_rows(t, t.leaf(a));
    const Tensor& yv = t.value(y);
    for (int64_t r = 0; r < 4; ++r) {
      double s = 0;
      for (int64_t j = 0; j < 5; ++j) s += yv[r * 5 + j];
      CHECK(std::fabs(s - 1.0) < 1e-5);
    }
  }
  Tensor w = Tensor::randn({4, 5}, rng);
  check_grads({&a}, [&w](Tape& t, const std::vector<Var>& v) {
    Var y = ops::softmax_rows(t, v[0]);
    return ops::sum_all(t, ops::mul(t, y, t.leaf(w)));
  });
}

TEST_CASE("concat slice stack select") {
  Rng rng = test_rng(7);
  Tensor a = Tensor::randn({2, 2, 2, 2}, rng);
  Tensor b = Tensor::randn({2, 3, 2, 2}, rng);
  check_grads({&a, &b}, [](Tape& t, const std::vector<Var>& v) {
    Var c = ops::concat_channels(t, v[0], v[1]);
    Var s = ops::slice_channels(t, c, 1, 4);
    return ops::sum_all(t, ops::mul(t, s, s));
  });
  Tensor x = Tensor::randn({3, 2, 4}, rng);
  check_grads({&x}, [](Tape& t, const std::vector<Var>& v) {
    std::vector<Var> parts;
    for (int64_t i = 0; i < 3; ++i) {
      Var s = ops::select_sample(t, v[0], 2 - i);
      parts.push_back(ops::mul(t, s, s));
    }
    return ops::sum_all(t, ops::stack_samples(t, parts));
  });
}

TEST_CASE("conv2d family matches finite differences") {
  Rng rng = test_rng(8);
  ops::ConvGeom g;  // 4x4 s2 p1
  Tensor x = Tensor::randn({2, 3, 8, 8}, rng, 0.5f);
  Tensor w = Tensor::randn({4, 3, 4, 4}, rng, 0.3f);
  check_grads({&x, &w}, [g](Tape& t, const std::vector<Var>& v) {
    Var y = ops::conv2d(t, v[0], v[1], g);
    return ops::sum_all(t, ops::mul(t, y, y));
  });

  // transposed direction
  Tensor gy = Tensor::randn({2, 4, 4, 4}, rng, 0.5f);
  check_grads({&gy, &w}, [g](Tape& t, const std::vector<Var>& v) {
    Var y = ops::conv2d_bwd_input(t, v[0], v[1], g, 8, 8);
    return ops::sum_all(t, ops::mul(t, y, y));
  });

  // weight-gradient op differentiated in turn
  check_grads({&x, &gy}, [g](Tape& t, const std::vector<Var>& v) {
    Var y = ops::conv2d_bwd_weight(t, v[0], v[1], g);
    return ops::sum_all(t, ops::mul(t, y, y));
  });

  // 1x1 fast path
  ops::ConvGeom one{1, 1, 1, 1, 0, 0};
  Tensor w1 = Tensor::randn({2, 3, 1, 1}, rng, 0.4f);
  check_grads({&x, &w1}, [one](Tape& t, const std::vector<Var>& v) {
    Var y = ops::conv2d(t, v[0], v[1], one);
    return ops::sum_all(t, ops::mul(t, y, y));
  });
}

TEST_CASE("gradient flows through a taped backward pass (double backprop)") {
  // f(w) = || d/dx critic(x; w) ||^2 for a tiny conv critic: checked against
  // finite differences in w. This is the mechanism the gradient penalty
  // relies on.
  Rng rng = test_rng(9);
  ops::ConvGeom g;
  Tensor x = Tensor::randn({1, 2, 4, 4}, rng, 0.7f);
  Tensor w = Tensor::randn({3, 2, 4, 4}, rng, 0.4f);

  auto build = [&x, g](Tape& t, const std::vector<Var>& v) {
    Var xl = t.leaf(x, true);
    Var y = ops::conv2d(t, xl, v[0], g);
    Var act = ops::leaky_relu(t, y, 0.2f);
    Var score = ops::sum_all(t, act);
    Var wrt[] = {xl};
    auto grads = t.grad(score, wrt);
    REQUIRE(grads[0].has_value());
    Var gx = *grads[0];
    return ops::sum_all(t, ops::mul(t, gx, gx));
  };
  check_grads({&w}, build, 3e-3, 3e-2);
}

TEST_CASE("gradient penalty analytic cases") {
  // Linear critic sum(x): input gradient is all ones over P pixels, so
  // gp = (sqrt(P) - 1)^2; P = 4 gives exactly 1.
  Tensor real({1, 1, 2, 2}, {0.1f, 0.2f, 0.3f, 0.4f});
  Tensor fake({1, 1, 2, 2}, {0.5f, 0.6f, 0.7f, 0.8f});
  {
    Tape t;
    Rng rng = test_rng(10);
    CriticFn critic = [](Tape& t2, Var x) {
      return ops::reshape(t2, ops::sum_all(t2, x), {1, 1});
    };
    Var gp = gradient_penalty(t, critic, real, fake, rng);
    CHECK(t.value(gp)[0] == 1.0f);
  }
  {
    Tape t;
    Rng rng = test_rng(11);
    CriticFn critic = [](Tape& t2, Var x) {
      Var z = ops::scale(t2, ops::sum_all(t2, x), 0.0f);
      return ops::reshape(t2, ops::add_const(t2, z, 5.0f), {1, 1});
    };
    Var gp = gradient_penalty(t, critic, real, fake, rng);
    CHECK(t.value(gp)[0] == 1.0f);
  }
  // 1-Lipschitz linear critic with unit-norm gradient: penalty is zero.
  {
    Tape t;
    Rng rng = test_rng(12);
    CriticFn critic = [](Tape& t2, Var x) {
      return ops::reshape(t2, ops::scale(t2, ops::sum_all(t2, x), 0.5f), {1, 1});
    };
    Var gp = gradient_penalty(t, critic, real, fake, rng);
    CHECK(std::fabs(t.value(gp)[0]) < 1e-12f);
  }
}

TEST_CASE("gradient penalty is deterministic under a fixed seed") {
  Rng r1 = test_rng(13), r2 = test_rng(13);
  Rng init = test_rng(14);
  Tensor real = Tensor::rand_uniform({3, 1, 2, 2}, init);
  Tensor fake = Tensor::rand_uniform({3, 1, 2, 2}, init);
  Tensor w = Tensor::randn({1, 4}, init);
  CriticFn critic = [&w](Tape& t, Var x) {
    Var flat = ops::reshape(t, x, {3, 4});
    return ops::matmul(t, flat, t.param(w), false, true);
  };
  Tape t1, t2;
  Var a = gradient_penalty(t1, critic, real, fake, r1);
  Var b = gradient_penalty(t2, critic, real, fake, r2);
  CHECK(t1.value(a)[0] == t2.value(b)[0]);
  CHECK(t1.value(a)[0] >= 0.0f);
}

TEST_CASE("gradient penalty parameter gradient matches finite differences") {
  Rng init = test_rng(15);
  Tensor real = Tensor::rand_uniform({2, 1, 2, 2}, init);
  Tensor fake = Tensor::rand_uniform({2, 1, 2, 2}, init);
  Tensor w = Tensor::randn({1, 4}, init, 0.8f);

  auto gp_value = [&](Tensor& wt) -> double {
    Tape t;
    Rng rng = test_rng(16);
    CriticFn critic = [&wt](Tape& t2, Var x) {
      Var flat = ops::reshape(t2, x, {2, 4});
      return ops::matmul(t2, flat, t2.param(wt), false, true);
    };
    Var gp = gradient_penalty(t, critic, real, fake, rng);
    return t.value(gp)[0];
  };

  Tape t;
  Rng rng = test_rng(16);
  CriticFn critic = [&w](Tape& t2, Var x) {
    Var flat = ops::reshape(t2, x, {2, 4});
    return ops::matmul(t2, flat, t2.param(w), false, true);
  };
  Var gp = gradient_penalty(t, critic, real, fake, rng);
  Var wv = t.param(w);
  Var wrt[] = {wv};
  auto grads = t.grad(gp, wrt);
  REQUIRE(grads[0].has_value());
  const Tensor& g = t.value(*grads[0]);

  auto eval = [&]() { return gp_value(w); };
  for (int64_t i = 0; i < w.numel(); ++i) {
    const double num = fd(eval, w, i, 1e-3);
    const double err = std::fabs(num - g[i]) / std::max({std::fabs(num), std::fabs((double)g[i]), 1e-2});
    INFO("coord " << i << " analytic " << g[i] << " numeric " << num);
    CHECK(err < 1e-2);
  }
}
