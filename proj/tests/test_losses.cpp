#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>

#include "madgan/losses.hpp"

using namespace madgan;

namespace {

// Brute-force double-loop oracles, kept deliberately independent of the
// library implementations.
double l1_oracle(const Tensor& x, const Tensor& y) {
  double acc = 0;
  for (int64_t i = 0; i < x.dim(0); ++i)
    for (int64_t j = 0; j < x.dim(1); ++j) {
      const int64_t k = i * x.dim(1) + j;
      acc += std::fabs(static_cast<double>(x[k]) - static_cast<double>(y[k]));
    }
  return acc;
}

double l2_oracle(const Tensor& x, const Tensor& y) {
  double acc = 0;
  for (int64_t i = 0; i < x.dim(0); ++i)
    for (int64_t j = 0; j < x.dim(1); ++j) {
      const int64_t k = i * x.dim(1) + j;
      const double d = static_cast<double>(x[k]) - static_cast<double>(y[k]);
      acc += d * d;
    }
  return acc;
}

}  // namespace

TEST_CASE("l1/l2 pinned values") {
  // all-zero vs all-one over 10 pixels: l1 = 10
  Tensor z({2, 5});
  Tensor o = Tensor::full({2, 5}, 1.0f);
  CHECK(l1_loss(z, o) == 10.0);
  CHECK(l1_loss(o, o) == 0.0);
  CHECK(l2_loss(o, o) == 0.0);
  // all-zero vs all-0.5 over 4 pixels: l2 = 4 * 0.25 = 1
  Tensor z4({2, 2});
  Tensor h4 = Tensor::full({2, 2}, 0.5f);
  CHECK(l2_loss(z4, h4) == 1.0);
}

TEST_CASE("l1/l2 match the double-loop oracle on random pairs") {
  Rng rng(303);
  for (int rep = 0; rep < 100; ++rep) {
    Tensor x = Tensor::rand_uniform({7, 11}, rng);
    Tensor y = Tensor::rand_uniform({7, 11}, rng);
    const double l1 = l1_loss(x, y);
    const double l2 = l2_loss(x, y);
    CHECK(std::fabs(l1 - l1_oracle(x, y)) <= 1e-9 * std::max(1.0, l1_oracle(x, y)));
    CHECK(std::fabs(l2 - l2_oracle(x, y)) <= 1e-9 * std::max(1.0, l2_oracle(x, y)));
  }
}

TEST_CASE("l1/l2 symmetry, non-negativity, zero iff equal") {
  Rng rng(304);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor x = Tensor::rand_uniform({4, 6}, rng);
    Tensor y = Tensor::rand_uniform({4, 6}, rng);
    CHECK(l1_loss(x, y) == l1_loss(y, x));
    CHECK(l2_loss(x, y) == l2_loss(y, x));
    CHECK(l1_loss(x, y) >= 0.0);
    CHECK(l2_loss(x, y) >= 0.0);
    CHECK((l1_loss(x, y) == 0.0) == (std::memcmp(x.data(), y.data(),
                                                 x.numel() * sizeof(float)) == 0));
  }
}

TEST_CASE("l2 dominates l1 for outlier pixels") {
  // single-pixel error e > 1: squared contribution exceeds absolute one
  for (double e : {1.5, 2.0, 5.0}) {
    Tensor a({1, 1}, {0.0f});
    Tensor b({1, 1}, {static_cast<float>(e)});
    CHECK(l2_loss(a, b) > l1_loss(a, b));
  }
}

TEST_CASE("mismatched shapes raise ShapeError") {
  Tensor a({2, 3});
  Tensor b({3, 2});
  CHECK_THROWS_AS(l1_loss(a, b), ShapeError);
  CHECK_THROWS_AS(l2_loss(a, b), ShapeError);
  CHECK_THROWS_AS(l2_map(a, b), ShapeError);
}

TEST_CASE("l2_map is the unsummed squared difference") {
  Rng rng(305);
  Tensor x = Tensor::rand_uniform({3, 4}, rng);
  Tensor y = Tensor::rand_uniform({3, 4}, rng);
  Tensor m = l2_map(x, y);
  double acc = 0;
  for (int64_t i = 0; i < m.numel(); ++i) acc += m[i];
  CHECK_THAT(acc, Catch::Matchers::WithinRel(l2_loss(x, y), 1e-6));
}

TEST_CASE("generator loss: ablation identity and l1 ordering") {
  Rng rng(306);
  Tensor fake = Tensor::rand_uniform({2, 3, 4, 4}, rng);
  Tensor target = Tensor::rand_uniform({2, 3, 4, 4}, rng);
  Tensor scores({2, 1}, {0.3f, -0.1f});

  Tape t;
  Var sf = t.leaf(scores);
  Var fk = t.leaf(fake);
  Var tg = t.leaf(target);

  // lambda_l1 = 0 reduces to the pure adversarial term
  Var pure = generator_loss(t, sf, fk, tg, 0.0f);
  CHECK_THAT(t.value(pure)[0], Catch::Matchers::WithinAbs(-0.1, 1e-6));

  // perfect reconstruction leaves only the adversarial term
  Var perfect = generator_loss(t, sf, tg, tg, 100.0f);
  CHECK_THAT(t.value(perfect)[0], Catch::Matchers::WithinAbs(-0.1, 1e-6));

  // equal critic scores: the lower-l1 candidate wins
  Tensor closer = target.clone();
  closer[0] += 0.05f;
  Var g_close = generator_loss(t, sf, t.leaf(closer), tg, 100.0f);
  Var g_far = generator_loss(t, sf, fk, tg, 100.0f);
  CHECK(t.value(g_close)[0] < t.value(g_far)[0]);
}

TEST_CASE("critic loss flips sign pair under label flipping") {
  Tape t;
  Tensor sr({2, 1}, {1.0f, 3.0f});
  Tensor sf({2, 1}, {0.5f, 0.5f});
  Var r = t.leaf(sr), f = t.leaf(sf), gp = t.leaf(Tensor::scalar(0.25f));
  Var plain = critic_loss(t, r, f, gp, 10.0f, false);
  Var flipped = critic_loss(t, r, f, gp, 10.0f, true);
  // mean(fake) - mean(real) = 0.5 - 2 = -1.5; +10*0.25 penalty
  CHECK_THAT(t.value(plain)[0], Catch::Matchers::WithinAbs(1.0, 1e-6));
  CHECK_THAT(t.value(flipped)[0], Catch::Matchers::WithinAbs(4.0, 1e-6));
}

TEST_CASE("loss gradients match central finite differences on tiny inputs") {
  Rng rng(307);
  Tensor fake = Tensor::rand_uniform({2, 1, 4, 4}, rng, 0.1f, 0.9f);
  Tensor target = Tensor::rand_uniform({2, 1, 4, 4}, rng, 0.1f, 0.9f);
  Tensor scores = Tensor::randn({2, 1}, rng);

  auto eval = [&]() {
    Tape t;
    return static_cast<double>(
        t.value(generator_loss(t, t.leaf(scores), t.leaf(fake, true),
                               t.leaf(target), 100.0f))[0]);
  };
  Tape t;
  Var fk = t.leaf(fake, true);
  Var loss = generator_loss(t, t.leaf(scores), fk, t.leaf(target), 100.0f);
  Var wrt[] = {fk};
  auto grads = t.grad(loss, wrt);
  REQUIRE(grads[0].has_value());
  const Tensor& g = t.value(*grads[0]);
  for (int64_t i = 0; i < fake.numel(); ++i) {
    const float orig = fake[i];
    const double h = 1e-3;
    fake[i] = orig + static_cast<float>(h);
    const double hi = eval();
    fake[i] = orig - static_cast<float>(h);
    const double lo = eval();
    fake[i] = orig;
    const double num = (hi - lo) / (2 * h);
    const double rel = std::fabs(num - g[i]) / std::max(std::fabs(num), 1e-6);
    INFO("coord " << i << " analytic " << g[i] << " numeric " << num);
    CHECK(rel < 1e-3);
  }
}

TEST_CASE("gradient penalty is non-negative on random critics") {
  Rng rng(308);
  for (int rep = 0; rep < 10; ++rep) {
    Tensor w = Tensor::randn({1, 8}, rng);
    Tensor real = Tensor::rand_uniform({3, 2, 2, 2}, rng);
    Tensor fake = Tensor::rand_uniform({3, 2, 2, 2}, rng);
    CriticFn critic = [&w](Tape& t, Var x) {
      return ops::matmul(t, ops::reshape(t, x, {3, 8}), t.param(w), false, true);
    };
    Tape t;
    Rng gprng(100 + rep);
    Var gp = gradient_penalty(t, critic, real, fake, gprng);
    CHECK(t.value(gp)[0] >= 0.0f);
  }
}
