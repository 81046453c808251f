#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include "madgan/losses.hpp"
#include "madgan/model.hpp"

using namespace madgan;

namespace {

ModelSpec spec_for(SaVariant v, int64_t base = 16) {
  ModelSpec s;
  s.sa_variant = v;
  s.sa_sites = ModelSpec::default_sites(v);
  s.base_channels = base;
  return s;
}

}  // namespace

TEST_CASE("generator maps [N,3,H,W] to [N,3,H,W] for all SA variants") {
  for (SaVariant v : {SaVariant::NONE, SaVariant::SA3, SaVariant::SA7}) {
    Generator gen(spec_for(v), 11);
    Rng rng(5);
    Tensor x = Tensor::rand_uniform({2, 3, 64, 48}, rng);
    Tape t;
    Var y = gen.forward(t, t.leaf(x));
    CHECK(t.value(y).shape() == std::vector<int64_t>{2, 3, 64, 48});
    const Tensor& yv = t.value(y);
    for (int64_t i = 0; i < yv.numel(); ++i) {
      CHECK(yv[i] >= 0.0f);
      CHECK(yv[i] <= 1.0f);
    }
  }
}

TEST_CASE("generator rejects bad input shapes") {
  Generator gen(spec_for(SaVariant::NONE), 11);
  Tape t;
  Rng rng(5);
  CHECK_THROWS_AS(gen.forward(t, t.leaf(Tensor::rand_uniform({2, 1, 64, 64}, rng))),
                  ShapeError);
  CHECK_THROWS_AS(gen.forward(t, t.leaf(Tensor::rand_uniform({2, 3, 60, 64}, rng))),
                  ShapeError);
}

TEST_CASE("attention site counts are exactly 0 / 3 / 7") {
  CHECK(Generator(spec_for(SaVariant::NONE), 1).attention_site_count() == 0);
  CHECK(Generator(spec_for(SaVariant::SA3), 1).attention_site_count() == 3);
  CHECK(Generator(spec_for(SaVariant::SA7), 1).attention_site_count() == 7);
}

TEST_CASE("parameter count grows with attention modules") {
  const int64_t none = Generator(spec_for(SaVariant::NONE), 1).params().trainable_count();
  const int64_t sa3 = Generator(spec_for(SaVariant::SA3), 1).params().trainable_count();
  const int64_t sa7 = Generator(spec_for(SaVariant::SA7), 1).params().trainable_count();
  CHECK(sa7 > sa3);
  CHECK(sa3 > none);
}

TEST_CASE("self-attention is the identity at initialization") {
  nn::ParamStore store;
  Rng rng(3);
  nn::SelfAttention2d sa(store, "sa", 16, rng);
  Tensor x = Tensor::rand_uniform({2, 16, 6, 5}, rng);
  Tape t;
  Var y = sa.forward(t, t.leaf(x));
  const Tensor& yv = t.value(y);
  REQUIRE(yv.same_shape(x));
  CHECK(std::memcmp(yv.data(), x.data(), x.numel() * sizeof(float)) == 0);
}

TEST_CASE("attention rows sum to one and constant input attends uniformly") {
  nn::ParamStore store;
  Rng rng(4);
  nn::SelfAttention2d sa(store, "sa", 16, rng);

  Tensor x = Tensor::rand_uniform({1, 16, 4, 4}, rng);
  Tensor attn = sa.attention_map(x, 0);
  const int64_t p = 16;
  REQUIRE(attn.shape() == std::vector<int64_t>{p, p});
  for (int64_t r = 0; r < p; ++r) {
    double s = 0;
    for (int64_t j = 0; j < p; ++j) s += attn[r * p + j];
    CHECK_THAT(s, Catch::Matchers::WithinAbs(1.0, 1e-5));
  }

  // A spatially constant feature map gives identical logits everywhere, so
  // every attention row is uniform.
  Tensor cx({1, 16, 4, 4});
  for (int64_t c = 0; c < 16; ++c)
    for (int64_t i = 0; i < p; ++i) cx[c * p + i] = 0.1f * (c + 1);
  Tensor cattn = sa.attention_map(cx, 0);
  for (int64_t i = 0; i < p * p; ++i)
    CHECK_THAT(cattn[i], Catch::Matchers::WithinAbs(1.0 / p, 1e-6));
}

TEST_CASE("self-attention rejects narrow channel counts") {
  nn::ParamStore store;
  Rng rng(4);
  CHECK_THROWS_AS(nn::SelfAttention2d(store, "sa", 4, rng), ConfigError);
}

TEST_CASE("zeroing a skip connection changes the output") {
  Generator gen(spec_for(SaVariant::NONE), 17);
  // Wiring check under random weights; production-scale init would let deep
  // activations vanish and mask a dead skip.
  Rng prng(55);
  for (auto& e : gen.params().entries())
    if (e.trainable)
      for (int64_t i = 0; i < e.value.numel(); ++i)
        e.value[i] = static_cast<float>(prng.gaussian() * 0.15);
  Rng rng(6);
  Tensor x = Tensor::rand_uniform({1, 3, 32, 32}, rng);
  Tape t;
  Var base = gen.forward(t, t.leaf(x));
  for (int skip = 0; skip < 3; ++skip) {
    Generator::ForwardOptions opt;
    opt.zero_skip[skip] = true;
    Var ablated = gen.forward(t, t.leaf(x), opt);
    CHECK(l2_loss(t.value(base), t.value(ablated)) > 1e-6);
  }
}

TEST_CASE("every generator parameter gets a nonzero gradient") {
  for (SaVariant v : {SaVariant::NONE, SaVariant::SA3, SaVariant::SA7}) {
    ModelSpec ms = spec_for(v);
    Generator gen(ms, 23);
    Critic critic(ms, 32, 32, 24);

    // Randomize every parameter (incl. the attention gammas, which start at 0
    // and would otherwise gate off their branch).
    Rng prng(77);
    for (auto& e : gen.params().entries())
      if (e.trainable)
        for (int64_t i = 0; i < e.value.numel(); ++i)
          e.value[i] += static_cast<float>(prng.gaussian() * 0.05);

    Rng rng(7);
    Tensor x = Tensor::rand_uniform({2, 3, 32, 32}, rng);
    Tensor target = Tensor::rand_uniform({2, 3, 32, 32}, rng);
    Tape t;
    Rng drop(99);
    Generator::ForwardOptions opt;
    opt.train = true;
    opt.dropout_rng = &drop;
    Var fake = gen.forward(t, t.leaf(x), opt);
    Var scores = critic.forward(t, fake);
    Var loss = generator_loss(t, scores, fake, t.leaf(target), 100.0f);

    std::vector<Var> wrt;
    std::vector<const nn::ParamStore::Entry*> entries;
    for (auto& e : gen.params().entries())
      if (e.trainable) {
        wrt.push_back(t.param(e.value));
        entries.push_back(&e);
      }
    auto grads = t.grad(loss, wrt);
    for (size_t i = 0; i < wrt.size(); ++i) {
      INFO("param " << entries[i]->name);
      REQUIRE(grads[i].has_value());
      const Tensor& g = t.value(*grads[i]);
      double mag = 0;
      for (int64_t k = 0; k < g.numel(); ++k) mag += std::fabs(g[k]);
      CHECK(mag > 0.0);
    }
  }
}

TEST_CASE("critic returns one finite score per sample") {
  ModelSpec ms = spec_for(SaVariant::NONE);
  Critic critic(ms, 32, 32, 5);
  Rng rng(8);
  for (int64_t batch : {1, 2, 4}) {
    Tape t;
    Tensor x = Tensor::rand_uniform({batch, 3, 32, 32}, rng);
    Var s = critic.forward(t, t.leaf(x));
    REQUIRE(t.value(s).shape() == std::vector<int64_t>{batch, 1});
    for (int64_t i = 0; i < batch; ++i) CHECK(std::isfinite(t.value(s)[i]));
  }
  Tape t;
  CHECK_THROWS_AS(critic.forward(t, t.leaf(Tensor::rand_uniform({1, 3, 16, 32}, rng))),
                  ShapeError);
}

TEST_CASE("critic has no normalization layers") {
  ModelSpec ms = spec_for(SaVariant::SA7);
  Critic critic(ms, 32, 32, 5);
  for (const auto& e : critic.params().entries()) {
    CHECK(e.name.find("bn") == std::string::npos);
    CHECK(e.name.find("run_mean") == std::string::npos);
  }
}

TEST_CASE("critic input-gradient matches finite differences at random coords") {
  ModelSpec ms = spec_for(SaVariant::NONE);
  Critic critic(ms, 16, 16, 31);
  Rng rng(9);
  Tensor x = Tensor::rand_uniform({1, 3, 16, 16}, rng);

  Tape t;
  Var xl = t.leaf(x, true);
  Var s = ops::sum_all(t, critic.forward(t, xl));
  Var wrt[] = {xl};
  auto grads = t.grad(s, wrt);
  REQUIRE(grads[0].has_value());
  const Tensor& g = t.value(*grads[0]);

  auto eval = [&]() {
    Tape t2;
    return static_cast<double>(t2.value(ops::sum_all(t2, critic.forward(t2, t2.leaf(x))))[0]);
  };
  double gmax = 0;
  for (int64_t i = 0; i < g.numel(); ++i) gmax = std::max(gmax, (double)std::fabs(g[i]));
  for (int64_t coord : {17, 310, 544}) {
    const float orig = x[coord];
    const double h = 2e-3;
    x[coord] = orig + static_cast<float>(h);
    const double hi = eval();
    x[coord] = orig - static_cast<float>(h);
    const double lo = eval();
    x[coord] = orig;
    const double num = (hi - lo) / (2 * h);
    INFO("coord " << coord << " analytic " << g[coord] << " numeric " << num);
    CHECK(std::fabs(num - g[coord]) < 1e-2 * (gmax + std::fabs(num)));
  }
}

TEST_CASE("generator eval forward is deterministic") {
  Generator gen(spec_for(SaVariant::SA3), 41);
  Rng rng(10);
  Tensor x = Tensor::rand_uniform({1, 3, 32, 32}, rng);
  Tensor a = gen.reconstruct(x);
  Tensor b = gen.reconstruct(x);
  CHECK(std::memcmp(a.data(), b.data(), a.numel() * sizeof(float)) == 0);
}
