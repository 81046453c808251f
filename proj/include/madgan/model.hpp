#pragma once

#include <array>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "madgan/config.hpp"
#include "madgan/nn.hpp"

namespace madgan {

enum class SaVariant { NONE, SA3, SA7 };

inline std::string to_string(SaVariant v) {
  switch (v) {
    case SaVariant::NONE: return "none";
    case SaVariant::SA3: return "sa3";
    case SaVariant::SA7: return "sa7";
  }
  return "none";
}

inline SaVariant sa_variant_from_string(const std::string& s) {
  if (s == "none") return SaVariant::NONE;
  if (s == "sa3") return SaVariant::SA3;
  if (s == "sa7") return SaVariant::SA7;
  throw ConfigError("unknown sa_variant '" + s + "' (none|sa3|sa7)");
}

// Architecture and loss-weight parameters of one MADGAN model.
struct ModelSpec {
  SaVariant sa_variant = SaVariant::NONE;
  int64_t base_channels = 64;
  float dropout_rate = 0.5f;
  bool use_l1 = true;
  float lambda_l1 = 100.0f;
  float lambda_gp = 10.0f;
  // Generator stages eligible for an attention block, overridable via config.
  // sa3 covers mid-resolution maps; sa7 extends toward the ends.
  std::set<std::string> sa_sites;

  static std::set<std::string> default_sites(SaVariant v) {
    switch (v) {
      case SaVariant::NONE: return {};
      case SaVariant::SA3: return {"enc2", "enc3", "dec2"};
      case SaVariant::SA7:
        return {"enc1", "enc2", "enc3", "enc4", "dec1", "dec2", "dec3"};
    }
    return {};
  }

  void validate() const {
    if (lambda_l1 < 0) throw ConfigError("lambda_l1 must be >= 0");
    if (lambda_gp <= 0) throw ConfigError("lambda_gp must be > 0");
    if (base_channels < 8) throw ConfigError("base_channels must be >= 8");
    size_t expected = sa_variant == SaVariant::NONE ? 0
                      : sa_variant == SaVariant::SA3 ? 3
                                                     : 7;
    if (sa_sites.size() != expected)
      throw ConfigError("sa_variant " + to_string(sa_variant) + " needs " +
                        std::to_string(expected) + " sites, got " +
                        std::to_string(sa_sites.size()));
    static const std::set<std::string> allowed = {"enc1", "enc2", "enc3", "enc4",
                                                  "dec1", "dec2", "dec3"};
    for (const auto& s : sa_sites)
      if (!allowed.count(s)) throw ConfigError("unknown sa site '" + s + "'");
  }

  static ModelSpec from_config(const KeyValueConfig& cfg, const std::string& prefix = "") {
    ModelSpec s;
    auto key = [&](const std::string& k) { return prefix.empty() ? k : prefix + "." + k; };
    s.sa_variant = sa_variant_from_string(cfg.get_str(key("sa_variant"), "none"));
    s.base_channels = cfg.get_int(key("base_channels"), 64);
    s.dropout_rate = static_cast<float>(cfg.get_double(key("dropout_rate"), 0.5));
    s.use_l1 = cfg.get_bool(key("use_l1"), true);
    s.lambda_l1 = static_cast<float>(cfg.get_double(key("lambda_l1"), 100.0));
    if (!s.use_l1) s.lambda_l1 = 0.0f;
    s.lambda_gp = static_cast<float>(cfg.get_double(key("lambda_gp"), 10.0));
    if (cfg.has(key("sa_sites"))) {
      std::istringstream ss(cfg.get_str(key("sa_sites")));
      std::string item;
      while (std::getline(ss, item, ','))
        if (!item.empty()) s.sa_sites.insert(item);
    } else {
      s.sa_sites = default_sites(s.sa_variant);
    }
    s.validate();
    return s;
  }

  void to_config(KeyValueConfig& cfg, const std::string& prefix = "") const {
    auto key = [&](const std::string& k) { return prefix.empty() ? k : prefix + "." + k; };
    cfg.set(key("sa_variant"), to_string(sa_variant));
    cfg.set_int(key("base_channels"), base_channels);
    cfg.set_double(key("dropout_rate"), dropout_rate);
    cfg.set_bool(key("use_l1"), use_l1);
    cfg.set_double(key("lambda_l1"), lambda_l1);
    cfg.set_double(key("lambda_gp"), lambda_gp);
    std::string sites;
    for (const auto& s : sa_sites) sites += (sites.empty() ? "" : ",") + s;
    cfg.set(key("sa_sites"), sites);
  }
};

// U-Net generator: 4 strided conv encoder stages, 4 transposed-conv decoder
// stages, skip connections from encoder stage k into decoder stage 4-k.
// Stage layout is conv -> (attention) -> batchnorm -> activation; the two
// dropout layers sit in decoder stages 1 and 2. Output is sigmoid-bounded to
// [0,1] to match normalized slices.
class Generator {
 public:
  struct ForwardOptions {
    bool train = false;
    Rng* dropout_rng = nullptr;
    std::array<bool, 3> zero_skip = {false, false, false};  // e1, e2, e3
  };

  Generator(const ModelSpec& spec, uint64_t init_seed) : spec_(spec) {
    spec_.validate();
    Rng rng = Rng::derive(init_seed, "generator-init");
    const int64_t b = spec_.base_channels;
    const std::array<int64_t, 4> ch = {b, 2 * b, 4 * b, 8 * b};
    ops::ConvGeom g;  // 4x4, stride 2, pad 1

    const std::array<int64_t, 4> enc_in = {3, ch[0], ch[1], ch[2]};
    for (int i = 0; i < 4; ++i) {
      std::string name = "g.enc" + std::to_string(i + 1);
      enc_conv_[i] = nn::Conv2d(store_, name + ".conv", enc_in[i], ch[i], g, rng);
      if (spec_.sa_sites.count("enc" + std::to_string(i + 1)))
        enc_sa_[i] = nn::SelfAttention2d(store_, name + ".sa", ch[i], rng);
      enc_bn_[i] = nn::BatchNorm2d(store_, name + ".bn", ch[i]);
    }

    // Decoder inputs carry the concatenated skip except for stage 1.
    const std::array<int64_t, 4> dec_in = {ch[3], 2 * ch[2], 2 * ch[1], 2 * ch[0]};
    const std::array<int64_t, 4> dec_out = {ch[2], ch[1], ch[0], 3};
    for (int i = 0; i < 4; ++i) {
      std::string name = "g.dec" + std::to_string(i + 1);
      dec_conv_[i] = nn::ConvTranspose2d(store_, name + ".deconv", dec_in[i], dec_out[i], g, rng);
      if (i < 3) {
        if (spec_.sa_sites.count("dec" + std::to_string(i + 1)))
          dec_sa_[i] = nn::SelfAttention2d(store_, name + ".sa", dec_out[i], rng);
        dec_bn_[i] = nn::BatchNorm2d(store_, name + ".bn", dec_out[i]);
      }
    }
  }

  Var forward(Tape& t, Var x) { return forward(t, x, ForwardOptions()); }

  Var forward(Tape& t, Var x, const ForwardOptions& opt) {
    const Tensor& xv = t.value(x);
    if (xv.ndim() != 4 || xv.dim(1) != 3)
      throw ShapeError("generator expects [N,3,H,W], got " + xv.shape_str());
    if (xv.dim(2) % 16 != 0 || xv.dim(3) % 16 != 0)
      throw ShapeError("generator frame must be divisible by 16, got " + xv.shape_str());
    if (opt.train && spec_.dropout_rate > 0 && !opt.dropout_rng)
      throw ConfigError("training forward needs a dropout rng");

    std::array<Var, 4> enc;
    Var h = x;
    for (int i = 0; i < 4; ++i) {
      h = enc_conv_[i].forward(t, h);
      if (enc_sa_[i]) h = enc_sa_[i]->forward(t, h);
      h = enc_bn_[i].forward(t, h, opt.train);
      h = ops::leaky_relu(t, h, nn::kLeakySlope);
      enc[i] = h;
    }

    for (int i = 0; i < 4; ++i) {
      h = dec_conv_[i].forward(t, h);
      if (i == 3) break;
      if (dec_sa_[i]) h = dec_sa_[i]->forward(t, h);
      h = dec_bn_[i].forward(t, h, opt.train);
      if (i < 2 && opt.train && spec_.dropout_rate > 0)
        h = nn::dropout(t, h, spec_.dropout_rate, *opt.dropout_rng);
      h = ops::relu(t, h);
      // skip from encoder stage (3-i) into this decoder stage
      Var skip = enc[2 - i];
      if (opt.zero_skip[2 - i]) skip = ops::scale(t, skip, 0.0f);
      h = ops::concat_channels(t, h, skip);
    }
    return ops::sigmoid(t, h);
  }

  // Eval-mode convenience: reconstruct a batch with frozen weights.
  Tensor reconstruct(const Tensor& input) {
    Tape t;
    Var y = forward(t, t.leaf(input));
    return t.value(y).clone();
  }

  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  const ModelSpec& spec() const { return spec_; }

  int attention_site_count() const {
    int n = 0;
    for (const auto& e : store_.entries())
      if (e.name.find(".sa.gamma") != std::string::npos) ++n;
    return n;
  }

 private:
  ModelSpec spec_;
  nn::ParamStore store_;
  std::array<nn::Conv2d, 4> enc_conv_;
  std::array<std::optional<nn::SelfAttention2d>, 4> enc_sa_;
  std::array<nn::BatchNorm2d, 4> enc_bn_;
  std::array<nn::ConvTranspose2d, 4> dec_conv_;
  std::array<std::optional<nn::SelfAttention2d>, 3> dec_sa_;
  std::array<nn::BatchNorm2d, 3> dec_bn_;
};

// WGAN critic: 4 strided convolutions with leaky activations and a 3-layer
// dense head ending in one unbounded scalar per sample. No normalization
// layers anywhere, as required for a meaningful gradient penalty.
class Critic {
 public:
  Critic(const ModelSpec& spec, int64_t frame_h, int64_t frame_w, uint64_t init_seed)
      : frame_h_(frame_h), frame_w_(frame_w) {
    if (frame_h % 16 != 0 || frame_w % 16 != 0)
      throw ConfigError("critic frame must be divisible by 16");
    Rng rng = Rng::derive(init_seed, "critic-init");
    const int64_t b = spec.base_channels;
    const std::array<int64_t, 4> ch = {b, 2 * b, 4 * b, 8 * b};
    const std::array<int64_t, 4> in = {3, ch[0], ch[1], ch[2]};
    ops::ConvGeom g;
    for (int i = 0; i < 4; ++i)
      conv_[i] = nn::Conv2d(store_, "d.conv" + std::to_string(i + 1), in[i], ch[i], g, rng);
    flat_dim_ = ch[3] * (frame_h / 16) * (frame_w / 16);
    fc_[0] = nn::Dense(store_, "d.fc1", flat_dim_, ch[3], rng);
    fc_[1] = nn::Dense(store_, "d.fc2", ch[3], ch[2], rng);
    fc_[2] = nn::Dense(store_, "d.fc3", ch[2], 1, rng);
  }

  // [N,3,H,W] -> [N,1] unbounded scores.
  Var forward(Tape& t, Var x) const {
    const Tensor& xv = t.value(x);
    if (xv.ndim() != 4 || xv.dim(1) != 3 || xv.dim(2) != frame_h_ || xv.dim(3) != frame_w_)
      throw ShapeError("critic expects [N,3," + std::to_string(frame_h_) + "," +
                       std::to_string(frame_w_) + "], got " + xv.shape_str());
    const int64_t batch = xv.dim(0);
    Var h = x;
    for (int i = 0; i < 4; ++i) {
      h = conv_[i].forward(t, h);
      h = ops::leaky_relu(t, h, nn::kLeakySlope);
    }
    h = ops::reshape(t, h, {batch, flat_dim_});
    h = ops::leaky_relu(t, fc_[0].forward(t, h), nn::kLeakySlope);
    h = ops::leaky_relu(t, fc_[1].forward(t, h), nn::kLeakySlope);
    return fc_[2].forward(t, h);
  }

  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  int64_t frame_h() const { return frame_h_; }
  int64_t frame_w() const { return frame_w_; }

 private:
  int64_t frame_h_, frame_w_, flat_dim_ = 0;
  nn::ParamStore store_;
  std::array<nn::Conv2d, 4> conv_;
  std::array<nn::Dense, 3> fc_;
};

}  // namespace madgan
