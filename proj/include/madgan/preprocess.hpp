#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include "madgan/config.hpp"
#include "madgan/scan.hpp"

namespace madgan {

// Preprocessing contract applied by every loader: slice-range selection, then
// pad/resize into the target frame, then per-scan min-max normalization.
struct PreprocessConfig {
  int64_t frame_height = 256;
  int64_t frame_width = 176;
  // [lo, hi) slice selection; nullopt keeps the full volume.
  std::optional<std::pair<int64_t, int64_t>> slice_range;
  std::string pad_mode = "symmetric_zero";
  std::string resize_mode = "bilinear";
  std::string normalize = "minmax_per_scan";

  void validate() const {
    if (frame_height <= 0 || frame_width <= 0) throw ConfigError("bad frame size");
    if (pad_mode != "symmetric_zero")
      throw ConfigError("unsupported pad_mode '" + pad_mode + "'");
    if (resize_mode != "bilinear")
      throw ConfigError("unsupported resize_mode '" + resize_mode + "'");
    if (normalize != "minmax_per_scan")
      throw ConfigError("unsupported normalize '" + normalize + "'");
    if (slice_range && slice_range->first >= slice_range->second)
      throw ConfigError("empty slice_range");
  }

  static PreprocessConfig from_config(const KeyValueConfig& cfg,
                                      const std::string& prefix = "") {
    auto key = [&](const std::string& k) { return prefix.empty() ? k : prefix + "." + k; };
    PreprocessConfig p;
    p.frame_height = cfg.get_int(key("frame_height"), 256);
    p.frame_width = cfg.get_int(key("frame_width"), 176);
    std::string range = cfg.get_str(key("slice_range"), "full");
    if (range != "full") {
      auto colon = range.find(':');
      if (colon == std::string::npos)
        throw ConfigError("slice_range must be 'full' or 'lo:hi', got '" + range + "'");
      p.slice_range = {std::stoll(range.substr(0, colon)),
                       std::stoll(range.substr(colon + 1))};
    }
    p.pad_mode = cfg.get_str(key("pad_mode"), "symmetric_zero");
    p.resize_mode = cfg.get_str(key("resize_mode"), "bilinear");
    p.normalize = cfg.get_str(key("normalize"), "minmax_per_scan");
    p.validate();
    return p;
  }

  void to_config(KeyValueConfig& cfg, const std::string& prefix = "") const {
    auto key = [&](const std::string& k) { return prefix.empty() ? k : prefix + "." + k; };
    cfg.set_int(key("frame_height"), frame_height);
    cfg.set_int(key("frame_width"), frame_width);
    cfg.set(key("slice_range"), slice_range
                                    ? std::to_string(slice_range->first) + ":" +
                                          std::to_string(slice_range->second)
                                    : "full");
    cfg.set(key("pad_mode"), pad_mode);
    cfg.set(key("resize_mode"), resize_mode);
    cfg.set(key("normalize"), normalize);
  }
};

inline Tensor bilinear_resize(const Tensor& slice, int64_t out_h, int64_t out_w) {
  const int64_t h = slice.dim(0), w = slice.dim(1);
  Tensor out({out_h, out_w});
  const double sy = out_h > 1 ? static_cast<double>(h - 1) / (out_h - 1) : 0.0;
  const double sx = out_w > 1 ? static_cast<double>(w - 1) / (out_w - 1) : 0.0;
  for (int64_t y = 0; y < out_h; ++y) {
    const double fy = y * sy;
    const int64_t y0 = static_cast<int64_t>(fy);
    const int64_t y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (int64_t x = 0; x < out_w; ++x) {
      const double fx = x * sx;
      const int64_t x0 = static_cast<int64_t>(fx);
      const int64_t x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      const double v = (1 - wy) * ((1 - wx) * slice[y0 * w + x0] + wx * slice[y0 * w + x1]) +
                       wy * ((1 - wx) * slice[y1 * w + x0] + wx * slice[y1 * w + x1]);
      out[y * out_w + x] = static_cast<float>(v);
    }
  }
  return out;
}

// Symmetric zero margins on any short axis; extra pixel goes to the trailing
// side when the margin is odd.
inline Tensor pad_symmetric(const Tensor& slice, int64_t out_h, int64_t out_w) {
  const int64_t h = slice.dim(0), w = slice.dim(1);
  const int64_t top = (out_h - h) / 2;
  const int64_t left = (out_w - w) / 2;
  Tensor out({out_h, out_w});
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      out[(y + top) * out_w + (x + left)] = slice[y * w + x];
  return out;
}

// Identity for an on-frame slice, bilinear resize when the slice exceeds the
// frame on either axis, symmetric zero-padding otherwise.
inline Tensor fit_to_frame(const Tensor& slice, const PreprocessConfig& cfg) {
  if (slice.ndim() != 2) throw DataContractError("slice must be 2-D");
  const int64_t h = slice.dim(0), w = slice.dim(1);
  if (h == cfg.frame_height && w == cfg.frame_width) return slice;
  if (h > cfg.frame_height || w > cfg.frame_width)
    return bilinear_resize(slice, cfg.frame_height, cfg.frame_width);
  return pad_symmetric(slice, cfg.frame_height, cfg.frame_width);
}

// Per-scan min-max into [0,1]; a constant scan maps to all zeros.
inline void normalize_minmax_per_scan(std::vector<Tensor>& slices) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& s : slices)
    for (int64_t i = 0; i < s.numel(); ++i) {
      const double v = s[i];
      if (!std::isfinite(v)) throw DataContractError("non-finite intensity in scan");
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (slices.empty()) return;
  const double span = hi - lo;
  for (auto& s : slices) {
    Tensor ns(s.shape());
    if (span <= 0.0) {
      s = std::move(ns);  // zeros
      continue;
    }
    const double inv = 1.0 / span;
    for (int64_t i = 0; i < s.numel(); ++i)
      ns[i] = static_cast<float>((s[i] - lo) * inv);
    s = std::move(ns);
  }
}

// Full preprocessing pass over raw slices: range select, frame fit, normalize.
inline Scan apply_preprocess(Scan raw, const PreprocessConfig& cfg) {
  cfg.validate();
  if (cfg.slice_range) {
    auto [lo, hi] = *cfg.slice_range;
    if (lo < 0 || hi > raw.n_slices())
      throw DataContractError("slice_range [" + std::to_string(lo) + "," +
                              std::to_string(hi) + ") outside volume of " +
                              std::to_string(raw.n_slices()) + " slices");
    std::vector<Tensor> kept(raw.slices.begin() + lo, raw.slices.begin() + hi);
    raw.slices = std::move(kept);
  }
  if (raw.n_slices() < 6)
    throw DataContractError("scan " + raw.scan_id + ": " +
                            std::to_string(raw.n_slices()) +
                            " slices after selection; need at least 6");
  for (auto& s : raw.slices) s = fit_to_frame(s, cfg);
  normalize_minmax_per_scan(raw.slices);
  raw.height = cfg.frame_height;
  raw.width = cfg.frame_width;
  raw.validate();
  return raw;
}

}  // namespace madgan
