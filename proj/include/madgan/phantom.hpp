#pragma once

#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "madgan/manifest.hpp"
#include "madgan/rng.hpp"
#include "madgan/scan.hpp"

namespace madgan::phantom {

// One smooth ellipsoidal structure. Radii are fractions of the half-frame;
// the axial profile rho(z) = sqrt(1 - ((z - z_center)/z_extent)^2) scales the
// in-plane radii so consecutive slices differ gently.
struct Structure {
  std::string name;
  double cy = 0.0, cx = 0.0;   // center, in [-1,1] frame coordinates
  double ry = 0.5, rx = 0.5;   // in-plane radii
  double intensity = 0.5;
  double z_center = 0.0, z_extent = 1.0;  // slice units
  double drift_y = 0.0, drift_x = 0.0;    // per-slice center drift
};

// Hyper-intense ball (metastasis analog) spanning a few slices.
struct LesionSpec {
  int64_t center_slice = -1;  // -1 = volume middle +/- jitter
  double radius_px = 6.0;
  double intensity_boost = 0.5;
  int64_t n_slices = 5;
  // NaN = draw a per-seed position inside the brain analog.
  double cy = std::numeric_limits<double>::quiet_NaN();
  double cx = std::numeric_limits<double>::quiet_NaN();
};

// Multi-slice shrinkage of one named structure (atrophy analog).
struct AtrophySpec {
  std::string target = "ventricle";  // prefix match
  double shrink = 0.7;
  int64_t n_slices = 9;
};

struct PhantomSpec {
  uint64_t seed = 0;
  int64_t n_slices = 16;
  int64_t height = 64, width = 64;
  double noise_sigma = 0.03;
  double anatomy_jitter = 0.08;  // per-scan radius/intensity variability
  std::vector<Structure> structures;  // empty = default anatomy
  std::optional<LesionSpec> lesion;
  std::optional<AtrophySpec> atrophy;

  void validate() const {
    if (n_slices < 6) throw DataContractError("phantom needs >= 6 slices");
    if (height < 16 || width < 16) throw DataContractError("phantom frame too small");
    if (noise_sigma < 0) throw DataContractError("negative noise_sigma");
    if (lesion) {
      if (lesion->radius_px <= 0 || lesion->n_slices < 1)
        throw DataContractError("invalid lesion radius/extent");
      if (lesion->intensity_boost <= 3.0 * noise_sigma)
        throw DataContractError("lesion boost must exceed 3x noise sigma");
    }
    if (atrophy) {
      if (!(atrophy->shrink >= 0.0 && atrophy->shrink < 1.0))
        throw DataContractError("atrophy shrink must be in [0,1)");
      if (atrophy->n_slices < 1) throw DataContractError("invalid atrophy extent");
    }
  }

  ClassLabel label() const {
    if (lesion) return ClassLabel::PHANTOM_LESION;
    if (atrophy) return ClassLabel::PHANTOM_ATROPHY;
    return ClassLabel::HEALTHY;
  }
};

// Concentric skull/brain/deep-gray/ventricle analogs. Large high-contrast
// shells stay nearly cylindrical along z (keeps consecutive-slice l2 within
// the continuity bound); small structures vary more.
inline std::vector<Structure> default_structures(int64_t n_slices) {
  const double zc = 0.5 * (n_slices - 1);
  const double half = 0.5 * n_slices;
  return {
      {"skull", 0.0, 0.0, 0.92, 0.88, 0.95, zc, 4.0 * half, 0.0, 0.0},
      {"brain", 0.0, 0.0, 0.80, 0.76, 0.50, zc, 4.2 * half, 0.0, 0.0},
      {"deep_gray", -0.18, 0.0, 0.34, 0.30, 0.66, zc * 0.9, 1.6 * half, 0.0, 0.0},
      {"ventricle_l", 0.04, -0.17, 0.28, 0.13, 0.10, zc, 2.0 * half, 0.0, 0.0},
      {"ventricle_r", 0.04, 0.17, 0.28, 0.13, 0.10, zc, 2.0 * half, 0.0, 0.0},
  };
}

struct PhantomVolume {
  Scan scan;
  // Per-slice anomaly support (1 where the anomaly may touch pixels); all
  // zeros for healthy phantoms.
  std::vector<Tensor> anomaly_mask;
};

namespace detail {

struct RealizedStructure {
  Structure s;
  double z_extent_jittered;
};

// Painter's-algorithm fill with a ~1.5 px anti-aliased rim.
inline void paint(Tensor& slice, double cy_px, double cx_px, double a, double b,
                  double intensity) {
  if (a < 0.3 || b < 0.3) return;
  const int64_t h = slice.dim(0), w = slice.dim(1);
  const double edge = 1.5;
  const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(cy_px - a - 2));
  const int64_t y1 = std::min<int64_t>(h - 1, static_cast<int64_t>(cy_px + a + 2));
  const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(cx_px - b - 2));
  const int64_t x1 = std::min<int64_t>(w - 1, static_cast<int64_t>(cx_px + b + 2));
  const double r_eff = std::min(a, b);
  for (int64_t y = y0; y <= y1; ++y)
    for (int64_t x = x0; x <= x1; ++x) {
      const double dy = (y - cy_px) / a;
      const double dx = (x - cx_px) / b;
      const double d_px = (std::sqrt(dy * dy + dx * dx) - 1.0) * r_eff;
      double alpha = 0.5 - d_px / edge;
      if (alpha <= 0.0) continue;
      if (alpha > 1.0) alpha = 1.0;
      float& v = slice[y * w + x];
      v = static_cast<float>((1.0 - alpha) * v + alpha * intensity);
    }
}

inline double z_profile(double z, double zc, double ze) {
  const double u = (z - zc) / ze;
  const double q = 1.0 - u * u;
  return q > 0.0 ? std::sqrt(q) : 0.0;
}

}  // namespace detail

// Deterministic given the seed. The anatomy and noise streams never depend on
// the anomaly settings, so an anomalous phantom and the healthy phantom of the
// same seed are bit-identical outside the anomaly mask.
inline PhantomVolume gen_phantom_with_mask(const PhantomSpec& spec) {
  spec.validate();
  const int64_t n = spec.n_slices, h = spec.height, w = spec.width;
  const double half_h = 0.5 * h, half_w = 0.5 * w;

  std::vector<Structure> anatomy =
      spec.structures.empty() ? default_structures(n) : spec.structures;

  // Per-scan anatomical variability.
  Rng arng = Rng::derive(spec.seed, "phantom-anatomy");
  const double j = spec.anatomy_jitter;
  for (auto& s : anatomy) {
    s.ry *= 1.0 + arng.uniform(-j, j);
    s.rx *= 1.0 + arng.uniform(-j, j);
    s.cy += arng.uniform(-j, j) * 0.25;
    s.cx += arng.uniform(-j, j) * 0.25;
    s.intensity += arng.uniform(-0.04, 0.04);
    s.drift_y += arng.uniform(-0.004, 0.004);
    s.drift_x += arng.uniform(-0.004, 0.004);
  }

  const int64_t atrophy_lo = spec.atrophy ? (n - spec.atrophy->n_slices) / 2 : 0;
  const int64_t atrophy_hi = spec.atrophy ? atrophy_lo + spec.atrophy->n_slices : 0;

  PhantomVolume out;
  out.scan.sequence = Sequence::PHANTOM;
  out.scan.label = spec.label();
  out.scan.height = h;
  out.scan.width = w;

  Rng nrng = Rng::derive(spec.seed, "phantom-noise");

  // Lesion placement comes from its own stream so the healthy twin's anatomy
  // and noise are untouched by its presence.
  double zc_lesion = 0.0, lesion_cy = 0.0, lesion_cx = 0.0;
  if (spec.lesion) {
    Rng lrng = Rng::derive(spec.seed, "phantom-lesion");
    zc_lesion = spec.lesion->center_slice >= 0
                    ? static_cast<double>(spec.lesion->center_slice)
                    : 0.5 * (n - 1) + lrng.uniform(-2.0, 2.0);
    lesion_cy = std::isnan(spec.lesion->cy) ? lrng.uniform(-0.38, 0.38) : spec.lesion->cy;
    lesion_cx = std::isnan(spec.lesion->cx) ? lrng.uniform(-0.38, 0.38) : spec.lesion->cx;
  }

  for (int64_t z = 0; z < n; ++z) {
    Tensor slice({h, w});
    Tensor mask({h, w});
    for (const auto& s : anatomy) {
      const double rho = detail::z_profile(z, s.z_center, s.z_extent);
      if (rho <= 0.0) continue;
      double a = s.ry * rho * half_h;
      double b = s.rx * rho * half_w;
      const double cy_px = half_h + (s.cy + s.drift_y * (z - 0.5 * n)) * half_h;
      const double cx_px = half_w + (s.cx + s.drift_x * (z - 0.5 * n)) * half_w;
      const bool atrophied = spec.atrophy && z >= atrophy_lo && z < atrophy_hi &&
                             s.name.rfind(spec.atrophy->target, 0) == 0;
      if (atrophied) {
        // mask covers the original footprint (the changed annulus lies inside)
        detail::paint(mask, cy_px, cx_px, a + 2.0, b + 2.0, 1.0);
        a *= spec.atrophy->shrink;
        b *= spec.atrophy->shrink;
      }
      detail::paint(slice, cy_px, cx_px, a, b, s.intensity);
    }

    if (spec.lesion) {
      const auto& L = *spec.lesion;
      const double zr = 0.5 * std::max<int64_t>(L.n_slices, 1);
      const double uz = (z - zc_lesion) / zr;
      const double qz = 1.0 - uz * uz;
      if (qz > 0.0) {
        const double r = L.radius_px * std::sqrt(qz);
        const double cy_px = half_h + lesion_cy * half_h;
        const double cx_px = half_w + lesion_cx * half_w;
        const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(cy_px - r - 2));
        const int64_t y1 = std::min<int64_t>(h - 1, static_cast<int64_t>(cy_px + r + 2));
        const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(cx_px - r - 2));
        const int64_t x1 = std::min<int64_t>(w - 1, static_cast<int64_t>(cx_px + r + 2));
        for (int64_t y = y0; y <= y1; ++y)
          for (int64_t x = x0; x <= x1; ++x) {
            const double dy = y - cy_px, dx = x - cx_px;
            const double d = std::sqrt(dy * dy + dx * dx) - r;
            double p = 0.5 - d / 1.5;
            if (p <= 0.0) continue;
            if (p > 1.0) p = 1.0;
            slice[y * w + x] =
                static_cast<float>(slice[y * w + x] + p * L.intensity_boost);
            mask[y * w + x] = 1.0f;
          }
      }
    }

    // One noise field per (seed, slice), independent of anomaly settings.
    for (int64_t i = 0; i < h * w; ++i) {
      double v = slice[i] + nrng.gaussian() * spec.noise_sigma;
      slice[i] = static_cast<float>(v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v));
    }

    out.scan.slices.push_back(std::move(slice));
    out.anomaly_mask.push_back(std::move(mask));
  }
  out.scan.validate();
  return out;
}

inline Scan gen_phantom(const PhantomSpec& spec) {
  return gen_phantom_with_mask(spec).scan;
}

// Dataset layout mirroring the training protocol: train split healthy only,
// test split healthy + anomalous. Volumes land in out_dir; per-scan seeds are
// derived from (seed, running index) so regeneration is reproducible.
inline Manifest make_phantom_dataset(int64_t n_healthy_train, int64_t n_healthy_test,
                                     int64_t n_lesion, int64_t n_atrophy, uint64_t seed,
                                     const PhantomSpec& base, const std::string& out_dir,
                                     const std::string& format = "nii") {
  if (n_healthy_train < 0 || n_healthy_test < 0 || n_lesion < 0 || n_atrophy < 0)
    throw DataContractError("negative phantom counts");
  if (format != "nii" && format != "png")
    throw ConfigError("phantom format must be nii|png");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  Manifest manifest;
  manifest.base_dir = out_dir;
  int64_t index = 0;

  auto emit = [&](const std::string& id, const std::string& split,
                  std::optional<LesionSpec> lesion, std::optional<AtrophySpec> atrophy) {
    PhantomSpec s = base;
    uint64_t sm = seed ^ (0x51ed270b7a03ef15ULL * static_cast<uint64_t>(++index));
    s.seed = splitmix64(sm);
    s.lesion = std::move(lesion);
    s.atrophy = std::move(atrophy);
    Scan scan = gen_phantom(s);
    scan.scan_id = id;
    scan.subject_id = id;

    std::string rel;
    if (format == "nii") {
      rel = id + ".nii.gz";
      nifti::write_volume((fs::path(out_dir) / rel).string(), scan.slices);
    } else {
      rel = id;
      fs::create_directories(fs::path(out_dir) / rel);
      char name[32];
      for (int64_t i = 0; i < scan.n_slices(); ++i) {
        std::snprintf(name, sizeof(name), "slice_%04lld.png",
                      static_cast<long long>(i));
        png_io::write_gray16(((fs::path(out_dir) / rel) / name).string(),
                             scan.slices[i]);
      }
    }
    manifest.entries.push_back({id, rel, Sequence::PHANTOM, scan.label, split});
  };

  char id[64];
  for (int64_t i = 0; i < n_healthy_train; ++i) {
    std::snprintf(id, sizeof(id), "phantom_train_%03lld", static_cast<long long>(i));
    emit(id, "train", std::nullopt, std::nullopt);
  }
  for (int64_t i = 0; i < n_healthy_test; ++i) {
    std::snprintf(id, sizeof(id), "phantom_test_h_%03lld", static_cast<long long>(i));
    emit(id, "test", std::nullopt, std::nullopt);
  }
  for (int64_t i = 0; i < n_lesion; ++i) {
    std::snprintf(id, sizeof(id), "phantom_test_les_%03lld", static_cast<long long>(i));
    emit(id, "test", base.lesion ? *base.lesion : LesionSpec{}, std::nullopt);
  }
  for (int64_t i = 0; i < n_atrophy; ++i) {
    std::snprintf(id, sizeof(id), "phantom_test_atr_%03lld", static_cast<long long>(i));
    emit(id, "test", std::nullopt, base.atrophy ? *base.atrophy : AtrophySpec{});
  }
  return manifest;
}

}  // namespace madgan::phantom
