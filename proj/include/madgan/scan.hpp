#pragma once

#include <array>
#include <string>
#include <vector>

#include "madgan/errors.hpp"
#include "madgan/tensor.hpp"

namespace madgan {

enum class Sequence { T1, T1C, PHANTOM };

inline std::string to_string(Sequence s) {
  switch (s) {
    case Sequence::T1: return "T1";
    case Sequence::T1C: return "T1c";
    case Sequence::PHANTOM: return "PHANTOM";
  }
  return "PHANTOM";
}

inline Sequence sequence_from_string(const std::string& s) {
  if (s == "T1") return Sequence::T1;
  if (s == "T1c") return Sequence::T1C;
  if (s == "PHANTOM") return Sequence::PHANTOM;
  throw DataContractError("unknown sequence '" + s + "'");
}

enum class ClassLabel {
  HEALTHY,
  CDR_0_5,
  CDR_1,
  CDR_2,
  BRAIN_METASTASES,
  VARIOUS_DISEASE,
  PHANTOM_LESION,
  PHANTOM_ATROPHY,
};

inline std::string to_string(ClassLabel l) {
  switch (l) {
    case ClassLabel::HEALTHY: return "HEALTHY";
    case ClassLabel::CDR_0_5: return "CDR_0_5";
    case ClassLabel::CDR_1: return "CDR_1";
    case ClassLabel::CDR_2: return "CDR_2";
    case ClassLabel::BRAIN_METASTASES: return "BRAIN_METASTASES";
    case ClassLabel::VARIOUS_DISEASE: return "VARIOUS_DISEASE";
    case ClassLabel::PHANTOM_LESION: return "PHANTOM_LESION";
    case ClassLabel::PHANTOM_ATROPHY: return "PHANTOM_ATROPHY";
  }
  return "HEALTHY";
}

inline ClassLabel class_label_from_string(const std::string& s) {
  if (s == "HEALTHY") return ClassLabel::HEALTHY;
  if (s == "CDR_0_5") return ClassLabel::CDR_0_5;
  if (s == "CDR_1") return ClassLabel::CDR_1;
  if (s == "CDR_2") return ClassLabel::CDR_2;
  if (s == "BRAIN_METASTASES") return ClassLabel::BRAIN_METASTASES;
  if (s == "VARIOUS_DISEASE") return ClassLabel::VARIOUS_DISEASE;
  if (s == "PHANTOM_LESION") return ClassLabel::PHANTOM_LESION;
  if (s == "PHANTOM_ATROPHY") return ClassLabel::PHANTOM_ATROPHY;
  throw DataContractError("unknown class label '" + s + "'");
}

inline bool is_healthy(ClassLabel l) { return l == ClassLabel::HEALTHY; }

// An ordered stack of normalized axial slices; the unit of diagnosis. Slices
// run in ascending anatomical index and all share one frame.
struct Scan {
  std::string scan_id;
  std::string subject_id;
  Sequence sequence = Sequence::PHANTOM;
  ClassLabel label = ClassLabel::HEALTHY;
  int64_t height = 0;
  int64_t width = 0;
  std::vector<Tensor> slices;  // each [height, width], values in [0,1]

  int64_t n_slices() const { return static_cast<int64_t>(slices.size()); }

  void validate() const {
    for (const auto& s : slices) {
      if (s.ndim() != 2 || s.dim(0) != height || s.dim(1) != width)
        throw DataContractError("scan " + scan_id + ": slice shape " + s.shape_str() +
                                " does not match frame " + std::to_string(height) +
                                "x" + std::to_string(width));
      for (int64_t i = 0; i < s.numel(); ++i)
        if (!(s[i] >= 0.0f && s[i] <= 1.0f))
          throw DataContractError("scan " + scan_id + ": intensity outside [0,1]");
    }
  }
};

// One 3-slices-in, 3-slices-out reconstruction unit: strictly consecutive
// indices (i,i+1,i+2) -> (i+3,i+4,i+5).
struct SliceWindow {
  std::string scan_id;
  std::array<int64_t, 3> input_indices;
  std::array<int64_t, 3> target_indices;
};

// All n-5 sliding windows of a scan.
inline std::vector<SliceWindow> make_windows(const Scan& scan) {
  const int64_t n = scan.n_slices();
  if (n < 6)
    throw DataContractError("scan " + scan.scan_id + " has " + std::to_string(n) +
                            " slices; need at least 6 for one window");
  std::vector<SliceWindow> out;
  out.reserve(n - 5);
  for (int64_t k = 0; k + 5 < n; ++k)
    out.push_back({scan.scan_id, {k, k + 1, k + 2}, {k + 3, k + 4, k + 5}});
  return out;
}

// Three same-shape slices stacked as the channels of one [3,H,W] image.
inline Tensor stack_channels(const Tensor& a, const Tensor& b, const Tensor& c) {
  if (!a.same_shape(b) || !a.same_shape(c))
    throw DataContractError("stack_channels: mismatched slice shapes " + a.shape_str() +
                            " / " + b.shape_str() + " / " + c.shape_str());
  if (a.ndim() != 2) throw DataContractError("stack_channels expects 2-D slices");
  const int64_t h = a.dim(0), w = a.dim(1);
  Tensor out({3, h, w});
  std::copy(a.data(), a.data() + h * w, out.data());
  std::copy(b.data(), b.data() + h * w, out.data() + h * w);
  std::copy(c.data(), c.data() + h * w, out.data() + 2 * h * w);
  return out;
}

inline std::array<Tensor, 3> unstack_channels(const Tensor& img) {
  if (img.ndim() != 3 || img.dim(0) != 3)
    throw ShapeError("unstack_channels expects [3,H,W], got " + img.shape_str());
  const int64_t h = img.dim(1), w = img.dim(2);
  std::array<Tensor, 3> out = {Tensor({h, w}), Tensor({h, w}), Tensor({h, w})};
  for (int c = 0; c < 3; ++c)
    std::copy(img.data() + c * h * w, img.data() + (c + 1) * h * w, out[c].data());
  return out;
}

inline Tensor window_tensor(const Scan& scan, const std::array<int64_t, 3>& idx) {
  return stack_channels(scan.slices.at(idx[0]), scan.slices.at(idx[1]),
                        scan.slices.at(idx[2]));
}

}  // namespace madgan
