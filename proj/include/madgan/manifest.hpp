#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "madgan/errors.hpp"
#include "madgan/nifti.hpp"
#include "madgan/png_io.hpp"
#include "madgan/preprocess.hpp"
#include "madgan/scan.hpp"

namespace madgan {

// One record per scan. Paths are stored relative to the manifest file when
// possible and resolved against its directory on load.
struct ManifestEntry {
  std::string scan_id;
  std::string path;
  Sequence sequence = Sequence::PHANTOM;
  ClassLabel label = ClassLabel::HEALTHY;
  std::string split;  // train | test
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> entries;

  static constexpr const char* kHeader = "scan_id\tpath\tsequence\tlabel\tsplit";

  static Manifest load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path);
    Manifest m;
    m.base_dir = std::filesystem::path(path).parent_path();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#' || line == kHeader) continue;
      std::istringstream ss(line);
      ManifestEntry e;
      std::string seq, label;
      if (!std::getline(ss, e.scan_id, '\t') || !std::getline(ss, e.path, '\t') ||
          !std::getline(ss, seq, '\t') || !std::getline(ss, label, '\t') ||
          !std::getline(ss, e.split, '\t'))
        throw DataContractError(path + ":" + std::to_string(lineno) +
                                ": manifest row needs 5 tab-separated fields");
      e.sequence = sequence_from_string(seq);
      e.label = class_label_from_string(label);
      if (e.split != "train" && e.split != "test")
        throw DataContractError(path + ":" + std::to_string(lineno) +
                                ": split must be train|test, got '" + e.split + "'");
      m.entries.push_back(std::move(e));
    }
    return m;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest " + path);
    out << kHeader << "\n";
    for (const auto& e : entries)
      out << e.scan_id << "\t" << e.path << "\t" << to_string(e.sequence) << "\t"
          << to_string(e.label) << "\t" << e.split << "\n";
    if (!out) throw IoError("short write on manifest " + path);
  }

  std::vector<ManifestEntry> split(const std::string& which) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
      if (e.split == which) out.push_back(e);
    return out;
  }

  std::string resolve(const ManifestEntry& e) const {
    std::filesystem::path p(e.path);
    if (p.is_absolute()) return p.string();
    return (base_dir / p).string();
  }
};

// Raw volume loading: a NIfTI file or a directory of slice_%04d.png files in
// ascending index order.
inline std::vector<Tensor> load_raw_volume(const std::string& path) {
  namespace fs = std::filesystem;
  if (fs::is_directory(path)) {
    std::vector<std::pair<int, fs::path>> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      const std::string name = entry.path().filename().string();
      int idx = 0;
      if (std::sscanf(name.c_str(), "slice_%d.png", &idx) == 1)
        files.emplace_back(idx, entry.path());
    }
    if (files.empty()) throw IoError(path + ": no slice_*.png files");
    std::sort(files.begin(), files.end());
    std::vector<Tensor> slices;
    slices.reserve(files.size());
    for (const auto& [idx, p] : files) slices.push_back(png_io::read_gray(p.string()));
    return slices;
  }
  if (!fs::exists(path)) throw IoError(path + ": no such file");
  return nifti::read_volume(path);
}

// Volume load + the paper's preprocessing; metadata comes from the manifest.
inline Scan load_scan(const std::string& path, const PreprocessConfig& preprocess,
                      const ManifestEntry& meta = {}) {
  Scan raw;
  raw.scan_id = meta.scan_id.empty() ? std::filesystem::path(path).stem().string()
                                     : meta.scan_id;
  raw.subject_id = raw.scan_id;
  raw.sequence = meta.sequence;
  raw.label = meta.label;
  raw.slices = load_raw_volume(path);
  if (!raw.slices.empty()) {
    raw.height = raw.slices[0].dim(0);
    raw.width = raw.slices[0].dim(1);
  }
  return apply_preprocess(std::move(raw), preprocess);
}

inline Scan load_scan(const Manifest& manifest, const ManifestEntry& entry,
                      const PreprocessConfig& preprocess) {
  return load_scan(manifest.resolve(entry), preprocess, entry);
}

}  // namespace madgan
