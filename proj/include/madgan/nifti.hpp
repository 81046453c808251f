#pragma once

#include <zlib.h>

#include <cstring>
#include <string>
#include <vector>

#include "madgan/errors.hpp"
#include "madgan/tensor.hpp"

namespace madgan {

// Minimal NIfTI-1 single-file (.nii / .nii.gz) volume I/O. Only what the
// pipeline needs: 3-D volumes, the common datatypes, scl_slope/inter, and
// byte order detection. Files are written as float32 with identity scaling.
namespace nifti {

namespace detail {

#pragma pack(push, 1)
struct Header {
  int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  int32_t extents;
  int16_t session_error;
  char regular;
  char dim_info;
  int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  int16_t intent_code;
  int16_t datatype;
  int16_t bitpix;
  int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  int16_t qform_code, sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4], srow_y[4], srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Header) == 348, "NIfTI-1 header must be 348 bytes");

template <typename T>
void swap_bytes(T& v) {
  auto* p = reinterpret_cast<unsigned char*>(&v);
  for (size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(p[i], p[sizeof(T) - 1 - i]);
}

inline void swap_header(Header& h) {
  swap_bytes(h.sizeof_hdr);
  for (auto& d : h.dim) swap_bytes(d);
  swap_bytes(h.datatype);
  swap_bytes(h.bitpix);
  for (auto& p : h.pixdim) swap_bytes(p);
  swap_bytes(h.vox_offset);
  swap_bytes(h.scl_slope);
  swap_bytes(h.scl_inter);
}

// gzread-based reader handles both plain and gzip files.
class GzReader {
 public:
  explicit GzReader(const std::string& path) : f_(gzopen(path.c_str(), "rb")) {
    if (!f_) throw IoError("cannot open " + path);
  }
  ~GzReader() {
    if (f_) gzclose(f_);
  }
  GzReader(const GzReader&) = delete;
  GzReader& operator=(const GzReader&) = delete;

  void read(void* dst, size_t bytes, const std::string& what) {
    size_t done = 0;
    auto* p = static_cast<unsigned char*>(dst);
    while (done < bytes) {
      const unsigned chunk =
          static_cast<unsigned>(std::min<size_t>(bytes - done, 1u << 30));
      const int got = gzread(f_, p + done, chunk);
      if (got <= 0) throw IoError("short read (" + what + ")");
      done += static_cast<size_t>(got);
    }
  }

  void skip(size_t bytes) {
    std::vector<unsigned char> sink(std::min<size_t>(bytes, 65536));
    size_t left = bytes;
    while (left > 0) {
      const size_t chunk = std::min(left, sink.size());
      read(sink.data(), chunk, "skip");
      left -= chunk;
    }
  }

 private:
  gzFile f_;
};

class GzWriter {
 public:
  GzWriter(const std::string& path, bool compress)
      : gz_(nullptr), plain_(nullptr) {
    if (compress) {
      gz_ = gzopen(path.c_str(), "wb6");
      if (!gz_) throw IoError("cannot write " + path);
    } else {
      plain_ = std::fopen(path.c_str(), "wb");
      if (!plain_) throw IoError("cannot write " + path);
    }
  }
  ~GzWriter() {
    if (gz_) gzclose(gz_);
    if (plain_) std::fclose(plain_);
  }
  GzWriter(const GzWriter&) = delete;
  GzWriter& operator=(const GzWriter&) = delete;

  void write(const void* src, size_t bytes) {
    if (gz_) {
      if (gzwrite(gz_, src, static_cast<unsigned>(bytes)) !=
          static_cast<int>(bytes))
        throw IoError("short gz write");
    } else {
      if (std::fwrite(src, 1, bytes, plain_) != bytes) throw IoError("short write");
    }
  }

 private:
  gzFile gz_;
  std::FILE* plain_;
};

template <typename T>
std::vector<float> convert(GzReader& in, int64_t n, bool swap) {
  std::vector<T> raw(n);
  in.read(raw.data(), n * sizeof(T), "voxel data");
  std::vector<float> out(n);
  for (int64_t i = 0; i < n; ++i) {
    T v = raw[i];
    if (swap) swap_bytes(v);
    out[i] = static_cast<float>(v);
  }
  return out;
}

}  // namespace detail

constexpr int16_t kUint8 = 2;
constexpr int16_t kInt16 = 4;
constexpr int16_t kInt32 = 8;
constexpr int16_t kFloat32 = 16;
constexpr int16_t kFloat64 = 64;
constexpr int16_t kUint16 = 512;

// Reads a 3-D volume as slices [ny, nx], slice index = z, ascending.
inline std::vector<Tensor> read_volume(const std::string& path) {
  detail::GzReader in(path);
  detail::Header h{};
  in.read(&h, sizeof(h), "header");
  bool swap = false;
  if (h.sizeof_hdr != 348) {
    detail::swap_header(h);
    swap = true;
    if (h.sizeof_hdr != 348) throw IoError(path + ": not a NIfTI-1 file");
  }
  if (std::strncmp(h.magic, "n+1", 3) != 0 && std::strncmp(h.magic, "ni1", 3) != 0)
    throw IoError(path + ": bad NIfTI magic");
  if (h.dim[0] < 2 || h.dim[0] > 4)
    throw IoError(path + ": expected a 2-D/3-D volume, dim0=" + std::to_string(h.dim[0]));
  const int64_t nx = h.dim[1];
  const int64_t ny = h.dim[0] >= 2 ? h.dim[2] : 1;
  const int64_t nz = h.dim[0] >= 3 ? h.dim[3] : 1;
  if (h.dim[0] == 4 && h.dim[4] != 1)
    throw IoError(path + ": 4-D volumes with multiple frames are unsupported");
  if (nx <= 0 || ny <= 0 || nz <= 0) throw IoError(path + ": bad dimensions");
  const int64_t n = nx * ny * nz;

  const size_t offset = static_cast<size_t>(h.vox_offset);
  if (offset < sizeof(h)) throw IoError(path + ": bad vox_offset");
  in.skip(offset - sizeof(h));

  std::vector<float> vox;
  switch (h.datatype) {
    case kUint8: vox = detail::convert<uint8_t>(in, n, false); break;
    case kInt16: vox = detail::convert<int16_t>(in, n, swap); break;
    case kInt32: vox = detail::convert<int32_t>(in, n, swap); break;
    case kFloat32: vox = detail::convert<float>(in, n, swap); break;
    case kFloat64: vox = detail::convert<double>(in, n, swap); break;
    case kUint16: vox = detail::convert<uint16_t>(in, n, swap); break;
    default:
      throw IoError(path + ": unsupported NIfTI datatype " + std::to_string(h.datatype));
  }
  if (h.scl_slope != 0.0f && !(h.scl_slope == 1.0f && h.scl_inter == 0.0f))
    for (auto& v : vox) v = v * h.scl_slope + h.scl_inter;

  std::vector<Tensor> slices;
  slices.reserve(nz);
  for (int64_t z = 0; z < nz; ++z) {
    Tensor s({ny, nx});
    // x runs fastest in the file; rows of the slice are y.
    for (int64_t y = 0; y < ny; ++y)
      for (int64_t x = 0; x < nx; ++x) s[y * nx + x] = vox[(z * ny + y) * nx + x];
    slices.push_back(std::move(s));
  }
  return slices;
}

// Writes slices (each [ny, nx]) as a float32 .nii or .nii.gz volume.
inline void write_volume(const std::string& path, const std::vector<Tensor>& slices) {
  if (slices.empty()) throw IoError("write_volume: no slices");
  const int64_t ny = slices[0].dim(0), nx = slices[0].dim(1);
  const int64_t nz = static_cast<int64_t>(slices.size());
  for (const auto& s : slices)
    if (s.ndim() != 2 || s.dim(0) != ny || s.dim(1) != nx)
      throw ShapeError("write_volume: ragged slices");

  detail::Header h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = 3;
  h.dim[1] = static_cast<int16_t>(nx);
  h.dim[2] = static_cast<int16_t>(ny);
  h.dim[3] = static_cast<int16_t>(nz);
  for (int i = 4; i < 8; ++i) h.dim[i] = 1;
  h.datatype = kFloat32;
  h.bitpix = 32;
  for (int i = 0; i < 8; ++i) h.pixdim[i] = 1.0f;
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.scl_inter = 0.0f;
  std::strncpy(h.magic, "n+1", 4);

  const bool gz = path.size() >= 3 && path.substr(path.size() - 3) == ".gz";
  detail::GzWriter out(path, gz);
  out.write(&h, sizeof(h));
  const char ext[4] = {0, 0, 0, 0};
  out.write(ext, 4);
  for (int64_t z = 0; z < nz; ++z)
    out.write(slices[z].data(), static_cast<size_t>(ny * nx) * sizeof(float));
}

}  // namespace nifti
}  // namespace madgan
