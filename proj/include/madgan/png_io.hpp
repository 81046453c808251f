#pragma once

#include <png.h>

#include <cstdio>
#include <string>
#include <vector>

#include "madgan/errors.hpp"
#include "madgan/tensor.hpp"

namespace madgan::png_io {

namespace detail {
struct FileCloser {
  std::FILE* f;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};
}  // namespace detail

// 16-bit grayscale slice -> [H,W] floats in [0,1]. 8-bit files are accepted
// and scaled by 1/255.
inline Tensor read_gray(const std::string& path) {
  detail::FileCloser fc{std::fopen(path.c_str(), "rb")};
  if (!fc.f) throw IoError("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed reading " + path);
  }
  png_init_io(png, fc.f);
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path + ": expected grayscale PNG");
  }
  if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  const size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<png_byte> data(rowbytes * h);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = data.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor out({static_cast<int64_t>(h), static_cast<int64_t>(w)});
  if (depth == 16) {
    for (png_uint_32 y = 0; y < h; ++y)
      for (png_uint_32 x = 0; x < w; ++x) {
        const png_byte* p = data.data() + y * rowbytes + 2 * x;  // big-endian
        const uint16_t v = static_cast<uint16_t>((p[0] << 8) | p[1]);
        out[y * w + x] = static_cast<float>(v) / 65535.0f;
      }
  } else {
    for (png_uint_32 y = 0; y < h; ++y)
      for (png_uint_32 x = 0; x < w; ++x)
        out[y * w + x] = static_cast<float>(data[y * rowbytes + x]) / 255.0f;
  }
  return out;
}

// [H,W] floats in [0,1] -> 16-bit grayscale PNG.
inline void write_gray16(const std::string& path, const Tensor& slice) {
  if (slice.ndim() != 2) throw ShapeError("write_gray16 expects a 2-D slice");
  detail::FileCloser fc{std::fopen(path.c_str(), "wb")};
  if (!fc.f) throw IoError("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing " + path);
  }
  png_init_io(png, fc.f);
  const int64_t h = slice.dim(0), w = slice.dim(1);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 16,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(2 * w);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      float v = slice[y * w + x];
      v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
      const uint16_t q = static_cast<uint16_t>(v * 65535.0f + 0.5f);
      row[2 * x] = static_cast<png_byte>(q >> 8);
      row[2 * x + 1] = static_cast<png_byte>(q & 0xff);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Packed RGB8 rows -> PNG. Fixed compression settings keep output bytes
// stable run to run.
inline void write_rgb(const std::string& path, int64_t width, int64_t height,
                      const std::vector<unsigned char>& rgb) {
  if (static_cast<int64_t>(rgb.size()) != width * height * 3)
    throw ShapeError("write_rgb: buffer size mismatch");
  detail::FileCloser fc{std::fopen(path.c_str(), "wb")};
  if (!fc.f) throw IoError("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing " + path);
  }
  png_init_io(png, fc.f);
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int64_t y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(rgb.data() + y * width * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace madgan::png_io
