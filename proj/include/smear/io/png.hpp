#pragma once

// Single-channel 8- and 16-bit PNG reading and writing on top of libpng.

#include <png.h>

#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "smear/core/error.hpp"
#include "smear/core/raster.hpp"

namespace smear::io {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline void write_gray_png(const std::filesystem::path& path, int width, int height, int bit_depth,
                           const std::vector<std::uint8_t>& bytes) {
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng: cannot create write struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng: cannot create info struct");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng: failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(width) * (bit_depth / 8);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(bytes.data() + stride * static_cast<std::size_t>(y)));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace detail

/// Decoded grayscale PNG; values widened to 16 bits regardless of bit depth.
struct GrayImage {
  int bit_depth = 0;
  Raster<std::uint16_t> pixels;
};

inline GrayImage read_png(const std::filesystem::path& path) {
  detail::FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IoError("cannot open: " + path.string());

  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw DataError("not a PNG file: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng: cannot create read struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng: cannot create info struct");
  }
  GrayImage out;
  std::vector<std::uint8_t> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng: corrupt PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY || (depth != 8 && depth != 16)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("expected 8- or 16-bit single-channel PNG: " + path.string());
  }
  out.bit_depth = depth;
  out.pixels = Raster<std::uint16_t>(width, height);
  const std::size_t stride = static_cast<std::size_t>(width) * (depth / 8);
  row.resize(stride);
  for (int y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < width; ++x) {
      out.pixels(x, y) = depth == 16
                             ? static_cast<std::uint16_t>((row[2 * static_cast<std::size_t>(x)] << 8) |
                                                          row[2 * static_cast<std::size_t>(x) + 1])
                             : row[static_cast<std::size_t>(x)];
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

inline void write_png16(const std::filesystem::path& path, const Raster<std::uint16_t>& img) {
  std::vector<std::uint8_t> bytes(img.size() * 2);
  for (std::size_t i = 0; i < img.size(); ++i) {
    bytes[2 * i] = static_cast<std::uint8_t>(img[i] >> 8);
    bytes[2 * i + 1] = static_cast<std::uint8_t>(img[i] & 0xff);
  }
  detail::write_gray_png(path, img.width(), img.height(), 16, bytes);
}

inline void write_png8(const std::filesystem::path& path, const Raster<std::uint8_t>& img) {
  detail::write_gray_png(path, img.width(), img.height(), 8, img.data());
}

inline Raster<std::uint16_t> read_png16(const std::filesystem::path& path) {
  GrayImage img = read_png(path);
  if (img.bit_depth != 16) throw DataError("expected a 16-bit PNG: " + path.string());
  return std::move(img.pixels);
}

inline Raster<std::uint8_t> read_png8(const std::filesystem::path& path) {
  GrayImage img = read_png(path);
  if (img.bit_depth != 8) throw DataError("expected an 8-bit PNG: " + path.string());
  Raster<std::uint8_t> out(img.pixels.width(), img.pixels.height());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::uint8_t>(img.pixels[i]);
  return out;
}

}  // namespace smear::io
