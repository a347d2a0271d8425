#pragma once

// Image codec boundary. Intensities map to 8-bit by v/255 on load and
// round-half-up of v*255 on save. PNG is the lossless interchange format;
// JPEG exists for ingest and for explicitly lossy export only.

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "detkit/core.hpp"

namespace detkit::io {

/// I/O failures always carry the offending path.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Round-half-up quantization to 8-bit, clamped.
inline std::uint8_t quantize_intensity(double v) {
  const double scaled = std::floor(v * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

inline std::vector<std::uint8_t> quantize(const ImageBuffer& img) {
  std::vector<std::uint8_t> out(img.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = quantize_intensity(img.data()[i]);
  return out;
}

inline ImageBuffer from_bytes(int height, int width, const std::vector<std::uint8_t>& bytes) {
  std::vector<double> data(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) data[i] = bytes[i] / 255.0;
  return ImageBuffer(height, width, std::move(data));
}

namespace detail {

struct File {
  std::FILE* fp = nullptr;
  explicit File(const std::string& path, const char* mode) : fp(std::fopen(path.c_str(), mode)) {}
  ~File() {
    if (fp) std::fclose(fp);
  }
  File(const File&) = delete;
  File& operator=(const File&) = delete;
};

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  std::longjmp(mgr->jump, 1);
}

}  // namespace detail

inline ImageBuffer load_png(const std::string& path) {
  detail::File file(path, "rb");
  if (!file.fp) throw IoError("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng init failed for " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng init failed for " + path);
  }
  std::vector<std::uint8_t> bytes;
  std::vector<png_bytep> rows;
  int width = 0, height = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt PNG: " + path);
  }
  png_init_io(png, file.fp);
  png_read_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  if (png_get_rowbytes(png, info) != static_cast<std::size_t>(width) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unsupported PNG layout: " + path);
  }
  bytes.resize(static_cast<std::size_t>(height) * width * 3);
  rows.resize(height);
  for (int y = 0; y < height; ++y) rows[y] = bytes.data() + static_cast<std::size_t>(y) * width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return from_bytes(height, width, bytes);
}

inline void save_png(const ImageBuffer& img, const std::string& path) {
  detail::File file(path, "wb");
  if (!file.fp) throw IoError("cannot open " + path + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng init failed for " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng init failed for " + path);
  }
  std::vector<std::uint8_t> bytes = quantize(img);
  std::vector<png_bytep> rows(img.height());
  for (int y = 0; y < img.height(); ++y)
    rows[y] = bytes.data() + static_cast<std::size_t>(y) * img.width() * 3;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG write failed: " + path);
  }
  png_init_io(png, file.fp);
  png_set_compression_level(png, 3);  // fixed level: deterministic bytes, fast enough for frames
  png_set_IHDR(png, info, img.width(), img.height(), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline ImageBuffer load_jpeg(const std::string& path) {
  detail::File file(path, "rb");
  if (!file.fp) throw IoError("cannot open " + path);
  jpeg_decompress_struct cinfo;
  detail::JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = detail::jpeg_error_exit;
  std::vector<std::uint8_t> bytes;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw IoError("corrupt JPEG: " + path);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.fp);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const int width = static_cast<int>(cinfo.output_width);
  const int height = static_cast<int>(cinfo.output_height);
  bytes.resize(static_cast<std::size_t>(height) * width * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = bytes.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return from_bytes(height, width, bytes);
}

inline void save_jpeg(const ImageBuffer& img, const std::string& path, int quality = 95) {
  detail::File file(path, "wb");
  if (!file.fp) throw IoError("cannot open " + path + " for writing");
  jpeg_compress_struct cinfo;
  detail::JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = detail::jpeg_error_exit;
  std::vector<std::uint8_t> bytes = quantize(img);
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    throw IoError("JPEG write failed: " + path);
  }
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, file.fp);
  cinfo.image_width = static_cast<JDIMENSION>(img.width());
  cinfo.image_height = static_cast<JDIMENSION>(img.height());
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = bytes.data() + static_cast<std::size_t>(cinfo.next_scanline) * img.width() * 3;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
}

/// Codec chosen by file magic (PNG signature or JPEG SOI).
inline ImageBuffer load_image(const std::string& path) {
  unsigned char magic[8] = {0};
  {
    detail::File file(path, "rb");
    if (!file.fp) throw IoError("cannot open " + path);
    if (std::fread(magic, 1, sizeof(magic), file.fp) < 2)
      throw IoError("unreadable image file: " + path);
  }
  if (magic[0] == 0x89 && magic[1] == 'P') return load_png(path);
  if (magic[0] == 0xFF && magic[1] == 0xD8) return load_jpeg(path);
  throw IoError("unsupported image format (expected PNG or JPEG): " + path);
}

/// Codec chosen by extension: .png, .jpg or .jpeg.
inline void save_image(const ImageBuffer& img, const std::string& path) {
  std::string ext;
  const auto dot = path.rfind('.');
  if (dot != std::string::npos) {
    ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  }
  if (ext == "png")
    save_png(img, path);
  else if (ext == "jpg" || ext == "jpeg")
    save_jpeg(img, path);
  else
    throw IoError("unsupported image extension (expected .png/.jpg): " + path);
}

}  // namespace detkit::io
