// Copyright 2026 The fss Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fss/image_io.hpp"

#include <png.h>
#include <jpeglib.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <cctype>
#include <vector>

#include "fss/rng.hpp"

namespace fss {
namespace {

namespace fs = std::filesystem;

std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image file '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

enum class Format { kPng, kJpeg, kPpm, kUnknown };

Format sniff(const std::vector<unsigned char>& b) {
  if (b.size() >= 8 && png_sig_cmp(b.data(), 0, 8) == 0) return Format::kPng;
  if (b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF) return Format::kJpeg;
  if (b.size() >= 2 && b[0] == 'P' && b[1] == '6') return Format::kPpm;
  return Format::kUnknown;
}

Rgb8Image decode_png(const std::vector<unsigned char>& bytes, const fs::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw DataError("PNG decode failed for '" + path.string() + "': " + img.message);
  img.format = PNG_FORMAT_RGB;
  Rgb8Image out(static_cast<int>(img.width), static_cast<int>(img.height));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw DataError("PNG decode failed for '" + path.string() + "': " + msg);
  }
  return out;
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

Rgb8Image decode_jpeg(const std::vector<unsigned char>& bytes, const fs::path& path) {
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  Rgb8Image out;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DataError("JPEG decode failed for '" + path.string() + "': " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out = Rgb8Image(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height));
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

// Minimal P6 reader: maxval 255 only.
Rgb8Image decode_ppm(const std::vector<unsigned char>& bytes, const fs::path& path) {
  std::size_t pos = 2;
  auto next_int = [&]() -> long {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      any = true;
    }
    if (!any) throw DataError("malformed PPM header in '" + path.string() + "'");
    return v;
  };
  const long w = next_int(), h = next_int(), maxval = next_int();
  if (w < 1 || h < 1 || maxval != 255)
    throw DataError("unsupported PPM variant in '" + path.string() + "'");
  ++pos;
  Rgb8Image out(static_cast<int>(w), static_cast<int>(h));
  if (bytes.size() < pos + out.pixels.size())
    throw DataError("truncated PPM payload in '" + path.string() + "'");
  std::memcpy(out.pixels.data(), bytes.data() + pos, out.pixels.size());
  return out;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

void write_png_with(const fs::path& path, png_uint_32 w, png_uint_32 h, png_uint_32 format,
                    const void* buffer, const void* colormap, int colormap_entries) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = w;
  img.height = h;
  img.format = format;
  img.colormap_entries = static_cast<png_uint_32>(colormap_entries);
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, buffer, 0, colormap))
    throw DataError("PNG encode failed for '" + path.string() + "': " + img.message);
}

}  // namespace

Rgb8Image read_image(const fs::path& path) {
  const auto bytes = read_bytes(path);
  switch (sniff(bytes)) {
    case Format::kPng:
      return decode_png(bytes, path);
    case Format::kJpeg:
      return decode_jpeg(bytes, path);
    case Format::kPpm:
      return decode_ppm(bytes, path);
    default:
      throw DataError("unrecognized image format: '" + path.string() + "'");
  }
}

void write_png_rgb(const fs::path& path, const Rgb8Image& image) {
  write_png_with(path, image.width, image.height, PNG_FORMAT_RGB, image.pixels.data(), nullptr, 0);
}

void write_png_gray(const fs::path& path, const Grid2D<std::uint8_t>& gray) {
  write_png_with(path, gray.width(), gray.height(), PNG_FORMAT_GRAY, gray.data().data(), nullptr, 0);
}

std::array<std::uint8_t, 3> class_color(ClassId c) {
  std::array<std::uint8_t, 3> rgb{0, 0, 0};
  auto v = static_cast<unsigned>(c);
  for (int shift = 7; v != 0; --shift, v >>= 3) {
    rgb[0] |= static_cast<std::uint8_t>(((v >> 0) & 1u) << shift);
    rgb[1] |= static_cast<std::uint8_t>(((v >> 1) & 1u) << shift);
    rgb[2] |= static_cast<std::uint8_t>(((v >> 2) & 1u) << shift);
  }
  return rgb;
}

void write_png_indexed(const fs::path& path, const LabelGrid& labels) {
  std::vector<std::uint8_t> idx(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] > 255)
      throw DataError("indexed PNG supports class ids 0..255 only");
    idx[i] = static_cast<std::uint8_t>(labels[i]);
  }
  std::vector<std::uint8_t> palette(256 * 3);
  for (int c = 0; c < 256; ++c) {
    const auto rgb = class_color(c);
    std::copy(rgb.begin(), rgb.end(), palette.begin() + c * 3);
  }
  write_png_with(path, labels.width(), labels.height(), PNG_FORMAT_RGB_COLORMAP, idx.data(),
                 palette.data(), 256);
}

LabelGrid read_png_indices(const fs::path& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw DataError("cannot open '" + path.string() + "'");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("PNG decode failed for '" + path.string() + "'");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const auto w = png_get_image_width(png, info);
  const auto h = png_get_image_height(png, info);
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_PALETTE) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("'" + path.string() + "' is not a palette PNG");
  }
  png_set_packing(png);
  png_read_update_info(png, info);
  std::vector<std::uint8_t> rows(static_cast<std::size_t>(w) * h);
  std::vector<png_bytep> ptrs(h);
  for (png_uint_32 y = 0; y < h; ++y) ptrs[y] = rows.data() + static_cast<std::size_t>(y) * w;
  png_read_image(png, ptrs.data());
  png_destroy_read_struct(&png, &info, nullptr);
  LabelGrid out(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = rows[i];
  return out;
}

Rgb8Image FileImageSource::load() const { return read_image(path_); }

std::uint64_t FileImageSource::content_hash() const {
  std::call_once(hash_once_, [this] {
    const auto bytes = read_bytes(path_);
    hash_ = fnv1a64(bytes.data(), bytes.size());
  });
  return hash_;
}

}  // namespace fss
