// This file is part of the vedge project.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "vedge/imageio.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace vedge {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw FormatError("cannot open file: " + path);
  return f;
}

std::uint8_t to_u8(float v) {
  return static_cast<std::uint8_t>(iround(clamp(v, 0.0f, 1.0f) * 255.0f));
}

Image read_png(std::FILE* fp, const std::string& path) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw FormatError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw FormatError("libpng init failed");
  }
  std::vector<std::uint8_t> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt PNG: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  int color_type = png_get_color_type(png, info);

  // Normalize everything to 8-bit gray or RGB.
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (bit_depth == 16) png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  color_type = png_get_color_type(png, info);
  const int channels = (color_type == PNG_COLOR_TYPE_GRAY) ? 1 : 3;
  const std::size_t stride = static_cast<std::size_t>(w) * channels;
  buffer.resize(stride * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = buffer.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(static_cast<int>(w), static_cast<int>(h), channels);
  for (png_uint_32 y = 0; y < h; ++y) {
    const std::uint8_t* row = buffer.data() + y * stride;
    for (png_uint_32 x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        img.planes[c](y, x) = static_cast<float>(row[x * channels + c]) / 255.0f;
  }
  return img;
}

Image read_pnm(std::FILE* fp, const std::string& path) {
  auto fail = [&](const char* why) -> ParseError {
    return ParseError(path + ": " + why);
  };
  auto next_token = [&]() -> long {
    // PNM headers allow whitespace and '#' comments between tokens.
    int c = std::fgetc(fp);
    for (;;) {
      while (c == ' ' || c == '\t' || c == '\r' || c == '\n') c = std::fgetc(fp);
      if (c == '#') {
        while (c != '\n' && c != EOF) c = std::fgetc(fp);
        continue;
      }
      break;
    }
    long value = 0;
    bool any = false;
    while (c >= '0' && c <= '9') {
      value = value * 10 + (c - '0');
      any = true;
      c = std::fgetc(fp);
    }
    if (!any) throw fail("bad PNM header");
    return value;
  };

  int magic0 = std::fgetc(fp);
  int magic1 = std::fgetc(fp);
  if (magic0 != 'P' || (magic1 != '5' && magic1 != '6')) throw fail("not a binary PGM/PPM");
  const int channels = (magic1 == '5') ? 1 : 3;
  long w = next_token();
  long h = next_token();
  long maxval = next_token();
  if (w <= 0 || h <= 0 || maxval != 255) throw fail("unsupported PNM header");

  const std::size_t stride = static_cast<std::size_t>(w) * channels;
  std::vector<std::uint8_t> row(stride);
  Image img(static_cast<int>(w), static_cast<int>(h), channels);
  for (long y = 0; y < h; ++y) {
    if (std::fread(row.data(), 1, stride, fp) != stride) throw fail("truncated PNM payload");
    for (long x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        img.planes[c](y, x) = static_cast<float>(row[x * channels + c]) / 255.0f;
  }
  return img;
}

void write_u32_le(std::ofstream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

std::uint32_t read_u32_le(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

Image read_image(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  unsigned char sig[2] = {0, 0};
  if (std::fread(sig, 1, 2, f.get()) != 2) throw FormatError("empty file: " + path);
  std::rewind(f.get());
  if (sig[0] == 0x89 && sig[1] == 'P') return read_png(f.get(), path);
  if (sig[0] == 'P' && (sig[1] == '5' || sig[1] == '6')) return read_pnm(f.get(), path);
  throw FormatError("unrecognized image format: " + path);
}

void write_image_png(const Image& img, const std::string& path) {
  require_valid(img, "write_image_png");
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw FormatError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw FormatError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("PNG write failed: " + path);
  }
  png_init_io(png, f.get());

  const int w = img.width(), h = img.height(), channels = img.channels();
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * channels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        row[static_cast<std::size_t>(x) * channels + c] = to_u8(img.planes[c](y, x));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_image_pnm(const Image& img, const std::string& path) {
  require_valid(img, "write_image_pnm");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open file: " + path);
  const int w = img.width(), h = img.height(), channels = img.channels();
  out << (channels == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * channels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        row[static_cast<std::size_t>(x) * channels + c] = to_u8(img.planes[c](y, x));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw FormatError("write failed: " + path);
}

void write_edge_map_png(const EdgeMap& edges, const std::string& path) {
  Image img(edges.width(), edges.height(), 1);
  img.planes[0] = edges.strength;
  write_image_png(img, path);
}

EdgeMap read_edge_map_png(const std::string& path) {
  Image img = read_image(path);
  PlaneF s = img.planes[0];
  if (img.channels() == 3) s = (img.planes[0] + img.planes[1] + img.planes[2]) / 3.0f;
  return EdgeMap(std::move(s));
}

void write_edge_map_edgm(const EdgeMap& edges, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open file: " + path);
  out.write("EDGM", 4);
  write_u32_le(out, static_cast<std::uint32_t>(edges.width()));
  write_u32_le(out, static_cast<std::uint32_t>(edges.height()));
  for (int y = 0; y < edges.height(); ++y)
    for (int x = 0; x < edges.width(); ++x) {
      float v = edges.strength(y, x);
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      write_u32_le(out, bits);
    }
  if (!out) throw FormatError("write failed: " + path);
}

EdgeMap read_edge_map_edgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "EDGM", 4) != 0)
    throw FormatError("bad EDGM magic: " + path);
  std::uint32_t w = read_u32_le(in);
  std::uint32_t h = read_u32_le(in);
  if (!in || w == 0 || h == 0) throw FormatError("bad EDGM header: " + path);
  EdgeMap edges(static_cast<int>(w), static_cast<int>(h));
  for (std::uint32_t y = 0; y < h; ++y)
    for (std::uint32_t x = 0; x < w; ++x) {
      std::uint32_t bits = read_u32_le(in);
      if (!in) throw FormatError("truncated EDGM payload: " + path);
      float v;
      std::memcpy(&v, &bits, 4);
      edges.strength(y, x) = v;
    }
  return edges;
}

}  // namespace vedge
