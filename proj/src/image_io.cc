// Copyright (c) the prefilter Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "prefilter/image_io.h"

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <jpeglib.h>
#include <png.h>

namespace prefilter {

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(f),
                              std::istreambuf_iterator<char>());
}

ImageU8 load_ppm(const std::vector<uint8_t>& bytes, const std::string& path) {
  size_t pos = 2;
  auto next_token = [&]() -> long {
    while (pos < bytes.size()) {
      if (std::isspace(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      ++pos;
      any = true;
    }
    if (!any) throw std::runtime_error("bad PPM header: " + path);
    return v;
  };
  const long w = next_token();
  const long h = next_token();
  const long maxv = next_token();
  if (maxv != 255) throw std::runtime_error("PPM maxval must be 255: " + path);
  ++pos;  // single whitespace after header
  ImageU8 img;
  img.h = int(h);
  img.w = int(w);
  img.rgb.resize(size_t(h) * w * 3);
  if (bytes.size() - pos < img.rgb.size())
    throw std::runtime_error("truncated PPM: " + path);
  std::memcpy(img.rgb.data(), bytes.data() + pos, img.rgb.size());
  return img;
}

void save_ppm(const ImageU8& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "P6\n" << img.w << " " << img.h << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.rgb.data()),
          std::streamsize(img.rgb.size()));
}

struct PngReadCtx {
  const uint8_t* data;
  size_t size;
  size_t pos;
};

void png_read_fn(png_structp png, png_bytep out, png_size_t n) {
  auto* ctx = static_cast<PngReadCtx*>(png_get_io_ptr(png));
  if (ctx->pos + n > ctx->size) png_error(png, "read past end");
  std::memcpy(out, ctx->data + ctx->pos, n);
  ctx->pos += n;
}

ImageU8 load_png(const std::vector<uint8_t>& bytes, const std::string& path) {
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw std::runtime_error("png init failed");
  ImageU8 img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png decode failed: " + path);
  }
  PngReadCtx ctx{bytes.data(), bytes.size(), 0};
  png_set_read_fn(png, &ctx, png_read_fn);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  img.h = int(png_get_image_height(png, info));
  img.w = int(png_get_image_width(png, info));
  if (png_get_rowbytes(png, info) != size_t(img.w) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("unsupported png layout: " + path);
  }
  img.rgb.resize(size_t(img.h) * img.w * 3);
  rows.resize(size_t(img.h));
  for (int y = 0; y < img.h; ++y)
    rows[size_t(y)] = img.rgb.data() + size_t(y) * img.w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void save_png(const ImageU8& img, const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(f);
    throw std::runtime_error("png encode failed: " + path);
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, png_uint_32(img.w), png_uint_32(img.h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.h; ++y)
    png_write_row(png, const_cast<png_bytep>(img.rgb.data() + size_t(y) * img.w * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
}

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  longjmp(mgr->jump, 1);
}

}  // namespace

ImageU8 load_image(const std::string& path) {
  std::vector<uint8_t> bytes = read_file(path);
  if (bytes.size() < 8) throw std::runtime_error("file too small: " + path);
  if (bytes[0] == 'P' && bytes[1] == '6') return load_ppm(bytes, path);
  if (bytes[0] == 0x89 && bytes[1] == 'P') return load_png(bytes, path);
  if (bytes[0] == 0xFF && bytes[1] == 0xD8) return jpeg_decode(bytes);
  throw std::runtime_error("unrecognized image format: " + path);
}

void save_image(const ImageU8& img, const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".ppm") {
    save_ppm(img, path);
  } else if (path.size() >= 4 && path.substr(path.size() - 4) == ".png") {
    save_png(img, path);
  } else {
    throw std::runtime_error("unsupported output extension: " + path);
  }
}

bool has_image_extension(const std::string& path) {
  const auto dot = path.rfind('.');
  if (dot == std::string::npos) return false;
  const std::string ext = path.substr(dot);
  return ext == ".ppm" || ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<uint8_t> jpeg_encode(const ImageU8& img, int quality) {
  if (quality < 1 || quality > 100)
    throw std::invalid_argument("jpeg quality out of range");
  jpeg_compress_struct cinfo;
  JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  unsigned char* buf = nullptr;
  unsigned long buf_size = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    if (buf) free(buf);
    throw std::runtime_error("jpeg encode failed");
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buf, &buf_size);
  cinfo.image_width = JDIMENSION(img.w);
  cinfo.image_height = JDIMENSION(img.h);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<JSAMPROW>(
        img.rgb.data() + size_t(cinfo.next_scanline) * img.w * 3);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::vector<uint8_t> out(buf, buf + buf_size);
  free(buf);
  return out;
}

ImageU8 jpeg_decode(const std::vector<uint8_t>& bytes) {
  jpeg_decompress_struct cinfo;
  JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw std::runtime_error("jpeg decode failed");
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), bytes.size());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  ImageU8 img;
  img.h = int(cinfo.output_height);
  img.w = int(cinfo.output_width);
  img.rgb.resize(size_t(img.h) * img.w * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.rgb.data() + size_t(cinfo.output_scanline) * img.w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

}  // namespace prefilter
