#include "meshsplat/image_io.hpp"

#include "meshsplat/errors.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace meshsplat {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw ParameterError("write_png: expected 1 or 3 channels");
  }
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IoError("write_png: cannot open " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("write_png: libpng failure for " + path.string());
  }
  png_init_io(png, fp.get());
  const int color_type = image.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(png, info, image.width(), image.height(), 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  // Fixed sRGB intent keeps output byte-stable across runs.
  png_set_sRGB(png, info, PNG_sRGB_INTENT_PERCEPTUAL);
  png_write_info(png, info);

  std::vector<unsigned char> row(static_cast<std::size_t>(image.width()) * image.channels());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < image.channels(); ++c) {
        row[static_cast<std::size_t>(x) * image.channels() + c] = to_byte(image.at(x, y, c));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IoError("read_png: cannot open " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("read_png: libpng failure for " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int ch = static_cast<int>(png_get_channels(png, info));
  if (ch != 1 && ch != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("read_png: unsupported channel count in " + path.string());
  }

  Image out(w, h, ch);
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * ch);
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        out.at(x, y, c) = row[static_cast<std::size_t>(x) * ch + c] / 255.0;
      }
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_pfm(const std::filesystem::path& path, const Image& image) {
  if (image.channels() != 1) throw ParameterError("write_pfm: expected 1 channel");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_pfm: cannot open " + path.string());
  out << "Pf\n" << image.width() << " " << image.height() << "\n-1.0\n";
  std::vector<float> row(image.width());
  for (int y = image.height() - 1; y >= 0; --y) {  // PFM stores bottom-up
    for (int x = 0; x < image.width(); ++x) row[x] = static_cast<float>(image.at(x, y));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw IoError("write_pfm: write failed for " + path.string());
}

Image read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_pfm: cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  if (magic != "Pf" || w <= 0 || h <= 0 || scale >= 0.0) {
    throw IoError("read_pfm: unsupported header in " + path.string());
  }
  in.get();  // single whitespace after the header
  Image out(w, h, 1);
  std::vector<float> row(w);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw IoError("read_pfm: truncated data in " + path.string());
    for (int x = 0; x < w; ++x) out.at(x, y) = row[x];
  }
  return out;
}

}  // namespace meshsplat
