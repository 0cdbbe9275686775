#pragma once

#include "meshsplat/types.hpp"

#include <cassert>
#include <cstdint>
#include <vector>

namespace meshsplat {

/// Dense H x W x C raster of doubles, row-major with interleaved channels.
/// Used for colors (C=3), depth/alpha/masks (C=1), uv (C=2), normals (C=3).
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, double fill = 0.0)
      : width_(width), height_(height), channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  double& at(int x, int y, int c = 0) {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_ && c >= 0 && c < channels_);
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  double at(int x, int y, int c = 0) const {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_ && c >= 0 && c < channels_);
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  Vec3 rgb(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }
  void set_rgb(int x, int y, const Vec3& v) {
    at(x, y, 0) = v.x();
    at(x, y, 1) = v.y();
    at(x, y, 2) = v.z();
  }

  void fill(double v) { data_.assign(data_.size(), v); }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Image& o) const {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }

  friend bool operator==(const Image& a, const Image& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.channels_ == b.channels_ &&
           a.data_ == b.data_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Quantizes [0,1] values to 8-bit and back, the PNG round-trip applied
/// in-memory. Metrics on rendered images operate in this quantized space.
Image quantize8(const Image& img);

/// Elementwise |a - b| summed over channels; images must share shape.
double max_abs_diff(const Image& a, const Image& b);

}  // namespace meshsplat
