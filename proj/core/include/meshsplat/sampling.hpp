#pragma once

#include "meshsplat/types.hpp"

#include <algorithm>
#include <cmath>

namespace meshsplat {

/// Bilinear footprint of a uv sample on a W x H grid. Texel (i, j) has its
/// center at uv = ((i + 0.5) / W, (j + 0.5) / H); uv is clamped to [0,1]^2.
struct BilinearSample {
  int x0, y0, x1, y1;
  double w00, w10, w01, w11;  // weights for (x0,y0), (x1,y0), (x0,y1), (x1,y1)
};

inline BilinearSample bilinear_setup(double u, double v, int width, int height) {
  u = std::clamp(u, 0.0, 1.0);
  v = std::clamp(v, 0.0, 1.0);
  const double gx = std::clamp(u * width - 0.5, 0.0, static_cast<double>(width - 1));
  const double gy = std::clamp(v * height - 0.5, 0.0, static_cast<double>(height - 1));
  BilinearSample s;
  s.x0 = static_cast<int>(gx);
  s.y0 = static_cast<int>(gy);
  s.x1 = std::min(s.x0 + 1, width - 1);
  s.y1 = std::min(s.y0 + 1, height - 1);
  const double fx = gx - s.x0;
  const double fy = gy - s.y0;
  s.w00 = (1.0 - fx) * (1.0 - fy);
  s.w10 = fx * (1.0 - fy);
  s.w01 = (1.0 - fx) * fy;
  s.w11 = fx * fy;
  return s;
}

}  // namespace meshsplat
