#include "meshsplat/morphology.hpp"

#include "meshsplat/errors.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace meshsplat {

namespace {

Image disk_filter(const Image& mask, int radius, bool take_min) {
  if (mask.channels() != 1) throw ParameterError("morphology: expected a single-channel mask");
  if (radius <= 0) return mask;
  // Precompute the disk offsets once.
  std::vector<std::pair<int, int>> offsets;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy <= radius * radius) offsets.emplace_back(dx, dy);
    }
  }
  const int w = mask.width();
  const int h = mask.height();
  Image out(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = take_min ? 1.0 : 0.0;
      for (const auto& [dx, dy] : offsets) {
        const int xi = x + dx;
        const int yi = y + dy;
        // Outside the image counts as background for both operations.
        const double s = (xi < 0 || xi >= w || yi < 0 || yi >= h) ? 0.0 : mask.at(xi, yi);
        v = take_min ? std::min(v, s) : std::max(v, s);
      }
      out.at(x, y) = v;
    }
  }
  return out;
}

// 1D squared distance transform (Felzenszwalb & Huttenlocher lower envelope).
void dt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
           std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    if (f[q] == kInf) continue;
    double s;
    for (;;) {
      if (f[v[k]] == kInf) {
        // No finite parabola yet; replace.
        if (k == 0) {
          v[0] = q;
          z[0] = -kInf;
          z[1] = kInf;
          break;
        }
        --k;
        continue;
      }
      s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
      if (s <= z[k]) {
        --k;
      } else {
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
        break;
      }
    }
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const int p = v[k];
    d[q] = f[p] == kInf ? kInf : (q - p) * (q - p) + f[p];
  }
}

}  // namespace

Image erode(const Image& mask, int radius) { return disk_filter(mask, radius, /*take_min=*/true); }

Image dilate(const Image& mask, int radius) { return disk_filter(mask, radius, /*take_min=*/false); }

Image distance_transform(const Image& mask) {
  if (mask.channels() != 1) throw ParameterError("distance_transform: expected 1-channel mask");
  const int w = mask.width();
  const int h = mask.height();
  Image sq(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) sq.at(x, y) = mask.at(x, y) > 0.5 ? 0.0 : kInf;
  }

  const int n = std::max(w, h);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int> v(n);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[x] = sq.at(x, y);
    f.resize(w);
    dt_1d(f, d, v, z);
    for (int x = 0; x < w; ++x) sq.at(x, y) = d[x];
    f.resize(n);
  }
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = sq.at(x, y);
    f.resize(h);
    dt_1d(f, d, v, z);
    for (int y = 0; y < h; ++y) sq.at(x, y) = d[y];
    f.resize(n);
  }
  for (std::size_t i = 0; i < sq.size(); ++i) {
    sq.data()[i] = sq.data()[i] == kInf ? kInf : std::sqrt(sq.data()[i]);
  }
  return sq;
}

}  // namespace meshsplat
