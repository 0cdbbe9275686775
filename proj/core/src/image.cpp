#include "meshsplat/image.hpp"

#include "meshsplat/errors.hpp"

#include <algorithm>
#include <cmath>

namespace meshsplat {

Image quantize8(const Image& img) {
  Image out(img.width(), img.height(), img.channels());
  const auto& src = img.data();
  auto& dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double clamped = std::clamp(src[i], 0.0, 1.0);
    dst[i] = std::round(clamped * 255.0) / 255.0;
  }
  return out;
}

double max_abs_diff(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ParameterError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  }
  return m;
}

}  // namespace meshsplat
