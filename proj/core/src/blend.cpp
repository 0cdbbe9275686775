#include "meshsplat/blend.hpp"

#include "meshsplat/errors.hpp"

#include <cmath>
#include <vector>

namespace meshsplat {

Image occlusion_mask(const Image& nearz, const Image& mesh_depth) {
  if (!nearz.same_shape(mesh_depth)) throw ParameterError("occlusion_mask: shape mismatch");
  Image out(nearz.width(), nearz.height(), 1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = nearz.data()[i] < mesh_depth.data()[i] ? 1.0 : 0.0;
  }
  return out;
}

Image gaussian_blur(const Image& image, double sigma) {
  if (sigma < 0.0) throw ParameterError("gaussian_blur: sigma must be >= 0");
  if (sigma == 0.0) return image;

  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  const int w = image.width();
  const int h = image.height();
  const int ch = image.channels();
  Image tmp(w, h, ch);
  Image out(w, h, ch);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double v = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int xi = std::clamp(x + i, 0, w - 1);
          v += kernel[i + radius] * image.at(xi, y, c);
        }
        tmp.at(x, y, c) = v;
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double v = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int yi = std::clamp(y + i, 0, h - 1);
          v += kernel[i + radius] * tmp.at(x, yi, c);
        }
        out.at(x, y, c) = v;
      }
    }
  }
  return out;
}

Image composite(const Image& hair, const Image& head, const Image& alpha, const Image& soft_mask) {
  if (!hair.same_shape(head) || alpha.width() != hair.width() || alpha.height() != hair.height() ||
      !alpha.same_shape(soft_mask)) {
    throw ParameterError("composite: buffer dimensions disagree");
  }
  Image out(hair.width(), hair.height(), hair.channels());
  for (int y = 0; y < hair.height(); ++y) {
    for (int x = 0; x < hair.width(); ++x) {
      const double a = alpha.at(x, y) * soft_mask.at(x, y);
      for (int c = 0; c < hair.channels(); ++c) {
        out.at(x, y, c) = a * hair.at(x, y, c) + (1.0 - a) * head.at(x, y, c);
      }
    }
  }
  return out;
}

BlendMaps make_blend_maps(const Image& nearz_or_accdepth, const Image& mesh_depth,
                          const Image& hair_alpha, double blur_sigma) {
  BlendMaps maps;
  maps.occlusion = occlusion_mask(nearz_or_accdepth, mesh_depth);
  maps.soft_mask = gaussian_blur(maps.occlusion, blur_sigma);
  maps.hair_blend = Image(hair_alpha.width(), hair_alpha.height(), 1);
  for (std::size_t i = 0; i < maps.hair_blend.size(); ++i) {
    maps.hair_blend.data()[i] = hair_alpha.data()[i] * maps.soft_mask.data()[i];
  }
  return maps;
}

}  // namespace meshsplat
