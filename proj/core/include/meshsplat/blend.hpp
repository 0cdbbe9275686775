#pragma once

#include "meshsplat/image.hpp"

namespace meshsplat {

/// Occlusion and blending maps for hair/head compositing.
struct BlendMaps {
  Image occlusion;  // M_o, binary: hair near-z strictly closer than mesh depth
  Image soft_mask;  // G(M_o), blurred occlusion mask in [0,1]
  Image hair_blend; // A_hat = A_g * G(M_o)
};

/// M_o = nearz < mesh_depth, strict. +inf near-z (no hair) gives false; +inf
/// mesh depth with finite near-z gives true.
Image occlusion_mask(const Image& nearz, const Image& mesh_depth);

/// Separable normalized Gaussian blur, radius ceil(3 sigma), edge-clamped.
/// sigma == 0 returns the input unchanged.
Image gaussian_blur(const Image& image, double sigma);

/// I = A_hat * hair + (1 - A_hat) * head with A_hat = alpha * soft_mask.
Image composite(const Image& hair, const Image& head, const Image& alpha, const Image& soft_mask);

/// Full blend pipeline for one frame: mask, blur, hair blend map.
BlendMaps make_blend_maps(const Image& nearz_or_accdepth, const Image& mesh_depth,
                          const Image& hair_alpha, double blur_sigma);

}  // namespace meshsplat
