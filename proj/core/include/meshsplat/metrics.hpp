#pragma once

#include "meshsplat/image.hpp"

namespace meshsplat {

/// PSNR in dB over masked pixels/channels (dynamic range 1), capped at 99
/// when the MSE is below 1e-10. Throws UndefinedMetricError on empty masks.
double psnr(const Image& a, const Image& b, const Image& mask);

/// D-SSIM = 1 - SSIM. 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
/// dynamic range 1; windows near borders renormalize over the valid taps, so
/// identical images give exactly 0. Channels average uniformly.
double dssim(const Image& a, const Image& b, const Image& mask);

/// Gradient of dssim(target, render, mask) w.r.t. the render image.
Image dssim_backward(const Image& target, const Image& render, const Image& mask);

/// Mean absolute difference over masked pixels (used for depth MAE); pixels
/// where either input is non-finite are skipped. Returns 0 on empty support.
double masked_mae(const Image& a, const Image& b, const Image& mask);

}  // namespace meshsplat
