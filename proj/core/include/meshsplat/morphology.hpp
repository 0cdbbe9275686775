#pragma once

#include "meshsplat/image.hpp"

namespace meshsplat {

/// Min-filter with a disk structuring element of the given pixel radius.
Image erode(const Image& mask, int radius);

/// Max-filter with a disk structuring element (used for uv-mask dilation).
Image dilate(const Image& mask, int radius);

/// Exact Euclidean distance to the nearest mask-interior (>0.5) pixel,
/// measured between pixel centers; zero inside the mask. All-zero masks give
/// +inf everywhere.
Image distance_transform(const Image& mask);

}  // namespace meshsplat
