#pragma once

#include "meshsplat/types.hpp"

#include <vector>

namespace meshsplat {

struct IcpOptions {
  int max_iters = 50;
  double tol = 1e-9;       // stop when the residual change falls below this
  bool with_scale = false;
  double trim_fraction = 0.0;  // drop the worst matches (0 keeps everything)
};

struct IcpResult {
  RigidTransform transform;
  double residual = 0.0;  // RMS point-to-correspondence distance
  int iterations = 0;
  std::vector<double> residual_history;  // one entry per iteration
};

/// Closed-form least-squares alignment of paired points (SVD orthogonal
/// Procrustes; Umeyama scale when with_scale). Throws RankDeficiencyError on
/// collinear/coincident sources.
RigidTransform procrustes(const std::vector<Vec3>& src, const std::vector<Vec3>& dst,
                          bool with_scale);

/// Iterative closest point: alternates nearest-neighbor correspondence and the
/// closed-form alignment until the residual change drops below tol. Returns
/// the transform mapping src onto dst. Residuals are non-increasing across
/// iterations by construction.
IcpResult icp(const std::vector<Vec3>& src, const std::vector<Vec3>& dst, const IcpOptions& opts);

}  // namespace meshsplat
