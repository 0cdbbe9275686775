#pragma once

#include "meshsplat/geometry.hpp"
#include "meshsplat/image.hpp"
#include "meshsplat/raster.hpp"
#include "meshsplat/splat.hpp"

#include <utility>
#include <vector>

namespace meshsplat {

/// Loss weights (all >= 0). The diffuse photometric term is always weighted
/// 3 * photo on top of these.
struct LossWeights {
  double photo = 1.0;
  double ssim = 0.2;
  double depth = 0.1;
  double normal = 0.05;
  double shrink = 1e-3;
  double laplacian = 10.0;
  double normal_consistency = 0.1;
  double edge_length = 1.0;
  double silhouette = 0.01;
  double solid = 0.1;
  double aiap = 1.0;
  double delta_reg = 0.01;

  void validate() const;
};

/// Masked mean squared error over pixels and channels. Empty masks yield 0
/// and set *warned when provided.
double loss_photometric(const Image& target, const Image& render, const Image& mask,
                        bool* warned = nullptr);

/// d(loss_photometric)/d(render).
Image loss_photometric_backward(const Image& target, const Image& render, const Image& mask);

struct GeometricLoss {
  double depth = 0.0;
  double normal = 0.0;
  Image inlier_mask;  // M_d: |D - D_hat| < threshold and both finite
};

/// Depth L1 and screen-normal losses, both restricted to the inlier mask
/// M_d = |D - D_hat| < depth_threshold (noise gating).
GeometricLoss loss_geometric(const Image& target_depth, const Image& render_depth,
                             const Camera& camera, double depth_threshold);

/// d(w_d * L_d + w_n * L_n)/d(render_depth).
Image loss_geometric_backward(const Image& target_depth, const Image& render_depth,
                              const Camera& camera, double depth_threshold, double w_d,
                              double w_n);

/// Mean squared distance of visible refined scalp vertices to the centroid of
/// the full scalp set on the posed (unrefined) mesh. Empty visible set -> 0.
double loss_shrink(const TriMesh& refined, const std::vector<int>& visible_scalp,
                   const TriMesh& posed, const std::vector<int>& full_scalp);

/// Gradient w.r.t. refined vertices (sparse: only visible scalp entries).
std::vector<Vec3> loss_shrink_backward(const TriMesh& refined,
                                       const std::vector<int>& visible_scalp,
                                       const TriMesh& posed, const std::vector<int>& full_scalp);

/// Distance-weighted silhouette loss: mean over all pixels of
/// |M_hair - A_hat| * dist(pixel, mask). Pixels inside the mask carry zero
/// weight by construction of the distance transform.
double loss_silhouette(const Image& hair_mask, const Image& hair_blend, const Image& distance);

Image loss_silhouette_backward(const Image& hair_mask, const Image& hair_blend,
                               const Image& distance);

/// Solidity: mean (1 - A_hat) over the eroded hair mask. Empty erosion -> 0
/// and sets *warned.
double loss_solid(const Image& hair_blend, const Image& eroded_mask, bool* warned = nullptr);

Image loss_solid_backward(const Image& hair_blend, const Image& eroded_mask);

/// Directed k-NN pairs on a canonical point set (built once per training).
std::vector<std::pair<int, int>> knn_pairs(const std::vector<Vec3>& points, int k);

/// As-isometric-as-possible: mean over pairs of (|x'_i - x'_j| - |x_i - x_j|)^2.
double loss_aiap(const std::vector<Vec3>& canonical, const std::vector<Vec3>& deformed,
                 const std::vector<std::pair<int, int>>& pairs);

std::vector<Vec3> loss_aiap_backward(const std::vector<Vec3>& canonical,
                                     const std::vector<Vec3>& deformed,
                                     const std::vector<std::pair<int, int>>& pairs);

/// Mean squared norm of the per-Gaussian deltas (rotation, scale, opacity,
/// sh; positions are regularized by AIAP instead). Returns the loss and
/// writes the gradient into grad when non-null.
double loss_delta_norm(const GaussianDelta& delta, GaussianDelta* grad = nullptr);

}  // namespace meshsplat
