#pragma once

#include "meshsplat/geometry.hpp"
#include "meshsplat/image.hpp"
#include "meshsplat/mlp.hpp"
#include "meshsplat/raster.hpp"
#include "meshsplat/rng.hpp"
#include "meshsplat/types.hpp"

#include <optional>
#include <vector>

namespace meshsplat {

/// Anisotropic 3D Gaussians, struct-of-arrays. Rotations are quaternions
/// (w, x, y, z), kept near unit norm; scales are log-space; opacity is a
/// logit. SH colors are stored per Gaussian as coeff-major triples
/// (index (i * sh_coeff_count + k) * 3 + channel), degree 0..3.
struct GaussianCloud {
  std::vector<Vec3> centers;
  std::vector<Vec4> rotations;
  std::vector<Vec3> log_scales;
  std::vector<double> opacity_logits;
  int sh_coeff_count = 1;
  std::vector<double> sh;

  int size() const { return static_cast<int>(centers.size()); }
  void resize(int n, int sh_coeffs);
  void validate() const;

  double* sh_at(int i) { return sh.data() + static_cast<std::size_t>(i) * sh_coeff_count * 3; }
  const double* sh_at(int i) const {
    return sh.data() + static_cast<std::size_t>(i) * sh_coeff_count * 3;
  }

  /// Diameter of the bounding sphere of the centers (0 for empty clouds).
  double bounding_diameter() const;
};

/// Per-Gaussian parameter offsets, shapes matching GaussianCloud fields.
struct GaussianDelta {
  std::vector<Vec3> d_centers;
  std::vector<Vec4> d_rotations;
  std::vector<Vec3> d_log_scales;
  std::vector<double> d_opacity_logits;
  std::vector<double> d_sh;

  static GaussianDelta zeros(const GaussianCloud& cloud);
};

using CloudGrads = GaussianDelta;  // same shapes, used as gradient storage

struct SplatOptions {
  double nearz_opacity_threshold = 0.05;
  double early_stop_gap = 0.1;  // camera-z gap, scene units
  double alpha_cutoff = 1.0 / 255.0;
  bool early_stop = true;
  // Occlusion-mask source for blending: near-z depth (default) or the
  // alpha-accumulated depth (ablation variant).
  bool use_nearz = true;
  // Optional hard cut: stop a ray once Gaussians fall behind the mesh depth.
  // Needs the mesh depth buffer passed to render_splats.
  bool cull_behind_mesh = false;

  void validate() const;
};

struct SplatBuffers {
  Image color;      // H x W x 3
  Image alpha;      // H x W, accumulated alpha A_g
  Image nearz;      // H x W, +inf where no Gaussian qualifies
  Image acc_depth;  // H x W, alpha-weighted mean depth, +inf where alpha ~ 0
};

/// Evaluates the real SH expansion: clamp(0.5 + sum c_k Y_k(d), 0, 1) per
/// channel. coeff_count in {1, 4, 9, 16}; d must be unit length.
Vec3 eval_sh(const double* sh, int coeff_count, const Vec3& d);

struct ProjectedGaussian {
  Vec2 mean2d = Vec2::Zero();
  Mat2 cov2d = Mat2::Zero();
  double depth = 0.0;
  bool culled = false;
};

/// EWA projection: cov2d = J W Sigma W^T J^T (top-left 2x2) + 0.3 I, with J
/// the perspective Jacobian at the mean. Gaussians behind the near plane are
/// marked culled. The quaternion is normalized internally.
ProjectedGaussian project_gaussian(const Vec3& center, const Vec4& rotation, const Vec3& log_scale,
                                   const Camera& camera);

/// Depth-sorted front-to-back alpha compositing (global sort, ties broken by
/// index). Per pixel: alpha_i = sigmoid(o_i) * exp(-0.5 d^T cov2d^-1 d),
/// values below alpha_cutoff are skipped; near-z records the first evaluated
/// alpha >= nearz_opacity_threshold; with early_stop a gap larger than
/// early_stop_gap after any accumulation terminates the ray, as does
/// transmittance below 1e-4. Gaussians with singular cov2d are skipped.
SplatBuffers render_splats(const GaussianCloud& cloud, const Camera& camera,
                           const SplatOptions& opts, const Image* mesh_depth = nullptr);

/// Exact gradients of render_splats w.r.t. every Gaussian parameter, with the
/// sort order, near-z choice and early-stop truncation treated as constant
/// structure. grad_color is H x W x 3, grad_alpha H x W. Accumulation uses
/// per-tile partials reduced in fixed order, so results are schedule-free.
CloudGrads splat_backward(const GaussianCloud& cloud, const Camera& camera,
                          const SplatOptions& opts, const Image& grad_color,
                          const Image& grad_alpha, const Image* mesh_depth = nullptr);

/// Uniform area-weighted sampling of n Gaussians on the scalp triangles; odd
/// samples are pushed along the face normal by uniform(0, shell). Initial
/// scale is the mean nearest-neighbor spacing, opacity logit(0.1), SH zero
/// (decodes to mid-gray).
GaussianCloud init_from_scalp(const TriMesh& mesh, const std::vector<int>& scalp, int n,
                              double shell, std::uint64_t seed, int sh_coeff_count = 16);

/// Non-rigid deformation field: a shared MLP over [psi_16, per-Gaussian
/// embedding] emitting per-Gaussian deltas (3+4+3+1+3*sh values). The final
/// layer starts at zero so initial deltas vanish.
struct DeformationField {
  MlpParams mlp;
  MatX embeddings;  // embed_dim x n_gaussians

  static constexpr int kPsiDim = 16;
  static constexpr int kEmbedDim = 16;

  static int delta_dim(int sh_coeff_count) { return 11 + 3 * sh_coeff_count; }
  static DeformationField make(int n_gaussians, int sh_coeff_count, int hidden,
                               std::uint64_t seed);
  int gaussian_count() const { return static_cast<int>(embeddings.cols()); }
};

struct DeformCache {
  MlpCache mlp;
  MatX inputs;  // (kPsiDim + kEmbedDim) x n
  GaussianDelta delta;
  std::vector<Vec4> rigid_rotations;  // r_r before delta, for the backward
};

/// Applies the per-frame rigid transform then adds the field deltas per
/// Gaussian; quaternions are renormalized after the addition. Scale != 1
/// transforms log-scales by +log(scale) (used by hairstyle transfer).
GaussianCloud deform_cloud(const GaussianCloud& canonical, const RigidTransform& rigid,
                           const VecX& psi, const DeformationField& field,
                           GaussianDelta* out_delta = nullptr, DeformCache* cache = nullptr);

struct DeformFieldGrads {
  MlpGrads mlp;
  MatX d_embeddings;

  static DeformFieldGrads zeros(const DeformationField& field);
};

/// Chains gradients w.r.t. the deformed cloud (plus direct delta-regularizer
/// gradients, may be null) back to the deformation field parameters.
DeformFieldGrads deform_cloud_backward(const GaussianCloud& canonical, const RigidTransform& rigid,
                                       const VecX& psi, const DeformationField& field,
                                       const DeformCache& cache, const CloudGrads& grad_deformed,
                                       const GaussianDelta* grad_delta_direct = nullptr);

/// Applies a similarity transform to the cloud in place (centers, rotations,
/// +log(scale) on scales).
void transform_cloud(GaussianCloud& cloud, const RigidTransform& transform);

/// Indices of Gaussians with sigmoid(opacity) >= min_opacity, ascending.
std::vector<int> opacity_keep_indices(const GaussianCloud& cloud, double min_opacity);

/// Keeps only the selected Gaussians (indices ascending).
void select_gaussians(GaussianCloud& cloud, const std::vector<int>& keep);

/// Builds the psi/embedding input batch the deformation field consumes.
MatX deformation_inputs(const DeformationField& field, const VecX& psi);

}  // namespace meshsplat
