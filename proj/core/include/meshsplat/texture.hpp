#pragma once

#include "meshsplat/image.hpp"
#include "meshsplat/mlp.hpp"
#include "meshsplat/raster.hpp"
#include "meshsplat/sampling.hpp"
#include "meshsplat/types.hpp"

#include <vector>

namespace meshsplat {

/// Disentangled latent texture stack. The composed latent at a sample is
///   T(uv, d, psi) = diffuse(uv) + view(uv; d) + dynamic(uv; psi)
/// where view is a per-texel degree-1 SH response in the view vector and
/// dynamic is a per-texel linear response to the leading expression coeffs.
///
/// Layouts (all interleaved per texel):
///   diffuse      R x R x C
///   view_coeffs  Rv x Rv x (C*4)   channel c, coeff j at c*4 + j (1, dx, dy, dz)
///   dyn_basis    Rd x Rd x (C*K)   channel c, basis k at c*K + k
struct TextureStack {
  Image diffuse;
  Image view_coeffs;
  Image dyn_basis;
  int channels = 4;
  int n_dyn_basis = 0;

  static TextureStack zeros(int res_diffuse, int res_models, int channels, int n_dyn_basis);
  void validate() const;
  bool has_view() const { return !view_coeffs.empty(); }
  bool has_dynamic() const { return !dyn_basis.empty() && n_dyn_basis > 0; }
};

/// Bilinear sample of an interleaved grid; uv clamped to [0,1]^2. Returns all
/// channels. The footprint (texels + weights) is exposed for backward passes.
VecX sample_uv(const Image& grid, const Vec2& uv);
VecX sample_uv(const Image& grid, const Vec2& uv, BilinearSample& footprint);

/// Materializes the view-dependent latent contribution for a fixed direction.
/// Non-unit d is normalized; `warned` (optional) reports that it happened.
Image eval_view_texture(const TextureStack& stack, const Vec3& d, bool* warned = nullptr);

/// Materializes the expression-dependent latent contribution sum_k psi_k B_k.
Image eval_dynamic_texture(const TextureStack& stack, const VecX& psi);

/// Everything decode_face_backward needs to replay the forward pass.
struct DecodeCache {
  std::vector<int> pixel_x, pixel_y;
  MatX inputs;  // (C+2) x n_pixels
  MlpCache mlp;
  bool diffuse_only = false;
};

/// Decodes facial colors: per covered pixel, sample the composed latent (or
/// the diffuse grid alone) at the pixel uv and run the per-pixel decoder on
/// [latent, uv]. Uncovered pixels stay black. Colors land in [0,1] when the
/// decoder's final activation is a sigmoid.
Image decode_face(const TextureStack& stack, const RenderBuffers& buffers, const Image& view_dirs,
                  const VecX& psi, const MlpParams& pix, bool diffuse_only = false,
                  DecodeCache* cache = nullptr);

/// Gradients of the decoded image w.r.t. the stack grids and decoder.
struct TextureGrads {
  Image d_diffuse;
  Image d_view_coeffs;
  Image d_dyn_basis;

  static TextureGrads zeros(const TextureStack& stack);
};

/// Backpropagates grad_color (H x W x 3) through the decoder and the bilinear
/// samples; texture grads accumulate into tex_grads, decoder grads into
/// pix_grads. Replays the pixel set recorded in the cache.
void decode_face_backward(const TextureStack& stack, const RenderBuffers& buffers,
                          const Image& view_dirs, const VecX& psi, const MlpParams& pix,
                          const DecodeCache& cache, const Image& grad_color,
                          TextureGrads& tex_grads, MlpGrads& pix_grads);

}  // namespace meshsplat
