#include "meshsplat/texture.hpp"

#include "meshsplat/errors.hpp"

#include <cmath>

namespace meshsplat {

TextureStack TextureStack::zeros(int res_diffuse, int res_models, int channels, int n_dyn_basis) {
  TextureStack s;
  s.channels = channels;
  s.n_dyn_basis = n_dyn_basis;
  s.diffuse = Image(res_diffuse, res_diffuse, channels);
  s.view_coeffs = Image(res_models, res_models, channels * 4);
  s.dyn_basis = n_dyn_basis > 0 ? Image(res_models, res_models, channels * n_dyn_basis) : Image();
  return s;
}

void TextureStack::validate() const {
  if (diffuse.channels() != channels) throw ParameterError("TextureStack: diffuse channel mismatch");
  if (has_view() && view_coeffs.channels() != channels * 4) {
    throw ParameterError("TextureStack: view coefficient layout mismatch");
  }
  if (has_dynamic() && dyn_basis.channels() != channels * n_dyn_basis) {
    throw ParameterError("TextureStack: dynamic basis layout mismatch");
  }
}

VecX sample_uv(const Image& grid, const Vec2& uv) {
  BilinearSample footprint;
  return sample_uv(grid, uv, footprint);
}

VecX sample_uv(const Image& grid, const Vec2& uv, BilinearSample& footprint) {
  footprint = bilinear_setup(uv.x(), uv.y(), grid.width(), grid.height());
  VecX out(grid.channels());
  for (int c = 0; c < grid.channels(); ++c) {
    out[c] = footprint.w00 * grid.at(footprint.x0, footprint.y0, c) +
             footprint.w10 * grid.at(footprint.x1, footprint.y0, c) +
             footprint.w01 * grid.at(footprint.x0, footprint.y1, c) +
             footprint.w11 * grid.at(footprint.x1, footprint.y1, c);
  }
  return out;
}

namespace {

Vec3 checked_direction(const Vec3& d, bool* warned) {
  const double norm = d.norm();
  if (std::abs(norm - 1.0) > 1e-6) {
    if (warned) *warned = true;
    if (norm < 1e-12) return Vec3::UnitZ();
    return d / norm;
  }
  return d;
}

}  // namespace

Image eval_view_texture(const TextureStack& stack, const Vec3& d, bool* warned) {
  if (warned) *warned = false;
  if (!stack.has_view()) return Image();
  const Vec3 dir = checked_direction(d, warned);
  const Image& vc = stack.view_coeffs;
  Image out(vc.width(), vc.height(), stack.channels);
  for (int y = 0; y < vc.height(); ++y) {
    for (int x = 0; x < vc.width(); ++x) {
      for (int c = 0; c < stack.channels; ++c) {
        out.at(x, y, c) = vc.at(x, y, c * 4 + 0) + vc.at(x, y, c * 4 + 1) * dir.x() +
                          vc.at(x, y, c * 4 + 2) * dir.y() + vc.at(x, y, c * 4 + 3) * dir.z();
      }
    }
  }
  return out;
}

Image eval_dynamic_texture(const TextureStack& stack, const VecX& psi) {
  if (!stack.has_dynamic()) return Image();
  if (stack.n_dyn_basis > psi.size()) {
    throw ParameterError("eval_dynamic_texture: fewer expression coeffs than basis maps");
  }
  const Image& db = stack.dyn_basis;
  Image out(db.width(), db.height(), stack.channels);
  for (int y = 0; y < db.height(); ++y) {
    for (int x = 0; x < db.width(); ++x) {
      for (int c = 0; c < stack.channels; ++c) {
        double v = 0.0;
        for (int k = 0; k < stack.n_dyn_basis; ++k) {
          v += psi[k] * db.at(x, y, c * stack.n_dyn_basis + k);
        }
        out.at(x, y, c) = v;
      }
    }
  }
  return out;
}

namespace {

// Composed latent at one sample; per-grid footprints are written out so the
// backward pass can scatter without re-deriving them.
VecX composed_latent(const TextureStack& stack, const Vec2& uv, const Vec3& d, const VecX& psi,
                     bool diffuse_only, BilinearSample& fp_diffuse, BilinearSample& fp_models) {
  VecX latent = sample_uv(stack.diffuse, uv, fp_diffuse);
  if (diffuse_only) return latent;
  if (stack.has_view()) {
    const VecX coeffs = sample_uv(stack.view_coeffs, uv, fp_models);
    for (int c = 0; c < stack.channels; ++c) {
      latent[c] += coeffs[c * 4 + 0] + coeffs[c * 4 + 1] * d.x() + coeffs[c * 4 + 2] * d.y() +
                   coeffs[c * 4 + 3] * d.z();
    }
  }
  if (stack.has_dynamic()) {
    BilinearSample fp;
    const VecX basis = sample_uv(stack.dyn_basis, uv, fp);
    if (!stack.has_view()) fp_models = fp;
    for (int c = 0; c < stack.channels; ++c) {
      for (int k = 0; k < stack.n_dyn_basis; ++k) {
        latent[c] += psi[k] * basis[c * stack.n_dyn_basis + k];
      }
    }
  }
  return latent;
}

}  // namespace

Image decode_face(const TextureStack& stack, const RenderBuffers& buffers, const Image& view_dirs,
                  const VecX& psi, const MlpParams& pix, bool diffuse_only, DecodeCache* cache) {
  stack.validate();
  if (pix.input_dim() != stack.channels + 2) {
    throw ParameterError("decode_face: decoder input dim != latent channels + 2");
  }
  if (pix.output_dim() != 3) throw ParameterError("decode_face: decoder must output 3 channels");
  if (stack.has_dynamic() && stack.n_dyn_basis > psi.size()) {
    throw ParameterError("decode_face: fewer expression coeffs than dynamic basis maps");
  }

  const int w = buffers.width();
  const int h = buffers.height();
  std::vector<int> px, py;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (buffers.coverage.at(x, y) != 0.0) {
        px.push_back(x);
        py.push_back(y);
      }
    }
  }

  Image out(w, h, 3);
  const int n = static_cast<int>(px.size());
  if (n == 0) {
    if (cache) *cache = DecodeCache{};
    return out;
  }

  MatX inputs(stack.channels + 2, n);
  for (int i = 0; i < n; ++i) {
    const Vec2 uv(buffers.uv.at(px[i], py[i], 0), buffers.uv.at(px[i], py[i], 1));
    const Vec3 d(view_dirs.at(px[i], py[i], 0), view_dirs.at(px[i], py[i], 1),
                 view_dirs.at(px[i], py[i], 2));
    BilinearSample fp_d, fp_m;
    inputs.col(i).head(stack.channels) =
        composed_latent(stack, uv, d, psi, diffuse_only, fp_d, fp_m);
    inputs(stack.channels, i) = uv.x();
    inputs(stack.channels + 1, i) = uv.y();
  }

  MlpCache local_cache;
  MlpCache& mlp_cache = cache ? cache->mlp : local_cache;
  const MatX colors = mlp_forward(pix, inputs, mlp_cache);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      out.at(px[i], py[i], c) = std::clamp(colors(c, i), 0.0, 1.0);
    }
  }
  if (cache) {
    cache->pixel_x = std::move(px);
    cache->pixel_y = std::move(py);
    cache->inputs = std::move(inputs);
    cache->diffuse_only = diffuse_only;
  }
  return out;
}

TextureGrads TextureGrads::zeros(const TextureStack& stack) {
  TextureGrads g;
  g.d_diffuse = Image(stack.diffuse.width(), stack.diffuse.height(), stack.diffuse.channels());
  if (stack.has_view()) {
    g.d_view_coeffs =
        Image(stack.view_coeffs.width(), stack.view_coeffs.height(), stack.view_coeffs.channels());
  }
  if (stack.has_dynamic()) {
    g.d_dyn_basis = Image(stack.dyn_basis.width(), stack.dyn_basis.height(), stack.dyn_basis.channels());
  }
  return g;
}

void decode_face_backward(const TextureStack& stack, const RenderBuffers& buffers,
                          const Image& view_dirs, const VecX& psi, const MlpParams& pix,
                          const DecodeCache& cache, const Image& grad_color,
                          TextureGrads& tex_grads, MlpGrads& pix_grads) {
  const int n = static_cast<int>(cache.pixel_x.size());
  if (n == 0) return;

  MatX grad_out(3, n);
  for (int i = 0; i < n; ++i) {
    const int x = cache.pixel_x[i];
    const int y = cache.pixel_y[i];
    for (int c = 0; c < 3; ++c) {
      // The [0,1] clamp only bites when the final activation is not a
      // sigmoid; treat clamped pixels as having zero slope.
      const double raw = cache.mlp.post.back()(c, i);
      const bool clamped = raw < 0.0 || raw > 1.0;
      grad_out(c, i) = clamped ? 0.0 : grad_color.at(x, y, c);
    }
  }

  const MatX grad_inputs = mlp_backward(pix, cache.mlp, grad_out, pix_grads);

  for (int i = 0; i < n; ++i) {
    const int x = cache.pixel_x[i];
    const int y = cache.pixel_y[i];
    const Vec2 uv(buffers.uv.at(x, y, 0), buffers.uv.at(x, y, 1));
    const Vec3 d(view_dirs.at(x, y, 0), view_dirs.at(x, y, 1), view_dirs.at(x, y, 2));

    BilinearSample fp = bilinear_setup(uv.x(), uv.y(), stack.diffuse.width(), stack.diffuse.height());
    auto scatter = [](Image& grid, const BilinearSample& s, int channel, double g) {
      grid.at(s.x0, s.y0, channel) += s.w00 * g;
      grid.at(s.x1, s.y0, channel) += s.w10 * g;
      grid.at(s.x0, s.y1, channel) += s.w01 * g;
      grid.at(s.x1, s.y1, channel) += s.w11 * g;
    };

    for (int c = 0; c < stack.channels; ++c) {
      const double g = grad_inputs(c, i);
      if (g == 0.0) continue;
      scatter(tex_grads.d_diffuse, fp, c, g);
    }
    if (cache.diffuse_only) continue;

    if (stack.has_view() && !tex_grads.d_view_coeffs.empty()) {
      const BilinearSample fv =
          bilinear_setup(uv.x(), uv.y(), stack.view_coeffs.width(), stack.view_coeffs.height());
      for (int c = 0; c < stack.channels; ++c) {
        const double g = grad_inputs(c, i);
        if (g == 0.0) continue;
        scatter(tex_grads.d_view_coeffs, fv, c * 4 + 0, g);
        scatter(tex_grads.d_view_coeffs, fv, c * 4 + 1, g * d.x());
        scatter(tex_grads.d_view_coeffs, fv, c * 4 + 2, g * d.y());
        scatter(tex_grads.d_view_coeffs, fv, c * 4 + 3, g * d.z());
      }
    }
    if (stack.has_dynamic() && !tex_grads.d_dyn_basis.empty()) {
      const BilinearSample fd =
          bilinear_setup(uv.x(), uv.y(), stack.dyn_basis.width(), stack.dyn_basis.height());
      for (int c = 0; c < stack.channels; ++c) {
        const double g = grad_inputs(c, i);
        if (g == 0.0) continue;
        for (int k = 0; k < stack.n_dyn_basis; ++k) {
          scatter(tex_grads.d_dyn_basis, fd, c * stack.n_dyn_basis + k, g * psi[k]);
        }
      }
    }
  }
}

}  // namespace meshsplat
