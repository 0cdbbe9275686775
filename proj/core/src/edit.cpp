#include "meshsplat/trainer.hpp"

#include "meshsplat/errors.hpp"
#include "meshsplat/morphology.hpp"

#include <cmath>

namespace meshsplat {

namespace {

struct ViewContext {
  RenderBuffers buffers;
  Image dirs;
  Image loss_mask;  // pixels contributing to the photometric term
  const Image* target = nullptr;
  VecX psi;
};

ViewContext make_view_context(const AvatarBundle& avatar, const ExpressionParams& params,
                              const Camera& camera) {
  ViewContext ctx;
  const TriMesh posed = lbs_deform(avatar.head, params);
  TriMesh refined = posed;
  if (avatar.displacement.enabled()) {
    refined = apply_displacement(posed, avatar.displacement.evaluate(params.psi, params.phi));
  }
  ctx.buffers = rasterize(refined, camera);
  ctx.dirs = view_direction_image(camera, ctx.buffers);
  ctx.psi = params.psi;
  return ctx;
}

}  // namespace

EditSummary edit_texture(AvatarBundle& avatar, const Image& painted, const Image& paint_mask,
                         const Camera& camera, const ExpressionParams& params,
                         const RigidTransform& rigid, const std::vector<FrameRecord>& other_views,
                         int steps) {
  (void)rigid;  // hair is untouched by texture edits
  EditSummary summary;
  bool any = false;
  for (double v : paint_mask.data()) {
    if (v > 0.5) {
      any = true;
      break;
    }
  }
  if (!any) {
    summary.empty_mask = true;
    return summary;
  }

  // Remap the painting mask to uv space through the rasterized uv buffer,
  // then dilate by one texel.
  ViewContext painted_ctx = make_view_context(avatar, params, camera);
  const int res_x = avatar.textures.diffuse.width();
  const int res_y = avatar.textures.diffuse.height();
  Image uv_mask(res_x, res_y, 1);
  for (int y = 0; y < painted.height(); ++y) {
    for (int x = 0; x < painted.width(); ++x) {
      if (paint_mask.at(x, y) <= 0.5 || painted_ctx.buffers.coverage.at(x, y) == 0.0) continue;
      const BilinearSample s = bilinear_setup(painted_ctx.buffers.uv.at(x, y, 0),
                                              painted_ctx.buffers.uv.at(x, y, 1), res_x, res_y);
      uv_mask.at(s.x0, s.y0) = 1.0;
      uv_mask.at(s.x1, s.y0) = 1.0;
      uv_mask.at(s.x0, s.y1) = 1.0;
      uv_mask.at(s.x1, s.y1) = 1.0;
    }
  }
  uv_mask = dilate(uv_mask, 1);
  summary.uv_mask = uv_mask;

  painted_ctx.loss_mask = painted_ctx.buffers.coverage;
  painted_ctx.target = &painted;

  // Regularization views: photometric outside the reprojection of the edit.
  std::vector<ViewContext> reg_views;
  for (const FrameRecord& rec : other_views) {
    ViewContext ctx = make_view_context(avatar, rec.params, rec.camera);
    ctx.loss_mask = Image(rec.camera.width, rec.camera.height, 1);
    for (int y = 0; y < ctx.loss_mask.height(); ++y) {
      for (int x = 0; x < ctx.loss_mask.width(); ++x) {
        if (ctx.buffers.coverage.at(x, y) == 0.0) continue;
        const BilinearSample s =
            bilinear_setup(ctx.buffers.uv.at(x, y, 0), ctx.buffers.uv.at(x, y, 1), res_x, res_y);
        const bool touched = uv_mask.at(s.x0, s.y0) > 0.5 || uv_mask.at(s.x1, s.y0) > 0.5 ||
                             uv_mask.at(s.x0, s.y1) > 0.5 || uv_mask.at(s.x1, s.y1) > 0.5;
        ctx.loss_mask.at(x, y) = touched ? 0.0 : 1.0;
      }
    }
    ctx.target = &rec.image_head;
    ctx.psi = rec.params.psi;
    reg_views.push_back(std::move(ctx));
  }

  // Editing rates: masked diffuse texels 0.01, pixel decoder 1e-4.
  AdamState st_diffuse = AdamState::make(avatar.textures.diffuse.size(), 0.01);
  MlpAdam st_pix = MlpAdam::make(avatar.pix, 1e-4);

  for (int step = 0; step < steps; ++step) {
    TextureGrads tex_grads = TextureGrads::zeros(avatar.textures);
    MlpGrads pix_grads = MlpGrads::zeros(avatar.pix);
    double loss = 0.0;

    auto accumulate = [&](ViewContext& ctx) {
      DecodeCache cache;
      const Image render =
          decode_face(avatar.textures, ctx.buffers, ctx.dirs, ctx.psi, avatar.pix, false, &cache);
      loss += loss_photometric(*ctx.target, render, ctx.loss_mask);
      const Image grad = loss_photometric_backward(*ctx.target, render, ctx.loss_mask);
      decode_face_backward(avatar.textures, ctx.buffers, ctx.dirs, ctx.psi, avatar.pix, cache,
                           grad, tex_grads, pix_grads);
    };
    accumulate(painted_ctx);
    for (ViewContext& ctx : reg_views) accumulate(ctx);

    // Only texels under the remapped mask may move.
    for (int y = 0; y < res_y; ++y) {
      for (int x = 0; x < res_x; ++x) {
        if (uv_mask.at(x, y) > 0.5) continue;
        for (int c = 0; c < tex_grads.d_diffuse.channels(); ++c) {
          tex_grads.d_diffuse.at(x, y, c) = 0.0;
        }
      }
    }
    adam_step_image(avatar.textures.diffuse, tex_grads.d_diffuse, st_diffuse);
    st_pix.step(avatar.pix, pix_grads);
    summary.final_loss = loss;
    summary.steps = step + 1;
  }
  return summary;
}

}  // namespace meshsplat
