#include "meshsplat/trainer.hpp"

#include "meshsplat/blend.hpp"
#include "meshsplat/errors.hpp"
#include "meshsplat/icp.hpp"
#include "meshsplat/metrics.hpp"
#include "meshsplat/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace meshsplat {

namespace {

double full_image_psnr(const AvatarBundle& avatar, const FrameRecord& rec,
                       const RigidTransform& rigid, const RenderSettings& settings) {
  const FrameRender render = render_frame(avatar, rec.params, rec.camera, rigid, settings);
  const Image mask = union_mask(rec.mask_coverage, rec.mask_hair);
  return psnr(rec.image_full, quantize8(render.composite_color), mask);
}

}  // namespace

JointTrainSummary train_joint(const SceneDataset& dataset, AvatarBundle& avatar,
                              const TrainConfig& cfg, const std::filesystem::path& log_csv) {
  cfg.weights.validate();
  if (avatar.cloud.size() == 0) throw ConfigError("train_joint: canonical cloud is missing");
  if (avatar.field.gaussian_count() != avatar.cloud.size()) {
    throw ConfigError("train_joint: deformation field does not match the cloud");
  }

  // Per-frame rigid transforms from scalp ICP against the canonical frame.
  const TriMesh canon_mesh =
      lbs_deform(avatar.head, dataset.frame_params[dataset.canonical_frame]);
  std::vector<Vec3> canon_scalp;
  for (int idx : avatar.head.scalp_indices) canon_scalp.push_back(canon_mesh.vertices[idx]);
  for (int f = 0; f < dataset.frame_count(); ++f) {
    const TriMesh posed = lbs_deform(avatar.head, dataset.frame_params[f]);
    std::vector<Vec3> scalp;
    for (int idx : avatar.head.scalp_indices) scalp.push_back(posed.vertices[idx]);
    avatar.frame_transforms[f] = icp(canon_scalp, scalp, IcpOptions{}).transform;
  }

  const auto pairs = dataset.all_pairs(/*skip_held_out=*/true);
  std::vector<FrameRecord> records;
  std::vector<Image> eroded_masks;
  for (const auto& [f, v] : pairs) {
    FrameRecord rec = dataset.load_record(f, v);
    eroded_masks.push_back(erode(rec.mask_hair, cfg.erode_radius));
    rec.depth = Image();
    records.push_back(std::move(rec));
  }

  const std::vector<std::pair<int, int>> aiap_graph = knn_pairs(avatar.cloud.centers, cfg.aiap_k);

  RenderSettings settings;
  settings.use_nearz = cfg.use_nearz;
  settings.early_stop = cfg.early_stop;
  settings.nearz_threshold = cfg.nearz_threshold;
  settings.blur_sigma = cfg.blur_sigma;
  const SplatOptions opts = splat_options_for(avatar, settings);

  // Held-out baseline: rigid-only (zero deformation field).
  JointTrainSummary summary;
  const bool has_held_out = dataset.held_out_frame >= 0 && dataset.held_out_view >= 0;
  FrameRecord held_out;
  if (has_held_out) {
    held_out = dataset.load_record(dataset.held_out_frame, dataset.held_out_view);
    AvatarBundle rigid_only = avatar;  // zero-initialized field renders rigid-only
    rigid_only.field =
        DeformationField::make(avatar.cloud.size(), avatar.cloud.sh_coeff_count, 64, cfg.seed + 1);
    summary.rigid_only_psnr = full_image_psnr(
        rigid_only, held_out, frame_rigid(avatar, dataset.held_out_frame), settings);
  }

  Rng rng(cfg.seed + 3);
  std::vector<int> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.uniform_index(i)]);
  }

  MlpAdam st_field = MlpAdam::make(avatar.field.mlp, cfg.lr_field);
  AdamState st_embed =
      AdamState::make(static_cast<std::size_t>(avatar.field.embeddings.size()), cfg.lr_field);
  AdamState st_diffuse = AdamState::make(avatar.textures.diffuse.size(), cfg.lr_texture);
  AdamState st_view = AdamState::make(avatar.textures.view_coeffs.size(), cfg.lr_texture);
  AdamState st_dyn = avatar.textures.has_dynamic()
                         ? AdamState::make(avatar.textures.dyn_basis.size(), cfg.lr_texture)
                         : AdamState{};

  CsvLogger log(log_csv, {"pho", "di_pho", "ssim", "solid", "delta", "aiap", "total", "psnr"});
  const LossWeights& w = cfg.weights;

  for (int iter = 0; iter < cfg.iters_joint; ++iter) {
    const int ri = order[iter % order.size()];
    const FrameRecord& rec = records[ri];
    const RigidTransform rigid = frame_rigid(avatar, rec.frame_id);

    // Face branch.
    const TriMesh posed = lbs_deform(avatar.head, rec.params);
    TriMesh refined = posed;
    if (avatar.displacement.enabled()) {
      refined = apply_displacement(posed,
                                   avatar.displacement.evaluate(rec.params.psi, rec.params.phi));
    }
    const RenderBuffers buffers = rasterize(refined, rec.camera);
    const Image dirs = view_direction_image(rec.camera, buffers);
    DecodeCache cache, cache_di;
    const Image head_color =
        decode_face(avatar.textures, buffers, dirs, rec.params.psi, avatar.pix, false, &cache);
    const Image head_di =
        decode_face(avatar.textures, buffers, dirs, rec.params.psi, avatar.pix, true, &cache_di);

    // Hair branch.
    GaussianDelta delta;
    DeformCache dcache;
    const GaussianCloud deformed =
        deform_cloud(avatar.cloud, rigid, rec.params.psi, avatar.field, &delta, &dcache);
    const SplatBuffers splat = render_splats(deformed, rec.camera, opts);
    const Image& occ_source = cfg.use_nearz ? splat.nearz : splat.acc_depth;
    const BlendMaps maps = make_blend_maps(occ_source, buffers.depth, splat.alpha, cfg.blur_sigma);
    const Image composite_color = composite(splat.color, head_color, splat.alpha, maps.soft_mask);

    const Image mask_full = union_mask(rec.mask_coverage, rec.mask_hair);
    const double l_pho = loss_photometric(rec.image_full, composite_color, mask_full);
    const double l_dipho = loss_photometric(rec.image_head, head_di, rec.mask_coverage);
    const double l_ssim = dssim(rec.image_full, composite_color, mask_full);
    const double l_sol = loss_solid(maps.hair_blend, eroded_masks[ri]);
    GaussianDelta delta_grad = GaussianDelta::zeros(avatar.cloud);
    const double l_delta = loss_delta_norm(delta, &delta_grad);
    const double l_aiap = loss_aiap(avatar.cloud.centers, deformed.centers, aiap_graph);
    const double total = w.photo * l_pho + 3.0 * w.photo * l_dipho + w.ssim * l_ssim +
                         w.solid * l_sol + w.delta_reg * l_delta + w.aiap * l_aiap;

    // --- Backward through the composite.
    Image grad_image = loss_photometric_backward(rec.image_full, composite_color, mask_full);
    for (double& g : grad_image.data()) g *= w.photo;
    if (w.ssim != 0.0) {
      const Image gs = dssim_backward(rec.image_full, composite_color, mask_full);
      for (std::size_t i = 0; i < grad_image.size(); ++i) grad_image.data()[i] += w.ssim * gs.data()[i];
    }

    const int wpx = grad_image.width();
    const int hpx = grad_image.height();
    Image grad_hair_color(wpx, hpx, 3);
    Image grad_head_color(wpx, hpx, 3);
    Image grad_alpha(wpx, hpx, 1);
    for (int y = 0; y < hpx; ++y) {
      for (int x = 0; x < wpx; ++x) {
        const double a_hat = splat.alpha.at(x, y) * maps.soft_mask.at(x, y);
        double d_ahat = 0.0;
        for (int c = 0; c < 3; ++c) {
          const double g = grad_image.at(x, y, c);
          grad_hair_color.at(x, y, c) = g * a_hat;
          grad_head_color.at(x, y, c) = g * (1.0 - a_hat);
          d_ahat += g * (splat.color.at(x, y, c) - head_color.at(x, y, c));
        }
        grad_alpha.at(x, y) = d_ahat * maps.soft_mask.at(x, y);
      }
    }
    {
      const Image gs = loss_solid_backward(maps.hair_blend, eroded_masks[ri]);
      for (std::size_t i = 0; i < grad_alpha.size(); ++i) {
        grad_alpha.data()[i] += w.solid * gs.data()[i] * maps.soft_mask.data()[i];
      }
    }

    // Face branch gradients (textures only; decoder and displacement frozen).
    TextureGrads tex_grads = TextureGrads::zeros(avatar.textures);
    MlpGrads pix_scratch = MlpGrads::zeros(avatar.pix);
    decode_face_backward(avatar.textures, buffers, dirs, rec.params.psi, avatar.pix, cache,
                         grad_head_color, tex_grads, pix_scratch);
    {
      Image grad_di = loss_photometric_backward(rec.image_head, head_di, rec.mask_coverage);
      for (double& g : grad_di.data()) g *= 3.0 * w.photo;
      decode_face_backward(avatar.textures, buffers, dirs, rec.params.psi, avatar.pix, cache_di,
                           grad_di, tex_grads, pix_scratch);
    }

    // Hair branch gradients -> deformation field.
    CloudGrads cloud_grads = splat_backward(deformed, rec.camera, opts, grad_hair_color, grad_alpha);
    if (w.aiap != 0.0) {
      const auto ag = loss_aiap_backward(avatar.cloud.centers, deformed.centers, aiap_graph);
      for (int i = 0; i < avatar.cloud.size(); ++i) cloud_grads.d_centers[i] += w.aiap * ag[i];
    }
    for (int i = 0; i < avatar.cloud.size(); ++i) {
      delta_grad.d_rotations[i] *= w.delta_reg;
      delta_grad.d_log_scales[i] *= w.delta_reg;
      delta_grad.d_opacity_logits[i] *= w.delta_reg;
    }
    for (double& v : delta_grad.d_sh) v *= w.delta_reg;
    const DeformFieldGrads field_grads = deform_cloud_backward(
        avatar.cloud, rigid, rec.params.psi, avatar.field, dcache, cloud_grads, &delta_grad);

    st_field.step(avatar.field.mlp, field_grads.mlp);
    adam_step({avatar.field.embeddings.data(), static_cast<std::size_t>(avatar.field.embeddings.size())},
              {field_grads.d_embeddings.data(),
               static_cast<std::size_t>(field_grads.d_embeddings.size())},
              st_embed);
    adam_step_image(avatar.textures.diffuse, tex_grads.d_diffuse, st_diffuse);
    if (avatar.textures.has_view()) {
      adam_step_image(avatar.textures.view_coeffs, tex_grads.d_view_coeffs, st_view);
    }
    if (avatar.textures.has_dynamic()) {
      adam_step_image(avatar.textures.dyn_basis, tex_grads.d_dyn_basis, st_dyn);
    }

    if (log.enabled()) {
      const double iter_psnr = psnr(rec.image_full, quantize8(composite_color), mask_full);
      log.row(iter, {l_pho, l_dipho, l_ssim, l_sol, l_delta, l_aiap, total, iter_psnr});
    }
  }

  summary.iterations = cfg.iters_joint;
  if (has_held_out) {
    summary.held_out_psnr = full_image_psnr(
        avatar, held_out, frame_rigid(avatar, dataset.held_out_frame), settings);
  }
  return summary;
}

RigidTransform swap_hair(AvatarBundle& face_avatar, const AvatarBundle& hair_avatar) {
  std::vector<Vec3> src, dst;
  for (int idx : hair_avatar.head.scalp_indices) {
    src.push_back(hair_avatar.head.template_vertices[idx]);
  }
  for (int idx : face_avatar.head.scalp_indices) {
    dst.push_back(face_avatar.head.template_vertices[idx]);
  }
  IcpOptions opts;
  opts.with_scale = true;
  const IcpResult aligned = icp(src, dst, opts);

  GaussianCloud cloud = hair_avatar.cloud;
  transform_cloud(cloud, aligned.transform);
  face_avatar.cloud = std::move(cloud);
  face_avatar.field = hair_avatar.field;
  return aligned.transform;
}

}  // namespace meshsplat
