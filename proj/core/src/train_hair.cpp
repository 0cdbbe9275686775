#include "meshsplat/trainer.hpp"

#include "meshsplat/blend.hpp"
#include "meshsplat/errors.hpp"
#include "meshsplat/metrics.hpp"
#include "meshsplat/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace meshsplat {

namespace {

struct CloudAdam {
  AdamState centers, rotations, scales, opacities, sh;

  static CloudAdam make(const GaussianCloud& cloud, const TrainConfig& cfg, double extent) {
    CloudAdam a;
    a.centers = AdamState::make(cloud.size() * 3, cfg.lr_position_scale * extent);
    a.rotations = AdamState::make(cloud.size() * 4, cfg.lr_rotation);
    a.scales = AdamState::make(cloud.size() * 3, cfg.lr_scale);
    a.opacities = AdamState::make(cloud.size(), cfg.lr_opacity);
    a.sh = AdamState::make(cloud.sh.size(), cfg.lr_sh);
    return a;
  }

  void step(GaussianCloud& cloud, const CloudGrads& grads) {
    adam_step({cloud.centers.data()->data(), cloud.centers.size() * 3},
              {grads.d_centers.data()->data(), grads.d_centers.size() * 3}, centers);
    adam_step({cloud.rotations.data()->data(), cloud.rotations.size() * 4},
              {grads.d_rotations.data()->data(), grads.d_rotations.size() * 4}, rotations);
    adam_step({cloud.log_scales.data()->data(), cloud.log_scales.size() * 3},
              {grads.d_log_scales.data()->data(), grads.d_log_scales.size() * 3}, scales);
    adam_step({cloud.opacity_logits.data(), cloud.opacity_logits.size()},
              {grads.d_opacity_logits.data(), grads.d_opacity_logits.size()}, opacities);
    adam_step({cloud.sh.data(), cloud.sh.size()}, {grads.d_sh.data(), grads.d_sh.size()}, sh);
    for (Vec4& q : cloud.rotations) q /= q.norm();
  }

  void select(const std::vector<int>& keep, int sh_coeffs) {
    adam_select_rows(centers, keep, 3);
    adam_select_rows(rotations, keep, 4);
    adam_select_rows(scales, keep, 3);
    adam_select_rows(opacities, keep, 1);
    adam_select_rows(sh, keep, sh_coeffs * 3);
  }

  void append(int added, int sh_coeffs) {
    adam_append_rows(centers, added, 3);
    adam_append_rows(rotations, added, 4);
    adam_append_rows(scales, added, 3);
    adam_append_rows(opacities, added, 1);
    adam_append_rows(sh, added, sh_coeffs * 3);
  }
};

}  // namespace

HairTrainSummary train_hair(const SceneDataset& dataset, AvatarBundle& avatar,
                            const TrainConfig& cfg, const std::filesystem::path& log_csv) {
  cfg.weights.validate();
  const int frame = dataset.canonical_frame;

  std::vector<FrameRecord> records;
  std::vector<Image> mesh_depths, distances, eroded_masks;
  for (int v = 0; v < dataset.view_count(); ++v) {
    if (frame == dataset.held_out_frame && v == dataset.held_out_view) continue;
    FrameRecord rec = dataset.load_record(frame, v);
    bool any_hair = false;
    for (double m : rec.mask_hair.data()) {
      if (m > 0.5) {
        any_hair = true;
        break;
      }
    }
    if (!any_hair) continue;
    // The facial mesh is frozen in this stage; cache its depth per view.
    const TriMesh posed = lbs_deform(avatar.head, rec.params);
    TriMesh refined = posed;
    if (avatar.displacement.enabled()) {
      refined = apply_displacement(posed,
                                   avatar.displacement.evaluate(rec.params.psi, rec.params.phi));
    }
    mesh_depths.push_back(rasterize(refined, rec.camera).depth);
    distances.push_back(distance_transform(rec.mask_hair));
    eroded_masks.push_back(erode(rec.mask_hair, cfg.erode_radius));
    rec.image_full = Image();
    rec.image_head = Image();
    rec.depth = Image();
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw ConfigError("train_hair: no views with hair pixels");

  GaussianCloud& cloud = avatar.cloud;
  const double extent = std::max(cloud.bounding_diameter(), 1e-6);
  CloudAdam adam = CloudAdam::make(cloud, cfg, extent);

  RenderSettings settings;
  settings.use_nearz = cfg.use_nearz;
  settings.early_stop = cfg.early_stop;
  settings.nearz_threshold = cfg.nearz_threshold;
  settings.blur_sigma = cfg.blur_sigma;
  SplatOptions opts = splat_options_for(avatar, settings);

  Rng rng(cfg.seed + 2);
  std::vector<int> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.uniform_index(i)]);
  }

  CsvLogger log(log_csv, {"pho", "ssim", "silhouette", "solid", "total", "psnr", "gaussians"});
  const LossWeights& w = cfg.weights;

  std::vector<double> grad_accum(cloud.size(), 0.0);
  int grad_steps = 0;

  for (int iter = 0; iter < cfg.iters_hair; ++iter) {
    const int vi = order[iter % order.size()];
    const FrameRecord& rec = records[vi];

    const SplatBuffers splat = render_splats(cloud, rec.camera, opts);
    const Image& occ_source = cfg.use_nearz ? splat.nearz : splat.acc_depth;
    const BlendMaps maps =
        make_blend_maps(occ_source, mesh_depths[vi], splat.alpha, cfg.blur_sigma);

    const double l_pho = loss_photometric(rec.image_hair, splat.color, rec.mask_hair);
    const double l_ssim = dssim(rec.image_hair, splat.color, rec.mask_hair);
    const double l_sil = loss_silhouette(rec.mask_hair, maps.hair_blend, distances[vi]);
    const double l_sol = loss_solid(maps.hair_blend, eroded_masks[vi]);
    const double total =
        w.photo * l_pho + w.ssim * l_ssim + w.silhouette * l_sil + w.solid * l_sol;

    Image grad_color = loss_photometric_backward(rec.image_hair, splat.color, rec.mask_hair);
    for (double& g : grad_color.data()) g *= w.photo;
    if (w.ssim != 0.0) {
      const Image gs = dssim_backward(rec.image_hair, splat.color, rec.mask_hair);
      for (std::size_t i = 0; i < grad_color.size(); ++i) grad_color.data()[i] += w.ssim * gs.data()[i];
    }
    Image grad_blend = loss_silhouette_backward(rec.mask_hair, maps.hair_blend, distances[vi]);
    {
      const Image gs = loss_solid_backward(maps.hair_blend, eroded_masks[vi]);
      for (std::size_t i = 0; i < grad_blend.size(); ++i) {
        grad_blend.data()[i] = w.silhouette * grad_blend.data()[i] + w.solid * gs.data()[i];
      }
    }
    // A_hat = A_g * G(M_o); the blurred mask is constant structure.
    Image grad_alpha(grad_blend.width(), grad_blend.height(), 1);
    for (std::size_t i = 0; i < grad_alpha.size(); ++i) {
      grad_alpha.data()[i] = grad_blend.data()[i] * maps.soft_mask.data()[i];
    }

    const CloudGrads grads = splat_backward(cloud, rec.camera, opts, grad_color, grad_alpha);
    adam.step(cloud, grads);

    for (int i = 0; i < cloud.size(); ++i) grad_accum[i] += grads.d_centers[i].norm();
    ++grad_steps;

    if (log.enabled()) {
      const double iter_psnr = psnr(rec.image_hair, quantize8(splat.color), rec.mask_hair);
      log.row(iter, {l_pho, l_ssim, l_sil, l_sol, total, iter_psnr,
                     static_cast<double>(cloud.size())});
    }

    // Cloud maintenance: prune transparent Gaussians, optionally densify.
    if (cfg.prune_interval > 0 && (iter + 1) % cfg.prune_interval == 0) {
      const std::vector<int> keep = opacity_keep_indices(cloud, cfg.prune_opacity);
      if (static_cast<int>(keep.size()) < cloud.size() && static_cast<int>(keep.size()) > 0) {
        select_gaussians(cloud, keep);
        adam.select(keep, cloud.sh_coeff_count);
        std::vector<double> pruned;
        for (int i : keep) pruned.push_back(grad_accum[i]);
        grad_accum = std::move(pruned);
      }
    }
    if (cfg.densify && (iter + 1) % cfg.densify_interval == 0 && grad_steps > 0 &&
        cloud.size() < cfg.max_gaussians) {
      const int before = cloud.size();
      const int n_sh = cloud.sh_coeff_count * 3;
      Rng densify_rng(cfg.seed * 31 + iter);
      for (int i = 0; i < before && cloud.size() < cfg.max_gaussians; ++i) {
        if (grad_accum[i] / grad_steps < cfg.densify_grad_threshold) continue;
        const double max_scale = cloud.log_scales[i].array().exp().maxCoeff();
        const int j = cloud.size();
        cloud.centers.push_back(cloud.centers[i]);
        cloud.rotations.push_back(cloud.rotations[i]);
        cloud.log_scales.push_back(cloud.log_scales[i]);
        cloud.opacity_logits.push_back(cloud.opacity_logits[i]);
        for (int k = 0; k < n_sh; ++k) {
          cloud.sh.push_back(cloud.sh[static_cast<std::size_t>(i) * n_sh + k]);
        }
        if (max_scale > 0.01 * extent) {
          // Split: shrink both copies and separate them a little.
          const Vec3 offset(densify_rng.normal(0.0, max_scale * 0.3),
                            densify_rng.normal(0.0, max_scale * 0.3),
                            densify_rng.normal(0.0, max_scale * 0.3));
          cloud.centers[j] += offset;
          cloud.centers[i] -= offset;
          cloud.log_scales[i] -= Vec3::Constant(std::log(1.6));
          cloud.log_scales[j] -= Vec3::Constant(std::log(1.6));
        } else {
          cloud.centers[j] += Vec3(densify_rng.normal(0.0, max_scale * 0.1),
                                   densify_rng.normal(0.0, max_scale * 0.1),
                                   densify_rng.normal(0.0, max_scale * 0.1));
        }
      }
      const int added = cloud.size() - before;
      if (added > 0) {
        adam.append(added, cloud.sh_coeff_count);
        grad_accum.resize(cloud.size(), 0.0);
      }
      std::fill(grad_accum.begin(), grad_accum.end(), 0.0);
      grad_steps = 0;
    }
  }

  // The deformation field is sized per Gaussian; pruning/densification above
  // changes the count, so stage 3 starts from a fresh zero-initialized field.
  if (avatar.field.gaussian_count() != cloud.size()) {
    avatar.field = DeformationField::make(cloud.size(), cloud.sh_coeff_count, 64, cfg.seed + 1);
  }

  HairTrainSummary summary;
  summary.iterations = cfg.iters_hair;
  summary.gaussians = cloud.size();
  double sum_psnr = 0.0;
  for (std::size_t vi = 0; vi < records.size(); ++vi) {
    const SplatBuffers splat = render_splats(cloud, records[vi].camera, opts);
    sum_psnr += psnr(records[vi].image_hair, quantize8(splat.color), records[vi].mask_hair);
  }
  summary.psnr = sum_psnr / static_cast<double>(records.size());
  return summary;
}

}  // namespace meshsplat
