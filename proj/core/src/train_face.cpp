#include "meshsplat/trainer.hpp"

#include "meshsplat/errors.hpp"
#include "meshsplat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace meshsplat {

CsvLogger::CsvLogger(const std::filesystem::path& path, const std::vector<std::string>& columns) {
  if (path.empty()) return;
  out_.open(path);
  if (!out_) throw IoError("CsvLogger: cannot open " + path.string());
  out_ << "iter";
  for (const auto& c : columns) out_ << "," << c;
  out_ << "\n";
  n_columns_ = columns.size();
}

void CsvLogger::row(int iter, const std::vector<double>& values) {
  if (!out_) return;
  out_ << iter;
  for (double v : values) out_ << "," << v;
  out_ << "\n";
}

MlpAdam MlpAdam::make(const MlpParams& params, double lr) {
  MlpAdam a;
  for (const MlpLayer& l : params.layers) {
    a.w_states.push_back(AdamState::make(static_cast<std::size_t>(l.weights.size()), lr));
    a.b_states.push_back(AdamState::make(static_cast<std::size_t>(l.bias.size()), lr));
  }
  return a;
}

void MlpAdam::step(MlpParams& params, const MlpGrads& grads) {
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    MlpLayer& l = params.layers[i];
    adam_step({l.weights.data(), static_cast<std::size_t>(l.weights.size())},
              {grads.d_weights[i].data(), static_cast<std::size_t>(grads.d_weights[i].size())},
              w_states[i]);
    adam_step({l.bias.data(), static_cast<std::size_t>(l.bias.size())},
              {grads.d_bias[i].data(), static_cast<std::size_t>(grads.d_bias[i].size())},
              b_states[i]);
  }
  params.revision += 1;
}

void adam_step_image(Image& param, const Image& grad, AdamState& state) {
  adam_step({param.data().data(), param.data().size()},
            {grad.data().data(), grad.data().size()}, state);
}

Image union_mask(const Image& coverage, const Image& hair_mask) {
  Image out(coverage.width(), coverage.height(), 1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = std::max(coverage.data()[i], hair_mask.data()[i]) > 0.5 ? 1.0 : 0.0;
  }
  return out;
}

std::vector<int> visible_scalp_with_depth(const TriMesh& mesh, const std::vector<int>& scalp,
                                          const Image& hair_mask, const Camera& camera,
                                          const Image& depth) {
  constexpr double kDepthTolerance = 1e-4;
  std::vector<int> visible;
  for (int idx : scalp) {
    const Vec3 cam_point = camera.to_camera(mesh.vertices[idx]);
    if (cam_point.z() <= camera.near_clip) continue;
    const Vec2 pix = camera.project(cam_point);
    const int ix = static_cast<int>(std::floor(pix.x()));
    const int iy = static_cast<int>(std::floor(pix.y()));
    if (ix < 0 || ix >= camera.width || iy < 0 || iy >= camera.height) continue;
    if (hair_mask.at(ix, iy) <= 0.5) continue;
    if (cam_point.z() > depth.at(ix, iy) + kDepthTolerance) continue;
    visible.push_back(idx);
  }
  return visible;
}

std::vector<Vec3> scatter_depth_grad_to_vertices(const Image& grad_depth,
                                                 const RenderBuffers& buffers, const TriMesh& mesh,
                                                 const Camera& camera) {
  // Pixel-anchored depth derivative: along the fixed pixel ray r the hit
  // depth is (v0.n)/(r.n) with n the face normal (camera space), so lateral
  // vertex motion tilts the plane and moves the depth too. The pixel-to-face
  // assignment is treated as constant structure.
  std::vector<Vec3> grads(mesh.vertex_count(), Vec3::Zero());
  std::vector<Vec3> cam_verts(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    cam_verts[i] = camera.to_camera(mesh.vertices[i]);
  }
  const Mat3 rot_t = camera.rotation.transpose();
  for (int y = 0; y < buffers.height(); ++y) {
    for (int x = 0; x < buffers.width(); ++x) {
      const double g = grad_depth.at(x, y);
      if (g == 0.0 || buffers.coverage.at(x, y) == 0.0) continue;
      const int fid = buffers.face_id[static_cast<std::size_t>(y) * buffers.width() + x];
      const Face& face = mesh.faces[fid];
      const Vec3& v0 = cam_verts[face[0]];
      const Vec3& v1 = cam_verts[face[1]];
      const Vec3& v2 = cam_verts[face[2]];
      const Vec3 n = (v1 - v0).cross(v2 - v0);
      const Vec3 ray((x + 0.5 - camera.cx) / camera.fx, (y + 0.5 - camera.cy) / camera.fy, 1.0);
      const double b = ray.dot(n);
      if (std::abs(b) < 1e-18) continue;  // grazing face, no stable gradient
      const double a = v0.dot(n);
      const double inv_b = 1.0 / b;
      const double a_over_b2 = a * inv_b * inv_b;
      // d n(delta_k) = delta_k x e_k with e_0 = v1-v2, e_1 = v2-v0, e_2 = v0-v1.
      const Vec3 e[3] = {v1 - v2, v2 - v0, v0 - v1};
      for (int k = 0; k < 3; ++k) {
        Vec3 gw = (e[k].cross(v0)) * inv_b - a_over_b2 * e[k].cross(ray);
        if (k == 0) gw += n * inv_b;  // a = v0.n also moves with v0 directly
        grads[face[k]] += g * (rot_t * gw);
      }
    }
  }
  return grads;
}

DisplacementGrads DisplacementGrads::zeros(const DisplacementModel& model) {
  DisplacementGrads g;
  g.base = Image(model.base.width(), model.base.height(), 3);
  g.psi_basis.assign(model.psi_basis.size(), g.base);
  g.phi_basis.assign(model.phi_basis.size(), g.base);
  return g;
}

void scatter_vertex_grads_to_displacement(const std::vector<Vec3>& vertex_grads,
                                          const std::vector<Vec2>& uv, const VecX& psi,
                                          const VecX& phi, const DisplacementModel& model,
                                          DisplacementGrads& grads) {
  const int w = model.base.width();
  const int h = model.base.height();
  for (std::size_t i = 0; i < vertex_grads.size(); ++i) {
    const Vec3& g = vertex_grads[i];
    if (g.isZero()) continue;
    const BilinearSample s = bilinear_setup(uv[i].x(), uv[i].y(), w, h);
    auto scatter = [&](Image& grid, double coeff) {
      if (coeff == 0.0) return;
      for (int c = 0; c < 3; ++c) {
        grid.at(s.x0, s.y0, c) += coeff * s.w00 * g[c];
        grid.at(s.x1, s.y0, c) += coeff * s.w10 * g[c];
        grid.at(s.x0, s.y1, c) += coeff * s.w01 * g[c];
        grid.at(s.x1, s.y1, c) += coeff * s.w11 * g[c];
      }
    };
    scatter(grads.base, 1.0);
    for (std::size_t k = 0; k < grads.psi_basis.size(); ++k) {
      if (static_cast<int>(k) < psi.size()) scatter(grads.psi_basis[k], psi[k]);
    }
    for (std::size_t k = 0; k < grads.phi_basis.size(); ++k) {
      if (static_cast<int>(k) < phi.size()) scatter(grads.phi_basis[k], phi[k]);
    }
  }
}

FaceTrainSummary train_face(const SceneDataset& dataset, AvatarBundle& avatar,
                            const TrainConfig& cfg, const std::filesystem::path& log_csv) {
  cfg.weights.validate();
  const auto pairs = dataset.all_pairs(/*skip_held_out=*/true);
  if (pairs.empty()) throw ConfigError("train_face: dataset has no frames");

  std::vector<FrameRecord> records;
  records.reserve(pairs.size());
  for (const auto& [f, v] : pairs) {
    FrameRecord rec = dataset.load_record(f, v);
    if (rec.depth.empty()) throw ConfigError("train_face: frame is missing depth targets");
    rec.image_full = Image();  // stage 1 never reads the composites
    rec.image_hair = Image();
    records.push_back(std::move(rec));
  }

  Rng rng(cfg.seed);
  std::vector<int> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.uniform_index(i)]);
  }

  TextureStack& tex = avatar.textures;
  DisplacementModel& disp = avatar.displacement;
  const bool with_disp = disp.enabled();

  AdamState st_diffuse = AdamState::make(tex.diffuse.size(), cfg.lr_texture);
  AdamState st_view = AdamState::make(tex.view_coeffs.size(), cfg.lr_texture);
  AdamState st_dyn =
      tex.has_dynamic() ? AdamState::make(tex.dyn_basis.size(), cfg.lr_texture) : AdamState{};
  AdamState st_disp_base =
      with_disp ? AdamState::make(disp.base.size(), cfg.lr_displacement) : AdamState{};
  std::vector<AdamState> st_disp_psi, st_disp_phi;
  for (const Image& b : disp.psi_basis) st_disp_psi.push_back(AdamState::make(b.size(), cfg.lr_displacement));
  for (const Image& b : disp.phi_basis) st_disp_phi.push_back(AdamState::make(b.size(), cfg.lr_displacement));
  MlpAdam st_pix = MlpAdam::make(avatar.pix, cfg.lr_decoder);

  CsvLogger log(log_csv, {"pho", "di_pho", "ssim", "depth", "normal", "shrink", "lap", "nc", "el",
                          "total", "psnr"});

  const LossWeights& w = cfg.weights;
  for (int iter = 0; iter < cfg.iters_face; ++iter) {
    const FrameRecord& rec = records[order[iter % order.size()]];

    const TriMesh posed = lbs_deform(avatar.head, rec.params);
    TriMesh refined = posed;
    if (with_disp) {
      refined = apply_displacement(posed, disp.evaluate(rec.params.psi, rec.params.phi));
    }
    const RenderBuffers buffers = rasterize(refined, rec.camera);
    const Image dirs = view_direction_image(rec.camera, buffers);

    DecodeCache cache, cache_di;
    const Image render = decode_face(tex, buffers, dirs, rec.params.psi, avatar.pix, false, &cache);
    const Image render_di =
        decode_face(tex, buffers, dirs, rec.params.psi, avatar.pix, true, &cache_di);

    const Image& mask = rec.mask_coverage;
    const double l_pho = loss_photometric(rec.image_head, render, mask);
    const double l_dipho = loss_photometric(rec.image_head, render_di, mask);
    const double l_ssim = dssim(rec.image_head, render, mask);
    const GeometricLoss geo = loss_geometric(rec.depth, buffers.depth, rec.camera, cfg.depth_threshold);
    const RegularizerValues regs = mesh_regularizers(refined, posed);
    const std::vector<int> visible =
        visible_scalp_with_depth(refined, avatar.head.scalp_indices, rec.mask_hair, rec.camera,
                                 buffers.depth);
    const double l_shrink = loss_shrink(refined, visible, posed, avatar.head.scalp_indices);

    const double total = w.photo * l_pho + 3.0 * w.photo * l_dipho + w.ssim * l_ssim +
                         w.depth * geo.depth + w.normal * geo.normal + w.shrink * l_shrink +
                         w.laplacian * regs.laplacian + w.normal_consistency * regs.normal_consistency +
                         w.edge_length * regs.edge_length;

    // --- Backward: colors.
    TextureGrads tex_grads = TextureGrads::zeros(tex);
    MlpGrads pix_grads = MlpGrads::zeros(avatar.pix);
    {
      Image grad_color = loss_photometric_backward(rec.image_head, render, mask);
      for (double& g : grad_color.data()) g *= w.photo;
      if (w.ssim != 0.0) {
        const Image gs = dssim_backward(rec.image_head, render, mask);
        for (std::size_t i = 0; i < grad_color.size(); ++i) {
          grad_color.data()[i] += w.ssim * gs.data()[i];
        }
      }
      decode_face_backward(tex, buffers, dirs, rec.params.psi, avatar.pix, cache, grad_color,
                           tex_grads, pix_grads);
    }
    {
      Image grad_di = loss_photometric_backward(rec.image_head, render_di, mask);
      for (double& g : grad_di.data()) g *= 3.0 * w.photo;
      decode_face_backward(tex, buffers, dirs, rec.params.psi, avatar.pix, cache_di, grad_di,
                           tex_grads, pix_grads);
    }

    // --- Backward: geometry (depth/normal losses, regularizers, shrink).
    if (with_disp) {
      std::vector<Vec3> vertex_grads(refined.vertex_count(), Vec3::Zero());
      if (w.depth != 0.0 || w.normal != 0.0) {
        const Image grad_depth = loss_geometric_backward(rec.depth, buffers.depth, rec.camera,
                                                         cfg.depth_threshold, w.depth, w.normal);
        const auto vg = scatter_depth_grad_to_vertices(grad_depth, buffers, refined, rec.camera);
        for (std::size_t i = 0; i < vertex_grads.size(); ++i) vertex_grads[i] += vg[i];
      }
      {
        const auto vg = mesh_regularizers_backward(refined, posed, w.laplacian,
                                                   w.normal_consistency, w.edge_length);
        for (std::size_t i = 0; i < vertex_grads.size(); ++i) vertex_grads[i] += vg[i];
      }
      if (w.shrink != 0.0) {
        const auto vg = loss_shrink_backward(refined, visible, posed, avatar.head.scalp_indices);
        for (std::size_t i = 0; i < vertex_grads.size(); ++i) {
          vertex_grads[i] += w.shrink * vg[i];
        }
      }
      DisplacementGrads disp_grads = DisplacementGrads::zeros(disp);
      scatter_vertex_grads_to_displacement(vertex_grads, refined.uv_coords, rec.params.psi,
                                           rec.params.phi, disp, disp_grads);
      adam_step_image(disp.base, disp_grads.base, st_disp_base);
      for (std::size_t k = 0; k < disp.psi_basis.size(); ++k) {
        adam_step_image(disp.psi_basis[k], disp_grads.psi_basis[k], st_disp_psi[k]);
      }
      for (std::size_t k = 0; k < disp.phi_basis.size(); ++k) {
        adam_step_image(disp.phi_basis[k], disp_grads.phi_basis[k], st_disp_phi[k]);
      }
    }

    adam_step_image(tex.diffuse, tex_grads.d_diffuse, st_diffuse);
    if (tex.has_view()) adam_step_image(tex.view_coeffs, tex_grads.d_view_coeffs, st_view);
    if (tex.has_dynamic()) adam_step_image(tex.dyn_basis, tex_grads.d_dyn_basis, st_dyn);
    st_pix.step(avatar.pix, pix_grads);

    if (log.enabled()) {
      const double iter_psnr = psnr(rec.image_head, quantize8(render), mask);
      log.row(iter, {l_pho, l_dipho, l_ssim, geo.depth, geo.normal, l_shrink, regs.laplacian,
                     regs.normal_consistency, regs.edge_length, total, iter_psnr});
    }
  }

  // Training-set summary.
  FaceTrainSummary summary;
  summary.iterations = cfg.iters_face;
  double sum_psnr = 0.0, sum_ssim = 0.0, sum_mae = 0.0;
  for (const FrameRecord& rec : records) {
    const TriMesh posed = lbs_deform(avatar.head, rec.params);
    TriMesh refined = posed;
    if (with_disp) {
      refined = apply_displacement(posed, disp.evaluate(rec.params.psi, rec.params.phi));
    }
    const RenderBuffers buffers = rasterize(refined, rec.camera);
    const Image dirs = view_direction_image(rec.camera, buffers);
    const Image render =
        quantize8(decode_face(tex, buffers, dirs, rec.params.psi, avatar.pix));
    sum_psnr += psnr(rec.image_head, render, rec.mask_coverage);
    sum_ssim += 1.0 - dssim(rec.image_head, render, rec.mask_coverage);
    sum_mae += masked_mae(rec.depth, buffers.depth, rec.mask_coverage);
  }
  const double n = static_cast<double>(records.size());
  summary.psnr = sum_psnr / n;
  summary.ssim = sum_ssim / n;
  summary.depth_mae = sum_mae / n;
  return summary;
}

}  // namespace meshsplat
