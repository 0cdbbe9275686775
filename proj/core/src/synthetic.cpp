#include "meshsplat/synthetic.hpp"

#include "meshsplat/errors.hpp"
#include "meshsplat/icp.hpp"
#include "meshsplat/image_io.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace meshsplat {

namespace {

using nlohmann::json;

constexpr double kHeadRadius = 0.1;  // bounding diameter 0.2 scene units

TriMesh make_uv_sphere(int stacks, int slices, double radius) {
  TriMesh mesh;
  // Grid with a duplicated seam column and duplicated pole rows so uv stays
  // clean; degenerate pole quads collapse to single triangles.
  auto index = [&](int r, int c) { return r * (slices + 1) + c; };
  for (int r = 0; r <= stacks; ++r) {
    for (int c = 0; c <= slices; ++c) {
      const double theta = M_PI * r / stacks;
      const double phi = 2.0 * M_PI * c / slices;
      mesh.vertices.emplace_back(radius * std::sin(theta) * std::cos(phi),
                                 radius * std::cos(theta),
                                 radius * std::sin(theta) * std::sin(phi));
      mesh.uv_coords.emplace_back(static_cast<double>(c) / slices,
                                  static_cast<double>(r) / stacks);
    }
  }
  for (int r = 0; r < stacks; ++r) {
    for (int c = 0; c < slices; ++c) {
      const int a = index(r, c);
      const int b = index(r, c + 1);
      const int d = index(r + 1, c);
      const int e = index(r + 1, c + 1);
      if (r == 0) {
        mesh.faces.push_back({a, e, d});
      } else if (r == stacks - 1) {
        mesh.faces.push_back({a, b, d});
      } else {
        mesh.faces.push_back({a, b, d});
        mesh.faces.push_back({b, e, d});
      }
    }
  }
  return mesh;
}

double smooth01(double t) { return t <= 0.0 ? 0.0 : t >= 1.0 ? 1.0 : t * t * (3.0 - 2.0 * t); }

// Dyadic rounding keeps skin-weight rows summing to exactly 1 after the
// float32 round-trip of the head model file.
double dyadic(double v) { return std::round(v * 1024.0) / 1024.0; }

}  // namespace

HeadModel make_sphere_head(const SyntheticOptions& opts) {
  TriMesh mesh = make_uv_sphere(8, 12, kHeadRadius);
  mesh = subdivide4(subdivide4(mesh));

  HeadModel model;
  model.template_vertices = mesh.vertices;
  model.faces = mesh.faces;
  model.uv_coords = mesh.uv_coords;

  const int nv = model.vertex_count();
  auto radial = [&](const Vec3& v) { return v.normalized(); };

  // Shape basis: two smooth radial fields (overall size, top-vs-bottom).
  model.shape_basis.assign(2, std::vector<Vec3>(nv));
  for (int i = 0; i < nv; ++i) {
    const Vec3& v = model.template_vertices[i];
    const Vec3 dir = radial(v);
    model.shape_basis[0][i] = 0.006 * dir;
    model.shape_basis[1][i] = 0.005 * dir * (v.y() / kHeadRadius);
  }

  // Expression basis: a frontal bump, a lateral wobble, a vertical stretch.
  model.expr_basis.assign(3, std::vector<Vec3>(nv));
  for (int i = 0; i < nv; ++i) {
    const Vec3& v = model.template_vertices[i];
    const Vec3 dir = radial(v);
    const double front = smooth01(1.5 * dir.z());        // z > 0 is the "face"
    const double cheek = std::exp(-8.0 * (dir.y() + 0.2) * (dir.y() + 0.2));
    model.expr_basis[0][i] = 0.006 * front * cheek * dir;
    model.expr_basis[1][i] = 0.004 * front * Vec3(1.0, 0.0, 0.0) * std::sin(3.0 * dir.y());
    model.expr_basis[2][i] = Vec3(0.0, 0.004 * dir.y(), 0.0);
  }

  // Two joints: root at the origin, a neck pivot below the head.
  model.joints.resize(2);
  model.joints[0] = Joint{Vec3::Zero(), -1};
  model.joints[1] = Joint{Vec3(0.0, -0.9 * kHeadRadius, 0.0), 0};
  model.skin_weights = MatX(nv, 2);
  for (int i = 0; i < nv; ++i) {
    // Neck influence grows toward the bottom of the head.
    const double t = smooth01((0.1 - model.template_vertices[i].y() / kHeadRadius) * 0.5);
    const double w_neck = dyadic(0.6 * t);
    model.skin_weights(i, 0) = 1.0 - w_neck;
    model.skin_weights(i, 1) = w_neck;
  }

  // Scalp cap: polar angle < 65 degrees from +y.
  const double cos_cap = std::cos(65.0 * M_PI / 180.0);
  for (int i = 0; i < nv; ++i) {
    if (radial(model.template_vertices[i]).y() > cos_cap) model.scalp_indices.push_back(i);
  }
  (void)opts;
  model.validate();
  return model;
}

AvatarBundle make_ground_truth_avatar(const HeadModel& head, const SyntheticOptions& opts) {
  TrainConfig config;
  config.seed = opts.seed;

  AvatarBundle a = AvatarBundle::initialize(head, config, opts.n_gaussians, 0.02, opts.sh_coeffs,
                                            opts.texture_res, opts.model_res, opts.dyn_basis,
                                            opts.disp_res);
  Rng rng(opts.seed * 7919 + 11);

  // Decoder: random hidden layers, amplified final layer for contrast.
  a.pix = MlpParams::make({a.textures.channels + 2, 16, 16, 3},
                          {Activation::Relu, Activation::Relu, Activation::Sigmoid}, rng);
  a.pix.layers.back().weights *= 4.0;

  // Diffuse latents: checker + gradients + a radial ramp.
  const int res = a.textures.diffuse.width();
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const double u = (x + 0.5) / res;
      const double v = (y + 0.5) / res;
      const bool check = ((x * 8 / res) + (y * 8 / res)) % 2 == 0;
      a.textures.diffuse.at(x, y, 0) = check ? 1.2 : -1.2;
      a.textures.diffuse.at(x, y, 1) = 2.0 * u - 1.0;
      a.textures.diffuse.at(x, y, 2) = 2.0 * v - 1.0;
      a.textures.diffuse.at(x, y, 3) =
          1.5 * std::sin(6.283185307179586 * u) * std::cos(3.141592653589793 * v);
    }
  }
  // View model: modest first-order response; dynamic basis: smooth patterns.
  {
    const int mres = a.textures.view_coeffs.width();
    for (int y = 0; y < mres; ++y) {
      for (int x = 0; x < mres; ++x) {
        for (int c = 0; c < a.textures.channels; ++c) {
          for (int j = 1; j < 4; ++j) {
            a.textures.view_coeffs.at(x, y, c * 4 + j) = 0.15 * rng.normal();
          }
        }
        for (int c = 0; c < a.textures.channels; ++c) {
          for (int k = 0; k < a.textures.n_dyn_basis; ++k) {
            const double u = (x + 0.5) / mres;
            const double v = (y + 0.5) / mres;
            a.textures.dyn_basis.at(x, y, c * a.textures.n_dyn_basis + k) =
                0.3 * std::sin(6.28318 * (u * (k + 1) + 0.3 * c)) * std::cos(3.14159 * v * (k + 1));
          }
        }
      }
    }
  }

  // Displacement: smooth low-frequency fields.
  if (opts.displacement_on) {
    const int dres = a.displacement.base.width();
    for (int y = 0; y < dres; ++y) {
      for (int x = 0; x < dres; ++x) {
        const double u = (x + 0.5) / dres;
        const double v = (y + 0.5) / dres;
        for (int c = 0; c < 3; ++c) {
          a.displacement.base.at(x, y, c) =
              0.002 * std::sin(6.28318 * (u + 0.25 * c)) * std::sin(3.14159 * v + 0.5 * c);
        }
        for (std::size_t k = 0; k < a.displacement.psi_basis.size(); ++k) {
          a.displacement.psi_basis[k].at(x, y, k % 3) =
              0.001 * std::cos(6.28318 * u * (k + 1)) * std::sin(3.14159 * v);
        }
        for (std::size_t k = 0; k < a.displacement.phi_basis.size(); ++k) {
          a.displacement.phi_basis[k].at(x, y, (k + 1) % 3) =
              0.0008 * std::sin(6.28318 * (v + 0.2 * k));
        }
      }
    }
  } else {
    a.displacement = DisplacementModel{};
  }

  // Hair cloud: dark colors, varied opacity and orientation.
  for (int i = 0; i < a.cloud.size(); ++i) {
    double* sh = a.cloud.sh_at(i);
    const Vec3 base(0.18 + 0.1 * rng.uniform(), 0.12 + 0.08 * rng.uniform(),
                    0.08 + 0.06 * rng.uniform());
    for (int c = 0; c < 3; ++c) sh[c] = (base[c] - 0.5) / 0.28209479177387814;
    for (int k = 1; k < a.cloud.sh_coeff_count; ++k) {
      for (int c = 0; c < 3; ++c) sh[k * 3 + c] = 0.05 * rng.normal();
    }
    const double op = rng.uniform(opts.hair_opacity_lo, opts.hair_opacity_hi);
    a.cloud.opacity_logits[i] = std::log(op / (1.0 - op));
    Vec4 q(1.0 + rng.normal(0.0, 0.2), rng.normal(0.0, 0.2), rng.normal(0.0, 0.2),
           rng.normal(0.0, 0.2));
    a.cloud.rotations[i] = q / q.norm();
    a.cloud.log_scales[i] += Vec3(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
                                  rng.uniform(-0.3, 0.3));
  }

  // Non-rigid field: small random final layer so deltas are non-zero.
  {
    MlpLayer& last = a.field.mlp.layers.back();
    const int n_sh = 3 * a.cloud.sh_coeff_count;
    for (int r = 0; r < last.weights.rows(); ++r) {
      double scale = 0.0;
      if (r < 3) scale = 0.004;                 // position deltas, ~1-2 px
      else if (r < 7) scale = 0.03;             // rotation
      else if (r < 10) scale = 0.03;            // log-scale
      else if (r < 11) scale = 0.15;            // opacity
      else if (r < 11 + n_sh) scale = 0.03;     // sh
      scale *= opts.field_amplitude;
      for (int c = 0; c < last.weights.cols(); ++c) {
        last.weights(r, c) = scale * rng.normal();
      }
    }
  }
  return a;
}

std::vector<Camera> make_camera_ring(const SyntheticOptions& opts) {
  std::vector<Camera> cams;
  const double focal = 1.4 * opts.image_size;
  for (int v = 0; v < opts.n_views; ++v) {
    const double angle = 2.0 * M_PI * v / opts.n_views;
    const Vec3 eye(0.45 * std::cos(angle), 0.08, 0.45 * std::sin(angle));
    Camera cam = Camera::look_at(eye, Vec3::Zero(), Vec3::UnitY(), focal, opts.image_size,
                                 opts.image_size);
    cam.near_clip = 0.05;
    cam.far_clip = 5.0;
    cams.push_back(cam);
  }
  return cams;
}

ExpressionParams make_frame_params(const HeadModel& head, const SyntheticOptions& opts,
                                   int frame) {
  ExpressionParams p = ExpressionParams::zeros(head);
  if (p.beta.size() > 0) p.beta[0] = 0.3;
  if (p.beta.size() > 1) p.beta[1] = -0.2;
  const double t = static_cast<double>(frame) / std::max(1, opts.n_frames);
  for (int k = 0; k < p.psi.size(); ++k) {
    p.psi[k] = 0.8 * std::sin(2.0 * M_PI * (t * (k + 1) + 0.17 * k));
  }
  if (p.phi.size() >= 3) p.phi[1] = 0.15 * std::sin(2.0 * M_PI * t);  // yaw
  if (p.phi.size() >= 6) p.phi[3] = 0.08 * std::cos(2.0 * M_PI * t);  // neck tilt
  return p;
}

void generate_scene(const std::filesystem::path& out_dir, const SyntheticOptions& opts) {
  std::filesystem::create_directories(out_dir);

  const HeadModel head = make_sphere_head(opts);
  AvatarBundle avatar = make_ground_truth_avatar(head, opts);

  // Scalp-ICP rigid transforms per frame, relative to the canonical frame.
  const ExpressionParams canon_params = make_frame_params(head, opts, 0);
  const TriMesh canon_mesh = lbs_deform(head, canon_params);
  std::vector<Vec3> canon_scalp;
  for (int idx : head.scalp_indices) canon_scalp.push_back(canon_mesh.vertices[idx]);
  for (int f = 0; f < opts.n_frames; ++f) {
    const TriMesh posed = lbs_deform(head, make_frame_params(head, opts, f));
    std::vector<Vec3> scalp;
    for (int idx : head.scalp_indices) scalp.push_back(posed.vertices[idx]);
    IcpOptions icp_opts;
    avatar.frame_transforms[f] = icp(canon_scalp, scalp, icp_opts).transform;
  }

  // Save then reload so every stored target is reproducible from the stored
  // avatar (the head-model file is float32).
  avatar.save(out_dir / "avatar");
  const AvatarBundle gt = AvatarBundle::load(out_dir / "avatar");

  const std::vector<Camera> cams = make_camera_ring(opts);
  json cam_json = json::array();
  for (const Camera& cam : cams) {
    json c;
    c["fx"] = cam.fx;
    c["fy"] = cam.fy;
    c["cx"] = cam.cx;
    c["cy"] = cam.cy;
    c["width"] = cam.width;
    c["height"] = cam.height;
    c["near"] = cam.near_clip;
    c["far"] = cam.far_clip;
    std::vector<double> r;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) r.push_back(cam.rotation(i, j));
    }
    c["rotation"] = r;
    c["translation"] = {cam.translation[0], cam.translation[1], cam.translation[2]};
    cam_json.push_back(c);
  }
  {
    std::ofstream out(out_dir / "cameras.json");
    out << cam_json.dump(2) << "\n";
  }

  RenderSettings settings;
  settings.blur_sigma = gt.config.blur_sigma;
  settings.nearz_threshold = gt.config.nearz_threshold;

  for (int f = 0; f < opts.n_frames; ++f) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%03d", f);
    const auto fdir = out_dir / "frames" / buf;
    std::filesystem::create_directories(fdir);

    const ExpressionParams params = make_frame_params(gt.head, opts, f);
    {
      json p;
      p["beta"] = std::vector<double>(params.beta.data(), params.beta.data() + params.beta.size());
      p["psi"] = std::vector<double>(params.psi.data(), params.psi.data() + params.psi.size());
      p["phi"] = std::vector<double>(params.phi.data(), params.phi.data() + params.phi.size());
      std::ofstream out(fdir / "params.json");
      out << p.dump(2) << "\n";
    }

    for (int v = 0; v < opts.n_views; ++v) {
      const FrameRender render =
          render_frame(gt, params, cams[v], frame_rigid(gt, f), settings);
      char vbuf[32];
      std::snprintf(vbuf, sizeof(vbuf), "view_%02d", v);
      const std::string stem = vbuf;
      write_png(fdir / (stem + "_full.png"), render.composite_color);
      write_png(fdir / (stem + "_head.png"), render.head_color);
      write_png(fdir / (stem + "_hair.png"), render.hair.color);
      Image hair_mask(opts.image_size, opts.image_size, 1);
      for (std::size_t i = 0; i < hair_mask.size(); ++i) {
        hair_mask.data()[i] = render.hair_blend.data()[i] > 0.5 ? 1.0 : 0.0;
      }
      write_png(fdir / (stem + "_hairmask.png"), hair_mask);
      write_png(fdir / (stem + "_coverage.png"), render.mesh.coverage);
      write_pfm(fdir / (stem + "_depth.pfm"), render.mesh.depth);
    }
  }

  json manifest;
  manifest["kind"] = "scene";
  manifest["version"] = 1;
  manifest["image_size"] = opts.image_size;
  manifest["n_frames"] = opts.n_frames;
  manifest["n_views"] = opts.n_views;
  manifest["canonical_frame"] = 0;
  manifest["held_out"] = {{"frame", opts.n_frames - 1}, {"view", 0}};
  manifest["seed"] = opts.seed;
  {
    std::ofstream out(out_dir / "manifest.json");
    out << manifest.dump(2) << "\n";
  }
}

}  // namespace meshsplat
