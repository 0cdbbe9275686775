#pragma once

// Shared test fixtures and independent oracles. The reference splat renderer
// below deliberately re-derives projection and per-pixel accumulation from
// the definitions (dense loops, no tiling, no footprint bounds) so it can
// stand as an oracle for the production renderer.

#include "meshsplat/geometry.hpp"
#include "meshsplat/raster.hpp"
#include "meshsplat/rng.hpp"
#include "meshsplat/splat.hpp"

#include <cmath>
#include <vector>

namespace meshsplat::testing {

inline TriMesh single_triangle(double z = 2.0) {
  TriMesh mesh;
  mesh.vertices = {Vec3(-1.0, -1.0, z), Vec3(3.0, -1.0, z), Vec3(-1.0, 3.0, z)};
  mesh.faces = {{0, 1, 2}};
  mesh.uv_coords = {Vec2(0.0, 0.0), Vec2(1.0, 0.0), Vec2(0.0, 1.0)};
  return mesh;
}

inline TriMesh icosahedron(double radius = 1.0) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriMesh mesh;
  mesh.vertices = {{-1, t, 0}, {1, t, 0},   {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                   {0, -1, -t}, {0, 1, -t}, {t, 0, -1},  {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  for (Vec3& v : mesh.vertices) v = v.normalized() * radius;
  mesh.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},
                {5, 11, 4}, {11, 10, 2}, {10, 7, 6},  {7, 1, 8},  {3, 9, 4},   {3, 4, 2},
                {3, 2, 6},  {3, 6, 8},  {3, 8, 9},   {4, 9, 5},  {2, 4, 11},  {6, 2, 10},
                {8, 6, 7},  {9, 8, 1}};
  mesh.uv_coords.assign(12, Vec2(0.5, 0.5));
  return mesh;
}

inline Camera simple_camera(int size = 32, double focal = 40.0) {
  Camera cam;
  cam.fx = cam.fy = focal;
  cam.cx = size / 2.0;
  cam.cy = size / 2.0;
  cam.width = cam.height = size;
  cam.near_clip = 0.01;
  cam.far_clip = 100.0;
  return cam;
}

inline GaussianCloud random_cloud(int n, int sh_coeffs, std::uint64_t seed,
                                  double z_center = 3.0, double spread = 0.6) {
  Rng rng(seed);
  GaussianCloud cloud;
  cloud.resize(n, sh_coeffs);
  for (int i = 0; i < n; ++i) {
    cloud.centers[i] = Vec3(rng.uniform(-spread, spread), rng.uniform(-spread, spread),
                            z_center + rng.uniform(-spread, spread));
    Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    cloud.rotations[i] = q.norm() > 1e-6 ? Vec4(q / q.norm()) : Vec4(1, 0, 0, 0);
    cloud.log_scales[i] = Vec3(rng.uniform(-3.2, -2.0), rng.uniform(-3.2, -2.0),
                               rng.uniform(-3.2, -2.0));
    cloud.opacity_logits[i] = rng.uniform(-1.5, 2.0);
    double* sh = cloud.sh_at(i);
    for (int k = 0; k < sh_coeffs * 3; ++k) sh[k] = rng.uniform(-0.4, 0.4);
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Independent dense reference of the splat forward pass.

struct ReferenceBuffers {
  Image color, alpha, nearz;
};

inline ReferenceBuffers reference_render(const GaussianCloud& cloud, const Camera& cam,
                                         const SplatOptions& opts) {
  const int n = cloud.size();
  struct Ref {
    double depth;
    double mx, my;
    double a, b, c;  // inverse covariance
    double opacity;
    Vec3 color;
    bool ok;
    int index;
  };
  std::vector<Ref> refs;
  const Vec3 cam_pos = -cam.rotation.transpose() * cam.translation;

  for (int i = 0; i < n; ++i) {
    Ref r{};
    r.index = i;
    const Vec3 t = cam.rotation * cloud.centers[i] + cam.translation;
    r.ok = t.z() >= cam.near_clip;
    if (!r.ok) {
      refs.push_back(r);
      continue;
    }
    r.depth = t.z();
    r.mx = cam.fx * t.x() / t.z() + cam.cx;
    r.my = cam.fy * t.y() / t.z() + cam.cy;

    // Quaternion to rotation, written out directly.
    Vec4 q = cloud.rotations[i];
    q /= q.norm();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 rot;
    rot << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    Mat3 cov3 = Mat3::Zero();
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        for (int k = 0; k < 3; ++k) {
          cov3(a, b) += rot(a, k) * std::exp(2.0 * cloud.log_scales[i][k]) * rot(b, k);
        }
      }
    }
    Eigen::Matrix<double, 2, 3> jac;
    jac << cam.fx / t.z(), 0, -cam.fx * t.x() / (t.z() * t.z()), 0, cam.fy / t.z(),
        -cam.fy * t.y() / (t.z() * t.z());
    const Eigen::Matrix<double, 2, 3> m = jac * cam.rotation;
    const Mat2 cov2 = m * cov3 * m.transpose() + 0.3 * Mat2::Identity();
    const double det = cov2.determinant();
    if (det < 1e-12) {
      r.ok = false;
      refs.push_back(r);
      continue;
    }
    r.a = cov2(1, 1) / det;
    r.b = -cov2(0, 1) / det;
    r.c = cov2(0, 0) / det;
    r.opacity = 1.0 / (1.0 + std::exp(-cloud.opacity_logits[i]));
    const Vec3 dir = (cloud.centers[i] - cam_pos).normalized();
    r.color = eval_sh(cloud.sh_at(i), cloud.sh_coeff_count, dir);
    refs.push_back(r);
  }

  std::vector<int> order;
  for (int i = 0; i < n; ++i) {
    if (refs[i].ok) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return refs[a].depth < refs[b].depth; });

  ReferenceBuffers out;
  out.color = Image(cam.width, cam.height, 3);
  out.alpha = Image(cam.width, cam.height, 1);
  out.nearz = Image(cam.width, cam.height, 1, kInf);
  for (int py = 0; py < cam.height; ++py) {
    for (int px = 0; px < cam.width; ++px) {
      double trans = 1.0;
      double acc_alpha = 0.0;
      double last_depth = 0.0;
      Vec3 color = Vec3::Zero();
      double nearz = kInf;
      for (int idx : order) {
        const Ref& r = refs[idx];
        const double dx = px + 0.5 - r.mx;
        const double dy = py + 0.5 - r.my;
        const double power = r.a * dx * dx + 2.0 * r.b * dx * dy + r.c * dy * dy;
        const double alpha = r.opacity * std::exp(-0.5 * power);
        if (alpha < opts.alpha_cutoff) continue;
        if (opts.early_stop && acc_alpha > 0.0 && r.depth - last_depth > opts.early_stop_gap) break;
        color += trans * alpha * r.color;
        acc_alpha += trans * alpha;
        if (nearz == kInf && alpha >= opts.nearz_opacity_threshold) nearz = r.depth;
        last_depth = r.depth;
        trans *= 1.0 - alpha;
        if (trans < 1e-4) break;
      }
      out.color.set_rgb(px, py, color);
      out.alpha.at(px, py) = acc_alpha;
      out.nearz.at(px, py) = nearz;
    }
  }
  return out;
}

// Central finite difference of a scalar function at x.
template <typename F>
double central_difference(F&& f, double& x, double h = 1e-5) {
  const double orig = x;
  x = orig + h;
  const double fp = f();
  x = orig - h;
  const double fm = f();
  x = orig;
  return (fp - fm) / (2.0 * h);
}

inline double rel_error(double got, double want) {
  const double denom = std::max({std::abs(got), std::abs(want), 1e-8});
  return std::abs(got - want) / denom;
}

}  // namespace meshsplat::testing
