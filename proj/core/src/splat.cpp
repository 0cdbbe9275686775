#include "meshsplat/splat.hpp"

#include "meshsplat/errors.hpp"
#include "meshsplat/kdtree.hpp"
#include "meshsplat/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace meshsplat {

void GaussianCloud::resize(int n, int sh_coeffs) {
  sh_coeff_count = sh_coeffs;
  centers.assign(n, Vec3::Zero());
  rotations.assign(n, Vec4(1.0, 0.0, 0.0, 0.0));
  log_scales.assign(n, Vec3::Zero());
  opacity_logits.assign(n, 0.0);
  sh.assign(static_cast<std::size_t>(n) * sh_coeffs * 3, 0.0);
}

void GaussianCloud::validate() const {
  const std::size_t n = centers.size();
  if (rotations.size() != n || log_scales.size() != n || opacity_logits.size() != n ||
      sh.size() != n * sh_coeff_count * 3) {
    throw ParameterError("GaussianCloud: array sizes disagree");
  }
  if (sh_coeff_count != 1 && sh_coeff_count != 4 && sh_coeff_count != 9 && sh_coeff_count != 16) {
    throw ParameterError("GaussianCloud: sh_coeff_count must be 1/4/9/16");
  }
}

double GaussianCloud::bounding_diameter() const {
  if (centers.empty()) return 0.0;
  Vec3 lo = centers.front(), hi = centers.front();
  for (const Vec3& c : centers) {
    lo = lo.cwiseMin(c);
    hi = hi.cwiseMax(c);
  }
  const Vec3 mid = 0.5 * (lo + hi);
  double r2 = 0.0;
  for (const Vec3& c : centers) r2 = std::max(r2, (c - mid).squaredNorm());
  return 2.0 * std::sqrt(r2);
}

GaussianDelta GaussianDelta::zeros(const GaussianCloud& cloud) {
  GaussianDelta d;
  d.d_centers.assign(cloud.size(), Vec3::Zero());
  d.d_rotations.assign(cloud.size(), Vec4::Zero());
  d.d_log_scales.assign(cloud.size(), Vec3::Zero());
  d.d_opacity_logits.assign(cloud.size(), 0.0);
  d.d_sh.assign(cloud.sh.size(), 0.0);
  return d;
}

void SplatOptions::validate() const {
  if (!(nearz_opacity_threshold > 0.0 && nearz_opacity_threshold < 1.0)) {
    throw ParameterError("SplatOptions: nearz threshold must lie in (0,1)");
  }
  if (early_stop_gap <= 0.0) throw ParameterError("SplatOptions: early_stop_gap must be > 0");
  if (alpha_cutoff <= 0.0 || alpha_cutoff >= 1.0) {
    throw ParameterError("SplatOptions: alpha_cutoff must lie in (0,1)");
  }
}

// ---------------------------------------------------------------------------
// Real spherical harmonics, degree 0..3, graphics normalization.

namespace {

constexpr double kSH0 = 0.28209479177387814;
constexpr double kSH1 = 0.4886025119029199;
constexpr double kSH2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                            -1.0925484305920792, 0.5462742152960396};
constexpr double kSH3[7] = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                            0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                            -0.5900435899266435};

void sh_basis(const Vec3& d, int count, double* basis) {
  const double x = d.x(), y = d.y(), z = d.z();
  basis[0] = kSH0;
  if (count <= 1) return;
  basis[1] = -kSH1 * y;
  basis[2] = kSH1 * z;
  basis[3] = -kSH1 * x;
  if (count <= 4) return;
  const double xx = x * x, yy = y * y, zz = z * z;
  basis[4] = kSH2[0] * x * y;
  basis[5] = kSH2[1] * y * z;
  basis[6] = kSH2[2] * (2.0 * zz - xx - yy);
  basis[7] = kSH2[3] * x * z;
  basis[8] = kSH2[4] * (xx - yy);
  if (count <= 9) return;
  basis[9] = kSH3[0] * y * (3.0 * xx - yy);
  basis[10] = kSH3[1] * x * y * z;
  basis[11] = kSH3[2] * y * (4.0 * zz - xx - yy);
  basis[12] = kSH3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
  basis[13] = kSH3[4] * x * (4.0 * zz - xx - yy);
  basis[14] = kSH3[5] * z * (xx - yy);
  basis[15] = kSH3[6] * x * (xx - 3.0 * yy);
}

// Formal polynomial gradients of the basis (projected onto the tangent space
// by the caller).
void sh_basis_grad(const Vec3& d, int count, Vec3* grad) {
  const double x = d.x(), y = d.y(), z = d.z();
  grad[0] = Vec3::Zero();
  if (count <= 1) return;
  grad[1] = {0.0, -kSH1, 0.0};
  grad[2] = {0.0, 0.0, kSH1};
  grad[3] = {-kSH1, 0.0, 0.0};
  if (count <= 4) return;
  grad[4] = {kSH2[0] * y, kSH2[0] * x, 0.0};
  grad[5] = {0.0, kSH2[1] * z, kSH2[1] * y};
  grad[6] = {-2.0 * kSH2[2] * x, -2.0 * kSH2[2] * y, 4.0 * kSH2[2] * z};
  grad[7] = {kSH2[3] * z, 0.0, kSH2[3] * x};
  grad[8] = {2.0 * kSH2[4] * x, -2.0 * kSH2[4] * y, 0.0};
  if (count <= 9) return;
  grad[9] = {kSH3[0] * 6.0 * x * y, kSH3[0] * (3.0 * x * x - 3.0 * y * y), 0.0};
  grad[10] = {kSH3[1] * y * z, kSH3[1] * x * z, kSH3[1] * x * y};
  grad[11] = {-2.0 * kSH3[2] * x * y, kSH3[2] * (4.0 * z * z - x * x - 3.0 * y * y),
              8.0 * kSH3[2] * y * z};
  grad[12] = {-6.0 * kSH3[3] * x * z, -6.0 * kSH3[3] * y * z,
              kSH3[3] * (6.0 * z * z - 3.0 * x * x - 3.0 * y * y)};
  grad[13] = {kSH3[4] * (4.0 * z * z - 3.0 * x * x - y * y), -2.0 * kSH3[4] * x * y,
              8.0 * kSH3[4] * x * z};
  grad[14] = {2.0 * kSH3[5] * x * z, -2.0 * kSH3[5] * y * z, kSH3[5] * (x * x - y * y)};
  grad[15] = {kSH3[6] * (3.0 * x * x - 3.0 * y * y), -6.0 * kSH3[6] * x * y, 0.0};
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Mat3 quat_to_rotation(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
      2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
      2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return r;
}

// dL/dq_unit given dL/dR; partials of the rotation matrix entries.
Vec4 rotation_backward(const Vec4& q, const Mat3& dR) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Vec4 dq;
  Mat3 pw, px, py, pz;
  pw << 0, -z, y, z, 0, -x, -y, x, 0;
  px << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
  py << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
  pz << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
  dq[0] = 2.0 * (pw.array() * dR.array()).sum();
  dq[1] = 2.0 * (px.array() * dR.array()).sum();
  dq[2] = 2.0 * (py.array() * dR.array()).sum();
  dq[3] = 2.0 * (pz.array() * dR.array()).sum();
  return dq;
}

Vec4 quat_multiply(const Vec4& a, const Vec4& b) {
  return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
          a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
          a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
          a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

}  // namespace

Vec3 eval_sh(const double* sh, int coeff_count, const Vec3& d) {
  double basis[16];
  sh_basis(d, coeff_count, basis);
  Vec3 color;
  for (int c = 0; c < 3; ++c) {
    double v = 0.5;
    for (int k = 0; k < coeff_count; ++k) v += sh[k * 3 + c] * basis[k];
    color[c] = std::clamp(v, 0.0, 1.0);
  }
  return color;
}

ProjectedGaussian project_gaussian(const Vec3& center, const Vec4& rotation, const Vec3& log_scale,
                                   const Camera& camera) {
  ProjectedGaussian out;
  const Vec3 t = camera.to_camera(center);
  if (t.z() < camera.near_clip) {
    out.culled = true;
    return out;
  }
  out.depth = t.z();
  out.mean2d = camera.project(t);

  const Vec4 q = rotation / rotation.norm();
  const Mat3 rot = quat_to_rotation(q);
  const Vec3 s = log_scale.array().exp();
  const Mat3 m3 = rot * s.asDiagonal();
  const Mat3 sigma3 = m3 * m3.transpose();

  Eigen::Matrix<double, 2, 3> jac;
  const double inv_z = 1.0 / t.z();
  jac << camera.fx * inv_z, 0.0, -camera.fx * t.x() * inv_z * inv_z, 0.0, camera.fy * inv_z,
      -camera.fy * t.y() * inv_z * inv_z;
  const Eigen::Matrix<double, 2, 3> m = jac * camera.rotation;
  out.cov2d = m * sigma3 * m.transpose() + 0.3 * Mat2::Identity();
  return out;
}

// ---------------------------------------------------------------------------
// Shared forward preparation.

namespace {

struct PrepItem {
  int index;        // original cloud index
  double depth;
  Vec2 mean2d;
  double conic[3];  // inverse covariance (a, b, c) for [[a,b],[b,c]]
  double opacity;
  Vec3 color;       // SH color, clamped
  Vec3 color_raw;   // pre-clamp values, for the backward clamp mask
  Vec3 dir;         // unit camera-to-center direction (world)
  double dist;      // ||center - camera center||
  int x0, x1, y0, y1;
};

struct SplatPrep {
  std::vector<PrepItem> items;  // sorted by (depth, index)
};

SplatPrep prepare_splats(const GaussianCloud& cloud, const Camera& camera,
                         const SplatOptions& opts) {
  cloud.validate();
  camera.validate();
  opts.validate();

  SplatPrep prep;
  prep.items.reserve(cloud.size());
  const Vec3 cam_center = camera.center();

  for (int i = 0; i < cloud.size(); ++i) {
    const ProjectedGaussian proj =
        project_gaussian(cloud.centers[i], cloud.rotations[i], cloud.log_scales[i], camera);
    if (proj.culled) continue;
    const double det = proj.cov2d.determinant();
    if (det < 1e-12) continue;  // singular footprint, skip this frame
    const double opacity = sigmoid(cloud.opacity_logits[i]);
    if (opacity < opts.alpha_cutoff) continue;  // can never pass the cutoff

    PrepItem item;
    item.index = i;
    item.depth = proj.depth;
    item.mean2d = proj.mean2d;
    const double inv_det = 1.0 / det;
    item.conic[0] = proj.cov2d(1, 1) * inv_det;
    item.conic[1] = -proj.cov2d(0, 1) * inv_det;
    item.conic[2] = proj.cov2d(0, 0) * inv_det;
    item.opacity = opacity;

    // Conservative pixel bound: alpha >= cutoff implies the Mahalanobis
    // ellipse q <= 2 ln(opacity / cutoff), contained in the lambda_max circle.
    const double q_max = 2.0 * std::log(opacity / opts.alpha_cutoff);
    const double half_trace = 0.5 * (proj.cov2d(0, 0) + proj.cov2d(1, 1));
    const double lambda_max =
        half_trace + std::sqrt(std::max(0.0, half_trace * half_trace - det));
    const double radius = std::sqrt(std::max(0.0, lambda_max * q_max));
    item.x0 = std::max(0, static_cast<int>(std::floor(item.mean2d.x() - radius - 0.5)));
    item.x1 = std::min(camera.width - 1, static_cast<int>(std::ceil(item.mean2d.x() + radius)));
    item.y0 = std::max(0, static_cast<int>(std::floor(item.mean2d.y() - radius - 0.5)));
    item.y1 = std::min(camera.height - 1, static_cast<int>(std::ceil(item.mean2d.y() + radius)));
    if (item.x0 > item.x1 || item.y0 > item.y1) continue;

    const Vec3 offset = cloud.centers[i] - cam_center;
    item.dist = offset.norm();
    item.dir = offset / item.dist;
    double basis[16];
    sh_basis(item.dir, cloud.sh_coeff_count, basis);
    const double* shc = cloud.sh_at(i);
    for (int c = 0; c < 3; ++c) {
      double v = 0.5;
      for (int k = 0; k < cloud.sh_coeff_count; ++k) v += shc[k * 3 + c] * basis[k];
      item.color_raw[c] = v;
      item.color[c] = std::clamp(v, 0.0, 1.0);
    }
    prep.items.push_back(item);
  }

  std::sort(prep.items.begin(), prep.items.end(), [](const PrepItem& a, const PrepItem& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.index < b.index;
  });
  return prep;
}

constexpr double kTransmittanceFloor = 1e-4;
constexpr int kTileRows = 16;

struct PixelRecord {
  int item;        // index into prep.items
  double alpha;
  double trans;    // transmittance before this contribution
};

// Front-to-back accumulation for one pixel. Records, when non-null, collect
// the contributing items for the backward pass.
struct PixelResult {
  Vec3 color = Vec3::Zero();
  double alpha = 0.0;
  double nearz = kInf;
  double acc_depth_num = 0.0;
};

inline PixelResult run_pixel(double px, double py, const std::vector<const PrepItem*>& candidates,
                             const SplatOptions& opts, double mesh_z,
                             std::vector<PixelRecord>* records) {
  PixelResult res;
  double trans = 1.0;
  double last_depth = 0.0;
  for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
    const PrepItem& it = *candidates[ci];
    if (px < it.x0 + 0.5 || px > it.x1 + 0.5 || py < it.y0 + 0.5 || py > it.y1 + 0.5) continue;
    const double dx = px - it.mean2d.x();
    const double dy = py - it.mean2d.y();
    const double q = it.conic[0] * dx * dx + 2.0 * it.conic[1] * dx * dy + it.conic[2] * dy * dy;
    if (q < 0.0) continue;
    const double alpha = it.opacity * std::exp(-0.5 * q);
    if (alpha < opts.alpha_cutoff) continue;
    if (opts.early_stop && res.alpha > 0.0 && it.depth - last_depth > opts.early_stop_gap) break;
    if (opts.cull_behind_mesh && it.depth > mesh_z) break;

    const double weight = alpha * trans;
    res.color += weight * it.color;
    res.alpha += weight;
    res.acc_depth_num += weight * it.depth;
    if (res.nearz == kInf && alpha >= opts.nearz_opacity_threshold) res.nearz = it.depth;
    if (records) {
      records->push_back({static_cast<int>(ci), alpha, trans});
    }
    last_depth = it.depth;
    trans *= 1.0 - alpha;
    if (trans < kTransmittanceFloor) break;
  }
  return res;
}

}  // namespace

SplatBuffers render_splats(const GaussianCloud& cloud, const Camera& camera,
                           const SplatOptions& opts, const Image* mesh_depth) {
  if (opts.cull_behind_mesh && mesh_depth == nullptr) {
    throw ParameterError("render_splats: cull_behind_mesh requires a mesh depth buffer");
  }
  const SplatPrep prep = prepare_splats(cloud, camera, opts);
  const int w = camera.width;
  const int h = camera.height;
  SplatBuffers out;
  out.color = Image(w, h, 3);
  out.alpha = Image(w, h, 1);
  out.nearz = Image(w, h, 1, kInf);
  out.acc_depth = Image(w, h, 1, kInf);

  parallel_chunks(h, kTileRows, [&](int, std::int64_t row_begin, std::int64_t row_end) {
    std::vector<const PrepItem*> candidates;
    candidates.reserve(prep.items.size());
    for (const PrepItem& it : prep.items) {
      if (it.y1 >= row_begin && it.y0 < row_end) candidates.push_back(&it);
    }
    if (candidates.empty()) return;
    for (std::int64_t y = row_begin; y < row_end; ++y) {
      for (int x = 0; x < w; ++x) {
        const double mesh_z = mesh_depth ? mesh_depth->at(x, static_cast<int>(y)) : kInf;
        const PixelResult res =
            run_pixel(x + 0.5, y + 0.5, candidates, opts, mesh_z, nullptr);
        if (res.alpha == 0.0) continue;
        out.color.set_rgb(x, static_cast<int>(y), res.color);
        out.alpha.at(x, static_cast<int>(y)) = res.alpha;
        out.nearz.at(x, static_cast<int>(y)) = res.nearz;
        out.acc_depth.at(x, static_cast<int>(y)) =
            res.acc_depth_num / std::max(res.alpha, 1e-6);
      }
    }
  });
  return out;
}

CloudGrads splat_backward(const GaussianCloud& cloud, const Camera& camera,
                          const SplatOptions& opts, const Image& grad_color,
                          const Image& grad_alpha, const Image* mesh_depth) {
  if (opts.cull_behind_mesh && mesh_depth == nullptr) {
    throw ParameterError("splat_backward: cull_behind_mesh requires a mesh depth buffer");
  }
  if (grad_color.width() != camera.width || grad_color.height() != camera.height ||
      grad_color.channels() != 3 || !grad_alpha.same_shape(Image(camera.width, camera.height, 1))) {
    throw ParameterError("splat_backward: gradient buffer shapes do not match the camera");
  }

  const SplatPrep prep = prepare_splats(cloud, camera, opts);
  const int w = camera.width;
  const int h = camera.height;
  const int n_items = static_cast<int>(prep.items.size());

  // Per-tile partial derivatives in pixel space: d_color (3), d_mean2d (2),
  // d_conic (3: s00, s01, s11 of the inverse covariance), d_opacity_raw (1).
  const int tiles = chunk_count(h, kTileRows);
  std::vector<std::vector<double>> partials(
      tiles, std::vector<double>(static_cast<std::size_t>(n_items) * 9, 0.0));

  parallel_chunks(h, kTileRows, [&](int tile, std::int64_t row_begin, std::int64_t row_end) {
    std::vector<const PrepItem*> candidates;
    std::vector<int> item_of_candidate;
    for (int ii = 0; ii < n_items; ++ii) {
      const PrepItem& it = prep.items[ii];
      if (it.y1 >= row_begin && it.y0 < row_end) {
        candidates.push_back(&it);
        item_of_candidate.push_back(ii);
      }
    }
    if (candidates.empty()) return;
    std::vector<double>& acc = partials[tile];
    std::vector<PixelRecord> records;

    for (std::int64_t y = row_begin; y < row_end; ++y) {
      for (int x = 0; x < w; ++x) {
        const Vec3 g_color(grad_color.at(x, static_cast<int>(y), 0),
                           grad_color.at(x, static_cast<int>(y), 1),
                           grad_color.at(x, static_cast<int>(y), 2));
        const double g_alpha = grad_alpha.at(x, static_cast<int>(y));
        if (g_color.isZero() && g_alpha == 0.0) continue;

        records.clear();
        const double mesh_z = mesh_depth ? mesh_depth->at(x, static_cast<int>(y)) : kInf;
        run_pixel(x + 0.5, y + 0.5, candidates, opts, mesh_z, &records);
        if (records.empty()) continue;

        // Reverse scan with suffix sums over later contributions.
        Vec3 suffix_color = Vec3::Zero();
        double suffix_alpha = 0.0;
        const double px = x + 0.5;
        const double py = y + 0.5;
        for (int r = static_cast<int>(records.size()) - 1; r >= 0; --r) {
          const PixelRecord& rec = records[r];
          const PrepItem& it = *candidates[rec.item];
          const double weight = rec.alpha * rec.trans;
          const double one_minus = 1.0 - rec.alpha;
          const double d_alpha =
              g_color.dot(it.color * rec.trans - suffix_color / one_minus) +
              g_alpha * (rec.trans - suffix_alpha / one_minus);

          double* slot = acc.data() + static_cast<std::size_t>(item_of_candidate[rec.item]) * 9;
          slot[0] += g_color[0] * weight;
          slot[1] += g_color[1] * weight;
          slot[2] += g_color[2] * weight;

          // alpha = opacity * exp(-q/2)
          const double g_val = rec.alpha / it.opacity;
          slot[8] += d_alpha * g_val;  // d/d opacity (pre-sigmoid chain later)
          const double dq = -0.5 * d_alpha * rec.alpha;
          const double dx = px - it.mean2d.x();
          const double dy = py - it.mean2d.y();
          slot[5] += dq * dx * dx;
          slot[6] += dq * dx * dy;
          slot[7] += dq * dy * dy;
          const double ddx = dq * 2.0 * (it.conic[0] * dx + it.conic[1] * dy);
          const double ddy = dq * 2.0 * (it.conic[1] * dx + it.conic[2] * dy);
          slot[3] -= ddx;
          slot[4] -= ddy;

          suffix_color += weight * it.color;
          suffix_alpha += weight;
        }
      }
    }
  });

  // Deterministic reduction in tile order.
  std::vector<double> total(static_cast<std::size_t>(n_items) * 9, 0.0);
  for (int t = 0; t < tiles; ++t) {
    const auto& acc = partials[t];
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += acc[i];
  }

  CloudGrads grads = CloudGrads::zeros(cloud);
  const Mat3 w_rot = camera.rotation;

  parallel_for(n_items, [&](std::int64_t ii) {
    const PrepItem& it = prep.items[ii];
    const double* slot = total.data() + static_cast<std::size_t>(ii) * 9;
    const int i = it.index;

    // --- SH color chain (clamped channels pass no gradient).
    Vec3 d_color(slot[0], slot[1], slot[2]);
    for (int c = 0; c < 3; ++c) {
      if (it.color_raw[c] < 0.0 || it.color_raw[c] > 1.0) d_color[c] = 0.0;
    }
    if (!d_color.isZero()) {
      double basis[16];
      Vec3 basis_grad[16];
      sh_basis(it.dir, cloud.sh_coeff_count, basis);
      sh_basis_grad(it.dir, cloud.sh_coeff_count, basis_grad);
      double* dsh = grads.d_sh.data() + static_cast<std::size_t>(i) * cloud.sh_coeff_count * 3;
      const double* shc = cloud.sh_at(i);
      Vec3 d_dir = Vec3::Zero();
      for (int k = 0; k < cloud.sh_coeff_count; ++k) {
        for (int c = 0; c < 3; ++c) {
          dsh[k * 3 + c] += d_color[c] * basis[k];
          d_dir += d_color[c] * shc[k * 3 + c] * basis_grad[k];
        }
      }
      // dir = u / |u|, u = center - cam: J^T = (I - dir dir^T) / dist.
      grads.d_centers[i] += (d_dir - it.dir * it.dir.dot(d_dir)) / it.dist;
    }

    // --- opacity chain.
    grads.d_opacity_logits[i] += slot[8] * it.opacity * (1.0 - it.opacity);

    // --- conic -> cov2d -> (J, Sigma3) -> (center, quat, scales).
    Mat2 d_sigma_inv;
    d_sigma_inv << slot[5], slot[6], slot[6], slot[7];
    Vec2 d_mean2d(slot[3], slot[4]);
    if (d_sigma_inv.cwiseAbs().maxCoeff() == 0.0 && d_mean2d.isZero()) return;

    const Vec3 t = camera.to_camera(cloud.centers[i]);
    const double inv_z = 1.0 / t.z();
    Eigen::Matrix<double, 2, 3> jac;
    jac << camera.fx * inv_z, 0.0, -camera.fx * t.x() * inv_z * inv_z, 0.0, camera.fy * inv_z,
        -camera.fy * t.y() * inv_z * inv_z;
    const Eigen::Matrix<double, 2, 3> m = jac * w_rot;

    const Vec4 q_raw = cloud.rotations[i];
    const Vec4 q = q_raw / q_raw.norm();
    const Mat3 rot = quat_to_rotation(q);
    const Vec3 s = cloud.log_scales[i].array().exp();
    const Mat3 m3 = rot * s.asDiagonal();
    const Mat3 sigma3 = m3 * m3.transpose();
    const Mat2 cov2d = m * sigma3 * m.transpose() + 0.3 * Mat2::Identity();
    const Mat2 conic = cov2d.inverse();

    const Mat2 d_cov = -conic * d_sigma_inv * conic;
    const Eigen::Matrix<double, 2, 3> d_m = 2.0 * d_cov * m * sigma3;
    const Mat3 d_sigma3 = m.transpose() * d_cov * m;

    // Sigma3 = M3 M3^T.
    const Mat3 d_m3 = 2.0 * d_sigma3 * m3;
    const Mat3 d_rot = d_m3 * s.asDiagonal();
    const Vec3 d_s = (rot.transpose() * d_m3).diagonal();
    grads.d_log_scales[i] += d_s.cwiseProduct(s);

    const Vec4 dq_unit = rotation_backward(q, d_rot);
    const double norm = q_raw.norm();
    grads.d_rotations[i] += (dq_unit - q * q.dot(dq_unit)) / norm;

    // J and the projection both depend on the camera-space mean.
    const Eigen::Matrix<double, 2, 3> d_jac = d_m * w_rot.transpose();
    Vec3 d_t = Vec3::Zero();
    const double fx = camera.fx, fy = camera.fy;
    d_t.x() += d_jac(0, 2) * (-fx * inv_z * inv_z);
    d_t.y() += d_jac(1, 2) * (-fy * inv_z * inv_z);
    d_t.z() += d_jac(0, 0) * (-fx * inv_z * inv_z) + d_jac(1, 1) * (-fy * inv_z * inv_z) +
               d_jac(0, 2) * (2.0 * fx * t.x() * inv_z * inv_z * inv_z) +
               d_jac(1, 2) * (2.0 * fy * t.y() * inv_z * inv_z * inv_z);
    d_t.x() += d_mean2d.x() * fx * inv_z;
    d_t.y() += d_mean2d.y() * fy * inv_z;
    d_t.z() += -d_mean2d.x() * fx * t.x() * inv_z * inv_z - d_mean2d.y() * fy * t.y() * inv_z * inv_z;
    grads.d_centers[i] += w_rot.transpose() * d_t;
  });

  return grads;
}

// ---------------------------------------------------------------------------

GaussianCloud init_from_scalp(const TriMesh& mesh, const std::vector<int>& scalp, int n,
                              double shell, std::uint64_t seed, int sh_coeff_count) {
  if (n <= 0) throw ParameterError("init_from_scalp: need n > 0");
  std::vector<bool> in_scalp(mesh.vertex_count(), false);
  for (int idx : scalp) in_scalp[idx] = true;

  std::vector<int> tri;
  std::vector<double> cum_area;
  double total = 0.0;
  for (int f = 0; f < mesh.face_count(); ++f) {
    const Face& face = mesh.faces[f];
    if (!in_scalp[face[0]] || !in_scalp[face[1]] || !in_scalp[face[2]]) continue;
    const Vec3 e1 = mesh.vertices[face[1]] - mesh.vertices[face[0]];
    const Vec3 e2 = mesh.vertices[face[2]] - mesh.vertices[face[0]];
    total += 0.5 * e1.cross(e2).norm();
    tri.push_back(f);
    cum_area.push_back(total);
  }
  if (tri.empty() || total <= 0.0) {
    throw ParameterError("init_from_scalp: scalp region has no triangles");
  }

  Rng rng(seed);
  GaussianCloud cloud;
  cloud.resize(n, sh_coeff_count);
  for (int i = 0; i < n; ++i) {
    const double pick = rng.uniform() * total;
    const std::size_t which =
        std::lower_bound(cum_area.begin(), cum_area.end(), pick) - cum_area.begin();
    const Face& face = mesh.faces[tri[std::min(which, tri.size() - 1)]];
    double u = rng.uniform();
    double v = rng.uniform();
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    const Vec3 a = mesh.vertices[face[0]];
    const Vec3 b = mesh.vertices[face[1]];
    const Vec3 c = mesh.vertices[face[2]];
    Vec3 p = a + u * (b - a) + v * (c - a);
    if (i % 2 == 1 && shell > 0.0) {
      const Vec3 normal = (b - a).cross(c - a).normalized();
      p += normal * rng.uniform(0.0, shell);
    }
    cloud.centers[i] = p;
  }

  // Isotropic scale from the mean nearest-neighbor spacing.
  double spacing = 0.0;
  if (n > 1) {
    const KdTree tree(cloud.centers);
    for (int i = 0; i < n; ++i) {
      const auto nn = tree.knearest(cloud.centers[i], 1, i);
      if (!nn.empty()) spacing += (cloud.centers[nn[0]] - cloud.centers[i]).norm();
    }
    spacing /= n;
  }
  if (spacing <= 0.0) spacing = shell > 0.0 ? shell : 1e-3;
  const double log_spacing = std::log(spacing);
  const double opacity_logit = std::log(0.1 / 0.9);
  for (int i = 0; i < n; ++i) {
    cloud.log_scales[i].setConstant(log_spacing);
    cloud.opacity_logits[i] = opacity_logit;
  }
  return cloud;
}

DeformationField DeformationField::make(int n_gaussians, int sh_coeff_count, int hidden,
                                        std::uint64_t seed) {
  Rng rng(seed);
  DeformationField field;
  field.mlp = MlpParams::make({kPsiDim + kEmbedDim, hidden, hidden, delta_dim(sh_coeff_count)},
                              {Activation::Relu, Activation::Relu, Activation::None}, rng,
                              /*zero_last=*/true);
  field.embeddings = MatX(kEmbedDim, n_gaussians);
  for (int i = 0; i < n_gaussians; ++i) {
    for (int k = 0; k < kEmbedDim; ++k) field.embeddings(k, i) = rng.normal(0.0, 0.1);
  }
  return field;
}

MatX deformation_inputs(const DeformationField& field, const VecX& psi) {
  const int n = field.gaussian_count();
  MatX inputs(DeformationField::kPsiDim + DeformationField::kEmbedDim, n);
  inputs.setZero();
  const int n_psi = std::min<int>(DeformationField::kPsiDim, static_cast<int>(psi.size()));
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n_psi; ++k) inputs(k, i) = psi[k];
    inputs.block(DeformationField::kPsiDim, i, DeformationField::kEmbedDim, 1) =
        field.embeddings.col(i);
  }
  return inputs;
}

GaussianCloud deform_cloud(const GaussianCloud& canonical, const RigidTransform& rigid,
                           const VecX& psi, const DeformationField& field,
                           GaussianDelta* out_delta, DeformCache* cache) {
  canonical.validate();
  if (field.gaussian_count() != canonical.size()) {
    throw ParameterError("deform_cloud: field sized for a different cloud");
  }
  if (field.mlp.output_dim() != DeformationField::delta_dim(canonical.sh_coeff_count)) {
    throw ParameterError("deform_cloud: field output does not match the per-Gaussian delta layout");
  }

  const MatX inputs = deformation_inputs(field, psi);
  MlpCache local_cache;
  MlpCache& mlp_cache = cache ? cache->mlp : local_cache;
  const MatX deltas = mlp_forward(field.mlp, inputs, mlp_cache);

  const Vec4 q_rigid = [&] {
    const Quat q(rigid.rotation);
    return Vec4(q.w(), q.x(), q.y(), q.z());
  }();
  const double log_scale = std::log(rigid.scale);

  GaussianCloud out = canonical;
  GaussianDelta delta = GaussianDelta::zeros(canonical);
  std::vector<Vec4> rigid_rotations(canonical.size());
  const int n_sh = canonical.sh_coeff_count * 3;

  for (int i = 0; i < canonical.size(); ++i) {
    const auto col = deltas.col(i);
    delta.d_centers[i] = col.segment<3>(0);
    delta.d_rotations[i] = col.segment<4>(3);
    delta.d_log_scales[i] = col.segment<3>(7);
    delta.d_opacity_logits[i] = col[10];
    for (int k = 0; k < n_sh; ++k) delta.d_sh[static_cast<std::size_t>(i) * n_sh + k] = col[11 + k];

    const Vec3 x_r = rigid.apply(canonical.centers[i]);
    const Vec4 r_r = quat_multiply(q_rigid, canonical.rotations[i]);
    rigid_rotations[i] = r_r;

    out.centers[i] = x_r + delta.d_centers[i];
    const Vec4 raw = r_r + delta.d_rotations[i];
    out.rotations[i] = raw / raw.norm();
    out.log_scales[i] = canonical.log_scales[i] + Vec3::Constant(log_scale) + delta.d_log_scales[i];
    out.opacity_logits[i] = canonical.opacity_logits[i] + delta.d_opacity_logits[i];
    for (int k = 0; k < n_sh; ++k) {
      out.sh[static_cast<std::size_t>(i) * n_sh + k] += delta.d_sh[static_cast<std::size_t>(i) * n_sh + k];
    }
  }

  if (cache) {
    cache->inputs = inputs;
    cache->delta = delta;
    cache->rigid_rotations = std::move(rigid_rotations);
  }
  if (out_delta) *out_delta = std::move(delta);
  return out;
}

DeformFieldGrads DeformFieldGrads::zeros(const DeformationField& field) {
  DeformFieldGrads g;
  g.mlp = MlpGrads::zeros(field.mlp);
  g.d_embeddings = MatX::Zero(field.embeddings.rows(), field.embeddings.cols());
  return g;
}

DeformFieldGrads deform_cloud_backward(const GaussianCloud& canonical, const RigidTransform&,
                                       const VecX&, const DeformationField& field,
                                       const DeformCache& cache, const CloudGrads& grad_deformed,
                                       const GaussianDelta* grad_delta_direct) {
  const int n = canonical.size();
  const int n_sh = canonical.sh_coeff_count * 3;
  MatX grad_out = MatX::Zero(field.mlp.output_dim(), n);

  for (int i = 0; i < n; ++i) {
    grad_out.col(i).segment<3>(0) = grad_deformed.d_centers[i];

    // Final rotation is normalize(r_r + dr); chain through the normalization.
    const Vec4 raw = cache.rigid_rotations[i] + cache.delta.d_rotations[i];
    const double norm = raw.norm();
    const Vec4 unit = raw / norm;
    const Vec4 g_rot = grad_deformed.d_rotations[i];
    grad_out.col(i).segment<4>(3) = (g_rot - unit * unit.dot(g_rot)) / norm;

    grad_out.col(i).segment<3>(7) = grad_deformed.d_log_scales[i];
    grad_out.col(i)[10] = grad_deformed.d_opacity_logits[i];
    for (int k = 0; k < n_sh; ++k) {
      grad_out.col(i)[11 + k] = grad_deformed.d_sh[static_cast<std::size_t>(i) * n_sh + k];
    }
    if (grad_delta_direct) {
      grad_out.col(i).segment<3>(0) += grad_delta_direct->d_centers[i];
      grad_out.col(i).segment<4>(3) += grad_delta_direct->d_rotations[i];
      grad_out.col(i).segment<3>(7) += grad_delta_direct->d_log_scales[i];
      grad_out.col(i)[10] += grad_delta_direct->d_opacity_logits[i];
      for (int k = 0; k < n_sh; ++k) {
        grad_out.col(i)[11 + k] += grad_delta_direct->d_sh[static_cast<std::size_t>(i) * n_sh + k];
      }
    }
  }

  DeformFieldGrads grads = DeformFieldGrads::zeros(field);
  const MatX grad_inputs = mlp_backward(field.mlp, cache.mlp, grad_out, grads.mlp);
  grads.d_embeddings =
      grad_inputs.middleRows(DeformationField::kPsiDim, DeformationField::kEmbedDim);
  return grads;
}

void transform_cloud(GaussianCloud& cloud, const RigidTransform& transform) {
  const Quat q(transform.rotation);
  const Vec4 q_rigid(q.w(), q.x(), q.y(), q.z());
  const double log_scale = std::log(transform.scale);
  for (int i = 0; i < cloud.size(); ++i) {
    cloud.centers[i] = transform.apply(cloud.centers[i]);
    const Vec4 rotated = quat_multiply(q_rigid, cloud.rotations[i]);
    cloud.rotations[i] = rotated / rotated.norm();
    cloud.log_scales[i] += Vec3::Constant(log_scale);
  }
}

std::vector<int> opacity_keep_indices(const GaussianCloud& cloud, double min_opacity) {
  std::vector<int> keep;
  for (int i = 0; i < cloud.size(); ++i) {
    if (sigmoid(cloud.opacity_logits[i]) >= min_opacity) keep.push_back(i);
  }
  return keep;
}

void select_gaussians(GaussianCloud& cloud, const std::vector<int>& keep) {
  GaussianCloud out;
  out.resize(static_cast<int>(keep.size()), cloud.sh_coeff_count);
  const int n_sh = cloud.sh_coeff_count * 3;
  for (std::size_t j = 0; j < keep.size(); ++j) {
    const int i = keep[j];
    out.centers[j] = cloud.centers[i];
    out.rotations[j] = cloud.rotations[i];
    out.log_scales[j] = cloud.log_scales[i];
    out.opacity_logits[j] = cloud.opacity_logits[i];
    for (int k = 0; k < n_sh; ++k) {
      out.sh[j * n_sh + k] = cloud.sh[static_cast<std::size_t>(i) * n_sh + k];
    }
  }
  cloud = std::move(out);
}

}  // namespace meshsplat
