#include "meshsplat/losses.hpp"

#include "meshsplat/errors.hpp"
#include "meshsplat/kdtree.hpp"

#include <cmath>

namespace meshsplat {

void LossWeights::validate() const {
  const double all[] = {photo,    ssim,       depth, normal, shrink,   laplacian,
                        normal_consistency,  edge_length, silhouette, solid, aiap, delta_reg};
  for (double w : all) {
    if (w < 0.0 || !std::isfinite(w)) throw ParameterError("LossWeights: weights must be >= 0");
  }
}

namespace {

std::int64_t mask_count(const Image& mask) {
  std::int64_t n = 0;
  for (double v : mask.data()) {
    if (v > 0.5) ++n;
  }
  return n;
}

}  // namespace

double loss_photometric(const Image& target, const Image& render, const Image& mask,
                        bool* warned) {
  if (!target.same_shape(render) || mask.width() != target.width() ||
      mask.height() != target.height()) {
    throw ParameterError("loss_photometric: shape mismatch");
  }
  if (warned) *warned = false;
  double total = 0.0;
  std::int64_t count = 0;
  for (int y = 0; y < target.height(); ++y) {
    for (int x = 0; x < target.width(); ++x) {
      if (mask.at(x, y) <= 0.5) continue;
      for (int c = 0; c < target.channels(); ++c) {
        const double d = target.at(x, y, c) - render.at(x, y, c);
        total += d * d;
        ++count;
      }
    }
  }
  if (count == 0) {
    if (warned) *warned = true;
    return 0.0;
  }
  return total / static_cast<double>(count);
}

Image loss_photometric_backward(const Image& target, const Image& render, const Image& mask) {
  Image grad(render.width(), render.height(), render.channels());
  std::int64_t count = 0;
  for (int y = 0; y < target.height(); ++y) {
    for (int x = 0; x < target.width(); ++x) {
      if (mask.at(x, y) > 0.5) count += target.channels();
    }
  }
  if (count == 0) return grad;
  const double scale = 2.0 / static_cast<double>(count);
  for (int y = 0; y < target.height(); ++y) {
    for (int x = 0; x < target.width(); ++x) {
      if (mask.at(x, y) <= 0.5) continue;
      for (int c = 0; c < target.channels(); ++c) {
        grad.at(x, y, c) = scale * (render.at(x, y, c) - target.at(x, y, c));
      }
    }
  }
  return grad;
}

GeometricLoss loss_geometric(const Image& target_depth, const Image& render_depth,
                             const Camera& camera, double depth_threshold) {
  if (!target_depth.same_shape(render_depth)) throw ParameterError("loss_geometric: shape mismatch");
  const int w = target_depth.width();
  const int h = target_depth.height();

  GeometricLoss out;
  out.inlier_mask = Image(w, h, 1);
  std::int64_t n_depth = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d = target_depth.at(x, y);
      const double r = render_depth.at(x, y);
      if (!std::isfinite(d) || !std::isfinite(r)) continue;
      if (std::abs(d - r) >= depth_threshold) continue;
      out.inlier_mask.at(x, y) = 1.0;
      out.depth += std::abs(d - r);
      ++n_depth;
    }
  }
  if (n_depth > 0) out.depth /= static_cast<double>(n_depth);

  const ScreenNormals nt = screen_normals(target_depth, camera);
  const ScreenNormals nr = screen_normals(render_depth, camera);
  std::int64_t n_norm = 0;
  double normal_total = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (out.inlier_mask.at(x, y) == 0.0) continue;
      if (nt.valid.at(x, y) == 0.0 || nr.valid.at(x, y) == 0.0) continue;
      const Vec3 a(nt.normals.at(x, y, 0), nt.normals.at(x, y, 1), nt.normals.at(x, y, 2));
      const Vec3 b(nr.normals.at(x, y, 0), nr.normals.at(x, y, 1), nr.normals.at(x, y, 2));
      normal_total += (a - b).norm();
      ++n_norm;
    }
  }
  out.normal = n_norm > 0 ? normal_total / static_cast<double>(n_norm) : 0.0;
  return out;
}

Image loss_geometric_backward(const Image& target_depth, const Image& render_depth,
                              const Camera& camera, double depth_threshold, double w_d,
                              double w_n) {
  const int w = target_depth.width();
  const int h = target_depth.height();
  const GeometricLoss fwd = loss_geometric(target_depth, render_depth, camera, depth_threshold);

  Image grad(w, h, 1);
  std::int64_t n_depth = 0;
  for (double v : fwd.inlier_mask.data()) {
    if (v > 0.5) ++n_depth;
  }
  if (n_depth > 0 && w_d != 0.0) {
    const double scale = w_d / static_cast<double>(n_depth);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (fwd.inlier_mask.at(x, y) == 0.0) continue;
        const double diff = render_depth.at(x, y) - target_depth.at(x, y);
        if (diff > 0.0) grad.at(x, y) += scale;
        else if (diff < 0.0) grad.at(x, y) -= scale;
      }
    }
  }

  if (w_n != 0.0) {
    const ScreenNormals nt = screen_normals(target_depth, camera);
    const ScreenNormals nr = screen_normals(render_depth, camera);
    std::int64_t n_norm = 0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (fwd.inlier_mask.at(x, y) != 0.0 && nt.valid.at(x, y) != 0.0 &&
            nr.valid.at(x, y) != 0.0) {
          ++n_norm;
        }
      }
    }
    if (n_norm > 0) {
      Image grad_normals(w, h, 3);
      const double scale = w_n / static_cast<double>(n_norm);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (fwd.inlier_mask.at(x, y) == 0.0 || nt.valid.at(x, y) == 0.0 ||
              nr.valid.at(x, y) == 0.0) {
            continue;
          }
          const Vec3 a(nt.normals.at(x, y, 0), nt.normals.at(x, y, 1), nt.normals.at(x, y, 2));
          const Vec3 b(nr.normals.at(x, y, 0), nr.normals.at(x, y, 1), nr.normals.at(x, y, 2));
          const double dist = (a - b).norm();
          if (dist < 1e-12) continue;
          const Vec3 g = scale * (b - a) / dist;
          grad_normals.at(x, y, 0) = g.x();
          grad_normals.at(x, y, 1) = g.y();
          grad_normals.at(x, y, 2) = g.z();
        }
      }
      const Image gd = screen_normals_backward(render_depth, camera, nr, grad_normals);
      for (std::size_t i = 0; i < grad.size(); ++i) grad.data()[i] += gd.data()[i];
    }
  }
  return grad;
}

namespace {

Vec3 scalp_centroid(const TriMesh& posed, const std::vector<int>& full_scalp) {
  if (full_scalp.empty()) throw ParameterError("loss_shrink: empty scalp set");
  Vec3 c = Vec3::Zero();
  for (int idx : full_scalp) c += posed.vertices[idx];
  return c / static_cast<double>(full_scalp.size());
}

}  // namespace

double loss_shrink(const TriMesh& refined, const std::vector<int>& visible_scalp,
                   const TriMesh& posed, const std::vector<int>& full_scalp) {
  if (visible_scalp.empty()) return 0.0;
  const Vec3 center = scalp_centroid(posed, full_scalp);
  double total = 0.0;
  for (int idx : visible_scalp) total += (refined.vertices[idx] - center).squaredNorm();
  return total / static_cast<double>(visible_scalp.size());
}

std::vector<Vec3> loss_shrink_backward(const TriMesh& refined,
                                       const std::vector<int>& visible_scalp,
                                       const TriMesh& posed, const std::vector<int>& full_scalp) {
  std::vector<Vec3> grad(refined.vertex_count(), Vec3::Zero());
  if (visible_scalp.empty()) return grad;
  const Vec3 center = scalp_centroid(posed, full_scalp);
  const double scale = 2.0 / static_cast<double>(visible_scalp.size());
  for (int idx : visible_scalp) grad[idx] += scale * (refined.vertices[idx] - center);
  return grad;
}

double loss_silhouette(const Image& hair_mask, const Image& hair_blend, const Image& distance) {
  if (!hair_mask.same_shape(hair_blend) || !hair_mask.same_shape(distance)) {
    throw ParameterError("loss_silhouette: shape mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < hair_mask.size(); ++i) {
    const double d = distance.data()[i];
    if (d == 0.0 || d == kInf) continue;
    total += std::abs(hair_mask.data()[i] - hair_blend.data()[i]) * d;
  }
  return total / static_cast<double>(hair_mask.size());
}

Image loss_silhouette_backward(const Image& hair_mask, const Image& hair_blend,
                               const Image& distance) {
  Image grad(hair_mask.width(), hair_mask.height(), 1);
  const double inv_n = 1.0 / static_cast<double>(hair_mask.size());
  for (std::size_t i = 0; i < hair_mask.size(); ++i) {
    const double d = distance.data()[i];
    if (d == 0.0 || d == kInf) continue;
    const double diff = hair_mask.data()[i] - hair_blend.data()[i];
    if (diff > 0.0) grad.data()[i] = -d * inv_n;
    else if (diff < 0.0) grad.data()[i] = d * inv_n;
  }
  return grad;
}

double loss_solid(const Image& hair_blend, const Image& eroded_mask, bool* warned) {
  if (!hair_blend.same_shape(eroded_mask)) throw ParameterError("loss_solid: shape mismatch");
  if (warned) *warned = false;
  double total = 0.0;
  std::int64_t count = 0;
  for (std::size_t i = 0; i < hair_blend.size(); ++i) {
    if (eroded_mask.data()[i] <= 0.5) continue;
    total += 1.0 - hair_blend.data()[i];
    ++count;
  }
  if (count == 0) {
    if (warned) *warned = true;
    return 0.0;
  }
  return total / static_cast<double>(count);
}

Image loss_solid_backward(const Image& hair_blend, const Image& eroded_mask) {
  Image grad(hair_blend.width(), hair_blend.height(), 1);
  const std::int64_t count = mask_count(eroded_mask);
  if (count == 0) return grad;
  const double g = -1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (eroded_mask.data()[i] > 0.5) grad.data()[i] = g;
  }
  return grad;
}

std::vector<std::pair<int, int>> knn_pairs(const std::vector<Vec3>& points, int k) {
  if (k < 1) throw ParameterError("knn_pairs: k must be >= 1");
  if (static_cast<int>(points.size()) <= k) {
    throw ParameterError("knn_pairs: need more than k points");
  }
  const KdTree tree(points);
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(points.size() * k);
  for (int i = 0; i < static_cast<int>(points.size()); ++i) {
    for (int j : tree.knearest(points[i], k, i)) pairs.emplace_back(i, j);
  }
  return pairs;
}

double loss_aiap(const std::vector<Vec3>& canonical, const std::vector<Vec3>& deformed,
                 const std::vector<std::pair<int, int>>& pairs) {
  if (canonical.size() != deformed.size()) throw ParameterError("loss_aiap: size mismatch");
  if (pairs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [i, j] : pairs) {
    const double d0 = (canonical[i] - canonical[j]).norm();
    const double d1 = (deformed[i] - deformed[j]).norm();
    total += (d1 - d0) * (d1 - d0);
  }
  return total / static_cast<double>(pairs.size());
}

std::vector<Vec3> loss_aiap_backward(const std::vector<Vec3>& canonical,
                                     const std::vector<Vec3>& deformed,
                                     const std::vector<std::pair<int, int>>& pairs) {
  std::vector<Vec3> grad(deformed.size(), Vec3::Zero());
  if (pairs.empty()) return grad;
  const double scale = 2.0 / static_cast<double>(pairs.size());
  for (const auto& [i, j] : pairs) {
    const Vec3 diff = deformed[i] - deformed[j];
    const double d1 = diff.norm();
    if (d1 < 1e-15) continue;
    const double d0 = (canonical[i] - canonical[j]).norm();
    const Vec3 g = scale * (d1 - d0) * (diff / d1);
    grad[i] += g;
    grad[j] -= g;
  }
  return grad;
}

double loss_delta_norm(const GaussianDelta& delta, GaussianDelta* grad) {
  const std::size_t n = delta.d_opacity_logits.size();
  if (n == 0) return 0.0;
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    total += delta.d_rotations[i].squaredNorm() + delta.d_log_scales[i].squaredNorm() +
             delta.d_opacity_logits[i] * delta.d_opacity_logits[i];
    if (grad) {
      grad->d_rotations[i] += 2.0 * inv_n * delta.d_rotations[i];
      grad->d_log_scales[i] += 2.0 * inv_n * delta.d_log_scales[i];
      grad->d_opacity_logits[i] += 2.0 * inv_n * delta.d_opacity_logits[i];
    }
  }
  for (std::size_t k = 0; k < delta.d_sh.size(); ++k) {
    total += delta.d_sh[k] * delta.d_sh[k];
    if (grad) grad->d_sh[k] += 2.0 * inv_n * delta.d_sh[k];
  }
  return total * inv_n;
}

}  // namespace meshsplat
