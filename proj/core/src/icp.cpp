#include "meshsplat/icp.hpp"

#include "meshsplat/errors.hpp"
#include "meshsplat/kdtree.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace meshsplat {

RigidTransform procrustes(const std::vector<Vec3>& src, const std::vector<Vec3>& dst,
                          bool with_scale) {
  if (src.size() != dst.size() || src.size() < 3) {
    throw ParameterError("procrustes: need >= 3 paired points");
  }
  const double n = static_cast<double>(src.size());
  Vec3 src_mean = Vec3::Zero(), dst_mean = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    src_mean += src[i];
    dst_mean += dst[i];
  }
  src_mean /= n;
  dst_mean /= n;

  Mat3 cross = Mat3::Zero();
  Mat3 src_scatter = Mat3::Zero();
  double src_var = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec3 p = src[i] - src_mean;
    const Vec3 q = dst[i] - dst_mean;
    cross += q * p.transpose();
    src_scatter += p * p.transpose();
    src_var += p.squaredNorm();
  }
  cross /= n;
  src_scatter /= n;
  src_var /= n;
  if (src_var < 1e-24) throw RankDeficiencyError("procrustes: coincident source points");
  {
    // Collinear sources leave the rotation under-determined.
    Eigen::SelfAdjointEigenSolver<Mat3> eig(src_scatter);
    if (eig.eigenvalues()[1] < 1e-12 * std::max(1e-30, eig.eigenvalues()[2])) {
      throw RankDeficiencyError("procrustes: degenerate (collinear) point configuration");
    }
  }

  Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 sign_fix = Vec3::Ones();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) sign_fix[2] = -1.0;

  RigidTransform out;
  out.rotation = svd.matrixU() * sign_fix.asDiagonal() * svd.matrixV().transpose();
  if (with_scale) {
    // Least-squares optimal scale (trace form); keeps the ICP residual
    // non-increasing, and equals the variance ratio on exact similarities.
    out.scale = svd.singularValues().dot(sign_fix) / src_var;
    if (out.scale <= 0.0) throw RankDeficiencyError("procrustes: non-positive scale");
  }
  out.translation = dst_mean - out.scale * (out.rotation * src_mean);
  return out;
}

IcpResult icp(const std::vector<Vec3>& src, const std::vector<Vec3>& dst, const IcpOptions& opts) {
  if (src.size() < 3 || dst.size() < 3) throw ParameterError("icp: need >= 3 points per set");

  const KdTree tree(dst);
  IcpResult result;
  // Centroid alignment as the starting guess; with scale enabled the spread
  // ratio seeds the scale so nearest neighbors start in range.
  Vec3 src_mean = Vec3::Zero(), dst_mean = Vec3::Zero();
  for (const Vec3& p : src) src_mean += p;
  for (const Vec3& q : dst) dst_mean += q;
  src_mean /= static_cast<double>(src.size());
  dst_mean /= static_cast<double>(dst.size());
  if (opts.with_scale) {
    double src_var = 0.0, dst_var = 0.0;
    for (const Vec3& p : src) src_var += (p - src_mean).squaredNorm();
    for (const Vec3& q : dst) dst_var += (q - dst_mean).squaredNorm();
    if (src_var > 0.0 && dst_var > 0.0) {
      result.transform.scale = std::sqrt((dst_var / dst.size()) / (src_var / src.size()));
    }
  }
  result.transform.translation = dst_mean - result.transform.scale * src_mean;

  double prev_residual = kInf;
  std::vector<Vec3> moved(src.size());
  std::vector<Vec3> pair_src, pair_dst;
  std::vector<std::pair<double, int>> match_dist;

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    for (std::size_t i = 0; i < src.size(); ++i) moved[i] = result.transform.apply(src[i]);

    match_dist.clear();
    std::vector<int> matches(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) {
      matches[i] = tree.nearest(moved[i]);
      match_dist.emplace_back((moved[i] - dst[matches[i]]).squaredNorm(), static_cast<int>(i));
    }

    std::size_t keep = src.size();
    if (opts.trim_fraction > 0.0) {
      keep = std::max<std::size_t>(3, static_cast<std::size_t>(
                                          std::llround((1.0 - opts.trim_fraction) * src.size())));
      std::sort(match_dist.begin(), match_dist.end());
    }

    pair_src.clear();
    pair_dst.clear();
    for (std::size_t k = 0; k < keep; ++k) {
      const int i = match_dist[k].second;
      pair_src.push_back(src[i]);
      pair_dst.push_back(dst[matches[i]]);
    }

    const RigidTransform updated = procrustes(pair_src, pair_dst, opts.with_scale);
    double err = 0.0;
    for (std::size_t k = 0; k < pair_src.size(); ++k) {
      err += (updated.apply(pair_src[k]) - pair_dst[k]).squaredNorm();
    }
    const double residual = std::sqrt(err / static_cast<double>(pair_src.size()));

    result.transform = updated;
    result.residual = residual;
    result.iterations = iter + 1;
    result.residual_history.push_back(residual);
    if (prev_residual - residual < opts.tol) break;
    prev_residual = residual;
  }
  return result;
}

}  // namespace meshsplat
