#pragma once

#include "meshsplat/types.hpp"

#include <vector>

namespace meshsplat {

/// Static 3D k-d tree over a point set; median-split, queries are exact.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::vector<Vec3> points);

  int size() const { return static_cast<int>(points_.size()); }
  const Vec3& point(int i) const { return points_[i]; }

  /// Index of the nearest point to q (ties to the lower index). The tree must
  /// be non-empty.
  int nearest(const Vec3& q) const;

  /// Indices of the k nearest points to q, ascending by distance (ties by
  /// index), excluding `exclude` if >= 0.
  std::vector<int> knearest(const Vec3& q, int k, int exclude = -1) const;

 private:
  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1;
    int right = -1;
  };

  int build(std::vector<int>& idx, int begin, int end, int depth);

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace meshsplat
