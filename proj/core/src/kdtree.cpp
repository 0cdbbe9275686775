#include "meshsplat/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

namespace meshsplat {

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
  if (points_.empty()) return;
  std::vector<int> idx(points_.size());
  std::iota(idx.begin(), idx.end(), 0);
  nodes_.reserve(points_.size());
  root_ = build(idx, 0, static_cast<int>(idx.size()), 0);
}

int KdTree::build(std::vector<int>& idx, int begin, int end, int depth) {
  if (begin >= end) return -1;
  const int axis = depth % 3;
  const int mid = (begin + end) / 2;
  std::nth_element(idx.begin() + begin, idx.begin() + mid, idx.begin() + end,
                   [&](int a, int b) {
                     if (points_[a][axis] != points_[b][axis]) {
                       return points_[a][axis] < points_[b][axis];
                     }
                     return a < b;
                   });
  Node node;
  node.point = idx[mid];
  node.axis = axis;
  const int self = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  nodes_[self].left = build(idx, begin, mid, depth + 1);
  nodes_[self].right = build(idx, mid + 1, end, depth + 1);
  return self;
}

namespace {

struct Hit {
  double dist2;
  int index;
  bool operator<(const Hit& o) const {
    if (dist2 != o.dist2) return dist2 < o.dist2;
    return index < o.index;
  }
};

}  // namespace

int KdTree::nearest(const Vec3& q) const {
  Hit best{kInf, -1};
  std::vector<int> todo{root_};
  while (!todo.empty()) {
    const int ni = todo.back();
    todo.pop_back();
    if (ni < 0) continue;
    const Node& n = nodes_[ni];
    const Vec3& p = points_[n.point];
    const Hit h{(p - q).squaredNorm(), n.point};
    if (h < best) best = h;
    const double plane = q[n.axis] - p[n.axis];
    const int near_child = plane < 0.0 ? n.left : n.right;
    const int far_child = plane < 0.0 ? n.right : n.left;
    if (plane * plane <= best.dist2 && far_child >= 0) todo.push_back({far_child});
    if (near_child >= 0) todo.push_back({near_child});
  }
  return best.index;
}

std::vector<int> KdTree::knearest(const Vec3& q, int k, int exclude) const {
  std::priority_queue<Hit> heap;  // max-heap by (dist2, index)
  std::vector<int> todo{root_};
  while (!todo.empty()) {
    const int ni = todo.back();
    todo.pop_back();
    if (ni < 0) continue;
    const Node& n = nodes_[ni];
    if (n.point != exclude) {
      const Hit h{(points_[n.point] - q).squaredNorm(), n.point};
      if (static_cast<int>(heap.size()) < k) {
        heap.push(h);
      } else if (h < heap.top()) {
        heap.pop();
        heap.push(h);
      }
    }
    const double plane = q[n.axis] - points_[n.point][n.axis];
    const int near_child = plane < 0.0 ? n.left : n.right;
    const int far_child = plane < 0.0 ? n.right : n.left;
    const bool full = static_cast<int>(heap.size()) >= k;
    if (far_child >= 0 && (!full || plane * plane <= heap.top().dist2)) todo.push_back(far_child);
    if (near_child >= 0) todo.push_back(near_child);
  }
  std::vector<Hit> hits;
  hits.reserve(heap.size());
  while (!heap.empty()) {
    hits.push_back(heap.top());
    heap.pop();
  }
  std::sort(hits.begin(), hits.end());
  std::vector<int> out;
  out.reserve(hits.size());
  for (const Hit& h : hits) out.push_back(h.index);
  return out;
}

}  // namespace meshsplat
