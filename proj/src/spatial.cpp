#include "cg3d/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "cg3d/errors.hpp"
#include "cg3d/simd.hpp"

namespace cg3d {

KdTree::KdTree(std::span<const Vec3> points) {
  if (points.empty()) return;
  std::vector<std::size_t> ids(points.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  xs_.reserve(points.size());
  ys_.reserve(points.size());
  zs_.reserve(points.size());
  index_.reserve(points.size());
  const std::span<const Vec3> pts = points;
  const auto coord = [&](std::size_t id, int axis) { return pts[id][axis]; };

  std::function<std::uint32_t(std::size_t, std::size_t)> rec = [&](std::size_t b, std::size_t e) -> std::uint32_t {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({});
    if (e - b <= kLeaf) {
      std::sort(ids.begin() + static_cast<std::ptrdiff_t>(b), ids.begin() + static_cast<std::ptrdiff_t>(e));
      Node leaf;
      leaf.begin = static_cast<std::uint32_t>(index_.size());
      for (std::size_t k = b; k < e; ++k) {
        xs_.push_back(pts[ids[k]].x());
        ys_.push_back(pts[ids[k]].y());
        zs_.push_back(pts[ids[k]].z());
        index_.push_back(ids[k]);
      }
      leaf.end = static_cast<std::uint32_t>(index_.size());
      nodes_[id] = leaf;
      return id;
    }
    // Split on the widest axis at the median.
    Vec3 lo = pts[ids[b]], hi = lo;
    for (std::size_t k = b; k < e; ++k) {
      lo = lo.cwiseMin(pts[ids[k]]);
      hi = hi.cwiseMax(pts[ids[k]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const std::size_t mid = (b + e) / 2;
    std::nth_element(ids.begin() + static_cast<std::ptrdiff_t>(b), ids.begin() + static_cast<std::ptrdiff_t>(mid),
                     ids.begin() + static_cast<std::ptrdiff_t>(e), [&](std::size_t l, std::size_t r) {
                       return coord(l, axis) < coord(r, axis) || (coord(l, axis) == coord(r, axis) && l < r);
                     });
    Node inner;
    inner.axis = axis;
    inner.split = coord(ids[mid], axis);
    inner.left = rec(b, mid);
    inner.right = rec(mid, e);
    nodes_[id] = inner;
    return id;
  };
  rec(0, ids.size());
}

void KdTree::nearest_in(std::uint32_t n, const Vec3& q, std::size_t& best, double& best_d2) const {
  const Node& node = nodes_[n];
  if (node.axis < 0) {
    double d2;
    const std::size_t local = simd::kernels().nearest(xs_.data() + node.begin, ys_.data() + node.begin,
                                                      zs_.data() + node.begin, node.end - node.begin, q.x(), q.y(),
                                                      q.z(), &d2);
    const std::size_t id = index_[node.begin + local];
    if (d2 < best_d2 || (d2 == best_d2 && id < best)) {
      best_d2 = d2;
      best = id;
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const std::uint32_t first = diff < 0.0 ? node.left : node.right;
  const std::uint32_t second = diff < 0.0 ? node.right : node.left;
  nearest_in(first, q, best, best_d2);
  // Points equal to the split may sit on either side, hence <= rather than <.
  if (diff * diff <= best_d2) nearest_in(second, q, best, best_d2);
}

std::size_t KdTree::nearest(const Vec3& q, double* d2) const {
  if (empty()) throw ValidationError("nearest-neighbour query on an empty tree");
  std::size_t best = index_.size();
  double best_d2 = INFINITY;
  nearest_in(0, q, best, best_d2);
  if (d2) *d2 = best_d2;
  return best;
}

void KdTree::knn_in(std::uint32_t n, const Vec3& q, std::size_t k,
                    std::vector<std::pair<double, std::size_t>>& heap) const {
  const Node& node = nodes_[n];
  if (node.axis < 0) {
    for (std::uint32_t s = node.begin; s < node.end; ++s) {
      const double dx = xs_[s] - q.x(), dy = ys_[s] - q.y(), dz = zs_[s] - q.z();
      const std::pair<double, std::size_t> cand{dx * dx + dy * dy + dz * dz, index_[s]};
      if (heap.size() < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end());
      } else if (cand < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end());
      }
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  knn_in(diff < 0.0 ? node.left : node.right, q, k, heap);
  if (heap.size() < k || diff * diff <= heap.front().first) knn_in(diff < 0.0 ? node.right : node.left, q, k, heap);
}

std::vector<std::size_t> KdTree::knn(const Vec3& q, std::size_t k) const {
  if (k > size()) throw ValidationError("k exceeds the number of points in the tree");
  std::vector<std::pair<double, std::size_t>> heap;
  heap.reserve(k + 1);
  if (k > 0) knn_in(0, q, k, heap);
  std::sort_heap(heap.begin(), heap.end());
  std::vector<std::size_t> out(heap.size());
  for (std::size_t i = 0; i < heap.size(); ++i) out[i] = heap[i].second;
  return out;
}

void KdTree::within_in(std::uint32_t n, const Vec3& q, double r2, std::vector<std::size_t>& out) const {
  const Node& node = nodes_[n];
  if (node.axis < 0) {
    for (std::uint32_t s = node.begin; s < node.end; ++s) {
      const double dx = xs_[s] - q.x(), dy = ys_[s] - q.y(), dz = zs_[s] - q.z();
      if (dx * dx + dy * dy + dz * dz <= r2) out.push_back(index_[s]);
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  within_in(diff < 0.0 ? node.left : node.right, q, r2, out);
  if (diff * diff <= r2) within_in(diff < 0.0 ? node.right : node.left, q, r2, out);
}

std::vector<std::size_t> KdTree::within(const Vec3& q, double radius) const {
  std::vector<std::size_t> out;
  if (!empty() && radius >= 0.0) within_in(0, q, radius * radius, out);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> points, std::size_t count, std::size_t start) {
  const std::size_t n = points.size();
  if (count > n) throw ValidationError("farthest-point sample larger than the point set");
  if (count == 0) return {};
  std::vector<double> xs(n), ys(n), zs(n), min_d2(n, INFINITY);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = points[i].x();
    ys[i] = points[i].y();
    zs[i] = points[i].z();
  }
  const auto& k = simd::kernels();
  std::vector<std::size_t> out;
  out.reserve(count);
  std::size_t cur = start;
  for (std::size_t s = 0; s < count; ++s) {
    out.push_back(cur);
    // Selected points drop out of the argmax even when duplicates leave them at distance 0.
    min_d2[cur] = -INFINITY;
    cur = k.fps_update(xs.data(), ys.data(), zs.data(), n, xs[cur], ys[cur], zs[cur], min_d2.data());
  }
  return out;
}

}  // namespace cg3d
