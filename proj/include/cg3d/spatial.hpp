#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cg3d/math.hpp"

namespace cg3d {

/// Static kd-tree over a point set for exact nearest-neighbour queries. Ties in distance are
/// broken by the lower point index, so query results are deterministic.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::span<const Vec3> points);

  std::size_t size() const noexcept { return index_.size(); }
  bool empty() const noexcept { return index_.empty(); }

  /// Index of the nearest point; writes the squared distance when `d2` is non-null.
  std::size_t nearest(const Vec3& q, double* d2 = nullptr) const;
  /// The k nearest points ordered by (distance, index).
  std::vector<std::size_t> knn(const Vec3& q, std::size_t k) const;
  /// Indices of all points with |p - q| <= radius, ascending.
  std::vector<std::size_t> within(const Vec3& q, double radius) const;

 private:
  static constexpr std::size_t kLeaf = 16;
  struct Node {
    double split = 0.0;
    int axis = -1;  // -1 marks a leaf
    std::uint32_t left = 0, right = 0;
    std::uint32_t begin = 0, end = 0;  // leaf range into the SoA arrays
  };

  void nearest_in(std::uint32_t node, const Vec3& q, std::size_t& best, double& best_d2) const;
  void knn_in(std::uint32_t node, const Vec3& q, std::size_t k,
              std::vector<std::pair<double, std::size_t>>& heap) const;
  void within_in(std::uint32_t node, const Vec3& q, double r2, std::vector<std::size_t>& out) const;

  std::vector<Node> nodes_;
  std::vector<double> xs_, ys_, zs_;
  std::vector<std::size_t> index_;  // SoA slot -> original point index
};

/// Farthest-point sampling starting from point `start`. Returns indices in selection order.
std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> points, std::size_t count,
                                               std::size_t start = 0);

}  // namespace cg3d
