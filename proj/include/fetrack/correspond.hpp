#pragma once

#include <span>
#include <vector>

#include "fetrack/mesh.hpp"

namespace fetrack {

/// Static 3-d tree for exact nearest-neighbor queries. Among equidistant
/// points the lowest index wins.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::vector<Vec3> points);

  int nearest(const Vec3& q) const;
  std::size_t size() const { return points_.size(); }
  const std::vector<Vec3>& points() const { return points_; }

 private:
  struct Node {
    int first = 0, count = 0;  // range into order_ (leaves)
    int axis = -1;             // -1 for leaves
    double split = 0.0;
    int left = -1, right = -1;
  };

  int build(int first, int count);
  void search(int node, const Vec3& q, double& best_d2, int& best) const;

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

/// Nearest cloud point for every query position.
std::vector<int> nearest_neighbors(std::span<const Vec3> queries, const KdTree& tree);

/// How often each of `n_points` points was chosen.
std::vector<int> match_counts(std::span<const int> matches, std::size_t n_points);

/// Points chosen more than twice as often as the average chosen point.
/// Returns one flag per point.
std::vector<char> detect_boundary_points(std::span<const int> counts);

struct WeightRules {
  double max_distance = 0.0;  // d * r
  double max_angle = 0.0;     // radians
  bool reject_boundary = true;
};

struct Correspondence {
  std::vector<int> match;       // -1 when there is no match
  std::vector<char> weight;     // omega, 0 or 1
  std::vector<Vec3> point;      // matched point
  std::vector<Vec3> normal;     // its normal

  int observed_count() const;
};

/// Applies the three rejection rules (angle, distance, boundary) to existing
/// matches. `normals` are the normals of the deformed template.
Correspondence compute_weights(std::span<const Vec3> positions, std::span<const Vec3> normals,
                               const PointCloudFrame& frame, std::span<const int> matches,
                               std::span<const char> boundary, const WeightRules& rules);

/// Match, detect boundary points, and weigh in one go.
Correspondence correspond(std::span<const Vec3> positions, std::span<const Vec3> normals,
                          const PointCloudFrame& frame, const KdTree& tree, const WeightRules& rules);

}  // namespace fetrack
