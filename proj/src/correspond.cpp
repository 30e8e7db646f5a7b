#include "fetrack/correspond.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fetrack/parallel.hpp"

namespace fetrack {

namespace {
constexpr int kLeafSize = 8;
}

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!points_.empty()) build(0, static_cast<int>(points_.size()));
}

int KdTree::build(int first, int count) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  nodes_[id].first = first;
  nodes_[id].count = count;
  if (count <= kLeafSize) return id;

  Eigen::AlignedBox3d box;
  for (int i = first; i < first + count; ++i) box.extend(points_[order_[i]]);
  int axis = 0;
  box.sizes().maxCoeff(&axis);
  if (box.sizes()[axis] <= 0.0) return id;  // all coincident

  const int mid = first + count / 2;
  auto begin = order_.begin() + first;
  std::nth_element(begin, order_.begin() + mid, begin + count, [&](int a, int b) {
    return points_[a][axis] < points_[b][axis] || (points_[a][axis] == points_[b][axis] && a < b);
  });
  const double split = points_[order_[mid]][axis];
  const int left = build(first, mid - first);
  const int right = build(mid, first + count - mid);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(int node, const Vec3& q, double& best_d2, int& best) const {
  const Node& n = nodes_[node];
  if (n.axis < 0) {
    for (int i = n.first; i < n.first + n.count; ++i) {
      const int p = order_[i];
      const double d2 = (points_[p] - q).squaredNorm();
      if (d2 < best_d2 || (d2 == best_d2 && p < best)) {
        best_d2 = d2;
        best = p;
      }
    }
    return;
  }
  const double diff = q[n.axis] - n.split;
  const int near = diff < 0.0 ? n.left : n.right;
  const int far = diff < 0.0 ? n.right : n.left;
  search(near, q, best_d2, best);
  // <= keeps equidistant candidates on the far side reachable for the tie rule.
  if (diff * diff <= best_d2) search(far, q, best_d2, best);
}

int KdTree::nearest(const Vec3& q) const {
  if (nodes_.empty()) return -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  int best = std::numeric_limits<int>::max();
  search(0, q, best_d2, best);
  return best;
}

std::vector<int> nearest_neighbors(std::span<const Vec3> queries, const KdTree& tree) {
  if (tree.size() == 0) throw GeometryError("nearest_neighbors: empty point cloud");
  std::vector<int> out(queries.size());
  parallel_for(queries.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) out[i] = tree.nearest(queries[i]);
  });
  return out;
}

std::vector<int> match_counts(std::span<const int> matches, std::size_t n_points) {
  std::vector<int> counts(n_points, 0);
  for (int m : matches) {
    if (m >= 0) ++counts.at(static_cast<std::size_t>(m));
  }
  return counts;
}

std::vector<char> detect_boundary_points(std::span<const int> counts) {
  long total = 0, chosen = 0;
  for (int c : counts) {
    if (c > 0) {
      total += c;
      ++chosen;
    }
  }
  std::vector<char> flags(counts.size(), 0);
  if (chosen == 0) return flags;
  const double threshold = 2.0 * static_cast<double>(total) / static_cast<double>(chosen);
  for (std::size_t i = 0; i < counts.size(); ++i) flags[i] = counts[i] > threshold;
  return flags;
}

int Correspondence::observed_count() const {
  return static_cast<int>(std::count(weight.begin(), weight.end(), 1));
}

Correspondence compute_weights(std::span<const Vec3> positions, std::span<const Vec3> normals,
                               const PointCloudFrame& frame, std::span<const int> matches,
                               std::span<const char> boundary, const WeightRules& rules) {
  const std::size_t n = positions.size();
  if (normals.size() != n || matches.size() != n) throw GeometryError("compute_weights: size mismatch");
  const double cos_max = std::cos(rules.max_angle);
  Correspondence c;
  c.match.assign(matches.begin(), matches.end());
  c.weight.assign(n, 0);
  c.point.assign(n, Vec3::Zero());
  c.normal.assign(n, Vec3::Zero());
  for (std::size_t i = 0; i < n; ++i) {
    const int m = matches[i];
    if (m < 0) continue;
    c.point[i] = frame.points[m];
    c.normal[i] = frame.normals[m];
    if (normals[i].dot(frame.normals[m]) < cos_max) continue;
    if ((positions[i] - frame.points[m]).norm() > rules.max_distance) continue;
    if (rules.reject_boundary && !boundary.empty() && boundary[m]) continue;
    c.weight[i] = 1;
  }
  return c;
}

Correspondence correspond(std::span<const Vec3> positions, std::span<const Vec3> normals,
                          const PointCloudFrame& frame, const KdTree& tree, const WeightRules& rules) {
  const std::vector<int> matches = nearest_neighbors(positions, tree);
  const std::vector<char> boundary = detect_boundary_points(match_counts(matches, frame.size()));
  return compute_weights(positions, normals, frame, matches, boundary, rules);
}

}  // namespace fetrack
