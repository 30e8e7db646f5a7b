#include "fetrack/intersect.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace fetrack {

namespace {

using Vec2 = Eigen::Vector2d;

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

int dominant_axis(const Vec3& n) {
  const Vec3 a = n.cwiseAbs();
  if (a.x() >= a.y() && a.x() >= a.z()) return 0;
  return a.y() >= a.z() ? 1 : 2;
}

Vec2 drop(const Vec3& p, int axis) {
  switch (axis) {
    case 0: return {p.y(), p.z()};
    case 1: return {p.z(), p.x()};
    default: return {p.x(), p.y()};
  }
}

bool on_segment_2d(const Vec2& p, const Vec2& a, const Vec2& b, double eps) {
  return std::min(a.x(), b.x()) - eps <= p.x() && p.x() <= std::max(a.x(), b.x()) + eps &&
         std::min(a.y(), b.y()) - eps <= p.y() && p.y() <= std::max(a.y(), b.y()) + eps;
}

bool segments_intersect_2d(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2, double eps) {
  const double d1 = cross2(q2 - q1, p1 - q1);
  const double d2 = cross2(q2 - q1, p2 - q1);
  const double d3 = cross2(p2 - p1, q1 - p1);
  const double d4 = cross2(p2 - p1, q2 - p1);
  const double sq = eps * std::max(1.0, (q2 - q1).norm());
  const double sp = eps * std::max(1.0, (p2 - p1).norm());
  if (((d1 > sq && d2 < -sq) || (d1 < -sq && d2 > sq)) && ((d3 > sp && d4 < -sp) || (d3 < -sp && d4 > sp))) {
    return true;
  }
  if (std::abs(d1) <= sq && on_segment_2d(p1, q1, q2, eps)) return true;
  if (std::abs(d2) <= sq && on_segment_2d(p2, q1, q2, eps)) return true;
  if (std::abs(d3) <= sp && on_segment_2d(q1, p1, p2, eps)) return true;
  if (std::abs(d4) <= sp && on_segment_2d(q2, p1, p2, eps)) return true;
  return false;
}

bool point_in_triangle_2d(const Vec2& p, const std::array<Vec2, 3>& t, double eps) {
  const double area = cross2(t[1] - t[0], t[2] - t[0]);
  const double sgn = area >= 0 ? 1.0 : -1.0;
  for (int k = 0; k < 3; ++k) {
    const Vec2& a = t[k];
    const Vec2& b = t[(k + 1) % 3];
    if (sgn * cross2(b - a, p - a) < -eps * std::max(1.0, (b - a).norm())) return false;
  }
  return true;
}

bool coplanar_triangles_intersect(const std::array<Vec3, 3>& a, const std::array<Vec3, 3>& b, const Vec3& n,
                                  double eps) {
  const int axis = dominant_axis(n);
  std::array<Vec2, 3> a2, b2;
  for (int k = 0; k < 3; ++k) {
    a2[k] = drop(a[k], axis);
    b2[k] = drop(b[k], axis);
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (segments_intersect_2d(a2[i], a2[(i + 1) % 3], b2[j], b2[(j + 1) % 3], eps)) return true;
    }
  }
  return point_in_triangle_2d(a2[0], b2, eps) || point_in_triangle_2d(b2[0], a2, eps);
}

bool segment_in_plane_hits_triangle(const Vec3& p, const Vec3& q, const std::array<Vec3, 3>& t, const Vec3& n,
                                    double eps) {
  const int axis = dominant_axis(n);
  std::array<Vec2, 3> t2 = {drop(t[0], axis), drop(t[1], axis), drop(t[2], axis)};
  const Vec2 p2 = drop(p, axis), q2 = drop(q, axis);
  for (int j = 0; j < 3; ++j) {
    if (segments_intersect_2d(p2, q2, t2[j], t2[(j + 1) % 3], eps)) return true;
  }
  return point_in_triangle_2d(p2, t2, eps);
}

bool point_in_triangle_3d(const Vec3& x, const std::array<Vec3, 3>& t, const Vec3& n, double eps) {
  for (int k = 0; k < 3; ++k) {
    const Vec3& a = t[k];
    const Vec3& b = t[(k + 1) % 3];
    if (n.dot((b - a).cross(x - a)) < -eps * std::max(1.0, (b - a).norm())) return false;
  }
  return true;
}

// Edge (p,q) against triangle t whose unit normal is n; dp, dq are the
// signed distances of p and q to the plane of t.
bool segment_hits_triangle(const Vec3& p, const Vec3& q, double dp, double dq, const std::array<Vec3, 3>& t,
                           const Vec3& n, double eps) {
  if ((dp > eps && dq > eps) || (dp < -eps && dq < -eps)) return false;
  const bool p_on = std::abs(dp) <= eps;
  const bool q_on = std::abs(dq) <= eps;
  if (p_on && q_on) return segment_in_plane_hits_triangle(p, q, t, n, eps);
  Vec3 x;
  if (p_on) {
    x = p;
  } else if (q_on) {
    x = q;
  } else {
    x = p + (dp / (dp - dq)) * (q - p);
  }
  return point_in_triangle_3d(x, t, n, eps);
}

}  // namespace

bool triangles_intersect(const Vec3& a0, const Vec3& a1, const Vec3& a2, const Vec3& b0, const Vec3& b1,
                         const Vec3& b2, double eps) {
  const std::array<Vec3, 3> a = {a0, a1, a2};
  const std::array<Vec3, 3> b = {b0, b1, b2};
  Vec3 na = (a1 - a0).cross(a2 - a0);
  Vec3 nb = (b1 - b0).cross(b2 - b0);
  const double la = na.norm(), lb = nb.norm();
  if (la <= 0.0 || lb <= 0.0) return false;
  na /= la;
  nb /= lb;

  std::array<double, 3> da, db;
  for (int k = 0; k < 3; ++k) {
    da[k] = nb.dot(a[k] - b0);
    db[k] = na.dot(b[k] - a0);
  }
  auto separated = [eps](const std::array<double, 3>& d) {
    return (d[0] > eps && d[1] > eps && d[2] > eps) || (d[0] < -eps && d[1] < -eps && d[2] < -eps);
  };
  if (separated(da) || separated(db)) return false;

  if (std::abs(da[0]) <= eps && std::abs(da[1]) <= eps && std::abs(da[2]) <= eps) {
    return coplanar_triangles_intersect(a, b, nb, eps);
  }
  for (int k = 0; k < 3; ++k) {
    const int l = (k + 1) % 3;
    if (segment_hits_triangle(a[k], a[l], da[k], da[l], b, nb, eps)) return true;
    if (segment_hits_triangle(b[k], b[l], db[k], db[l], a, na, eps)) return true;
  }
  return false;
}

Box3 triangle_box(const Vec3& a, const Vec3& b, const Vec3& c, double pad) {
  Box3 box(a);
  box.extend(b);
  box.extend(c);
  const Vec3 p = Vec3::Constant(pad);
  return Box3(box.min() - p, box.max() + p);
}

Bvh::Bvh(std::vector<Box3> boxes) : boxes_(std::move(boxes)) {
  order_.resize(boxes_.size());
  std::iota(order_.begin(), order_.end(), 0);
  leaf_of_slot_.assign(boxes_.size(), -1);
  if (!boxes_.empty()) build(0, static_cast<int>(boxes_.size()), -1);
}

int Bvh::build(int first, int count, int parent) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  Box3 box;
  Box3 centers;
  for (int i = first; i < first + count; ++i) {
    box.extend(boxes_[order_[i]]);
    if (!boxes_[order_[i]].isEmpty()) centers.extend(boxes_[order_[i]].center());
  }
  nodes_[id].box = box;
  nodes_[id].parent = parent;
  constexpr int kLeafSize = 4;
  if (count <= kLeafSize || centers.isEmpty()) {
    nodes_[id].first = first;
    nodes_[id].count = count;
    for (int i = first; i < first + count; ++i) leaf_of_slot_[order_[i]] = id;
    return id;
  }
  int axis = 0;
  centers.sizes().maxCoeff(&axis);
  const int mid = first + count / 2;
  std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count, [&](int l, int r) {
    const double cl = boxes_[l].isEmpty() ? 0.0 : boxes_[l].center()[axis];
    const double cr = boxes_[r].isEmpty() ? 0.0 : boxes_[r].center()[axis];
    return cl < cr || (cl == cr && l < r);
  });
  const int left = build(first, mid - first, id);
  const int right = build(mid, first + count - mid, id);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void Bvh::update(int slot, const Box3& box) {
  boxes_[slot] = box;
  int node = leaf_of_slot_[slot];
  // The leaf is recomputed exactly; ancestors only grow.
  Box3 leaf;
  for (int i = nodes_[node].first; i < nodes_[node].first + nodes_[node].count; ++i) leaf.extend(boxes_[order_[i]]);
  nodes_[node].box = leaf;
  for (int p = nodes_[node].parent; p >= 0; p = nodes_[p].parent) {
    if (nodes_[p].box.contains(box) || box.isEmpty()) break;
    nodes_[p].box.extend(box);
  }
}

void Bvh::query(const Box3& q, const std::function<void(int)>& visit) const {
  if (nodes_.empty() || q.isEmpty()) return;
  std::vector<int> stack = {0};
  while (!stack.empty()) {
    const Node& n = nodes_[stack.back()];
    stack.pop_back();
    if (n.box.isEmpty() || !n.box.intersects(q)) continue;
    if (n.left < 0) {
      for (int i = n.first; i < n.first + n.count; ++i) {
        const int s = order_[i];
        if (!boxes_[s].isEmpty() && boxes_[s].intersects(q)) visit(s);
      }
    } else {
      stack.push_back(n.left);
      stack.push_back(n.right);
    }
  }
}

bool self_intersects(std::span<const Vec3> v, std::span<const Face> faces, double eps) {
  std::vector<Box3> boxes;
  boxes.reserve(faces.size());
  for (const Face& f : faces) boxes.push_back(triangle_box(v[f[0]], v[f[1]], v[f[2]], eps));
  const Bvh bvh(boxes);
  for (std::size_t i = 0; i < faces.size(); ++i) {
    const Face& fa = faces[i];
    bool hit = false;
    bvh.query(boxes[i], [&](int j) {
      if (hit || j <= static_cast<int>(i)) return;
      const Face& fb = faces[j];
      for (int a : fa) {
        for (int b : fb) {
          if (a == b) return;
        }
      }
      if (triangles_intersect(v[fa[0]], v[fa[1]], v[fa[2]], v[fb[0]], v[fb[1]], v[fb[2]], eps)) hit = true;
    });
    if (hit) return true;
  }
  return false;
}

bool self_intersects(const TriMesh& mesh, double eps) {
  return self_intersects(std::span<const Vec3>(mesh.vertices()), std::span<const Face>(mesh.faces()), eps);
}

}  // namespace fetrack
