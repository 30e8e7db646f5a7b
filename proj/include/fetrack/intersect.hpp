#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Geometry>

#include "fetrack/mesh.hpp"

namespace fetrack {

using Box3 = Eigen::AlignedBox3d;

/// True if the closed triangles (a0,a1,a2) and (b0,b1,b2) share at least one
/// point, with tolerance `eps` on plane-side classification.
bool triangles_intersect(const Vec3& a0, const Vec3& a1, const Vec3& a2, const Vec3& b0, const Vec3& b1,
                         const Vec3& b2, double eps = 1e-12);

/// Bounding-volume hierarchy over a fixed number of boxes (slots). A slot's
/// box can be changed after construction; ancestors are refit in place, so
/// the tree stays valid (if looser) under local edits.
class Bvh {
 public:
  Bvh() = default;
  explicit Bvh(std::vector<Box3> boxes);

  void update(int slot, const Box3& box);

  /// Calls `visit(slot)` for every slot whose box intersects `query`.
  void query(const Box3& query, const std::function<void(int)>& visit) const;

  std::size_t size() const { return boxes_.size(); }

 private:
  struct Node {
    Box3 box;
    int left = -1;   // child node, or -1 for a leaf
    int right = -1;
    int first = 0;   // leaf range into order_
    int count = 0;
    int parent = -1;
  };

  int build(int first, int count, int parent);

  std::vector<Box3> boxes_;
  std::vector<int> order_;
  std::vector<int> leaf_of_slot_;
  std::vector<Node> nodes_;
};

Box3 triangle_box(const Vec3& a, const Vec3& b, const Vec3& c, double pad = 0.0);

/// True iff two faces that share no vertex intersect. Pairs sharing a vertex
/// or an edge are never tested.
bool self_intersects(const TriMesh& mesh, double eps = 1e-12);
bool self_intersects(std::span<const Vec3> vertices, std::span<const Face> faces, double eps = 1e-12);

}  // namespace fetrack
