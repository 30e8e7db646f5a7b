#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace fetrack {

using Vec3 = Eigen::Vector3d;
using Face = std::array<int, 3>;
using Edge = std::array<int, 2>;

/// Thrown when input data violates a structural contract (bad indices,
/// non-triangle faces, mismatched sizes, ...).
class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Connectivity shared between a mesh and all of its deformed copies.
struct Topology {
  std::vector<Face> faces;
  std::vector<Edge> edges;                   // unique, edges[k][0] < edges[k][1]
  std::vector<std::vector<int>> one_ring;    // sorted neighbor lists
  std::vector<std::vector<int>> vertex_faces;
  bool watertight = false;                   // closed, 2-manifold, consistently oriented
};

/// Indexed triangle surface. Immutable value type: deformation produces a new
/// mesh via with_positions(), which shares the topology.
class TriMesh {
 public:
  TriMesh() = default;
  TriMesh(std::vector<Vec3> vertices, std::vector<Face> faces);

  [[nodiscard]] TriMesh with_positions(std::vector<Vec3> vertices) const;

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Vec3>& normals() const { return normals_; }
  const std::vector<Face>& faces() const { return topo_->faces; }
  const std::vector<Edge>& edges() const { return topo_->edges; }
  const std::vector<std::vector<int>>& one_ring() const { return topo_->one_ring; }
  const std::vector<std::vector<int>>& vertex_faces() const { return topo_->vertex_faces; }
  bool watertight() const { return topo_ && topo_->watertight; }

  std::size_t vertex_count() const { return vertices_.size(); }
  std::size_t face_count() const { return topo_ ? topo_->faces.size() : 0; }
  bool empty() const { return vertices_.empty(); }

  /// Arithmetic mean of all edge lengths.
  double average_edge_length() const { return average_edge_length_; }

  /// Length of the axis-aligned bounding box diagonal.
  double bbox_diagonal() const;
  Vec3 bbox_min() const;
  Vec3 bbox_max() const;

 private:
  void compute_geometry();

  std::vector<Vec3> vertices_;
  std::vector<Vec3> normals_;
  std::shared_ptr<const Topology> topo_;
  double average_edge_length_ = 0.0;
};

/// Area-weighted vertex normals for an arbitrary position set over a face list.
std::vector<Vec3> vertex_normals(const std::vector<Vec3>& vertices, const std::vector<Face>& faces);

/// One observed frame: points with unit normals.
struct PointCloudFrame {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  int index = 1;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  /// Throws GeometryError if sizes differ or a normal is not unit length.
  void validate() const;
};

}  // namespace fetrack
