#include "fetrack/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <utility>

namespace fetrack {

namespace {

std::shared_ptr<const Topology> build_topology(std::size_t vertex_count, std::vector<Face> faces) {
  auto topo = std::make_shared<Topology>();
  const int n = static_cast<int>(vertex_count);
  for (const Face& f : faces) {
    for (int k = 0; k < 3; ++k) {
      if (f[k] < 0 || f[k] >= n) {
        throw GeometryError("face index " + std::to_string(f[k]) + " out of range (vertex count " +
                            std::to_string(n) + ")");
      }
    }
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
      throw GeometryError("degenerate face with repeated vertex index");
    }
  }

  topo->vertex_faces.assign(vertex_count, {});
  topo->one_ring.assign(vertex_count, {});
  std::map<std::pair<int, int>, int> directed;
  for (std::size_t fi = 0; fi < faces.size(); ++fi) {
    const Face& f = faces[fi];
    for (int k = 0; k < 3; ++k) {
      topo->vertex_faces[f[k]].push_back(static_cast<int>(fi));
      ++directed[{f[k], f[(k + 1) % 3]}];
    }
  }

  bool watertight = !faces.empty();
  for (const auto& [he, count] : directed) {
    const auto [a, b] = he;
    auto twin = directed.find({b, a});
    if (count != 1 || twin == directed.end() || twin->second != 1) watertight = false;
    if (a < b || twin == directed.end()) {
      topo->edges.push_back({std::min(a, b), std::max(a, b)});
    }
  }
  std::sort(topo->edges.begin(), topo->edges.end());
  topo->edges.erase(std::unique(topo->edges.begin(), topo->edges.end()), topo->edges.end());

  for (const Edge& e : topo->edges) {
    topo->one_ring[e[0]].push_back(e[1]);
    topo->one_ring[e[1]].push_back(e[0]);
  }
  for (std::size_t v = 0; v < vertex_count; ++v) {
    if (topo->vertex_faces[v].empty()) {
      throw GeometryError("isolated vertex " + std::to_string(v) + " is not referenced by any face");
    }
    std::sort(topo->one_ring[v].begin(), topo->one_ring[v].end());
  }
  topo->watertight = watertight;
  topo->faces = std::move(faces);
  return topo;
}

}  // namespace

std::vector<Vec3> vertex_normals(const std::vector<Vec3>& vertices, const std::vector<Face>& faces) {
  std::vector<Vec3> normals(vertices.size(), Vec3::Zero());
  for (const Face& f : faces) {
    const Vec3 c = (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]);
    for (int k = 0; k < 3; ++k) normals[f[k]] += c;
  }
  for (Vec3& n : normals) {
    const double len = n.norm();
    n = len > 0.0 ? Vec3(n / len) : Vec3::UnitZ();
  }
  return normals;
}

TriMesh::TriMesh(std::vector<Vec3> vertices, std::vector<Face> faces) : vertices_(std::move(vertices)) {
  if (vertices_.empty() || faces.empty()) throw GeometryError("empty mesh");
  topo_ = build_topology(vertices_.size(), std::move(faces));
  compute_geometry();
}

TriMesh TriMesh::with_positions(std::vector<Vec3> vertices) const {
  if (vertices.size() != vertices_.size()) {
    throw GeometryError("with_positions: vertex count mismatch");
  }
  TriMesh out;
  out.vertices_ = std::move(vertices);
  out.topo_ = topo_;
  out.compute_geometry();
  return out;
}

void TriMesh::compute_geometry() {
  normals_ = vertex_normals(vertices_, topo_->faces);
  double sum = 0.0;
  for (const Edge& e : topo_->edges) sum += (vertices_[e[0]] - vertices_[e[1]]).norm();
  average_edge_length_ = topo_->edges.empty() ? 0.0 : sum / static_cast<double>(topo_->edges.size());
}

Vec3 TriMesh::bbox_min() const {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  for (const Vec3& v : vertices_) lo = lo.cwiseMin(v);
  return lo;
}

Vec3 TriMesh::bbox_max() const {
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());
  for (const Vec3& v : vertices_) hi = hi.cwiseMax(v);
  return hi;
}

double TriMesh::bbox_diagonal() const {
  if (vertices_.empty()) return 0.0;
  return (bbox_max() - bbox_min()).norm();
}

void PointCloudFrame::validate() const {
  if (points.size() != normals.size()) {
    throw GeometryError("point cloud has " + std::to_string(points.size()) + " points but " +
                        std::to_string(normals.size()) + " normals");
  }
  for (std::size_t i = 0; i < normals.size(); ++i) {
    if (std::abs(normals[i].norm() - 1.0) > 1e-9) {
      throw GeometryError("point cloud normal " + std::to_string(i) + " is not unit length");
    }
  }
}

}  // namespace fetrack
