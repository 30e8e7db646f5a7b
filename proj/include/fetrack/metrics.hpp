#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "fetrack/mesh.hpp"

namespace fetrack {

/// Signed volume via the divergence theorem; positive for outward
/// (counter-clockwise) orientation. Throws GeometryError if the mesh is not
/// watertight.
double mesh_volume(const TriMesh& mesh);

double mesh_area(const TriMesh& mesh);

struct DistanceStats {
  double mean = 0.0;
  double max = 0.0;
};

/// Per-vertex Euclidean distance between corresponding (same index) vertices.
/// With `subset`, only the listed vertices are considered.
DistanceStats mean_max_vertex_distance(const TriMesh& result, const TriMesh& truth,
                                       std::optional<std::span<const int>> subset = std::nullopt);
DistanceStats mean_max_vertex_distance(std::span<const Vec3> result, std::span<const Vec3> truth,
                                       std::optional<std::span<const int>> subset = std::nullopt);

struct FrameMetrics {
  int frame = 0;
  double mean_dist = 0.0;
  double max_dist = 0.0;
  double volume = 0.0;
  double area = 0.0;
};

/// CSV with header `frame,mean_dist,max_dist,volume,area`.
void write_metrics_csv(std::ostream& out, std::span<const FrameMetrics> rows);
void write_metrics_csv(const std::filesystem::path& path, std::span<const FrameMetrics> rows);

}  // namespace fetrack
