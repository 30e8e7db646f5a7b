#include "fetrack/metrics.hpp"

#include <fstream>
#include <ostream>

namespace fetrack {

double mesh_volume(const TriMesh& mesh) {
  if (!mesh.watertight()) throw GeometryError("mesh_volume: mesh is not watertight");
  const auto& v = mesh.vertices();
  double vol = 0.0;
  for (const Face& f : mesh.faces()) vol += v[f[0]].dot(v[f[1]].cross(v[f[2]]));
  return vol / 6.0;
}

double mesh_area(const TriMesh& mesh) {
  const auto& v = mesh.vertices();
  double area = 0.0;
  for (const Face& f : mesh.faces()) area += 0.5 * (v[f[1]] - v[f[0]]).cross(v[f[2]] - v[f[0]]).norm();
  return area;
}

DistanceStats mean_max_vertex_distance(std::span<const Vec3> result, std::span<const Vec3> truth,
                                       std::optional<std::span<const int>> subset) {
  if (result.size() != truth.size()) {
    throw GeometryError("vertex count mismatch: result has " + std::to_string(result.size()) +
                        ", truth has " + std::to_string(truth.size()));
  }
  DistanceStats s;
  std::size_t count = 0;
  auto visit = [&](std::size_t i) {
    const double d = (result[i] - truth[i]).norm();
    s.mean += d;
    s.max = std::max(s.max, d);
    ++count;
  };
  if (subset) {
    for (int i : *subset) {
      if (i < 0 || static_cast<std::size_t>(i) >= result.size()) throw GeometryError("subset index out of range");
      visit(static_cast<std::size_t>(i));
    }
  } else {
    for (std::size_t i = 0; i < result.size(); ++i) visit(i);
  }
  if (count > 0) s.mean /= static_cast<double>(count);
  return s;
}

DistanceStats mean_max_vertex_distance(const TriMesh& result, const TriMesh& truth,
                                       std::optional<std::span<const int>> subset) {
  return mean_max_vertex_distance(std::span<const Vec3>(result.vertices()), std::span<const Vec3>(truth.vertices()),
                                  subset);
}

void write_metrics_csv(std::ostream& out, std::span<const FrameMetrics> rows) {
  out << "frame,mean_dist,max_dist,volume,area\n";
  const auto old = out.precision(10);
  for (const FrameMetrics& m : rows) {
    out << m.frame << ',' << m.mean_dist << ',' << m.max_dist << ',' << m.volume << ',' << m.area << '\n';
  }
  out.precision(old);
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const FrameMetrics> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open file for writing");
  write_metrics_csv(out, rows);
}

}  // namespace fetrack
