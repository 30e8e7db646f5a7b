#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fetrack/complete.hpp"
#include "fetrack/fem.hpp"

namespace fetrack {

enum class Shape { Bar, Box, CappedBar };
enum class NoiseKind { None, Outliers, Gaussian, Subdivision };

std::string to_string(Shape s);
std::string to_string(NoiseKind k);
Shape shape_from_string(const std::string& s);
NoiseKind noise_from_string(const std::string& s);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::None;
  double outlier_prob = 0.1;
  /// Gaussian: variance = sigma_frac * bounding-ball radius unless `sigma`
  /// (a standard deviation in model units) is given.
  double sigma_frac = 0.02;
  std::optional<double> sigma;
  int subdivision_steps = 1;
};

struct SynthScenario {
  Shape shape = Shape::Bar;
  /// Lattice cells along the shortest side of the fine (ground-truth) mesh.
  int cells = 12;
  /// The tracker's tet mesh uses every `coarsen`-th lattice node.
  int coarsen = 2;
  /// Blend in [0, 1) of the box lattice toward its rounded-box image.
  /// 0 keeps sharp edges and flat faces.
  double rounding = 0.5;
  Material material{5.999e4, 0.35, false};
  int frames = 10;
  /// Largest node displacement at the last frame (unit-diagonal units).
  /// Ignored when `force` is set.
  double tip_displacement = 0.15;
  std::optional<double> force;
  Vec3 force_direction{0.0, -1.0, 0.0};
  /// Contact patch: lattice columns from the tip on the +y face. The
  /// contact spec holds the single vertex at the patch center.
  int contact_cells = 4;
  Vec3 view_direction = Vec3(0.0, -1.0, -1.0).normalized();
  NoiseSpec noise;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthData {
  TriMesh template_mesh;               // frame-0 surface of the fine mesh
  TetMesh truth_tet;                   // fine rest mesh
  TetMesh tracker_tet;                 // coarse mesh, surface nodes on the template
  ContactSpec contacts;                // one vertex, center of the loaded patch
  double force = 0.0;                  // total force magnitude used
  std::vector<TriMesh> truth;          // frames 1..n
  std::vector<PointCloudFrame> clouds;
  std::vector<std::vector<char>> visible;  // template vertices facing the viewer, per frame
};

/// Deterministic for a fixed scenario (including seed).
SynthData generate_sequence(const SynthScenario& scn);

/// Vertices with n . (-view_dir) > 0, as a cloud with their normals.
PointCloudFrame cull_to_viewpoint(const TriMesh& mesh, const Vec3& view_dir, std::vector<char>* kept = nullptr);

/// Each point moves with probability `prob` by x * v, x ~ U[-r, 4r], v the
/// unit vector from the point toward `viewpoint`.
PointCloudFrame add_outliers(const PointCloudFrame& frame, const Vec3& viewpoint, double r, double prob,
                             std::uint64_t seed, std::vector<double>* offsets = nullptr);

/// Offset along each normal ~ N(0, sigma^2).
PointCloudFrame add_gaussian_noise(const PointCloudFrame& frame, double sigma, std::uint64_t seed,
                                   std::vector<double>* offsets = nullptr);

/// sigma for the "variance = frac * radius" reading.
double gaussian_sigma(double sigma_frac, double bounding_ball_radius);

/// Loop subdivision with the standard interior and boundary masks. Throws
/// GeometryError on non-manifold input.
TriMesh loop_subdivide(const TriMesh& mesh, int steps = 1);

}  // namespace fetrack
