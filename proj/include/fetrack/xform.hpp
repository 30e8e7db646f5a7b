#pragma once

#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "fetrack/mesh.hpp"

namespace fetrack {

using Mat3 = Eigen::Matrix3d;
using Mat36 = Eigen::Matrix<double, 3, 6>;

/// Unit vector from spherical angles; inclination is measured from +z.
Vec3 spherical_axis(double azimuth, double inclination);
/// Partial derivatives of spherical_axis: columns d/dazimuth, d/dinclination.
Eigen::Matrix<double, 3, 2> spherical_axis_jacobian(double azimuth, double inclination);

/// Per-vertex rigid motion: translate by t in the vertex frame, then rotate by
/// `angle` about the unit axis (azimuth, inclination) around the vertex.
struct VertexTransform {
  Vec3 t = Vec3::Zero();
  double azimuth = 0.0;
  double inclination = 0.0;
  double angle = 0.0;

  Vec3 axis() const { return spherical_axis(azimuth, inclination); }
  void set_axis(const Vec3& a);
  Mat3 rotation() const;

  static VertexTransform identity(const Vec3& axis);
};

using DeformField = std::vector<VertexTransform>;

/// Identity field with every axis set to the corresponding vertex normal.
DeformField identity_field(const TriMesh& mesh);

/// Maps q with the transform anchored at `anchor`: anchor + R (q - anchor + t).
Vec3 transform_point(const Vec3& anchor, const Vec3& q, const VertexTransform& xf);

/// Transforms a vertex (which is its own anchor) and its normal.
std::pair<Vec3, Vec3> apply_vertex_transform(const Vec3& p, const Vec3& n, const VertexTransform& xf);

/// d p' / d(tx, ty, tz, azimuth, inclination, angle) for transform_point.
Mat36 transform_gradient(const Vec3& anchor, const Vec3& q, const VertexTransform& xf);

/// Directional derivative of R(a, phi) v with respect to the axis vector a
/// (unconstrained, i.e. before projecting onto the sphere).
Mat3 rotation_axis_jacobian(const Vec3& a, double phi, const Vec3& v);
/// d R(a, phi) v / d phi.
Vec3 rotation_angle_derivative(const Vec3& a, double phi, const Vec3& v);

/// Rodrigues rotation of v about unit axis a.
Vec3 rotate(const Vec3& a, double phi, const Vec3& v);

/// min((a-b)^2, (2 pi - |a-b|)^2), with the difference reduced modulo 2 pi.
double angle_difference(double a, double b);
/// Signed difference a - b wrapped into [-pi, pi]; angle_difference = w^2.
double wrapped_angle(double a, double b);

/// Great-circle interpolation between unit vectors.
Vec3 slerp(const Vec3& a, const Vec3& b, double s);

/// t and angle averaged arithmetically; axis folded left by slerp so that
/// each entry ends up with equal weight.
VertexTransform average_transforms(std::span<const VertexTransform> xs);

/// Positions of the deformed template.
std::vector<Vec3> deform_positions(const TriMesh& mesh, const DeformField& field);
TriMesh deform_mesh(const TriMesh& mesh, const DeformField& field);

/// Global similarity: p' = s R(omega) p + t, omega a rotation vector.
struct SimilarityTransform {
  double scale = 1.0;
  Vec3 rotation = Vec3::Zero();
  Vec3 translation = Vec3::Zero();

  Mat3 rotation_matrix() const;
  Vec3 apply(const Vec3& p) const { return scale * (rotation_matrix() * p) + translation; }
  SimilarityTransform inverse() const;
};

Mat3 rotation_from_vector(const Vec3& omega);
Vec3 rotation_to_vector(const Mat3& r);

TriMesh apply_similarity(const TriMesh& mesh, const SimilarityTransform& xf);

/// CSV `vertex,tx,ty,tz,az,incl,phi`, full precision.
void write_field_csv(const std::filesystem::path& path, const DeformField& field);
DeformField read_field_csv(const std::filesystem::path& path);

}  // namespace fetrack
