#include "fetrack/xform.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "fetrack/mesh_io.hpp"

namespace fetrack {

namespace {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

Vec3 any_perpendicular(const Vec3& a) {
  const Vec3 c = std::abs(a.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return a.cross(c).normalized();
}

}  // namespace

Vec3 spherical_axis(double az, double incl) {
  const double s = std::sin(incl);
  return {s * std::cos(az), s * std::sin(az), std::cos(incl)};
}

Eigen::Matrix<double, 3, 2> spherical_axis_jacobian(double az, double incl) {
  const double s = std::sin(incl), c = std::cos(incl);
  Eigen::Matrix<double, 3, 2> j;
  j.col(0) << -s * std::sin(az), s * std::cos(az), 0.0;
  j.col(1) << c * std::cos(az), c * std::sin(az), -s;
  return j;
}

void VertexTransform::set_axis(const Vec3& a) {
  const double len = a.norm();
  if (!(len > 0.0)) throw GeometryError("VertexTransform::set_axis: zero axis");
  const Vec3 u = a / len;
  inclination = std::acos(std::clamp(u.z(), -1.0, 1.0));
  azimuth = std::atan2(u.y(), u.x());
}

Mat3 VertexTransform::rotation() const { return Eigen::AngleAxisd(angle, axis()).toRotationMatrix(); }

VertexTransform VertexTransform::identity(const Vec3& axis) {
  VertexTransform xf;
  xf.set_axis(axis);
  return xf;
}

DeformField identity_field(const TriMesh& mesh) {
  DeformField field;
  field.reserve(mesh.vertex_count());
  for (const Vec3& n : mesh.normals()) field.push_back(VertexTransform::identity(n));
  return field;
}

Vec3 rotate(const Vec3& a, double phi, const Vec3& v) {
  const double c = std::cos(phi), s = std::sin(phi);
  return c * v + s * a.cross(v) + (1.0 - c) * a.dot(v) * a;
}

Vec3 rotation_angle_derivative(const Vec3& a, double phi, const Vec3& v) {
  const double c = std::cos(phi), s = std::sin(phi);
  return -s * v + c * a.cross(v) + s * a.dot(v) * a;
}

Mat3 rotation_axis_jacobian(const Vec3& a, double phi, const Vec3& v) {
  const double c = std::cos(phi), s = std::sin(phi);
  // d/da [s a x v + (1-c)(a.v) a] = -s [v]x + (1-c)(a v^T + (a.v) I)
  return -s * skew(v) + (1.0 - c) * (a * v.transpose() + a.dot(v) * Mat3::Identity());
}

Vec3 transform_point(const Vec3& anchor, const Vec3& q, const VertexTransform& xf) {
  return anchor + rotate(xf.axis(), xf.angle, q - anchor + xf.t);
}

std::pair<Vec3, Vec3> apply_vertex_transform(const Vec3& p, const Vec3& n, const VertexTransform& xf) {
  const Vec3 a = xf.axis();
  return {p + rotate(a, xf.angle, xf.t), rotate(a, xf.angle, n)};
}

Mat36 transform_gradient(const Vec3& anchor, const Vec3& q, const VertexTransform& xf) {
  const Vec3 a = xf.axis();
  const Vec3 v = q - anchor + xf.t;
  Mat36 g;
  g.leftCols<3>() = xf.rotation();
  g.block<3, 2>(0, 3) = rotation_axis_jacobian(a, xf.angle, v) * spherical_axis_jacobian(xf.azimuth, xf.inclination);
  g.col(5) = rotation_angle_derivative(a, xf.angle, v);
  return g;
}

double wrapped_angle(double a, double b) { return std::remainder(a - b, 2.0 * std::numbers::pi); }

double angle_difference(double a, double b) {
  const double w = wrapped_angle(a, b);
  return w * w;
}

Vec3 slerp(const Vec3& a, const Vec3& b, double s) {
  const double d = a.dot(b);
  const double theta = std::atan2(a.cross(b).norm(), d);
  // Below this the lerp error (~theta^3) is under rounding.
  if (theta < 1e-5) return ((1.0 - s) * a + s * b).normalized();
  Vec3 dir;
  if (std::numbers::pi - theta < 1e-12) {
    dir = any_perpendicular(a);
  } else {
    dir = (b - d * a).normalized();
  }
  return (std::cos(s * theta) * a + std::sin(s * theta) * dir).normalized();
}

VertexTransform average_transforms(std::span<const VertexTransform> xs) {
  if (xs.empty()) throw GeometryError("average_transforms: empty list");
  VertexTransform out;
  Vec3 axis = xs[0].axis();
  double angle = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    out.t += xs[k].t;
    angle += xs[k].angle;
    if (k > 0) axis = slerp(axis, xs[k].axis(), 1.0 / static_cast<double>(k + 1));
  }
  const double n = static_cast<double>(xs.size());
  out.t /= n;
  out.angle = angle / n;
  if (xs.size() == 1) {
    out.azimuth = xs[0].azimuth;
    out.inclination = xs[0].inclination;
  } else {
    out.set_axis(axis);
  }
  return out;
}

std::vector<Vec3> deform_positions(const TriMesh& mesh, const DeformField& field) {
  if (field.size() != mesh.vertex_count()) throw GeometryError("deform_positions: field size does not match mesh");
  std::vector<Vec3> out(mesh.vertex_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& xf = field[i];
    out[i] = mesh.vertices()[i] + rotate(xf.axis(), xf.angle, xf.t);
  }
  return out;
}

TriMesh deform_mesh(const TriMesh& mesh, const DeformField& field) {
  return mesh.with_positions(deform_positions(mesh, field));
}

Mat3 rotation_from_vector(const Vec3& omega) {
  const double theta = omega.norm();
  if (theta == 0.0) return Mat3::Identity();
  return Eigen::AngleAxisd(theta, omega / theta).toRotationMatrix();
}

Vec3 rotation_to_vector(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

Mat3 SimilarityTransform::rotation_matrix() const { return rotation_from_vector(rotation); }

SimilarityTransform SimilarityTransform::inverse() const {
  if (!(scale > 0.0)) throw GeometryError("SimilarityTransform: scale must be positive");
  SimilarityTransform inv;
  inv.scale = 1.0 / scale;
  inv.rotation = -rotation;
  inv.translation = -(inv.scale * (rotation_from_vector(-rotation) * translation));
  return inv;
}

TriMesh apply_similarity(const TriMesh& mesh, const SimilarityTransform& xf) {
  if (!(xf.scale > 0.0)) throw GeometryError("apply_similarity: scale must be positive");
  const Mat3 r = xf.rotation_matrix();
  std::vector<Vec3> v(mesh.vertex_count());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = xf.scale * (r * mesh.vertices()[i]) + xf.translation;
  return mesh.with_positions(std::move(v));
}

void write_field_csv(const std::filesystem::path& path, const DeformField& field) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << "vertex,tx,ty,tz,az,incl,phi\n" << std::setprecision(17);
  for (std::size_t i = 0; i < field.size(); ++i) {
    const auto& x = field[i];
    out << i << ',' << x.t.x() << ',' << x.t.y() << ',' << x.t.z() << ',' << x.azimuth << ',' << x.inclination << ','
        << x.angle << '\n';
  }
  if (!out) throw ParseError("write failed: " + path.string());
}

DeformField read_field_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  DeformField field;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    long idx = 0;
    VertexTransform x;
    if (!(ss >> idx >> x.t.x() >> x.t.y() >> x.t.z() >> x.azimuth >> x.inclination >> x.angle) ||
        idx != static_cast<long>(field.size())) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": malformed field row");
    }
    field.push_back(x);
  }
  return field;
}

}  // namespace fetrack
