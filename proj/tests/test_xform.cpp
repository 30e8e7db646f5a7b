#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>

#include "fetrack/metrics.hpp"
#include "fetrack/xform.hpp"
#include "support.hpp"

using namespace fetrack;
using namespace testing;

namespace {

constexpr double kPi = std::numbers::pi;

VertexTransform random_transform(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VertexTransform x;
  x.t = Vec3(u(rng), u(rng), u(rng));
  x.azimuth = kPi * u(rng);
  x.inclination = 0.5 * kPi * (1.0 + u(rng));
  x.angle = kPi * u(rng);
  return x;
}

// Rotation by an independent construction (Eigen's angle-axis).
Vec3 reference_map(const Vec3& anchor, const Vec3& q, const VertexTransform& x) {
  const Vec3 a(std::sin(x.inclination) * std::cos(x.azimuth), std::sin(x.inclination) * std::sin(x.azimuth),
               std::cos(x.inclination));
  return anchor + Eigen::AngleAxisd(x.angle, a) * (q - anchor + x.t);
}

double param(VertexTransform& x, int k, double v = std::numeric_limits<double>::quiet_NaN()) {
  double* p[6] = {&x.t.x(), &x.t.y(), &x.t.z(), &x.azimuth, &x.inclination, &x.angle};
  if (!std::isnan(v)) *p[k] = v;
  return *p[k];
}

}  // namespace

TEST_CASE("identity transform leaves points alone") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const Vec3 p = Vec3::Random(), q = Vec3::Random();
    VertexTransform x = random_transform(rng);
    x.t.setZero();
    x.angle = 0.0;
    CHECK((transform_point(p, q, x) - q).norm() < 1e-15);
  }
}

TEST_CASE("pure translation") {
  VertexTransform x = VertexTransform::identity(Vec3::UnitZ());
  x.t = Vec3(1, 0, 0);
  CHECK((transform_point(Vec3::Zero(), Vec3::Zero(), x) - Vec3(1, 0, 0)).norm() < 1e-15);
}

TEST_CASE("translation is applied before the rotation about the vertex") {
  VertexTransform x = VertexTransform::identity(Vec3::UnitZ());
  x.t = Vec3(0.1, 0.2, 0.0);
  x.angle = kPi / 2;
  const auto [p, n] = apply_vertex_transform(Vec3::Zero(), Vec3::UnitX(), x);
  CHECK((p - Vec3(-0.2, 0.1, 0.0)).norm() < 1e-15);
  CHECK((n - Vec3::UnitY()).norm() < 1e-15);
}

TEST_CASE("matches an independent rotation construction") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const VertexTransform x = random_transform(rng);
    const Vec3 p = Vec3::Random(), q = Vec3::Random();
    CHECK((transform_point(p, q, x) - reference_map(p, q, x)).norm() < 1e-13);
  }
}

TEST_CASE("rotation about the anchor preserves the distance to it") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    VertexTransform x = random_transform(rng);
    x.t.setZero();
    const Vec3 p = Vec3::Random(), q = Vec3::Random();
    CHECK(std::abs((transform_point(p, q, x) - p).norm() - (q - p).norm()) < 1e-14);
    // and the anchor itself stays put
    CHECK((transform_point(p, p, x) - p).norm() == 0.0);
  }
}

TEST_CASE("gradient at identity") {
  const VertexTransform x = VertexTransform::identity(Vec3::UnitZ());
  const Mat36 g = transform_gradient(Vec3::Zero(), Vec3::UnitX(), x);
  CHECK((g.leftCols<3>() - Mat3::Identity()).norm() < 1e-15);
  CHECK((g.col(5) - Vec3::UnitY()).norm() < 1e-15);
}

TEST_CASE("gradient agrees with central differences") {
  std::mt19937_64 rng(4);
  const double h = 1e-6;
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    VertexTransform x = random_transform(rng);
    const Vec3 p = Vec3::Random(), q = Vec3::Random();
    const Mat36 g = transform_gradient(p, q, x);
    for (int k = 0; k < 6; ++k) {
      VertexTransform a = x, b = x;
      param(a, k, param(a, k) + h);
      param(b, k, param(b, k) - h);
      const Vec3 fd = (reference_map(p, q, a) - reference_map(p, q, b)) / (2 * h);
      worst = std::max(worst, (fd - g.col(k)).cwiseAbs().maxCoeff());
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("axis and angle derivative helpers") {
  std::mt19937_64 rng(5);
  const double h = 1e-6;
  for (int i = 0; i < 50; ++i) {
    const Vec3 a = Vec3::Random().normalized(), v = Vec3::Random();
    const double phi = 2.0 * Vec3::Random().x();
    const Vec3 fd_phi = (rotate(a, phi + h, v) - rotate(a, phi - h, v)) / (2 * h);
    CHECK((fd_phi - rotation_angle_derivative(a, phi, v)).norm() < 1e-8);
    // Rodrigues formula extended to a non-unit axis: R v = v cos + (a x v) sin + a (a.v)(1 - cos)
    auto rod = [&](const Vec3& ax) {
      return Vec3(v * std::cos(phi) + ax.cross(v) * std::sin(phi) + ax * ax.dot(v) * (1 - std::cos(phi)));
    };
    const Mat3 j = rotation_axis_jacobian(a, phi, v);
    for (int k = 0; k < 3; ++k) {
      const Vec3 e = Vec3::Unit(k) * h;
      CHECK(((rod(a + e) - rod(a - e)) / (2 * h) - j.col(k)).norm() < 1e-8);
    }
  }
}

TEST_CASE("spherical axis convention") {
  CHECK((spherical_axis(0.0, 0.0) - Vec3::UnitZ()).norm() < 1e-15);
  CHECK((spherical_axis(0.0, kPi / 2) - Vec3::UnitX()).norm() < 1e-15);
  CHECK((spherical_axis(kPi / 2, kPi / 2) - Vec3::UnitY()).norm() < 1e-15);
  std::mt19937_64 rng(6);
  for (int i = 0; i < 50; ++i) {
    const Vec3 a = Vec3::Random().normalized();
    VertexTransform x;
    x.set_axis(a);
    CHECK((x.axis() - a).norm() < 1e-13);
  }
}

TEST_CASE("angle difference") {
  CHECK(angle_difference(0.3, 0.3) == 0.0);
  CHECK(angle_difference(0.1, 2 * kPi - 0.1) == doctest::Approx(0.04).epsilon(1e-12));
  CHECK(angle_difference(0.0, kPi) == doctest::Approx(kPi * kPi).epsilon(1e-14));
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int i = 0; i < 200; ++i) {
    const double a = u(rng), b = u(rng);
    CHECK(angle_difference(a, b) == doctest::Approx(angle_difference(b, a)).epsilon(1e-12));
    CHECK(angle_difference(a + 2 * kPi, b) == doctest::Approx(angle_difference(a, b)).epsilon(1e-9));
    CHECK(angle_difference(a, b - 2 * kPi) == doctest::Approx(angle_difference(a, b)).epsilon(1e-9));
    CHECK(angle_difference(a, b) <= kPi * kPi + 1e-12);
    const double w = wrapped_angle(a, b);
    CHECK(w * w == doctest::Approx(angle_difference(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("averaging transforms") {
  std::mt19937_64 rng(8);
  const VertexTransform x = random_transform(rng);
  const VertexTransform one[] = {x};
  const VertexTransform s = average_transforms(one);
  CHECK((s.t - x.t).norm() < 1e-15);
  CHECK(s.angle == x.angle);
  CHECK((s.axis() - x.axis()).norm() < 1e-12);

  const VertexTransform two[] = {x, x};
  const VertexTransform d = average_transforms(two);
  CHECK((d.t - x.t).norm() < 1e-15);
  CHECK((d.axis() - x.axis()).norm() < 1e-12);

  VertexTransform a = VertexTransform::identity(Vec3::UnitX()), b = VertexTransform::identity(Vec3::UnitY());
  a.t = Vec3(1, 0, 0);
  b.t = Vec3(0, 1, 0);
  a.angle = 0.2;
  b.angle = 0.4;
  const VertexTransform ab[] = {a, b};
  const VertexTransform m = average_transforms(ab);
  CHECK((m.axis() - Vec3(1, 1, 0).normalized()).norm() < 1e-12);
  CHECK((m.t - Vec3(0.5, 0.5, 0)).norm() < 1e-15);
  CHECK(m.angle == doctest::Approx(0.3));

  // Fold left: the third axis enters with weight 1/3 on the arc from the
  // midpoint of the first two.
  const VertexTransform abc[] = {VertexTransform::identity(Vec3::UnitX()), VertexTransform::identity(Vec3::UnitY()),
                                 VertexTransform::identity(Vec3::UnitZ())};
  const Vec3 m2 = Vec3(1, 1, 0).normalized();
  const double th = kPi / 2;  // angle between m2 and +z
  const Vec3 expect = (std::sin(th * 2 / 3) * m2 + std::sin(th / 3) * Vec3::UnitZ()) / std::sin(th);
  CHECK((average_transforms(abc).axis() - expect).norm() < 1e-12);
}

TEST_CASE("slerp endpoints and midpoint") {
  const Vec3 a = Vec3(1, 2, 3).normalized(), b = Vec3(-1, 0, 1).normalized();
  CHECK((slerp(a, b, 0.0) - a).norm() < 1e-15);
  CHECK((slerp(a, b, 1.0) - b).norm() < 1e-14);
  const Vec3 m = slerp(a, b, 0.5);
  CHECK(m.norm() == doctest::Approx(1.0));
  CHECK(m.dot(a) == doctest::Approx(m.dot(b)));
}

TEST_CASE("deforming a mesh moves vertices and keeps topology") {
  const TriMesh s = icosphere(1, 1.0);
  DeformField f = identity_field(s);
  for (std::size_t i = 0; i < f.size(); ++i) CHECK((f[i].axis() - s.normals()[i]).norm() < 1e-12);
  CHECK(mean_max_vertex_distance(deform_mesh(s, f), s).max == 0.0);
  for (auto& x : f) x.t = Vec3(0, 0, 0.25);
  const TriMesh m = deform_mesh(s, f);
  CHECK(m.faces() == s.faces());
  CHECK(mean_max_vertex_distance(m, s).mean == doctest::Approx(0.25));
}

TEST_CASE("similarity transforms") {
  SimilarityTransform id;
  const TriMesh cube = unit_cube();
  CHECK(mean_max_vertex_distance(apply_similarity(cube, id), cube).max == 0.0);

  SimilarityTransform s2;
  s2.scale = 2.0;
  CHECK(mesh_volume(apply_similarity(cube, s2)) == doctest::Approx(8.0).epsilon(1e-14));

  std::mt19937_64 rng(9);
  for (int i = 0; i < 20; ++i) {
    SimilarityTransform x;
    x.scale = 0.5 + std::abs(Vec3::Random().x());
    x.rotation = rotation_to_vector(random_rotation(rng));
    x.translation = Vec3::Random();
    const TriMesh back = apply_similarity(apply_similarity(cube, x), x.inverse());
    CHECK(mean_max_vertex_distance(back, cube).max < 1e-10);
    CHECK((rotation_from_vector(x.rotation) - x.rotation_matrix()).norm() < 1e-15);
  }
  // Rotation vector round trip, including angles near pi.
  for (double ang : {1e-9, 0.5, 3.0, kPi - 1e-7}) {
    const Vec3 w = ang * Vec3(1, -2, 0.5).normalized();
    CHECK((rotation_to_vector(rotation_from_vector(w)) - w).norm() < 1e-6);
  }
}

TEST_CASE("field CSV round trip is exact") {
  std::mt19937_64 rng(10);
  DeformField f;
  for (int i = 0; i < 30; ++i) f.push_back(random_transform(rng));
  const auto dir = scratch_dir("xform_csv");
  write_field_csv(dir / "f.csv", f);
  const DeformField g = read_field_csv(dir / "f.csv");
  REQUIRE(g.size() == f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(g[i].t == f[i].t);
    CHECK(g[i].azimuth == f[i].azimuth);
    CHECK(g[i].inclination == f[i].inclination);
    CHECK(g[i].angle == f[i].angle);
  }
}
