#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <numbers>
#include <set>

#include "fetrack/geodesic.hpp"
#include "fetrack/intersect.hpp"
#include "fetrack/mesh_io.hpp"
#include "fetrack/metrics.hpp"
#include "fetrack/simplify.hpp"
#include "support.hpp"

using namespace fetrack;
using namespace testing;

namespace {

double brute_average_edge(const TriMesh& m) {
  std::set<std::pair<int, int>> edges;
  for (const Face& f : m.faces())
    for (int k = 0; k < 3; ++k) edges.insert(std::minmax(f[k], f[(k + 1) % 3]));
  double s = 0.0;
  for (auto [a, b] : edges) s += (m.vertices()[a] - m.vertices()[b]).norm();
  return s / edges.size();
}

}  // namespace

TEST_CASE("cube OBJ loads with r = mean of its 18 edges") {
  const auto dir = scratch_dir("geom_obj");
  const TriMesh cube = unit_cube();
  save_mesh(cube, dir / "cube.obj");
  const TriMesh m = load_mesh(dir / "cube.obj");
  CHECK(m.vertex_count() == 8);
  CHECK(m.face_count() == 12);
  CHECK(m.edges().size() == 18);
  const double expected = (12.0 + 6.0 * std::sqrt(2.0)) / 18.0;
  CHECK(m.average_edge_length() == doctest::Approx(expected).epsilon(1e-12));
  CHECK(m.watertight());
}

TEST_CASE("PLY with a quad face is rejected") {
  const auto dir = scratch_dir("geom_quad");
  std::ofstream(dir / "quad.ply") << "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\n"
                                     "property float z\nelement face 1\nproperty list uchar int vertex_indices\n"
                                     "end_header\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
  try {
    load_mesh(dir / "quad.ply");
    FAIL("no error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("non-triangle face") != std::string::npos);
  }
}

TEST_CASE("regular tetrahedron: unit normals, r = 1") {
  const TriMesh t = regular_tetrahedron();
  CHECK(t.average_edge_length() == doctest::Approx(1.0).epsilon(1e-12));
  for (const Vec3& n : t.normals()) CHECK(n.norm() == doctest::Approx(1.0).epsilon(1e-12));
  // Outward: each normal points away from the centroid (the origin).
  for (std::size_t i = 0; i < 4; ++i) CHECK(t.normals()[i].dot(t.vertices()[i]) > 0.0);
}

TEST_CASE("binary and ascii PLY round trips keep vertex order") {
  const auto dir = scratch_dir("geom_ply");
  const TriMesh s = icosphere(2, 0.3);
  for (bool binary : {false, true}) {
    save_mesh(s, dir / "s.ply", std::nullopt, binary);
    const TriMesh r = load_mesh(dir / "s.ply");
    REQUIRE(r.vertex_count() == s.vertex_count());
    CHECK(r.faces() == s.faces());
    for (std::size_t i = 0; i < s.vertex_count(); ++i) CHECK((r.vertices()[i] - s.vertices()[i]).norm() < 1e-6);
  }
}

TEST_CASE("missing mesh file names the path") {
  try {
    load_mesh("/nonexistent/dir/mesh.obj");
    FAIL("no error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/dir/mesh.obj") != std::string::npos);
  }
}

TEST_CASE("volume and area of the unit cube") {
  CHECK(mesh_volume(unit_cube()) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(mesh_volume(flipped(unit_cube())) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(mesh_area(unit_cube()) == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("area of a single right triangle") {
  const TriMesh t({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}});
  CHECK(mesh_area(t) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(mesh_volume(t), GeometryError);
}

TEST_CASE("icosphere volume and area approach the sphere") {
  const TriMesh s = icosphere(3, 0.5);
  const double pi = std::numbers::pi;
  CHECK(std::abs(mesh_volume(s) / (4.0 / 3.0 * pi * 0.125) - 1.0) < 0.02);
  CHECK(std::abs(mesh_area(s) / pi - 1.0) < 0.02);
}

TEST_CASE("volume and area are invariant under rigid motion") {
  std::mt19937_64 rng(3);
  const TriMesh s = icosphere(2, 0.7);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::Matrix3d r = random_rotation(rng);
    const Vec3 t = Vec3::Random();
    std::vector<Vec3> p;
    for (const Vec3& v : s.vertices()) p.push_back(r * v + t);
    const TriMesh m = s.with_positions(p);
    CHECK(std::abs(mesh_volume(m) / mesh_volume(s) - 1.0) < 1e-10);
    CHECK(std::abs(mesh_area(m) / mesh_area(s) - 1.0) < 1e-10);
  }
}

TEST_CASE("average edge length matches a brute-force count") {
  const TriMesh s = icosphere(2, 1.3);
  CHECK(s.average_edge_length() == doctest::Approx(brute_average_edge(s)).epsilon(1e-13));
}

TEST_CASE("geodesic neighborhood on a grid") {
  const double h = 0.1;
  const TriMesh g = grid(6, 6, h);
  const int c = 3 + 7 * 3;
  // The triangulation adds one diagonal per cell (length h*sqrt(2) < 1.5h),
  // so the 1.5h ball is exactly the one-ring: 4 axis neighbors plus the 2
  // diagonal ones joined by an edge. The other two diagonals are 2h away.
  const auto n = geodesic_neighborhood(g, c, 1.5 * h);
  CHECK(n == g.one_ring()[c]);
  CHECK(n.size() == 6);
  CHECK(std::find(n.begin(), n.end(), c - 7 + 1) == n.end());
  CHECK(std::find(n.begin(), n.end(), c + 7 - 1) == n.end());
  CHECK(geodesic_neighborhood(g, c, 0.99 * h).empty());
  CHECK(geodesic_neighborhood(g, c, 100.0).size() == g.vertex_count() - 1);
}

TEST_CASE("geodesic neighborhoods are symmetric") {
  const TriMesh s = icosphere(2, 1.0);
  const double radius = 2.5 * s.average_edge_length();
  const auto all = geodesic_neighborhoods(s, radius);
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (int j : all[i]) {
      CHECK(std::binary_search(all[j].begin(), all[j].end(), static_cast<int>(i)));
    }
  }
}

TEST_CASE("self intersection") {
  CHECK_FALSE(self_intersects(icosphere(2, 1.0)));
  // Two tetrahedra, the second shifted into the first.
  const TriMesh a = regular_tetrahedron();
  std::vector<Vec3> v = a.vertices();
  std::vector<Face> f = a.faces();
  for (const Vec3& p : a.vertices()) v.push_back(p + Vec3(0.2, 0.05, 0.1));
  for (const Face& x : a.faces()) f.push_back({x[0] + 4, x[1] + 4, x[2] + 4});
  CHECK(self_intersects(TriMesh(v, f)));
  // Shared edge only.
  const TriMesh two({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0.3}}, {{0, 1, 2}, {1, 3, 2}});
  CHECK_FALSE(self_intersects(two));
}

TEST_CASE("triangle pair tests") {
  const Vec3 a0(0, 0, 0), a1(1, 0, 0), a2(0, 1, 0);
  CHECK(triangles_intersect(a0, a1, a2, {0.2, 0.2, -1}, {0.2, 0.2, 1}, {0.3, 0.3, 1}));
  CHECK_FALSE(triangles_intersect(a0, a1, a2, {0, 0, 0.1}, {1, 0, 0.1}, {0, 1, 0.1}));
  // Coplanar overlap.
  CHECK(triangles_intersect(a0, a1, a2, {0.1, 0.1, 0}, {2, 0.1, 0}, {0.1, 2, 0}));
}

TEST_CASE("vertex distances") {
  const TriMesh s = icosphere(1, 1.0);
  auto d = mean_max_vertex_distance(s, s);
  CHECK(d.mean == 0.0);
  CHECK(d.max == 0.0);
  std::vector<Vec3> p = s.vertices();
  for (Vec3& x : p) x += Vec3(0.01, 0, 0);
  d = mean_max_vertex_distance(s.with_positions(p), s);
  CHECK(d.mean == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(d.max == doctest::Approx(0.01).epsilon(1e-12));

  std::vector<Vec3> a(100, Vec3::Zero()), b(100, Vec3::Zero());
  a[17] = Vec3(0, 0.05, 0);
  const auto e = mean_max_vertex_distance(std::span<const Vec3>(a), std::span<const Vec3>(b));
  CHECK(e.mean == doctest::Approx(5e-4).epsilon(1e-12));
  CHECK(e.max == doctest::Approx(0.05).epsilon(1e-12));
  const std::vector<int> subset = {1, 2, 3};
  CHECK(mean_max_vertex_distance(std::span<const Vec3>(a), std::span<const Vec3>(b),
                                 std::span<const int>(subset)).max == 0.0);
}

TEST_CASE("simplify: already at target is the identity") {
  const TriMesh s = icosphere(1, 1.0);
  const SimplifyResult r = simplify_level(s, static_cast<int>(s.vertex_count()));
  CHECK(r.mesh.vertex_count() == s.vertex_count());
  CHECK(r.reached_target);
  for (std::size_t i = 0; i < s.vertex_count(); ++i) CHECK(r.vertex_map[i] == static_cast<int>(i));
}

TEST_CASE("simplify: planar patch stays planar") {
  const TriMesh g = grid(16, 16, 0.05);
  const int target = static_cast<int>(g.vertex_count()) / 2;
  const SimplifyResult r = simplify_level(g, target);
  CHECK(r.mesh.vertex_count() == static_cast<std::size_t>(target));
  for (const Vec3& p : r.mesh.vertices()) CHECK(std::abs(p.z()) < 1e-9);
  CHECK_FALSE(self_intersects(r.mesh));
}

TEST_CASE("simplify: impossible target is flagged") {
  const SimplifyResult r = simplify_level(regular_tetrahedron(), 4);
  CHECK(r.reached_target);
  CHECK_THROWS_AS(simplify_level(regular_tetrahedron(), 3), GeometryError);
  // Two separate tetrahedra: collapsing any edge would flatten one of them.
  const TriMesh t = regular_tetrahedron();
  std::vector<Vec3> v = t.vertices();
  std::vector<Face> f = t.faces();
  for (const Vec3& p : t.vertices()) v.push_back(p + Vec3(5, 0, 0));
  for (const Face& x : t.faces()) f.push_back({x[0] + 4, x[1] + 4, x[2] + 4});
  const SimplifyResult o = simplify_level(TriMesh(v, f), 4);
  CHECK_FALSE(o.reached_target);
  CHECK(o.mesh.vertex_count() == 8);
}

TEST_CASE("simplify: output never self-intersects and maps are consistent") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-0.03, 0.03);
  const TriMesh s = icosphere(3, 1.0);
  std::vector<Vec3> p = s.vertices();
  for (Vec3& x : p) x *= 1.0 + u(rng);
  const TriMesh bumpy = s.with_positions(p);
  const SimplifyResult r = simplify_level(bumpy, 200);
  CHECK(r.mesh.vertex_count() == 200);
  CHECK_FALSE(self_intersects(r.mesh));
  CHECK(r.mesh.watertight());
  for (std::size_t i = 0; i < r.source_index.size(); ++i) CHECK(r.vertex_map[r.source_index[i]] == static_cast<int>(i));
}

TEST_CASE("hierarchy sizes follow the halving rule") {
  const TriMesh small = icosphere(3, 1.0);  // 642 vertices
  CHECK(build_hierarchy(small).size() == 1);

  const TriMesh s = icosphere(4, 1.0);  // 2562 vertices
  const ResolutionHierarchy h = build_hierarchy(s);
  REQUIRE(h.size() == 2);
  CHECK(h.levels[0].mesh.vertex_count() == 1281);
  CHECK(h.levels[1].mesh.vertex_count() == 2562);
  CHECK(h.coarsest().coarser_index.empty());
}

TEST_CASE("hierarchy maps compose") {
  const TriMesh s = icosphere(4, 1.0);
  HierarchyOptions o;
  o.base_vertex_count = 300;
  const ResolutionHierarchy h = build_hierarchy(s, o);
  REQUIRE(h.size() >= 3);
  for (std::size_t l = 0; l < h.size(); ++l) {
    const auto& lv = h.levels[l];
    CHECK_FALSE(self_intersects(lv.mesh));
    for (int f : lv.finest_index) CHECK((f >= 0 && f < static_cast<int>(s.vertex_count())));
    if (l == 0) continue;
    // Every coarse vertex appears in this level.
    const auto& prev = h.levels[l - 1];
    std::vector<int> seen(prev.mesh.vertex_count(), 0);
    for (std::size_t i = 0; i < lv.mesh.vertex_count(); ++i) {
      const int c = lv.coarser_index[i];
      if (c < 0) continue;
      ++seen[c];
      CHECK(prev.finest_index[c] == lv.finest_index[i]);
    }
    for (int k : seen) CHECK(k == 1);
  }
}
