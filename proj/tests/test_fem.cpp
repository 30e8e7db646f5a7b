#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>

#include <Eigen/Dense>

#include "fetrack/fem.hpp"
#include "fetrack/tet_io.hpp"
#include "support.hpp"

using namespace fetrack;
using namespace testing;

namespace {

// Linear elastic energy of one tet from its nodal displacements, computed
// from the displacement gradient directly (no B matrix).
double tet_energy(const std::array<Vec3, 4>& x, const std::array<Vec3, 4>& u, double lambda, double mu) {
  Eigen::Matrix3d dx, du;
  for (int c = 0; c < 3; ++c) {
    dx.col(c) = x[c + 1] - x[0];
    du.col(c) = u[c + 1] - u[0];
  }
  const Eigen::Matrix3d g = du * dx.inverse();
  const Eigen::Matrix3d eps = 0.5 * (g + g.transpose());
  const double w = mu * (eps.array() * eps.array()).sum() + 0.5 * lambda * eps.trace() * eps.trace();
  return std::abs(dx.determinant()) / 6.0 * w;
}

Eigen::MatrixXd dense(const SpMat& k) { return Eigen::MatrixXd(k); }

double inf_norm(const Eigen::MatrixXd& k) { return k.cwiseAbs().rowwise().sum().maxCoeff(); }

VecX translation(Eigen::Index dofs, const Vec3& t) {
  VecX u(dofs);
  for (Eigen::Index i = 0; i < dofs / 3; ++i) u.segment<3>(3 * i) = t;
  return u;
}

const Material kTable1{5.999e4, 0.35};

}  // namespace

TEST_CASE("lattice mesh is valid and well shaped") {
  const TetMesh m = lattice_tet_mesh(6, 2, 2, Vec3(3, 1, 1));
  CHECK(m.node_count() == 7 * 3 * 3);
  CHECK(m.tets.size() == 6u * 24u);
  double vol = 0.0;
  for (const Tet& t : m.tets) {
    const double v = tet_signed_volume(m.nodes[t[0]], m.nodes[t[1]], m.nodes[t[2]], m.nodes[t[3]]);
    CHECK(v > 1e-14);
    vol += v;
  }
  CHECK(vol == doctest::Approx(3.0));
  // Every node of a 6x2x2 lattice except the middle line is on the surface.
  CHECK(m.surface_nodes.size() == m.node_count() - 5);
  CHECK(m.surface_mesh().watertight());
}

TEST_CASE("build errors") {
  std::vector<Vec3> n = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  CHECK_THROWS_AS(TetMesh::build(n, {{0, 1, 2, 4}}), FemError);
  CHECK_THROWS_AS(TetMesh::build(n, {{0, 1, 2, 2}}), FemError);
  // Negative orientation is fixed up.
  const TetMesh m = TetMesh::build(n, {{0, 2, 1, 3}});
  const Tet& t = m.tets[0];
  CHECK(tet_signed_volume(m.nodes[t[0]], m.nodes[t[1]], m.nodes[t[2]], m.nodes[t[3]]) > 0.0);
  CHECK(m.surface_faces.size() == 4u);
}

TEST_CASE("radius-edge ratio") {
  const TriMesh r = regular_tetrahedron();
  const auto& v = r.vertices();
  // Circumradius of a unit regular tet is sqrt(6)/4.
  CHECK(radius_edge_ratio(v[0], v[1], v[2], v[3]) == doctest::Approx(std::sqrt(6.0) / 4.0));
  CHECK(lattice_tet_mesh(3, 3, 3, Vec3(1, 1, 1)).radius_edge_violations(2.0) == 0);
}

TEST_CASE("K matches a finite-difference energy oracle on one tet") {
  const TriMesh r = regular_tetrahedron();
  std::vector<Vec3> nodes(r.vertices().begin(), r.vertices().end());
  const TetMesh m = TetMesh::build(nodes, {{0, 1, 2, 3}});
  std::array<Vec3, 4> x;
  for (int i = 0; i < 4; ++i) x[i] = m.nodes[m.tets[0][i]];
  for (const Material& mat : {Material{1.0, 0.0}, Material{1.0, 0.3}}) {
    const Eigen::MatrixXd k = dense(assemble_stiffness(m, mat).K());
    const double h = 1e-3;
    auto energy = [&](const VecX& uv) {
      std::array<Vec3, 4> u;
      for (int i = 0; i < 4; ++i) u[i] = uv.segment<3>(3 * m.tets[0][i]);
      return tet_energy(x, u, mat.lambda(), mat.mu());
    };
    double worst = 0.0;
    for (int a = 0; a < 12; ++a) {
      for (int b = 0; b < 12; ++b) {
        VecX e = VecX::Zero(12);
        auto at = [&](double sa, double sb) {
          VecX u = e;
          u[a] += sa * h;
          u[b] += sb * h;
          return energy(u);
        };
        const double fd = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * h * h);
        worst = std::max(worst, std::abs(fd - k(a, b)));
      }
    }
    CHECK(worst < 1e-8 * inf_norm(k));
  }
}

TEST_CASE("symmetry, null space and spectrum") {
  const TetMesh m = lattice_tet_mesh(6, 2, 2, Vec3(3, 1, 1));
  const Eigen::MatrixXd k = dense(assemble_stiffness(m, kTable1).K());
  const double kn = inf_norm(k);
  CHECK((k - k.transpose()).cwiseAbs().maxCoeff() <= 1e-9 * kn);
  for (const Vec3& t : {Vec3(1, 1, 1), Vec3(1, 0, 0), Vec3(0, -2, 0.5)}) {
    CHECK((k * translation(k.rows(), t)).cwiseAbs().maxCoeff() <= 1e-9 * kn);
  }
  // Linearized rotation about an arbitrary axis.
  VecX rot(k.rows());
  const Vec3 w(0.3, -0.7, 0.2);
  for (std::size_t i = 0; i < m.node_count(); ++i) rot.segment<3>(3 * i) = w.cross(m.nodes[i]);
  CHECK((k * rot).cwiseAbs().maxCoeff() <= 1e-9 * kn);

  const VecX ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(k, Eigen::EigenvaluesOnly).eigenvalues();
  const double k2 = ev.cwiseAbs().maxCoeff();
  for (int i = 0; i < 6; ++i) CHECK(std::abs(ev[i]) <= 1e-8 * k2);
  CHECK(ev[6] > 1e-6 * k2);
}

TEST_CASE("energy is non-negative") {
  const TetMesh m = lattice_tet_mesh(3, 2, 2, Vec3(1.5, 1, 1));
  const SpMat k = assemble_stiffness(m, Material{2.0, 0.45}).K();
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 100; ++trial) {
    VecX u(k.rows());
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = n(rng);
    CHECK(u.dot(k * u) >= -1e-12 * u.squaredNorm());
  }
}

TEST_CASE("linearity in E and the lambda/mu split") {
  const TetMesh m = lattice_tet_mesh(4, 2, 1, Vec3(2, 1, 0.5));
  const Eigen::MatrixXd k1 = dense(assemble_stiffness(m, Material{3.0, 0.2}).K());
  const Eigen::MatrixXd k2 = dense(assemble_stiffness(m, Material{6.0, 0.2}).K());
  CHECK((k2 - 2.0 * k1).cwiseAbs().maxCoeff() <= 1e-12 * inf_norm(k2));
  const StiffnessBasis b = assemble_basis(m);
  for (const Material& mat : {kTable1, Material{1.0, 0.49}, Material{7.0, 0.0}}) {
    const Eigen::MatrixXd k = dense(assemble_stiffness(m, mat).K());
    const Eigen::MatrixXd split = mat.lambda() * dense(b.k_lambda) + mat.mu() * dense(b.k_mu);
    CHECK((k - split).cwiseAbs().maxCoeff() <= 1e-12 * inf_norm(k));
  }
  const Material back = Material::from_lame(kTable1.lambda(), kTable1.mu());
  CHECK(back.E == doctest::Approx(kTable1.E));
  CHECK(back.nu == doctest::Approx(kTable1.nu));
}

TEST_CASE("A2") {
  const TetMesh m = lattice_tet_mesh(3, 2, 2, Vec3(1.5, 1, 1));
  const StiffnessSystem sys = assemble_stiffness(m, kTable1);
  CHECK(sys.forces(VecX::Zero(sys.dofs())).norm() == 0.0);
  const Eigen::MatrixXd k = dense(sys.K());
  CHECK(sys.forces(translation(sys.dofs(), Vec3(1, 2, 3))).cwiseAbs().maxCoeff() <= 1e-9 * inf_norm(k));
  const VecX u = VecX::Random(sys.dofs());
  const VecX f = sys.forces(u), fd = k * u;
  CHECK((f - fd).cwiseAbs().maxCoeff() <= 1e-10 * fd.cwiseAbs().maxCoeff());
}

TEST_CASE("A3 round trip through A2") {
  const int nx = 6;
  const TetMesh m = lattice_tet_mesh(nx, 2, 2, Vec3(3, 1, 1));
  const StiffnessSystem sys = assemble_stiffness(m, kTable1);
  std::vector<int> fixed;
  std::vector<Vec3> zero;
  VecX f = VecX::Zero(sys.dofs());
  std::vector<int> pulled;
  for (std::size_t i = 0; i < m.node_count(); ++i) {
    if (m.nodes[i].x() == 0.0) {
      fixed.push_back(static_cast<int>(i));
      zero.push_back(Vec3::Zero());
    } else if (m.nodes[i].x() == 3.0) {
      f.segment<3>(3 * i) = Vec3(100.0, 0.0, -50.0);
      pulled.push_back(static_cast<int>(i));
    }
  }
  const VecX u = sys.solve(fixed, zero, f);
  CHECK(u.norm() > 0.0);
  const VecX back = sys.forces(u);
  double worst = 0.0;
  std::vector<char> is_fixed(m.node_count(), 0);
  for (int i : fixed) is_fixed[i] = 1;
  for (std::size_t i = 0; i < m.node_count(); ++i) {
    if (!is_fixed[i]) worst = std::max(worst, (back.segment<3>(3 * i) - f.segment<3>(3 * i)).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-8 * f.cwiseAbs().maxCoeff());
  // Net pull in +x stretches the bar (bending tilts individual nodes).
  double mean_x = 0.0;
  for (int i : pulled) mean_x += u[3 * i];
  CHECK(mean_x > 0.0);
}

TEST_CASE("A3 fixed nodes, null-space completion and errors") {
  const TetMesh m = lattice_tet_mesh(3, 2, 2, Vec3(1.5, 1, 1));
  const StiffnessSystem sys = assemble_stiffness(m, Material{1.0, 0.3});
  const VecX nof = VecX::Zero(sys.dofs());

  // All fixed at zero.
  std::vector<int> all(m.node_count());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  CHECK(sys.solve(all, std::vector<Vec3>(all.size(), Vec3::Zero()), nof).norm() == 0.0);

  // Rigid translation on three corners extends everywhere.
  const Vec3 t(0.1, -0.2, 0.05);
  const std::vector<int> corners = {0, 3, 3 * 4 * 2 + 0};
  const VecX u = sys.solve(corners, std::vector<Vec3>(3, t), nof);
  CHECK((u - translation(sys.dofs(), t)).cwiseAbs().maxCoeff() < 1e-10);

  // Prescribed values come back bit-exact.
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  std::vector<int> fixed;
  std::vector<Vec3> disp;
  for (std::size_t i = 0; i < m.node_count(); i += 5) {
    fixed.push_back(static_cast<int>(i));
    disp.emplace_back(n(rng), n(rng), n(rng));
  }
  VecX f(sys.dofs());
  for (Eigen::Index i = 0; i < f.size(); ++i) f[i] = n(rng);
  const VecX v = sys.solve(fixed, disp, f);
  for (std::size_t k = 0; k < fixed.size(); ++k) CHECK(v.segment<3>(3 * fixed[k]) == disp[k]);
  // Cached factorization gives the same answer.
  CHECK(sys.solve(fixed, disp, f) == v);

  CHECK_THROWS_AS(sys.solve(std::vector<int>{0, 1}, std::vector<Vec3>(2, Vec3::Zero()), nof), FemError);
  CHECK_THROWS_AS(sys.solve(std::vector<int>{0, 1, 2}, std::vector<Vec3>(3, Vec3::Zero()), nof), FemError);
  CHECK_THROWS_AS(sys.solve(std::vector<int>{0, 0, 5}, std::vector<Vec3>(3, Vec3::Zero()), nof), FemError);
}

TEST_CASE("A1 round trip, scaling and degeneracy") {
  const TetMesh m = lattice_tet_mesh(6, 2, 2, Vec3(3, 1, 1));
  const StiffnessSystem sys = assemble_stiffness(m, kTable1);
  std::vector<int> fixed;
  VecX f = VecX::Zero(sys.dofs());
  for (std::size_t i = 0; i < m.node_count(); ++i) {
    if (m.nodes[i].x() == 0.0) fixed.push_back(static_cast<int>(i));
    if (m.nodes[i].x() == 3.0) f.segment<3>(3 * i) = Vec3(0.0, 1.0, 0.3);
  }
  const VecX u = sys.solve(fixed, std::vector<Vec3>(fixed.size(), Vec3::Zero()), f);
  const VecX fall = sys.forces(u);
  std::vector<int> known(m.node_count());
  for (std::size_t i = 0; i < known.size(); ++i) known[i] = static_cast<int>(i);
  const Material est = estimate_material(sys.basis(), u, known, fall);
  CHECK(std::abs(est.E / kTable1.E - 1.0) <= 1e-6);
  CHECK(std::abs(est.nu / kTable1.nu - 1.0) <= 1e-6);
  CHECK_FALSE(est.clamped);

  for (double c : {0.5, 3.0, 1e4}) {
    const Material sc = estimate_material(sys.basis(), u, known, c * fall);
    CHECK(sc.E == doctest::Approx(c * est.E).epsilon(1e-12));
    CHECK(std::abs(sc.nu - est.nu) <= 1e-10);
  }

  CHECK_THROWS_AS(estimate_material(sys.basis(), translation(sys.dofs(), Vec3(1, 0, 0)), known, fall),
                  DegenerateEstimate);
  CHECK_THROWS_AS(estimate_material(sys.basis(), VecX::Zero(sys.dofs()), known, fall), DegenerateEstimate);
}

TEST_CASE("A1 clamps nu") {
  const TetMesh m = lattice_tet_mesh(3, 2, 2, Vec3(1.5, 1, 1));
  const StiffnessBasis b = assemble_basis(m);
  std::vector<int> known(m.node_count());
  for (std::size_t i = 0; i < known.size(); ++i) known[i] = static_cast<int>(i);
  const VecX u = VecX::Random(b.dofs());
  // Forces from a material with nu far above the bound.
  const double lambda = 100.0, mu = 1.0;
  const VecX f = lambda * (b.k_lambda * u) + mu * (b.k_mu * u);
  const Material est = estimate_material(b, u, known, f);
  CHECK(est.clamped);
  CHECK(est.nu == kNuMax);
  CHECK(est.E > 0.0);
}

TEST_CASE("embedding") {
  const TetMesh m = lattice_tet_mesh(3, 2, 2, Vec3(1.5, 1, 1));
  std::vector<Vec3> on_nodes;
  for (int i : m.surface_nodes) on_nodes.push_back(m.nodes[i]);
  const auto emb = embed_template(on_nodes, m);
  const auto back = evaluate_embedding(emb, m);
  for (std::size_t k = 0; k < on_nodes.size(); ++k) {
    CHECK((back[k] - on_nodes[k]).norm() < 1e-12);
    CHECK(emb[k].bary.maxCoeff() == doctest::Approx(1.0));
  }

  // Points near the surface: TP is within the closest-point distance.
  std::vector<Vec3> near = {Vec3(0.7, 0.5, 1.02), Vec3(-0.01, 0.3, 0.4), Vec3(1.2, 1.05, 0.9)};
  const auto e2 = embed_template(near, m);
  const auto tp = evaluate_embedding(e2, m);
  CHECK((tp[0] - Vec3(0.7, 0.5, 1.0)).norm() < 1e-12);
  CHECK((tp[1] - Vec3(0.0, 0.3, 0.4)).norm() < 1e-12);
  CHECK((tp[2] - Vec3(1.2, 1.0, 0.9)).norm() < 1e-12);

  // Translating the tet translates TP exactly.
  const Vec3 t(0.25, -1.0, 3.0);
  std::vector<Vec3> moved = m.nodes;
  for (Vec3& p : moved) p += t;
  const auto tp2 = evaluate_embedding(e2, m.with_nodes(moved));
  for (std::size_t k = 0; k < tp.size(); ++k) CHECK((tp2[k] - (tp[k] + t)).norm() < 1e-12);
}

TEST_CASE("surface node matching") {
  const TetMesh m = lattice_tet_mesh(2, 2, 2, Vec3(1, 1, 1));
  std::vector<Vec3> verts;
  for (auto it = m.surface_nodes.rbegin(); it != m.surface_nodes.rend(); ++it) verts.push_back(m.nodes[*it]);
  const auto map = match_surface_nodes(m, verts, 1e-9);
  for (std::size_t i = 0; i < m.node_count(); ++i) {
    if (m.surface[i]) {
      REQUIRE(map[i] >= 0);
      CHECK(verts[map[i]] == m.nodes[i]);
    } else {
      CHECK(map[i] == -1);
    }
  }
  verts.pop_back();
  CHECK_THROWS_AS(match_surface_nodes(m, verts, 1e-9), FemError);
}

TEST_CASE(".node/.ele round trip") {
  const TetMesh m = lattice_tet_mesh(2, 1, 1, Vec3(2, 1, 1), Vec3(0.5, 0, -1));
  const auto dir = scratch_dir("tetio");
  save_tet_mesh(m, dir / "bar");
  const TetMesh r = load_tet_mesh(dir / "bar");
  CHECK(r.nodes == m.nodes);
  CHECK(r.tets == m.tets);

  // 0-based input with comments and extra attributes.
  {
    std::ofstream n(dir / "z.node");
    n << "# nodes\n4 3 1 0\n0 0 0 0 7\n1 1 0 0 7\n2 0 1 0 7\n3 0 0 1 7\n";
    std::ofstream e(dir / "z.ele");
    e << "1 4 0\n0 0 1 2 3\n";
  }
  const TetMesh z = load_tet_mesh(dir / "z");
  CHECK(z.node_count() == 4u);
  CHECK(z.tets.size() == 1u);
  CHECK_THROWS(load_tet_mesh(dir / "missing"));
}
