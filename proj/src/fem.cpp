#include "fetrack/fem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "fetrack/correspond.hpp"
#include "fetrack/parallel.hpp"

namespace fetrack {

double tet_signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

double radius_edge_ratio(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  const Vec3 u = b - a, v = c - a, w = d - a;
  const double den = 2.0 * u.dot(v.cross(w));
  if (den == 0.0) return std::numeric_limits<double>::infinity();
  const Vec3 center = (u.squaredNorm() * v.cross(w) + v.squaredNorm() * w.cross(u) + w.squaredNorm() * u.cross(v)) / den;
  const double shortest = std::min({u.norm(), v.norm(), w.norm(), (c - b).norm(), (d - b).norm(), (d - c).norm()});
  return center.norm() / shortest;
}

TetMesh TetMesh::build(std::vector<Vec3> nodes, std::vector<Tet> tets) {
  TetMesh m;
  m.nodes = std::move(nodes);
  m.tets = std::move(tets);
  const int n = static_cast<int>(m.nodes.size());
  for (std::size_t t = 0; t < m.tets.size(); ++t) {
    Tet& e = m.tets[t];
    for (int v : e) {
      if (v < 0 || v >= n) throw FemError("tet " + std::to_string(t) + ": node index out of range");
    }
    const double vol = tet_signed_volume(m.nodes[e[0]], m.nodes[e[1]], m.nodes[e[2]], m.nodes[e[3]]);
    if (std::abs(vol) < 1e-14) throw FemError("tet " + std::to_string(t) + ": degenerate volume");
    if (vol < 0.0) std::swap(e[2], e[3]);
  }

  std::map<std::array<int, 3>, std::pair<int, Face>> count;
  for (const Tet& e : m.tets) {
    const Face fs[4] = {{e[1], e[2], e[3]}, {e[0], e[3], e[2]}, {e[0], e[1], e[3]}, {e[0], e[2], e[1]}};
    for (const Face& f : fs) {
      std::array<int, 3> key = f;
      std::sort(key.begin(), key.end());
      auto [it, inserted] = count.try_emplace(key, 0, f);
      ++it->second.first;
    }
  }
  m.surface.assign(m.nodes.size(), 0);
  for (const auto& [key, v] : count) {
    if (v.first > 2) throw FemError("tet mesh is not manifold: a face is shared by more than two tets");
    if (v.first == 1) {
      m.surface_faces.push_back(v.second);
      for (int i : v.second) m.surface[i] = 1;
    }
  }
  for (int i = 0; i < n; ++i) {
    if (m.surface[i]) m.surface_nodes.push_back(i);
  }
  return m;
}

TetMesh TetMesh::with_nodes(std::vector<Vec3> moved) const {
  if (moved.size() != nodes.size()) throw FemError("TetMesh::with_nodes: node count mismatch");
  TetMesh m = *this;
  m.nodes = std::move(moved);
  return m;
}

int TetMesh::radius_edge_violations(double limit) const {
  int bad = 0;
  for (const Tet& e : tets) {
    if (radius_edge_ratio(nodes[e[0]], nodes[e[1]], nodes[e[2]], nodes[e[3]]) > limit) ++bad;
  }
  return bad;
}

TriMesh TetMesh::surface_mesh() const {
  std::vector<int> local(nodes.size(), -1);
  std::vector<Vec3> v;
  for (int i : surface_nodes) {
    local[i] = static_cast<int>(v.size());
    v.push_back(nodes[i]);
  }
  std::vector<Face> f;
  f.reserve(surface_faces.size());
  for (const Face& s : surface_faces) f.push_back({local[s[0]], local[s[1]], local[s[2]]});
  return TriMesh(std::move(v), std::move(f));
}

TetMesh lattice_tet_mesh(int nx, int ny, int nz, const Vec3& extent, const Vec3& origin) {
  if (nx < 1 || ny < 1 || nz < 1) throw FemError("lattice_tet_mesh: cell counts must be positive");
  const Vec3 h(extent.x() / nx, extent.y() / ny, extent.z() / nz);
  auto id = [&](int i, int j, int k) { return i + (nx + 1) * (j + (ny + 1) * k); };
  std::vector<Vec3> nodes;
  nodes.reserve(static_cast<std::size_t>((nx + 1) * (ny + 1) * (nz + 1)));
  for (int k = 0; k <= nz; ++k) {
    for (int j = 0; j <= ny; ++j) {
      for (int i = 0; i <= nx; ++i) nodes.push_back(origin + Vec3(i * h.x(), j * h.y(), k * h.z()));
    }
  }
  static const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  std::vector<Tet> tets;
  tets.reserve(static_cast<std::size_t>(6 * nx * ny * nz));
  for (int k = 0; k < nz; ++k) {
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        for (const auto& p : perms) {
          // Monotone lattice path from the low to the high corner.
          std::array<int, 3> c = {i, j, k};
          Tet t;
          t[0] = id(c[0], c[1], c[2]);
          for (int s = 0; s < 3; ++s) {
            ++c[p[s]];
            t[s + 1] = id(c[0], c[1], c[2]);
          }
          tets.push_back(t);
        }
      }
    }
  }
  return TetMesh::build(std::move(nodes), std::move(tets));
}

Material Material::from_lame(double lambda, double mu) {
  Material m;
  m.E = mu * (3.0 * lambda + 2.0 * mu) / (lambda + mu);
  m.nu = lambda / (2.0 * (lambda + mu));
  return m;
}

namespace {

using Mat6x12 = Eigen::Matrix<double, 6, 12>;
using Mat12 = Eigen::Matrix<double, 12, 12>;

// Strain-displacement matrix (Voigt order xx, yy, zz, xy, yz, zx with
// engineering shears) and the tet volume.
Mat6x12 strain_matrix(const Vec3& x0, const Vec3& x1, const Vec3& x2, const Vec3& x3, double& volume) {
  Eigen::Matrix3d d;
  d.col(0) = x1 - x0;
  d.col(1) = x2 - x0;
  d.col(2) = x3 - x0;
  volume = d.determinant() / 6.0;
  if (!(volume > 0.0)) throw FemError("inverted or degenerate tet");
  const Eigen::Matrix3d inv = d.inverse();
  std::array<Vec3, 4> g;
  g[1] = inv.row(0).transpose();
  g[2] = inv.row(1).transpose();
  g[3] = inv.row(2).transpose();
  g[0] = -(g[1] + g[2] + g[3]);
  Mat6x12 b = Mat6x12::Zero();
  for (int k = 0; k < 4; ++k) {
    const int c = 3 * k;
    b(0, c) = g[k].x();
    b(1, c + 1) = g[k].y();
    b(2, c + 2) = g[k].z();
    b(3, c) = g[k].y();
    b(3, c + 1) = g[k].x();
    b(4, c + 1) = g[k].z();
    b(4, c + 2) = g[k].y();
    b(5, c) = g[k].z();
    b(5, c + 2) = g[k].x();
  }
  return b;
}

}  // namespace

StiffnessBasis assemble_basis(const TetMesh& tet) {
  using Triplet = Eigen::Triplet<double>;
  const std::size_t ne = tet.tets.size();
  const std::size_t chunks = chunk_count(ne);
  std::vector<std::vector<Triplet>> tl(chunks), tm(chunks);
  Eigen::Matrix<double, 6, 1> m;
  m << 1, 1, 1, 0, 0, 0;
  Eigen::Matrix<double, 6, 1> dmu;
  dmu << 2, 2, 2, 1, 1, 1;

  for (std::size_t c = 0; c < chunks; ++c) {
    tl[c].reserve(144 * (ne / chunks + 1));
    tm[c].reserve(144 * (ne / chunks + 1));
  }
  parallel_for(ne, [&](std::size_t begin, std::size_t end) {
    std::size_t c = 0;
    while (chunk_range(ne, c).first != begin) ++c;
    for (std::size_t e = begin; e < end; ++e) {
      const Tet& t = tet.tets[e];
      double vol = 0.0;
      const Mat6x12 b = strain_matrix(tet.nodes[t[0]], tet.nodes[t[1]], tet.nodes[t[2]], tet.nodes[t[3]], vol);
      const Eigen::Matrix<double, 1, 12> mb = m.transpose() * b;
      const Mat12 kl = vol * mb.transpose() * mb;
      const Mat12 km = vol * b.transpose() * dmu.asDiagonal() * b;
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
          for (int a = 0; a < 3; ++a) {
            for (int bb = 0; bb < 3; ++bb) {
              const int r = 3 * t[i] + a, col = 3 * t[j] + bb;
              tl[c].emplace_back(r, col, kl(3 * i + a, 3 * j + bb));
              tm[c].emplace_back(r, col, km(3 * i + a, 3 * j + bb));
            }
          }
        }
      }
    }
  });
  std::vector<Triplet> all_l, all_m;
  for (std::size_t c = 0; c < chunks; ++c) {
    all_l.insert(all_l.end(), tl[c].begin(), tl[c].end());
    all_m.insert(all_m.end(), tm[c].begin(), tm[c].end());
  }
  const Eigen::Index n = 3 * static_cast<Eigen::Index>(tet.nodes.size());
  StiffnessBasis basis;
  basis.k_lambda.resize(n, n);
  basis.k_mu.resize(n, n);
  basis.k_lambda.setFromTriplets(all_l.begin(), all_l.end());
  basis.k_mu.setFromTriplets(all_m.begin(), all_m.end());
  basis.nodes = tet.nodes;
  return basis;
}

struct StiffnessSystem::Factor {
  std::vector<int> fixed;          // sorted
  std::vector<Eigen::Index> free;  // free dofs
  Eigen::SimplicialLDLT<SpMat> ldlt;
};

StiffnessSystem::StiffnessSystem(std::shared_ptr<const StiffnessBasis> basis, const Material& mat)
    : basis_(std::move(basis)), mat_(mat) {
  if (!(mat.E > 0.0) || !(mat.nu > -1.0 && mat.nu < 0.5)) throw FemError("invalid material");
  k_ = basis_->assemble(mat);
}

StiffnessSystem assemble_stiffness(const TetMesh& tet, const Material& mat) {
  return StiffnessSystem(std::make_shared<StiffnessBasis>(assemble_basis(tet)), mat);
}

VecX compute_forces(const SpMat& k, const VecX& u) {
  if (u.size() != k.cols()) throw FemError("compute_forces: dimension mismatch");
  return k * u;
}

VecX StiffnessSystem::forces(const VecX& u) const { return compute_forces(k_, u); }

VecX StiffnessSystem::solve(std::span<const int> fixed, std::span<const Vec3> fixed_disp, const VecX& forces) const {
  const Eigen::Index n = dofs();
  const int nodes = static_cast<int>(n / 3);
  if (fixed.size() != fixed_disp.size()) throw FemError("A3: fixed node and displacement counts differ");
  if (forces.size() != n) throw FemError("A3: force vector has wrong size");

  std::vector<int> key(fixed.begin(), fixed.end());
  std::sort(key.begin(), key.end());
  if (std::adjacent_find(key.begin(), key.end()) != key.end()) throw FemError("A3: duplicate fixed node");
  for (int i : key) {
    if (i < 0 || i >= nodes) throw FemError("A3: fixed node out of range");
  }

  VecX u = VecX::Zero(n);
  for (std::size_t k = 0; k < fixed.size(); ++k) u.segment<3>(3 * fixed[k]) = fixed_disp[k];
  if (static_cast<int>(key.size()) == nodes) return u;

  // Three or more non-collinear fixed nodes remove all rigid modes.
  {
    if (key.size() < 3) throw FemError("A3: at least three fixed nodes are required");
    Vec3 c = Vec3::Zero();
    for (int i : key) c += basis_->nodes[i];
    c /= static_cast<double>(key.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int i : key) cov += (basis_->nodes[i] - c) * (basis_->nodes[i] - c).transpose();
    const Vec3 ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(cov).eigenvalues();
    if (!(ev(1) > 1e-20 * std::max(1.0, ev(2)) && ev(1) > 1e-12 * ev(2))) {
      throw FemError("A3: fixed nodes are collinear");
    }
  }

  std::shared_ptr<Factor> f;
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    if (cache_ && cache_->fixed == key) f = cache_;
  }
  if (!f) {
    f = std::make_shared<Factor>();
    f->fixed = key;
    std::vector<char> is_fixed(nodes, 0);
    for (int i : key) is_fixed[i] = 1;
    std::vector<Eigen::Index> map(n, -1);
    for (Eigen::Index d = 0; d < n; ++d) {
      if (!is_fixed[d / 3]) {
        map[d] = static_cast<Eigen::Index>(f->free.size());
        f->free.push_back(d);
      }
    }
    const Eigen::Index nf = static_cast<Eigen::Index>(f->free.size());
    std::vector<Eigen::Triplet<double>> tr;
    for (Eigen::Index c = 0; c < k_.outerSize(); ++c) {
      if (map[c] < 0) continue;
      for (SpMat::InnerIterator it(k_, c); it; ++it) {
        if (map[it.row()] >= 0) tr.emplace_back(map[it.row()], map[c], it.value());
      }
    }
    SpMat kff(nf, nf);
    kff.setFromTriplets(tr.begin(), tr.end());
    f->ldlt.compute(kff);
    if (f->ldlt.info() != Eigen::Success) throw FemError("A3: factorization failed");
    const VecX d = f->ldlt.vectorD();
    if (!(d.minCoeff() > 1e-12 * d.cwiseAbs().maxCoeff())) throw FemError("A3: singular reduced system");
    std::lock_guard<std::mutex> lock(cache_mutex_);
    cache_ = f;
  }

  const VecX kc = k_ * u;  // u holds only the fixed part here
  VecX rhs(static_cast<Eigen::Index>(f->free.size()));
  for (std::size_t k = 0; k < f->free.size(); ++k) rhs[k] = forces[f->free[k]] - kc[f->free[k]];
  const VecX uf = f->ldlt.solve(rhs);
  if (f->ldlt.info() != Eigen::Success || !uf.allFinite()) throw FemError("A3: solve failed");
  for (std::size_t k = 0; k < f->free.size(); ++k) u[f->free[k]] = uf[k];
  return u;
}

Material estimate_material(const StiffnessBasis& basis, const VecX& u, std::span<const int> known,
                           const VecX& forces) {
  const Eigen::Index n = basis.dofs();
  if (u.size() != n || forces.size() != n) throw FemError("A1: dimension mismatch");
  const VecX al = basis.k_lambda * u;
  const VecX am = basis.k_mu * u;
  const Eigen::Index rows = 3 * static_cast<Eigen::Index>(known.size());
  if (rows < 2) throw DegenerateEstimate("A1: fewer than two residual rows");
  Eigen::MatrixXd a(rows, 2);
  VecX f(rows);
  for (std::size_t k = 0; k < known.size(); ++k) {
    for (int c = 0; c < 3; ++c) {
      const Eigen::Index src = 3 * known[k] + c, dst = 3 * static_cast<Eigen::Index>(k) + c;
      a(dst, 0) = al[src];
      a(dst, 1) = am[src];
      f[dst] = forces[src];
    }
  }

  // Scale of K u for a displacement of this size; columns far below it mean
  // u is (numerically) a rigid motion.
  double knorm = 0.0;
  for (const SpMat* k : {&basis.k_lambda, &basis.k_mu}) {
    VecX rowsum = VecX::Zero(n);
    for (Eigen::Index c = 0; c < k->outerSize(); ++c) {
      for (SpMat::InnerIterator it(*k, c); it; ++it) rowsum[it.row()] += std::abs(it.value());
    }
    knorm = std::max(knorm, rowsum.maxCoeff());
  }
  const double scale = knorm * u.cwiseAbs().maxCoeff();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const Eigen::Vector2d sv = svd.singularValues();
  if (!(sv(1) > 1e-9 * scale) || !(sv(1) > 1e-12 * sv(0))) {
    throw DegenerateEstimate("A1: rank-deficient system (displacement carries no strain information)");
  }
  const Eigen::Vector2d lm = a.colPivHouseholderQr().solve(f);
  const double lambda = lm(0), mu = lm(1);

  if (mu > 0.0 && lambda + mu > 0.0) {
    Material m = Material::from_lame(lambda, mu);
    if (m.E > 0.0 && m.nu >= kNuMin && m.nu <= kNuMax) return m;
  }

  // Outside the admissible range: refit E alone at each bound of nu and keep
  // the better of the two.
  Material best;
  double best_res = std::numeric_limits<double>::infinity();
  for (double nu : {kNuMin, kNuMax}) {
    const double cl = nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    const double cm = 1.0 / (2.0 * (1.0 + nu));
    const VecX col = cl * a.col(0) + cm * a.col(1);
    const double den = col.squaredNorm();
    if (!(den > 0.0)) continue;
    const double e = col.dot(f) / den;
    const double res = (e * col - f).squaredNorm();
    if (e > 0.0 && res < best_res) {
      best_res = res;
      best.E = e;
      best.nu = nu;
      best.clamped = true;
    }
  }
  if (!std::isfinite(best_res)) throw DegenerateEstimate("A1: no positive Young's modulus fits the data");
  return best;
}

namespace {

// Closest point on triangle abc to p, as barycentric coordinates.
Vec3 closest_barycentric(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return {1, 0, 0};
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return {0, 1, 0};
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    const double v = d1 / (d1 - d3);
    return {1 - v, v, 0};
  }
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return {0, 0, 1};
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    const double w = d2 / (d2 - d6);
    return {1 - w, 0, w};
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {0, 1 - w, w};
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return {1 - v - w, v, w};
}

}  // namespace

std::vector<EmbeddedPoint> embed_template(std::span<const Vec3> vertices, const TetMesh& tet) {
  if (tet.surface_faces.empty()) throw FemError("embed_template: tet mesh has no boundary");
  std::vector<EmbeddedPoint> out(vertices.size());
  parallel_for(vertices.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t f = 0; f < tet.surface_faces.size(); ++f) {
        const Face& s = tet.surface_faces[f];
        const Vec3 bc = closest_barycentric(vertices[i], tet.nodes[s[0]], tet.nodes[s[1]], tet.nodes[s[2]]);
        const Vec3 q = bc.x() * tet.nodes[s[0]] + bc.y() * tet.nodes[s[1]] + bc.z() * tet.nodes[s[2]];
        const double d = (q - vertices[i]).squaredNorm();
        if (d < best) {
          best = d;
          out[i] = {static_cast<int>(f), bc};
        }
      }
    }
  });
  return out;
}

std::vector<Vec3> evaluate_embedding(std::span<const EmbeddedPoint> emb, const TetMesh& tet) {
  std::vector<Vec3> out(emb.size());
  for (std::size_t i = 0; i < emb.size(); ++i) {
    const Face& s = tet.surface_faces.at(static_cast<std::size_t>(emb[i].face));
    const Vec3& w = emb[i].bary;
    out[i] = w.x() * tet.nodes[s[0]] + w.y() * tet.nodes[s[1]] + w.z() * tet.nodes[s[2]];
  }
  return out;
}

std::vector<int> match_surface_nodes(const TetMesh& tet, std::span<const Vec3> vertices, double tol) {
  const KdTree tree(std::vector<Vec3>(vertices.begin(), vertices.end()));
  std::vector<int> out(tet.nodes.size(), -1);
  for (int i : tet.surface_nodes) {
    const int v = tree.nearest(tet.nodes[i]);
    if (v < 0 || (vertices[v] - tet.nodes[i]).norm() > tol) {
      throw FemError("tet surface node " + std::to_string(i) + " has no coincident template vertex");
    }
    out[i] = v;
  }
  return out;
}

}  // namespace fetrack
