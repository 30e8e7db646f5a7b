#include "fetrack/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <stdexcept>

namespace fetrack {

std::string to_string(Shape s) {
  switch (s) {
    case Shape::Bar: return "bar";
    case Shape::Box: return "box";
    case Shape::CappedBar: return "capped_bar";
  }
  return "bar";
}

std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::None: return "none";
    case NoiseKind::Outliers: return "outliers";
    case NoiseKind::Gaussian: return "gaussian";
    case NoiseKind::Subdivision: return "subdivision";
  }
  return "none";
}

Shape shape_from_string(const std::string& s) {
  if (s == "bar") return Shape::Bar;
  if (s == "box") return Shape::Box;
  if (s == "capped_bar") return Shape::CappedBar;
  throw std::invalid_argument("unknown shape '" + s + "'");
}

NoiseKind noise_from_string(const std::string& s) {
  if (s == "none") return NoiseKind::None;
  if (s == "outliers") return NoiseKind::Outliers;
  if (s == "gaussian") return NoiseKind::Gaussian;
  if (s == "subdivision") return NoiseKind::Subdivision;
  throw std::invalid_argument("unknown noise kind '" + s + "'");
}

void SynthScenario::validate() const {
  if (frames < 1) throw std::invalid_argument("scenario: frames must be >= 1");
  if (cells < 1 || coarsen < 1) throw std::invalid_argument("scenario: cells and coarsen must be >= 1");
  if (cells % coarsen != 0) throw std::invalid_argument("scenario: cells must be a multiple of coarsen");
  if (!(material.E > 0.0) || material.nu < kNuMin || material.nu > kNuMax) {
    throw std::invalid_argument("scenario: material out of range");
  }
  if (!(rounding >= 0.0 && rounding < 1.0)) throw std::invalid_argument("scenario: rounding must be in [0, 1)");
  if (contact_cells < 0) throw std::invalid_argument("scenario: contact_cells must be >= 0");
  if (!(view_direction.norm() > 0.0) || !(force_direction.norm() > 0.0)) {
    throw std::invalid_argument("scenario: zero direction");
  }
  if (force && *force < 0.0) throw std::invalid_argument("scenario: negative force");
  if (!force && tip_displacement < 0.0) throw std::invalid_argument("scenario: negative tip displacement");
  if (noise.outlier_prob < 0.0 || noise.outlier_prob > 1.0) throw std::invalid_argument("scenario: outlier_prob");
  if (noise.sigma_frac < 0.0 || (noise.sigma && *noise.sigma < 0.0)) throw std::invalid_argument("scenario: sigma");
  if (noise.subdivision_steps < 0) throw std::invalid_argument("scenario: subdivision_steps");
}

PointCloudFrame cull_to_viewpoint(const TriMesh& mesh, const Vec3& view_dir, std::vector<char>* kept) {
  const Vec3 toward = -view_dir.normalized();
  PointCloudFrame f;
  if (kept) kept->assign(mesh.vertex_count(), 0);
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    if (mesh.normals()[i].dot(toward) > 0.0) {
      f.points.push_back(mesh.vertices()[i]);
      f.normals.push_back(mesh.normals()[i]);
      if (kept) (*kept)[i] = 1;
    }
  }
  return f;
}

PointCloudFrame add_outliers(const PointCloudFrame& frame, const Vec3& viewpoint, double r, double prob,
                             std::uint64_t seed, std::vector<double>* offsets) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_real_distribution<double> amount(-r, 4.0 * r);
  PointCloudFrame out = frame;
  if (offsets) offsets->assign(frame.size(), 0.0);
  for (std::size_t i = 0; i < frame.size(); ++i) {
    // Both draws happen for every point so the stream does not depend on prob.
    const double c = coin(rng);
    const double x = amount(rng);
    if (c >= prob) continue;
    const Vec3 v = (viewpoint - frame.points[i]).normalized();
    out.points[i] += x * v;
    if (offsets) (*offsets)[i] = x;
  }
  return out;
}

PointCloudFrame add_gaussian_noise(const PointCloudFrame& frame, double sigma, std::uint64_t seed,
                                   std::vector<double>* offsets) {
  PointCloudFrame out = frame;
  if (offsets) offsets->assign(frame.size(), 0.0);
  if (sigma <= 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const double x = n(rng);
    out.points[i] += x * frame.normals[i];
    if (offsets) (*offsets)[i] = x;
  }
  return out;
}

double gaussian_sigma(double sigma_frac, double radius) { return std::sqrt(sigma_frac * radius); }

TriMesh loop_subdivide(const TriMesh& mesh, int steps) {
  if (steps < 0) throw GeometryError("loop_subdivide: negative step count");
  TriMesh cur = mesh;
  for (int s = 0; s < steps; ++s) {
    const auto& v = cur.vertices();
    const auto& faces = cur.faces();
    const std::size_t nv = v.size();

    std::map<std::pair<int, int>, std::vector<int>> opposite;
    for (const Face& f : faces) {
      for (int k = 0; k < 3; ++k) {
        const int a = f[k], b = f[(k + 1) % 3], c = f[(k + 2) % 3];
        opposite[{std::min(a, b), std::max(a, b)}].push_back(c);
      }
    }
    std::map<std::pair<int, int>, int> edge_vertex;
    std::vector<Vec3> out(nv);
    std::vector<std::vector<int>> boundary_nbrs(nv);
    for (const auto& [e, opp] : opposite) {
      if (opp.size() > 2) throw GeometryError("loop_subdivide: non-manifold edge");
      if (opp.size() == 1) {
        boundary_nbrs[e.first].push_back(e.second);
        boundary_nbrs[e.second].push_back(e.first);
      }
    }
    for (std::size_t i = 0; i < nv; ++i) {
      if (!boundary_nbrs[i].empty()) {
        if (boundary_nbrs[i].size() != 2) throw GeometryError("loop_subdivide: non-manifold boundary vertex");
        out[i] = 0.75 * v[i] + 0.125 * (v[boundary_nbrs[i][0]] + v[boundary_nbrs[i][1]]);
        continue;
      }
      const auto& ring = cur.one_ring()[i];
      const double n = static_cast<double>(ring.size());
      const double c = 0.375 + 0.25 * std::cos(2.0 * std::numbers::pi / n);
      const double beta = (0.625 - c * c) / n;
      Vec3 sum = Vec3::Zero();
      for (int j : ring) sum += v[j];
      out[i] = (1.0 - n * beta) * v[i] + beta * sum;
    }
    for (const auto& [e, opp] : opposite) {
      Vec3 p;
      if (opp.size() == 2) {
        p = 0.375 * (v[e.first] + v[e.second]) + 0.125 * (v[opp[0]] + v[opp[1]]);
      } else {
        p = 0.5 * (v[e.first] + v[e.second]);
      }
      edge_vertex[e] = static_cast<int>(out.size());
      out.push_back(p);
    }
    std::vector<Face> nf;
    nf.reserve(4 * faces.size());
    auto mid = [&](int a, int b) { return edge_vertex.at({std::min(a, b), std::max(a, b)}); };
    for (const Face& f : faces) {
      const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      nf.push_back({f[0], ab, ca});
      nf.push_back({f[1], bc, ab});
      nf.push_back({f[2], ca, bc});
      nf.push_back({ab, bc, ca});
    }
    cur = TriMesh(std::move(out), std::move(nf));
  }
  return cur;
}

namespace {

struct Lattice {
  int nx = 0, ny = 0, nz = 0;
  int id(int i, int j, int k) const { return i + (nx + 1) * (j + (ny + 1) * k); }
};

Vec3 shape_dims(Shape s) {
  switch (s) {
    case Shape::Box: return {1.0, 1.0, 1.0};
    default: return {4.0, 1.0, 1.0};
  }
}

// Rounds the last quarter of the bar toward the tip.
void warp_cap(std::vector<Vec3>& nodes, const Vec3& extent) {
  const double x_cap = 0.75 * extent.x();
  const Vec3 c = 0.5 * extent;
  for (Vec3& p : nodes) {
    const double s = std::clamp((p.x() - x_cap) / (extent.x() - x_cap), 0.0, 1.0);
    const double k = std::sqrt(1.0 - 0.25 * s * s);
    p.y() = c.y() + (p.y() - c.y()) * k;
    p.z() = c.z() + (p.z() - c.z()) * k;
  }
}

// Pulls the box toward a rounded box: offsets from an inner box, shrunk by
// half the shortest side, go through the cube-to-sphere map. A cube gets the
// plain sphere map; a bar gets a rounded cross-section and domed ends with
// the same cell distortion as the cube's corners.
void round_box(std::vector<Vec3>& nodes, const Vec3& extent, double beta) {
  if (beta == 0.0) return;
  const Vec3 h = 0.5 * extent;
  const double rho = h.minCoeff();
  const Vec3 lo = Vec3::Constant(rho), hi = extent - Vec3::Constant(rho);
  for (Vec3& p : nodes) {
    const Vec3 in = p.cwiseMax(lo).cwiseMin(hi);
    const Vec3 c = (p - in) / rho;
    const double x2 = c.x() * c.x(), y2 = c.y() * c.y(), z2 = c.z() * c.z();
    const Vec3 s(c.x() * std::sqrt(std::max(0.0, 1.0 - y2 / 2 - z2 / 2 + y2 * z2 / 3)),
                 c.y() * std::sqrt(std::max(0.0, 1.0 - z2 / 2 - x2 / 2 + z2 * x2 / 3)),
                 c.z() * std::sqrt(std::max(0.0, 1.0 - x2 / 2 - y2 / 2 + x2 * y2 / 3)));
    p = in + rho * ((1.0 - beta) * c + beta * s);
  }
}

TetMesh reshape(const TetMesh& t, const Vec3& extent, const SynthScenario& scn) {
  std::vector<Vec3> a = t.nodes;
  round_box(a, extent, scn.rounding);
  if (scn.shape == Shape::CappedBar) warp_cap(a, extent);
  for (const Tet& e : t.tets) {
    if (tet_signed_volume(a[e[0]], a[e[1]], a[e[2]], a[e[3]]) <= 0.0) {
      throw FemError("shape warp inverted a tet; lower the rounding");
    }
  }
  return TetMesh::build(std::move(a), t.tets);
}

}  // namespace

SynthData generate_sequence(const SynthScenario& scn) {
  scn.validate();
  const Vec3 dims = shape_dims(scn.shape);
  const Vec3 extent = dims / dims.norm();
  Lattice fine{static_cast<int>(std::lround(dims.x() * scn.cells)), static_cast<int>(std::lround(dims.y() * scn.cells)),
               static_cast<int>(std::lround(dims.z() * scn.cells))};
  Lattice coarse{fine.nx / scn.coarsen, fine.ny / scn.coarsen, fine.nz / scn.coarsen};

  TetMesh ft = lattice_tet_mesh(fine.nx, fine.ny, fine.nz, extent);
  TetMesh ct = lattice_tet_mesh(coarse.nx, coarse.ny, coarse.nz, extent);
  ft = reshape(ft, extent, scn);
  ct = reshape(ct, extent, scn);
  // Snap coarse nodes onto the fine ones so surface correspondence is exact.
  {
    std::vector<Vec3> b = ct.nodes;
    for (int k = 0; k <= coarse.nz; ++k) {
      for (int j = 0; j <= coarse.ny; ++j) {
        for (int i = 0; i <= coarse.nx; ++i) {
          b[coarse.id(i, j, k)] = ft.nodes[fine.id(i * scn.coarsen, j * scn.coarsen, k * scn.coarsen)];
        }
      }
    }
    ct = ct.with_nodes(std::move(b));
  }

  SynthData out;
  out.truth_tet = ft;
  out.tracker_tet = ct;
  out.template_mesh = ft.surface_mesh();
  std::vector<int> node_to_vertex(ft.node_count(), -1);
  for (std::size_t v = 0; v < ft.surface_nodes.size(); ++v) node_to_vertex[ft.surface_nodes[v]] = static_cast<int>(v);

  std::vector<int> fixed;
  for (int k = 0; k <= fine.nz; ++k) {
    for (int j = 0; j <= fine.ny; ++j) fixed.push_back(fine.id(0, j, k));
  }
  std::vector<int> contact;
  const Vec3 dir = scn.force_direction.normalized();
  for (int k = 0; k <= fine.nz; ++k) {
    for (int i = fine.nx - scn.contact_cells; i <= fine.nx; ++i) contact.push_back(fine.id(i, fine.ny, k));
  }
  // The load is spread over the patch; the tracker only gets its center.
  out.contacts.push_back({node_to_vertex[fine.id(fine.nx - scn.contact_cells / 2, fine.ny, fine.nz / 2)], dir});

  const StiffnessSystem sys = assemble_stiffness(ft, scn.material);
  VecX f = VecX::Zero(sys.dofs());
  for (int n : contact) f.segment<3>(3 * n) = dir / static_cast<double>(contact.size());
  const std::vector<Vec3> zero(fixed.size(), Vec3::Zero());
  const VecX u_unit = sys.solve(fixed, zero, f);
  double max_unit = 0.0;
  for (Eigen::Index i = 0; i < u_unit.size() / 3; ++i) max_unit = std::max(max_unit, u_unit.segment<3>(3 * i).norm());
  out.force = scn.force ? *scn.force : (max_unit > 0.0 ? scn.tip_displacement / max_unit : 0.0);
  const VecX u_full = out.force * u_unit;

  const Vec3 center = 0.5 * (out.template_mesh.bbox_min() + out.template_mesh.bbox_max());
  const Vec3 viewpoint = center - 3.0 * scn.view_direction.normalized();
  const double r = out.template_mesh.average_edge_length();
  const double radius = 0.5 * out.template_mesh.bbox_diagonal();

  for (int k = 1; k <= scn.frames; ++k) {
    const double s = static_cast<double>(k) / scn.frames;
    std::vector<Vec3> pos(ft.surface_nodes.size());
    for (std::size_t v = 0; v < pos.size(); ++v) {
      const int n = ft.surface_nodes[v];
      pos[v] = ft.nodes[n] + s * u_full.segment<3>(3 * n);
    }
    TriMesh truth = out.template_mesh.with_positions(std::move(pos));
    std::vector<char> vis;
    PointCloudFrame cloud = cull_to_viewpoint(truth, scn.view_direction, &vis);
    const std::uint64_t fseed = scn.seed * 1000003ULL + static_cast<std::uint64_t>(k);
    switch (scn.noise.kind) {
      case NoiseKind::None: break;
      case NoiseKind::Outliers: cloud = add_outliers(cloud, viewpoint, r, scn.noise.outlier_prob, fseed); break;
      case NoiseKind::Gaussian: {
        const double sigma = scn.noise.sigma ? *scn.noise.sigma : gaussian_sigma(scn.noise.sigma_frac, radius);
        cloud = add_gaussian_noise(cloud, sigma, fseed);
        break;
      }
      case NoiseKind::Subdivision:
        cloud = cull_to_viewpoint(loop_subdivide(truth, scn.noise.subdivision_steps), scn.view_direction);
        break;
    }
    cloud.index = k;
    out.truth.push_back(std::move(truth));
    out.clouds.push_back(std::move(cloud));
    out.visible.push_back(std::move(vis));
  }
  return out;
}

}  // namespace fetrack
