#pragma once

#include <array>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Sparse>

#include "fetrack/mesh.hpp"
#include "fetrack/optim.hpp"

namespace fetrack {

using Tet = std::array<int, 4>;
using SpMat = Eigen::SparseMatrix<double>;

class FemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when A1 cannot identify the material (e.g. rigid displacement).
class DegenerateEstimate : public FemError {
 public:
  using FemError::FemError;
};

double tet_signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);
/// Circumradius over shortest edge.
double radius_edge_ratio(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);

/// Tetrahedral volume mesh. Tets are stored with positive orientation.
struct TetMesh {
  std::vector<Vec3> nodes;
  std::vector<Tet> tets;
  std::vector<Face> surface_faces;  // outward oriented boundary triangles
  std::vector<char> surface;        // per node
  std::vector<int> surface_nodes;   // ascending

  /// Orients tets positively, extracts the boundary. Throws FemError for an
  /// index out of range or a tet with |volume| < 1e-14.
  static TetMesh build(std::vector<Vec3> nodes, std::vector<Tet> tets);

  TetMesh with_nodes(std::vector<Vec3> moved) const;
  std::size_t node_count() const { return nodes.size(); }

  /// Tets whose radius-edge ratio exceeds `limit`.
  int radius_edge_violations(double limit = 2.0) const;
  /// Boundary as a triangle mesh over all nodes (interior nodes unreferenced
  /// are dropped; indices into `surface_nodes`).
  TriMesh surface_mesh() const;
};

/// Box lattice with nx*ny*nz cubes, each split into 6 tets around the main
/// diagonal. Nodes are ordered x fastest; node (i,j,k) has index
/// i + (nx+1)*(j + (ny+1)*k).
TetMesh lattice_tet_mesh(int nx, int ny, int nz, const Vec3& extent, const Vec3& origin = Vec3::Zero());

struct Material {
  double E = 1.0;
  double nu = 0.0;
  bool clamped = false;

  double lambda() const { return E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)); }
  double mu() const { return E / (2.0 * (1.0 + nu)); }
  static Material from_lame(double lambda, double mu);
};

constexpr double kNuMin = 0.0;
constexpr double kNuMax = 0.49;

/// K = lambda * K_lambda + mu * K_mu for constant-strain tets; the two parts
/// depend only on geometry.
struct StiffnessBasis {
  SpMat k_lambda;
  SpMat k_mu;
  std::vector<Vec3> nodes;

  SpMat assemble(const Material& m) const { return m.lambda() * k_lambda + m.mu() * k_mu; }
  Eigen::Index dofs() const { return k_lambda.rows(); }
};

StiffnessBasis assemble_basis(const TetMesh& tet);

/// Global stiffness for one material, plus a cached factorization of the
/// reduced system keyed by the fixed-node set.
class StiffnessSystem {
 public:
  StiffnessSystem(std::shared_ptr<const StiffnessBasis> basis, const Material& mat);

  const SpMat& K() const { return k_; }
  const Material& material() const { return mat_; }
  const StiffnessBasis& basis() const { return *basis_; }
  Eigen::Index dofs() const { return k_.rows(); }

  /// A2: f = K u.
  VecX forces(const VecX& u) const;

  /// A3: displacements with `fixed` nodes prescribed and `forces` applied at
  /// every other node (entries at fixed nodes are ignored).
  VecX solve(std::span<const int> fixed, std::span<const Vec3> fixed_disp, const VecX& forces) const;

 private:
  struct Factor;
  std::shared_ptr<const StiffnessBasis> basis_;
  Material mat_;
  SpMat k_;
  mutable std::mutex cache_mutex_;
  mutable std::shared_ptr<Factor> cache_;
};

StiffnessSystem assemble_stiffness(const TetMesh& tet, const Material& mat);

/// A1: least-squares (lambda, mu) from K(lambda, mu) u = f over the rows of
/// the nodes in `known` (forces given per listed node). nu outside
/// [kNuMin, kNuMax] is clamped by refitting E at the bound.
Material estimate_material(const StiffnessBasis& basis, const VecX& u, std::span<const int> known,
                           const VecX& forces);

/// A2 without a system object.
VecX compute_forces(const SpMat& k, const VecX& u);

/// Closest point of a template vertex on the tet boundary, as barycentric
/// coordinates on one boundary triangle.
struct EmbeddedPoint {
  int face = -1;  // index into TetMesh::surface_faces
  Vec3 bary = Vec3::Zero();
};

std::vector<EmbeddedPoint> embed_template(std::span<const Vec3> vertices, const TetMesh& tet);
std::vector<Vec3> evaluate_embedding(std::span<const EmbeddedPoint> emb, const TetMesh& tet);

/// For each tet node: the template vertex at the same position (within
/// `tol`), or -1 for interior nodes. Throws FemError if a surface node has
/// no coincident template vertex.
std::vector<int> match_surface_nodes(const TetMesh& tet, std::span<const Vec3> vertices, double tol);

}  // namespace fetrack
