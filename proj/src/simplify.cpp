#include "fetrack/simplify.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <tuple>

#include <Eigen/Eigenvalues>

#include "fetrack/intersect.hpp"

namespace fetrack {

namespace {

using Quadric = Eigen::Matrix4d;

constexpr double kSingularCondition = 1e12;
constexpr double kBoundaryWeight = 100.0;
constexpr double kIntersectEps = 1e-12;

Quadric plane_quadric(const Vec3& n, const Vec3& p, double weight) {
  Eigen::Vector4d q(n.x(), n.y(), n.z(), -n.dot(p));
  return weight * q * q.transpose();
}

struct Candidate {
  double cost;
  int u, v;
  int ver_u, ver_v;
  Vec3 pos;
};

struct CandidateOrder {
  bool operator()(const Candidate& a, const Candidate& b) const {
    return std::tie(a.cost, a.u, a.v) > std::tie(b.cost, b.u, b.v);
  }
};

class Collapser {
 public:
  explicit Collapser(const TriMesh& mesh)
      : pos_(mesh.vertices()),
        faces_(mesh.faces()),
        face_alive_(faces_.size(), 1),
        vfaces_(mesh.vertex_faces()),
        alive_(pos_.size(), 1),
        version_(pos_.size(), 0),
        quadric_(pos_.size(), Quadric::Zero()),
        alive_count_(static_cast<int>(pos_.size())) {
    for (const Face& f : faces_) {
      const Vec3 c = (pos_[f[1]] - pos_[f[0]]).cross(pos_[f[2]] - pos_[f[0]]);
      const double area2 = c.norm();
      if (area2 <= 0.0) continue;
      const Vec3 n = c / area2;
      const Quadric q = plane_quadric(n, pos_[f[0]], 0.5 * area2);
      for (int k = 0; k < 3; ++k) quadric_[f[k]] += q;
      // Boundary edges get a perpendicular constraint plane so open borders
      // keep their shape.
      for (int k = 0; k < 3; ++k) {
        const int a = f[k], b = f[(k + 1) % 3];
        if (edge_face_count(a, b) != 1) continue;
        const Vec3 e = pos_[b] - pos_[a];
        const Vec3 side = n.cross(e);
        const double len = side.norm();
        if (len <= 0.0) continue;
        const Quadric qb = plane_quadric(side / len, pos_[a], kBoundaryWeight * e.squaredNorm());
        quadric_[a] += qb;
        quadric_[b] += qb;
      }
    }
    std::vector<Box3> boxes;
    boxes.reserve(faces_.size());
    for (const Face& f : faces_) boxes.push_back(triangle_box(pos_[f[0]], pos_[f[1]], pos_[f[2]], kIntersectEps));
    bvh_ = Bvh(std::move(boxes));
  }

  SimplifyResult run(int target) {
    SimplifyResult res;
    for (const Edge& e : edges_of_mesh()) push(e[0], e[1]);
    while (alive_count_ > target && !heap_.empty()) {
      const Candidate c = heap_.top();
      heap_.pop();
      if (!alive_[c.u] || !alive_[c.v] || version_[c.u] != c.ver_u || version_[c.v] != c.ver_v) continue;
      switch (try_collapse(c.u, c.v, c.pos)) {
        case Outcome::Done: ++res.collapses; break;
        case Outcome::Topology: ++res.rejected_topology; break;
        case Outcome::Flip: ++res.rejected_flip; break;
        case Outcome::Intersection: ++res.rejected_self_intersection; break;
      }
    }
    res.reached_target = alive_count_ <= target;
    finish(res);
    return res;
  }

 private:
  enum class Outcome { Done, Topology, Flip, Intersection };

  std::vector<Edge> edges_of_mesh() const {
    std::vector<Edge> edges;
    for (const Face& f : faces_) {
      for (int k = 0; k < 3; ++k) {
        const int a = f[k], b = f[(k + 1) % 3];
        edges.push_back({std::min(a, b), std::max(a, b)});
      }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
  }

  int edge_face_count(int a, int b) const {
    int n = 0;
    for (int f : vfaces_[a]) {
      if (!face_alive_[f]) continue;
      const Face& fa = faces_[f];
      if (fa[0] == b || fa[1] == b || fa[2] == b) ++n;
    }
    return n;
  }

  std::vector<int> neighbors(int v) const {
    std::vector<int> out;
    for (int f : vfaces_[v]) {
      if (!face_alive_[f]) continue;
      for (int w : faces_[f]) {
        if (w != v) out.push_back(w);
      }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  bool is_boundary_vertex(int v) const {
    for (int w : neighbors(v)) {
      if (edge_face_count(v, w) == 1) return true;
    }
    return false;
  }

  void push(int a, int b) {
    const int u = std::min(a, b), v = std::max(a, b);
    const Quadric q = quadric_[u] + quadric_[v];
    const Eigen::Matrix3d A = q.topLeftCorner<3, 3>();
    const Vec3 rhs = -q.topRightCorner<3, 1>();
    Vec3 x = 0.5 * (pos_[u] + pos_[v]);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(A);
    const Vec3 ev = eig.eigenvalues();
    if (ev(0) > 0.0 && ev(2) / ev(0) <= kSingularCondition) x = A.ldlt().solve(rhs);
    const Eigen::Vector4d xh(x.x(), x.y(), x.z(), 1.0);
    const double cost = std::max(0.0, xh.dot(q * xh));
    heap_.push({cost, u, v, version_[u], version_[v], x});
  }

  Outcome try_collapse(int u, int v, const Vec3& target) {
    // Link condition: the common neighbors of u and v must be exactly the
    // apexes of the faces sharing the edge.
    const std::vector<int> nu = neighbors(u), nv = neighbors(v);
    std::vector<int> common;
    std::set_intersection(nu.begin(), nu.end(), nv.begin(), nv.end(), std::back_inserter(common));
    std::vector<int> shared_faces, apexes;
    for (int f : vfaces_[u]) {
      if (!face_alive_[f]) continue;
      const Face& fa = faces_[f];
      if (fa[0] != v && fa[1] != v && fa[2] != v) continue;
      shared_faces.push_back(f);
      for (int w : fa) {
        if (w != u && w != v) apexes.push_back(w);
      }
    }
    std::sort(apexes.begin(), apexes.end());
    if (shared_faces.empty() || common != apexes) return Outcome::Topology;
    if (shared_faces.size() == 2 && is_boundary_vertex(u) && is_boundary_vertex(v)) return Outcome::Topology;

    // Faces that survive and change: incident to u or v but not both.
    std::vector<int> changed;
    for (int w : {u, v}) {
      for (int f : vfaces_[w]) {
        if (!face_alive_[f]) continue;
        if (std::find(shared_faces.begin(), shared_faces.end(), f) != shared_faces.end()) continue;
        changed.push_back(f);
      }
    }
    std::sort(changed.begin(), changed.end());
    changed.erase(std::unique(changed.begin(), changed.end()), changed.end());

    auto remapped = [&](int f) {
      Face g = faces_[f];
      for (int& w : g) {
        if (w == v) w = u;
      }
      return g;
    };

    // No duplicate faces after the collapse.
    {
      std::vector<std::array<int, 3>> keys;
      for (int f : changed) {
        Face g = remapped(f);
        std::sort(g.begin(), g.end());
        keys.push_back(g);
      }
      std::sort(keys.begin(), keys.end());
      if (std::adjacent_find(keys.begin(), keys.end()) != keys.end()) return Outcome::Topology;
    }

    // Orientation and degeneracy.
    for (int f : changed) {
      const Face& old = faces_[f];
      const Face g = remapped(f);
      const Vec3 n_old = (pos_[old[1]] - pos_[old[0]]).cross(pos_[old[2]] - pos_[old[0]]);
      auto p = [&](int w) -> const Vec3& { return w == u ? target : pos_[w]; };
      const Vec3 n_new = (p(g[1]) - p(g[0])).cross(p(g[2]) - p(g[0]));
      const double scale = std::max({(p(g[1]) - p(g[0])).squaredNorm(), (p(g[2]) - p(g[0])).squaredNorm(),
                                     (p(g[2]) - p(g[1])).squaredNorm()});
      if (n_new.norm() <= 1e-10 * scale) return Outcome::Flip;
      if (n_old.dot(n_new) <= 0.0) return Outcome::Flip;
    }

    // Tentatively perform the collapse, then look for new intersections.
    const Vec3 old_pos = pos_[u];
    std::vector<std::pair<int, Face>> saved;
    for (int f : changed) saved.emplace_back(f, faces_[f]);
    pos_[u] = target;
    for (int f : changed) faces_[f] = remapped(f);
    for (int f : shared_faces) {
      face_alive_[f] = 0;
      bvh_.update(f, Box3());
    }
    for (int f : changed) {
      const Face& g = faces_[f];
      bvh_.update(f, triangle_box(pos_[g[0]], pos_[g[1]], pos_[g[2]], kIntersectEps));
    }

    bool hit = false;
    for (int f : changed) {
      const Face& g = faces_[f];
      const Box3 box = triangle_box(pos_[g[0]], pos_[g[1]], pos_[g[2]], kIntersectEps);
      bvh_.query(box, [&](int h) {
        if (hit || h == f || !face_alive_[h]) return;
        const Face& o = faces_[h];
        for (int a : g) {
          for (int b : o) {
            if (a == b) return;
          }
        }
        if (triangles_intersect(pos_[g[0]], pos_[g[1]], pos_[g[2]], pos_[o[0]], pos_[o[1]], pos_[o[2]],
                                kIntersectEps)) {
          hit = true;
        }
      });
      if (hit) break;
    }

    if (hit) {
      pos_[u] = old_pos;
      for (const auto& [f, face] : saved) {
        faces_[f] = face;
        bvh_.update(f, triangle_box(pos_[face[0]], pos_[face[1]], pos_[face[2]], kIntersectEps));
      }
      for (int f : shared_faces) {
        face_alive_[f] = 1;
        const Face& g = faces_[f];
        bvh_.update(f, triangle_box(pos_[g[0]], pos_[g[1]], pos_[g[2]], kIntersectEps));
      }
      return Outcome::Intersection;
    }

    // Commit.
    std::vector<int> merged;
    for (int w : {u, v}) {
      for (int f : vfaces_[w]) {
        if (face_alive_[f]) merged.push_back(f);
      }
    }
    std::sort(merged.begin(), merged.end());
    merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
    vfaces_[u] = std::move(merged);
    vfaces_[v].clear();
    for (int f : shared_faces) {
      for (int w : faces_[f]) {
        auto& list = vfaces_[w];
        list.erase(std::remove(list.begin(), list.end(), f), list.end());
      }
    }
    alive_[v] = 0;
    --alive_count_;
    quadric_[u] += quadric_[v];

    // Costs change on edges at u; validity may change one ring further out.
    const std::vector<int> ring = neighbors(u);
    ++version_[u];
    for (int w : ring) ++version_[w];
    for (int w : ring) {
      for (int x : neighbors(w)) push(w, x);
    }
    return Outcome::Done;
  }

  void finish(SimplifyResult& res) const {
    res.vertex_map.assign(pos_.size(), -1);
    std::vector<Vec3> verts;
    for (std::size_t i = 0; i < pos_.size(); ++i) {
      if (!alive_[i]) continue;
      res.vertex_map[i] = static_cast<int>(verts.size());
      res.source_index.push_back(static_cast<int>(i));
      verts.push_back(pos_[i]);
    }
    std::vector<Face> faces;
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      if (!face_alive_[f]) continue;
      const Face& g = faces_[f];
      faces.push_back({res.vertex_map[g[0]], res.vertex_map[g[1]], res.vertex_map[g[2]]});
    }
    res.mesh = TriMesh(std::move(verts), std::move(faces));
  }

  std::vector<Vec3> pos_;
  std::vector<Face> faces_;
  std::vector<char> face_alive_;
  std::vector<std::vector<int>> vfaces_;
  std::vector<char> alive_;
  std::vector<int> version_;
  std::vector<Quadric> quadric_;
  int alive_count_;
  Bvh bvh_;
  std::priority_queue<Candidate, std::vector<Candidate>, CandidateOrder> heap_;
};

}  // namespace

SimplifyResult simplify_level(const TriMesh& mesh, int target_vertex_count) {
  if (target_vertex_count < 4) throw GeometryError("simplify_level: target vertex count must be >= 4");
  if (static_cast<int>(mesh.vertex_count()) <= target_vertex_count) {
    SimplifyResult res;
    res.mesh = mesh;
    res.reached_target = true;
    res.vertex_map.resize(mesh.vertex_count());
    for (std::size_t i = 0; i < mesh.vertex_count(); ++i) res.vertex_map[i] = static_cast<int>(i);
    res.source_index = res.vertex_map;
    return res;
  }
  return Collapser(mesh).run(target_vertex_count);
}

ResolutionHierarchy build_hierarchy(const TriMesh& mesh, const HierarchyOptions& opts) {
  const double stop_above = opts.base_vertex_count * std::sqrt(2.0);
  std::vector<ResolutionLevel> fine_to_coarse;
  ResolutionLevel finest;
  finest.mesh = mesh;
  finest.finest_index.resize(mesh.vertex_count());
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) finest.finest_index[i] = static_cast<int>(i);
  fine_to_coarse.push_back(std::move(finest));

  while (static_cast<double>(fine_to_coarse.back().mesh.vertex_count()) > stop_above) {
    const ResolutionLevel& cur = fine_to_coarse.back();
    const int n = static_cast<int>(cur.mesh.vertex_count());
    SimplifyResult s = simplify_level(cur.mesh, std::max(4, (n + 1) / 2));
    if (s.collapses == 0) break;
    ResolutionLevel coarse;
    coarse.mesh = std::move(s.mesh);
    coarse.finest_index.resize(s.source_index.size());
    for (std::size_t i = 0; i < s.source_index.size(); ++i) coarse.finest_index[i] = cur.finest_index[s.source_index[i]];
    // The finer level learns where each of its vertices sits one level down.
    fine_to_coarse.back().coarser_index = s.vertex_map;
    const bool stalled = !s.reached_target;
    fine_to_coarse.push_back(std::move(coarse));
    if (stalled) break;
  }

  ResolutionHierarchy h;
  h.levels.assign(std::make_move_iterator(fine_to_coarse.rbegin()), std::make_move_iterator(fine_to_coarse.rend()));
  return h;
}

}  // namespace fetrack
