#pragma once

#include <vector>

#include "fetrack/mesh.hpp"

namespace fetrack {

struct SimplifyResult {
  TriMesh mesh;
  /// For each input vertex: its index in `mesh`, or -1 if it was collapsed away.
  std::vector<int> vertex_map;
  /// For each output vertex: its index in the input mesh.
  std::vector<int> source_index;
  bool reached_target = false;
  int collapses = 0;
  int rejected_self_intersection = 0;
  int rejected_topology = 0;
  int rejected_flip = 0;
};

/// Greedy quadric-error edge collapse down to `target_vertex_count` vertices.
/// A collapse is performed tentatively and undone if it makes the mesh
/// self-intersect, fold a face over, or break manifoldness. Stops early when
/// no valid collapse remains (reached_target is then false). The surviving
/// vertex of a collapse keeps its identity and moves to the quadric-optimal
/// point (midpoint when the quadric is singular).
SimplifyResult simplify_level(const TriMesh& mesh, int target_vertex_count);

struct ResolutionLevel {
  TriMesh mesh;
  /// For each vertex of this level: index in the previous (coarser) level or
  /// -1 if new at this level. Empty for the coarsest level.
  std::vector<int> coarser_index;
  /// For each vertex of this level: index in the finest (input) mesh.
  std::vector<int> finest_index;
};

/// Levels ordered coarsest to finest; levels.back() is the input mesh.
struct ResolutionHierarchy {
  std::vector<ResolutionLevel> levels;

  std::size_t size() const { return levels.size(); }
  const ResolutionLevel& finest() const { return levels.back(); }
  const ResolutionLevel& coarsest() const { return levels.front(); }
};

struct HierarchyOptions {
  int base_vertex_count = 1000;
};

/// Repeatedly halves the vertex count. A further halving is done while the
/// halved count is closer (in ratio) to base_vertex_count than the current
/// count, i.e. while count > base * sqrt(2), or until no valid collapse
/// remains.
ResolutionHierarchy build_hierarchy(const TriMesh& mesh, const HierarchyOptions& opts = {});

}  // namespace fetrack
