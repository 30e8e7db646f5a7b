#pragma once

#include <vector>

#include "fetrack/mesh.hpp"

namespace fetrack {

/// Vertices whose shortest edge-graph distance from `vertex` is at most
/// `radius`, excluding the seed itself. Sorted ascending.
std::vector<int> geodesic_neighborhood(const TriMesh& mesh, int vertex, double radius);

/// geodesic_neighborhood for every vertex.
std::vector<std::vector<int>> geodesic_neighborhoods(const TriMesh& mesh, double radius);

}  // namespace fetrack
