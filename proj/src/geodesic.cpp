#include "fetrack/geodesic.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <queue>
#include <unordered_map>

namespace fetrack {

std::vector<int> geodesic_neighborhood(const TriMesh& mesh, int vertex, double radius) {
  const auto& pos = mesh.vertices();
  const auto& ring = mesh.one_ring();
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  std::unordered_map<int, double> dist;
  dist[vertex] = 0.0;
  heap.emplace(0.0, vertex);
  std::vector<int> out;
  while (!heap.empty()) {
    const auto [d, v] = heap.top();
    heap.pop();
    if (d > dist[v]) continue;
    if (v != vertex) out.push_back(v);
    for (int w : ring[v]) {
      const double nd = d + (pos[v] - pos[w]).norm();
      if (nd > radius) continue;
      auto it = dist.find(w);
      if (it == dist.end() || nd < it->second) {
        dist[w] = nd;
        heap.emplace(nd, w);
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::vector<int>> geodesic_neighborhoods(const TriMesh& mesh, double radius) {
  std::vector<std::vector<int>> out(mesh.vertex_count());
  for (std::size_t v = 0; v < out.size(); ++v) out[v] = geodesic_neighborhood(mesh, static_cast<int>(v), radius);
  return out;
}

}  // namespace fetrack
