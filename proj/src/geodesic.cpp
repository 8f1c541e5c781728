#include "ims/mesh.hpp"

#include <functional>
#include <queue>

namespace ims {

std::vector<double> geodesic_distances(const MeshGraph& graph, VertexId source) {
  if (source >= graph.vertex_count()) {
    throw std::out_of_range("source vertex " + std::to_string(source) + " out of range");
  }
  std::vector<double> dist(graph.vertex_count(), kUnreachable);
  using Entry = std::pair<double, VertexId>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> frontier;
  dist[source] = 0.0;
  frontier.emplace(0.0, source);
  while (!frontier.empty()) {
    const auto [d, u] = frontier.top();
    frontier.pop();
    if (d > dist[u]) continue;  // stale entry
    for (const auto& [v, w] : graph.neighbors(u)) {
      const double candidate = d + w;
      if (candidate < dist[v]) {
        dist[v] = candidate;
        frontier.emplace(candidate, v);
      }
    }
  }
  return dist;
}

}  // namespace ims
