#include "icsmdp/envs/graphs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <sstream>
#include <stdexcept>

namespace icsmdp {

GraphFamily graph_family_from_string(const std::string& name) {
  if (name == "erdos-renyi") return GraphFamily::kErdosRenyi;
  if (name == "barabasi-albert") return GraphFamily::kBarabasiAlbert;
  if (name == "watts-strogatz") return GraphFamily::kWattsStrogatz;
  if (name == "chain") return GraphFamily::kChain;
  throw std::invalid_argument("graph_family_from_string: unknown family '" + name + "'");
}

std::string to_string(GraphFamily family) {
  switch (family) {
    case GraphFamily::kErdosRenyi: return "erdos-renyi";
    case GraphFamily::kBarabasiAlbert: return "barabasi-albert";
    case GraphFamily::kWattsStrogatz: return "watts-strogatz";
    case GraphFamily::kChain: return "chain";
  }
  throw std::logic_error("to_string(GraphFamily): invalid value");
}

void GraphSpec::validate() const {
  if (n_nodes < 2) throw std::invalid_argument("GraphSpec: n_nodes must be >= 2");
  if (family == GraphFamily::kErdosRenyi && er_edge_prob > 1.0)
    throw std::invalid_argument("GraphSpec: er_edge_prob must be <= 1");
  if (family == GraphFamily::kBarabasiAlbert &&
      (ba_attachment < 1 || ba_attachment >= n_nodes))
    throw std::invalid_argument("GraphSpec: ba_attachment must lie in [1, n_nodes)");
  if (family == GraphFamily::kWattsStrogatz) {
    if (ws_degree < 2 || ws_degree % 2 != 0 || ws_degree >= n_nodes)
      throw std::invalid_argument("GraphSpec: ws_degree must be even and in [2, n_nodes)");
    if (ws_rewire < 0.0 || ws_rewire > 1.0)
      throw std::invalid_argument("GraphSpec: ws_rewire must lie in [0, 1]");
  }
}

int Graph::n_edges() const {
  long long total = 0;
  for (const auto& adj : neighbors) total += static_cast<long long>(adj.size());
  return static_cast<int>(total / 2);
}

bool Graph::connected() const {
  if (n_nodes == 0) return false;
  const auto dist = bfs_distances(*this, 0);
  return std::none_of(dist.begin(), dist.end(), [](int d) { return d < 0; });
}

std::string Graph::edge_list() const {
  std::ostringstream out;
  for (int u = 0; u < n_nodes; ++u)
    for (int v : neighbors[u])
      if (u < v) out << u << ' ' << v << '\n';
  return out.str();
}

std::vector<int> bfs_distances(const Graph& g, int src) {
  if (src < 0 || src >= g.n_nodes)
    throw std::out_of_range("bfs_distances: src out of range");
  std::vector<int> dist(g.n_nodes, -1);
  std::deque<int> queue{src};
  dist[src] = 0;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (int v : g.neighbors[u]) {
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }
  return dist;
}

namespace {

Graph from_edge_set(int n, const std::set<std::pair<int, int>>& edges) {
  Graph g;
  g.n_nodes = n;
  g.neighbors.assign(n, {});
  for (const auto& [u, v] : edges) {
    g.neighbors[u].push_back(v);
    g.neighbors[v].push_back(u);
  }
  for (auto& adj : g.neighbors) std::sort(adj.begin(), adj.end());
  return g;
}

Graph gen_erdos_renyi(const GraphSpec& spec, Rng& rng) {
  const int n = spec.n_nodes;
  const double p = spec.er_edge_prob >= 0.0
                       ? spec.er_edge_prob
                       : std::min(1.0, 2.0 * std::log(static_cast<double>(n)) / n);
  std::set<std::pair<int, int>> edges;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (rng.bernoulli(p)) edges.insert({u, v});
  return from_edge_set(n, edges);
}

Graph gen_barabasi_albert(const GraphSpec& spec, Rng& rng) {
  const int n = spec.n_nodes;
  const int m = spec.ba_attachment;
  std::set<std::pair<int, int>> edges;
  // Seed graph: a path over the first m+1 nodes.
  std::vector<int> endpoints;  // each edge contributes both ends; degree-weighted
  for (int v = 1; v <= m && v < n; ++v) {
    edges.insert({v - 1, v});
    endpoints.push_back(v - 1);
    endpoints.push_back(v);
  }
  for (int v = m + 1; v < n; ++v) {
    std::set<int> targets;
    while (static_cast<int>(targets.size()) < m) {
      const int pick = endpoints[rng.uniform_int(static_cast<int>(endpoints.size()))];
      targets.insert(pick);
    }
    for (int t : targets) {
      edges.insert({std::min(v, t), std::max(v, t)});
      endpoints.push_back(v);
      endpoints.push_back(t);
    }
  }
  return from_edge_set(n, edges);
}

Graph gen_watts_strogatz(const GraphSpec& spec, Rng& rng) {
  const int n = spec.n_nodes;
  const int half = spec.ws_degree / 2;
  std::set<std::pair<int, int>> edges;
  for (int u = 0; u < n; ++u)
    for (int j = 1; j <= half; ++j) {
      const int v = (u + j) % n;
      edges.insert({std::min(u, v), std::max(u, v)});
    }
  // Rewire each clockwise lattice edge with probability ws_rewire.
  for (int u = 0; u < n; ++u)
    for (int j = 1; j <= half; ++j) {
      const int v = (u + j) % n;
      if (!rng.bernoulli(spec.ws_rewire)) continue;
      const auto old_edge = std::make_pair(std::min(u, v), std::max(u, v));
      if (edges.count(old_edge) == 0) continue;  // already rewired away
      int w = -1;
      for (int attempt = 0; attempt < 32; ++attempt) {
        const int cand = rng.uniform_int(n);
        if (cand == u) continue;
        const auto e = std::make_pair(std::min(u, cand), std::max(u, cand));
        if (edges.count(e)) continue;
        w = cand;
        break;
      }
      if (w < 0) continue;  // dense neighborhood; keep the lattice edge
      edges.erase(old_edge);
      edges.insert({std::min(u, w), std::max(u, w)});
    }
  return from_edge_set(n, edges);
}

Graph gen_chain(const GraphSpec& spec) {
  std::set<std::pair<int, int>> edges;
  for (int v = 1; v < spec.n_nodes; ++v) edges.insert({v - 1, v});
  return from_edge_set(spec.n_nodes, edges);
}

}  // namespace

Graph build_graph(const GraphSpec& spec) {
  spec.validate();
  constexpr int kMaxAttempts = 256;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng(derive_seed(spec.seed, "graph", static_cast<std::uint64_t>(attempt)));
    Graph g;
    switch (spec.family) {
      case GraphFamily::kErdosRenyi: g = gen_erdos_renyi(spec, rng); break;
      case GraphFamily::kBarabasiAlbert: g = gen_barabasi_albert(spec, rng); break;
      case GraphFamily::kWattsStrogatz: g = gen_watts_strogatz(spec, rng); break;
      case GraphFamily::kChain: g = gen_chain(spec); break;
    }
    if (g.connected()) return g;
    if (spec.family == GraphFamily::kChain)
      throw std::logic_error("build_graph: chain generation produced a disconnected graph");
  }
  throw std::runtime_error("build_graph: no connected instance after bounded retries");
}

}  // namespace icsmdp
