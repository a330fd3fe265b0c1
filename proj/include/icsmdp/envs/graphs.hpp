#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icsmdp/rng.hpp"

namespace icsmdp {

// Undirected graph families used by the routing environment.
enum class GraphFamily { kErdosRenyi, kBarabasiAlbert, kWattsStrogatz, kChain };

GraphFamily graph_family_from_string(const std::string& name);
std::string to_string(GraphFamily family);

struct GraphSpec {
  GraphFamily family = GraphFamily::kErdosRenyi;
  int n_nodes = 100;
  std::uint64_t seed = 0;
  // Family parameters.  er_edge_prob < 0 selects the connectivity-friendly
  // default 2 ln(n) / n.
  double er_edge_prob = -1.0;
  int ba_attachment = 2;
  int ws_degree = 4;      // ring-lattice degree, must be even
  double ws_rewire = 0.2;

  void validate() const;
};

struct Graph {
  int n_nodes = 0;
  std::vector<std::vector<int>> neighbors;  // sorted, no self-loops, no duplicates

  int n_edges() const;
  bool connected() const;
  // One "u v" pair per line with u < v, ascending.
  std::string edge_list() const;
};

// Builds a connected instance.  Random families are regenerated with an
// advanced sub-seed until connected; gives up after a bounded number of
// attempts (runtime_error).
Graph build_graph(const GraphSpec& spec);

// Breadth-first hop distances from src; unreachable nodes get -1.
std::vector<int> bfs_distances(const Graph& g, int src);

}  // namespace icsmdp
