#include "propguard/topology.hpp"

#include <algorithm>
#include <numeric>

#include "propguard/rng.hpp"

namespace propguard::sim {

const char* topology_kind_name(TopologyKind k) {
  switch (k) {
    case TopologyKind::chain: return "chain";
    case TopologyKind::tree: return "tree";
    case TopologyKind::star: return "star";
    case TopologyKind::random: return "random";
  }
  return "unknown";
}

TopologyKind topology_kind_from(const std::string& name) {
  if (name == "chain") return TopologyKind::chain;
  if (name == "tree") return TopologyKind::tree;
  if (name == "star") return TopologyKind::star;
  if (name == "random") return TopologyKind::random;
  throw Error(Errc::invalid_config, "unknown topology kind '" + name + "'");
}

std::vector<AgentId> Topology::out_neighbors(AgentId a) const {
  std::vector<AgentId> out;
  for (const auto& [s, d] : edges)
    if (s == a) out.push_back(d);
  return out;
}

std::vector<AgentId> Topology::in_neighbors(AgentId a) const {
  std::vector<AgentId> in;
  for (const auto& [s, d] : edges)
    if (d == a) in.push_back(s);
  return in;
}

bool Topology::weakly_connected() const {
  if (n_agents <= 1) return true;
  std::vector<std::vector<AgentId>> adj(n_agents);
  for (const auto& [s, d] : edges) {
    adj[s].push_back(d);
    adj[d].push_back(s);
  }
  std::vector<bool> seen(n_agents, false);
  std::vector<AgentId> stack{0};
  seen[0] = true;
  int count = 1;
  while (!stack.empty()) {
    AgentId v = stack.back();
    stack.pop_back();
    for (AgentId u : adj[v])
      if (!seen[u]) {
        seen[u] = true;
        ++count;
        stack.push_back(u);
      }
  }
  return count == n_agents;
}

Topology build_topology(TopologyKind kind, int n_agents, double edge_prob, uint64_t rng_seed) {
  require(n_agents >= 2, Errc::invalid_config, "topology needs at least 2 agents");
  Topology topo;
  topo.kind = kind;
  topo.n_agents = n_agents;

  switch (kind) {
    case TopologyKind::chain:
      for (int i = 0; i + 1 < n_agents; ++i) {
        topo.edges.insert({i, i + 1});
        topo.edges.insert({i + 1, i});
      }
      break;
    case TopologyKind::tree:
      for (int i = 1; i < n_agents; ++i) {
        int parent = (i - 1) / 2;
        topo.edges.insert({parent, i});
        topo.edges.insert({i, parent});
      }
      break;
    case TopologyKind::star:
      for (int i = 1; i < n_agents; ++i) {
        topo.edges.insert({0, i});
        topo.edges.insert({i, 0});
      }
      break;
    case TopologyKind::random: {
      require(edge_prob > 0.0 && edge_prob <= 1.0, Errc::invalid_config,
              "edge_prob must be in (0,1] for random topology");
      Rng rng(derive_seed(rng_seed, 0x746F706Full));
      for (int i = 0; i < n_agents; ++i)
        for (int j = 0; j < n_agents; ++j)
          if (i != j && rng.bernoulli(edge_prob)) topo.edges.insert({i, j});
      // Random spanning path so the undirected closure is always connected.
      std::vector<AgentId> perm(n_agents);
      std::iota(perm.begin(), perm.end(), 0);
      for (int i = n_agents - 1; i > 0; --i)
        std::swap(perm[i], perm[rng.next_below(static_cast<uint32_t>(i + 1))]);
      for (int i = 0; i + 1 < n_agents; ++i) topo.edges.insert({perm[i], perm[i + 1]});
      break;
    }
  }
  return topo;
}

}  // namespace propguard::sim
