#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "propguard/error.hpp"

namespace propguard::sim {

using AgentId = int;

enum class TopologyKind { chain, tree, star, random };

const char* topology_kind_name(TopologyKind k);
TopologyKind topology_kind_from(const std::string& name);

// Directed communication graph over agents 0..n_agents-1.
struct Topology {
  TopologyKind kind = TopologyKind::chain;
  int n_agents = 0;
  std::set<std::pair<AgentId, AgentId>> edges;  // (sender, receiver), no self-loops

  std::vector<AgentId> out_neighbors(AgentId a) const;
  std::vector<AgentId> in_neighbors(AgentId a) const;
  bool weakly_connected() const;

  bool operator==(const Topology&) const = default;
};

// chain: consecutive bidirectional pairs; tree: bidirectional binary-tree
// parent-child edges; star: bidirectional hub(0)-leaf edges; random:
// Erdos-Renyi directed edges at edge_prob plus a random spanning path that
// forces weak connectivity. edge_prob is used only for kind=random.
Topology build_topology(TopologyKind kind, int n_agents, double edge_prob, uint64_t rng_seed);

}  // namespace propguard::sim
