#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <ostream>
#include <set>
#include <vector>

#include "propguard/sim.hpp"

namespace propguard::graph {

enum class EdgeType { temporal, communication };

struct STEdge {
  int src = 0;
  int dst = 0;
  EdgeType etype = EdgeType::temporal;
  auto operator<=>(const STEdge&) const = default;
};

struct STNode {
  sim::AgentId agent = 0;
  int round = 0;
  std::vector<double> response_feat;  // d_R
  std::vector<double> state_feat;     // d_S, prefix equals response_feat
};

// Feature recipe knobs. The encoders are deterministic in (content, seed);
// `noise` perturbs only the payload-visibility scalars.
struct FeatureConfig {
  int d_r = 24;
  int d_s = 36;
  double noise = 0.05;
  std::optional<uint64_t> seed;  // defaults to a stream derived from the episode seed
};

// Payload channels contribute a visibility scalar plus three token buckets.
constexpr int kPayloadChannelWidth = 4;

// Shared backbone: one node per (agent, round), temporal edges within an
// agent, communication edges (i,t)->(j,t+1) for every delivered message.
// The two feature views live on the same structure.
struct STGraph {
  int n_agents = 0;
  int rounds = 0;
  int n_labels = 0;
  int d_r = 0;
  int d_s = 0;
  std::vector<STNode> nodes;  // index = round * n_agents + agent
  std::vector<STEdge> edges;
  std::vector<std::vector<int>> out_edges;  // node -> edge indices
  std::vector<std::vector<int>> in_edges;

  int node_index(sim::AgentId agent, int round) const { return round * n_agents + agent; }
  int node_count() const { return static_cast<int>(nodes.size()); }
};

STGraph build_backbone(const sim::EpisodeRecord& episode, const FeatureConfig& cfg = {});

std::vector<double> encode_response(const sim::Content& content, int n_labels, int d_r,
                                    double noise, uint64_t rng_seed);

std::vector<double> encode_full_state(const sim::NodeState& state, int n_labels, int d_r, int d_s,
                                      double noise, uint64_t rng_seed);

// BFS over the undirected closure up to depth n; center included.
std::set<int> n_hop_neighborhood(const STGraph& g, int center, int n);

// Directed reachability from the sources, sources themselves excluded.
std::set<int> downstream_closure(const STGraph& g, const std::set<int>& sources);

// Maps ground-truth provenance nodes onto backbone indices.
std::set<int> provenance_node_indices(const sim::ProvenanceGraph& z, int n_agents);

// Debug export: one JSON object per node line, then per edge line.
void export_graph_jsonl(const STGraph& g, std::ostream& out);

}  // namespace propguard::graph
