#include "propguard/st_graph.hpp"

#include <algorithm>
#include <deque>

#include "propguard/error.hpp"

#include <json.hpp>

namespace propguard::graph {

namespace {

// Payload observability flows only through the stealth-scaled visibility
// scalars; bucketing the marker itself would hand scorers a free label.
void bucket_tokens(const std::vector<int>& tokens, std::vector<double>& out, int offset,
                   int n_buckets) {
  for (int tok : tokens) {
    if (tok == sim::kMarkerToken) continue;
    int b = static_cast<int>(mix64(static_cast<uint64_t>(tok) * 0x9E3779B9ull) %
                             static_cast<uint64_t>(n_buckets));
    out[offset + b] += 0.25;
  }
}

}  // namespace

std::vector<double> encode_response(const sim::Content& content, int n_labels, int d_r,
                                    double noise, uint64_t rng_seed) {
  require(d_r >= n_labels + 2, Errc::invalid_config, "d_R must be at least |L| + 2");
  std::vector<double> x(d_r, 0.0);
  if (content.label >= 0 && content.label < n_labels) x[content.label] = 1.0;
  Rng rng(rng_seed);
  x[n_labels] = content.visibility() + rng.next_gaussian(0.0, noise);
  x[n_labels + 1] = static_cast<double>(content.tokens.size()) / 8.0;
  int n_buckets = d_r - n_labels - 2;
  if (n_buckets > 0) bucket_tokens(content.tokens, x, n_labels + 2, n_buckets);
  return x;
}

std::vector<double> encode_full_state(const sim::NodeState& state, int n_labels, int d_r, int d_s,
                                      double noise, uint64_t rng_seed) {
  require(d_s >= d_r + 3 * kPayloadChannelWidth, Errc::invalid_config,
          "d_S must be at least d_R + 3 * payload-channel width");
  std::vector<double> x = encode_response(state.response, n_labels, d_r, noise, rng_seed);
  x.resize(d_s, 0.0);

  double inbox_vis = 0.0;
  for (const sim::Message& m : state.inbox)
    inbox_vis = std::max(inbox_vis, m.content.visibility());

  Rng rng(derive_seed(rng_seed, 0x66756C6Cull));  // full-state channel noise
  x[d_r + 0] = inbox_vis + rng.next_gaussian(0.0, noise);
  x[d_r + 1] = state.memory.visibility() + rng.next_gaussian(0.0, noise);
  x[d_r + 2] = state.tool_obs.visibility() + rng.next_gaussian(0.0, noise);
  x[d_r + 3] = static_cast<double>(state.inbox.size()) / 4.0;
  bucket_tokens(state.memory.tokens, x, d_r + 4, 4);
  bucket_tokens(state.tool_obs.tokens, x, d_r + 8, 4);
  return x;
}

STGraph build_backbone(const sim::EpisodeRecord& episode, const FeatureConfig& cfg) {
  STGraph g;
  g.n_agents = episode.topology.n_agents;
  g.rounds = episode.rounds;
  g.n_labels = episode.task.n_labels;
  g.d_r = cfg.d_r;
  g.d_s = cfg.d_s;
  uint64_t feat_seed =
      cfg.seed ? *cfg.seed : derive_seed(episode.rng_seed, 0x66656174ull);

  g.nodes.resize(static_cast<size_t>(g.n_agents) * g.rounds);
  for (int t = 0; t < g.rounds; ++t) {
    for (sim::AgentId a = 0; a < g.n_agents; ++a) {
      int idx = g.node_index(a, t);
      const sim::NodeState& st = episode.state(a, t);
      STNode& node = g.nodes[idx];
      node.agent = a;
      node.round = t;
      uint64_t node_seed = derive_seed(feat_seed, static_cast<uint64_t>(idx));
      node.response_feat = encode_response(st.response, g.n_labels, g.d_r, cfg.noise, node_seed);
      node.state_feat =
          encode_full_state(st, g.n_labels, g.d_r, g.d_s, cfg.noise, node_seed);
    }
  }

  for (int t = 0; t + 1 < g.rounds; ++t)
    for (sim::AgentId a = 0; a < g.n_agents; ++a)
      g.edges.push_back({g.node_index(a, t), g.node_index(a, t + 1), EdgeType::temporal});

  // Communication edge (i,t) -> (j,t+1) iff j's round-(t+1) inbox holds a
  // message from i sent at round t.
  for (int t = 1; t < g.rounds; ++t) {
    for (sim::AgentId a = 0; a < g.n_agents; ++a) {
      const sim::NodeState& st = episode.state(a, t);
      std::set<sim::AgentId> senders;
      for (const sim::Message& m : st.inbox)
        if (m.send_round == t - 1) senders.insert(m.sender);
      for (sim::AgentId s : senders)
        g.edges.push_back({g.node_index(s, t - 1), g.node_index(a, t), EdgeType::communication});
    }
  }

  g.out_edges.resize(g.nodes.size());
  g.in_edges.resize(g.nodes.size());
  for (int e = 0; e < static_cast<int>(g.edges.size()); ++e) {
    g.out_edges[g.edges[e].src].push_back(e);
    g.in_edges[g.edges[e].dst].push_back(e);
  }
  return g;
}

std::set<int> n_hop_neighborhood(const STGraph& g, int center, int n) {
  require(center >= 0 && center < g.node_count(), Errc::invalid_node,
          "neighborhood center out of range");
  std::set<int> seen{center};
  std::deque<std::pair<int, int>> queue{{center, 0}};
  while (!queue.empty()) {
    auto [v, depth] = queue.front();
    queue.pop_front();
    if (depth == n) continue;
    auto visit = [&](int u) {
      if (seen.insert(u).second) queue.emplace_back(u, depth + 1);
    };
    for (int e : g.out_edges[v]) visit(g.edges[e].dst);
    for (int e : g.in_edges[v]) visit(g.edges[e].src);
  }
  return seen;
}

std::set<int> downstream_closure(const STGraph& g, const std::set<int>& sources) {
  for (int s : sources)
    require(s >= 0 && s < g.node_count(), Errc::invalid_node, "closure source out of range");
  std::set<int> reached;
  std::vector<int> stack(sources.begin(), sources.end());
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    for (int e : g.out_edges[v]) {
      int u = g.edges[e].dst;
      if (!sources.count(u) && reached.insert(u).second) stack.push_back(u);
    }
  }
  return reached;
}

std::set<int> provenance_node_indices(const sim::ProvenanceGraph& z, int n_agents) {
  std::set<int> out;
  for (const sim::ProvNode& v : z.nodes) out.insert(v.round * n_agents + v.agent);
  return out;
}

void export_graph_jsonl(const STGraph& g, std::ostream& out) {
  for (int i = 0; i < g.node_count(); ++i) {
    nlohmann::ordered_json j;
    j["node"] = i;
    j["agent"] = g.nodes[i].agent;
    j["round"] = g.nodes[i].round;
    j["response_feat"] = g.nodes[i].response_feat;
    j["state_feat"] = g.nodes[i].state_feat;
    out << j.dump() << "\n";
  }
  for (const STEdge& e : g.edges) {
    nlohmann::ordered_json j;
    j["src"] = e.src;
    j["dst"] = e.dst;
    j["etype"] = e.etype == EdgeType::temporal ? "temporal" : "communication";
    out << j.dump() << "\n";
  }
}

}  // namespace propguard::graph
