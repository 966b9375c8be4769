#include "propguard/explorer.hpp"

#include <algorithm>
#include <deque>

#include "propguard/error.hpp"

#include <json.hpp>

namespace propguard::explore {

namespace {

bool edge_visible(const graph::STEdge& e, const std::set<int>& visible) {
  return visible.count(e.src) && visible.count(e.dst);
}

}  // namespace

ExplorationState init_exploration(const graph::STGraph& g, int seed, int n, int l_max) {
  require(seed >= 0 && seed < g.node_count(), Errc::invalid_node, "exploration seed out of range");
  require(n >= 1, Errc::invalid_config, "neighborhood radius must be >= 1");
  require(l_max >= 0, Errc::invalid_config, "exploration budget must be >= 0");
  ExplorationState st;
  st.seed = seed;
  st.trajectory = {seed};
  st.suspicious_nodes = {seed};
  st.visible_nodes = graph::n_hop_neighborhood(g, seed, n);
  st.budget = l_max;
  st.n_reveal = n;
  if (l_max == 0 || frontier(st, g).empty()) {
    st.terminated = true;
    st.forced = true;
  }
  return st;
}

std::vector<int> frontier(const ExplorationState& state, const graph::STGraph& g) {
  std::set<int> result;
  for (int v : state.suspicious_nodes) {
    auto visit = [&](int u) {
      if (state.visible_nodes.count(u) && !state.suspicious_nodes.count(u)) result.insert(u);
    };
    for (int e : g.out_edges[v]) visit(g.edges[e].dst);
    for (int e : g.in_edges[v]) visit(g.edges[e].src);
  }
  return {result.begin(), result.end()};
}

ExplorationState apply_action(const ExplorationState& state, const graph::STGraph& g,
                              int action) {
  require(!state.terminated, Errc::illegal_action, "exploration already terminated");
  require(state.step < state.budget, Errc::illegal_action, "exploration budget exhausted");

  ExplorationState next = state;
  if (action == kStopAction) {
    next.terminated = true;
    next.forced = false;
    return next;
  }

  std::vector<int> fr = frontier(state, g);
  require(std::binary_search(fr.begin(), fr.end(), action), Errc::illegal_action,
          "action is not a frontier node");

  next.trajectory.push_back(action);
  next.suspicious_nodes.insert(action);
  // Collect visible edges between the new node and the prior subgraph,
  // both directions. Everything incident here is visible by construction.
  for (int e : g.out_edges[action]) {
    const graph::STEdge& ed = g.edges[e];
    if (state.suspicious_nodes.count(ed.dst) && edge_visible(ed, state.visible_nodes))
      next.suspicious_edges.insert(ed);
  }
  for (int e : g.in_edges[action]) {
    const graph::STEdge& ed = g.edges[e];
    if (state.suspicious_nodes.count(ed.src) && edge_visible(ed, state.visible_nodes))
      next.suspicious_edges.insert(ed);
  }
  std::set<int> revealed = graph::n_hop_neighborhood(g, action, state.n_reveal);
  next.visible_nodes.insert(revealed.begin(), revealed.end());
  next.step += 1;
  if (next.step == next.budget || frontier(next, g).empty()) {
    next.terminated = true;
    next.forced = true;
  }
  return next;
}

RolloutResult rollout(ExplorationPolicy& policy, const graph::STGraph& g,
                      const std::vector<double>& priors, int seed, int n, int l_max, Rng& rng) {
  policy.begin_rollout(g, priors, seed);
  RolloutResult out;
  ExplorationState state = init_exploration(g, seed, n, l_max);
  while (!state.terminated) {
    std::vector<int> fr = frontier(state, g);
    int action = policy.choose(state, g, priors, fr, rng);
    require(action == kStopAction || std::binary_search(fr.begin(), fr.end(), action),
            Errc::illegal_action, "policy returned an action outside the action set");
    out.decisions.push_back({state, fr, action});
    state = apply_action(state, g, action);
  }
  out.subgraph = {state.suspicious_nodes, state.suspicious_edges};
  out.final_state = std::move(state);
  return out;
}

SuspiciousSubgraph merge_subgraphs(const std::vector<SuspiciousSubgraph>& subgraphs) {
  SuspiciousSubgraph merged;
  for (const SuspiciousSubgraph& h : subgraphs) {
    merged.nodes.insert(h.nodes.begin(), h.nodes.end());
    merged.edges.insert(h.edges.begin(), h.edges.end());
  }
  return merged;
}

namespace {

class RandomPolicy final : public ExplorationPolicy {
 public:
  int choose(const ExplorationState&, const graph::STGraph&, const std::vector<double>&,
             const std::vector<int>& fr, Rng& rng) override {
    // Unguided expansion; never stops before the budget does.
    return fr[rng.next_below(static_cast<uint32_t>(fr.size()))];
  }
};

class GreedyPolicy final : public ExplorationPolicy {
 public:
  int choose(const ExplorationState&, const graph::STGraph&, const std::vector<double>& priors,
             const std::vector<int>& fr, Rng&) override {
    int best = fr[0];
    for (int u : fr)
      if (priors[u] > priors[best]) best = u;  // ties keep the smaller index
    return best;
  }
};

class BfsPolicy final : public ExplorationPolicy {
 public:
  void begin_rollout(const graph::STGraph&, const std::vector<double>&, int seed) override {
    queue_.clear();
    enqueued_.clear();
    enqueued_.insert(seed);
  }

  int choose(const ExplorationState&, const graph::STGraph&, const std::vector<double>&,
             const std::vector<int>& fr, Rng&) override {
    for (int u : fr)
      if (enqueued_.insert(u).second) queue_.push_back(u);
    // Frontier membership is monotone until expansion, so the head is valid.
    int u = queue_.front();
    queue_.pop_front();
    return u;
  }

 private:
  std::deque<int> queue_;
  std::set<int> enqueued_;
};

}  // namespace

std::unique_ptr<ExplorationPolicy> heuristic_policy(Heuristic kind) {
  switch (kind) {
    case Heuristic::random: return std::make_unique<RandomPolicy>();
    case Heuristic::greedy: return std::make_unique<GreedyPolicy>();
    case Heuristic::bfs: return std::make_unique<BfsPolicy>();
  }
  throw Error(Errc::invalid_config, "unknown heuristic kind");
}

SuspiciousSubgraph topk_subgraph(const graph::STGraph& g, const std::vector<double>& priors,
                                 int k) {
  require(k >= 1, Errc::invalid_input, "top-k requires k >= 1");
  std::vector<int> idx(g.node_count());
  for (int i = 0; i < g.node_count(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (priors[a] != priors[b]) return priors[a] > priors[b];
    return a < b;
  });
  if (static_cast<int>(idx.size()) > k) idx.resize(k);
  SuspiciousSubgraph h;
  h.nodes.insert(idx.begin(), idx.end());
  for (const graph::STEdge& e : g.edges)
    if (h.nodes.count(e.src) && h.nodes.count(e.dst)) h.edges.insert(e);
  return h;
}

void dump_trajectory_jsonl(const RolloutResult& r, std::ostream& out) {
  for (size_t k = 0; k < r.decisions.size(); ++k) {
    const DecisionRecord& d = r.decisions[k];
    nlohmann::ordered_json j;
    j["step"] = k;
    j["action"] = d.action == kStopAction ? "STOP" : std::to_string(d.action);
    j["frontier"] = d.action_set;
    j["subgraph_size"] = d.state.suspicious_nodes.size();
    out << j.dump() << "\n";
  }
}

}  // namespace propguard::explore
