#pragma once

#include <memory>
#include <ostream>
#include <set>
#include <vector>

#include "propguard/rng.hpp"
#include "propguard/st_graph.hpp"

namespace propguard::explore {

constexpr int kStopAction = -1;

struct SuspiciousSubgraph {
  std::set<int> nodes;
  std::set<graph::STEdge> edges;

  bool operator==(const SuspiciousSubgraph&) const = default;
};

// Snapshot of one exploration from a seed: the trajectory zeta (seed
// first), the suspicious subgraph H_k, the visible region, and budget
// bookkeeping. Value semantics; apply_action returns a new state.
struct ExplorationState {
  int seed = 0;
  std::vector<int> trajectory;  // zeta, seed first
  std::set<int> suspicious_nodes;
  std::set<graph::STEdge> suspicious_edges;
  std::set<int> visible_nodes;
  int step = 0;
  int budget = 0;    // L_max expansions
  int n_reveal = 0;  // neighborhood radius n
  bool terminated = false;
  bool forced = false;  // terminated by the environment, not by a STOP decision
};

ExplorationState init_exploration(const graph::STGraph& g, int seed, int n, int l_max);

// Visible, unexplored nodes adjacent to the suspicious subgraph. Sorted.
std::vector<int> frontier(const ExplorationState& state, const graph::STGraph& g);

// Expands with a frontier node (collecting all visible edges to the
// current subgraph, both directions) or terminates on kStopAction.
ExplorationState apply_action(const ExplorationState& state, const graph::STGraph& g, int action);

struct DecisionRecord {
  ExplorationState state;       // observation digest at decision time
  std::vector<int> action_set;  // frontier; STOP is implicitly available
  int action = kStopAction;
};

struct RolloutResult {
  std::vector<DecisionRecord> decisions;
  SuspiciousSubgraph subgraph;
  ExplorationState final_state;
};

class ExplorationPolicy {
 public:
  virtual ~ExplorationPolicy() = default;
  virtual void begin_rollout(const graph::STGraph& g, const std::vector<double>& priors,
                             int seed) {
    (void)g, (void)priors, (void)seed;
  }
  // Must return kStopAction or a member of `frontier`.
  virtual int choose(const ExplorationState& state, const graph::STGraph& g,
                     const std::vector<double>& priors, const std::vector<int>& frontier,
                     Rng& rng) = 0;
};

RolloutResult rollout(ExplorationPolicy& policy, const graph::STGraph& g,
                      const std::vector<double>& priors, int seed, int n, int l_max, Rng& rng);

SuspiciousSubgraph merge_subgraphs(const std::vector<SuspiciousSubgraph>& subgraphs);

enum class Heuristic { random, greedy, bfs };

std::unique_ptr<ExplorationPolicy> heuristic_policy(Heuristic kind);

// Induced subgraph on the k highest-prior nodes; no exploration involved.
SuspiciousSubgraph topk_subgraph(const graph::STGraph& g, const std::vector<double>& priors,
                                 int k);

// Debug trace: one JSON line per decision step.
void dump_trajectory_jsonl(const RolloutResult& r, std::ostream& out);

}  // namespace propguard::explore
