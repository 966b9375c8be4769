#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "propguard/explorer.hpp"
#include "propguard/scorer.hpp"
#include "propguard/sim.hpp"
#include "propguard/st_graph.hpp"

namespace propguard::defense {

enum class FailureMode {
  answer_manipulation,
  instruction_injection,
  reasoning_corruption,
  information_leak,
  task_deviation,
};

const char* failure_mode_name(FailureMode m);
FailureMode failure_mode_from(const std::string& name);

struct DiagnosisResult {
  int node = 0;  // backbone node index
  bool harmful = false;
  sim::Cause cause = sim::Cause::none;          // none unless harmful
  std::optional<FailureMode> mode;              // none unless harmful
  double confidence = 0.0;
  bool fallback = false;  // true when an external diagnoser failed over to the heuristic
};

// Diagnosis is a function of (node state, merged subgraph) only; priors and
// scorer outputs never reach it.
class Diagnoser {
 public:
  virtual ~Diagnoser() = default;
  virtual DiagnosisResult diagnose(int node, const sim::EpisodeRecord& episode,
                                   const explore::SuspiciousSubgraph& merged) = 0;
};

// Ground-truth reader with per-field flip probability eta (default 0).
class OracleDiagnoser final : public Diagnoser {
 public:
  explicit OracleDiagnoser(double eta = 0.0, uint64_t rng_seed = 0)
      : eta_(eta), rng_seed_(rng_seed) {}
  DiagnosisResult diagnose(int node, const sim::EpisodeRecord& episode,
                           const explore::SuspiciousSubgraph& merged) override;

 private:
  double eta_;
  uint64_t rng_seed_;
};

// Flags a node when any state channel shows payload visibility above the
// threshold; fully stealthy payloads escape it by construction.
class HeuristicDiagnoser final : public Diagnoser {
 public:
  explicit HeuristicDiagnoser(double threshold = 0.15) : threshold_(threshold) {}
  DiagnosisResult diagnose(int node, const sim::EpisodeRecord& episode,
                           const explore::SuspiciousSubgraph& merged) override;

 private:
  double threshold_;
};

DiagnosisResult diagnose_node(int node, const sim::EpisodeRecord& episode,
                              const explore::SuspiciousSubgraph& merged, Diagnoser& diagnoser);

struct HarmfulSubgraph {
  std::set<int> nodes;               // V+
  std::set<graph::STEdge> edges;     // E+, subset of merged edges between harmful nodes
  std::set<int> sources;             // in-degree-0 nodes of E+
};

// Keeps merged edges between harmful nodes that represent diagnosed
// dependencies: temporal edges always, communication edges only into nodes
// whose diagnosed risk source is msg.
HarmfulSubgraph extract_harmful_subgraph(const explore::SuspiciousSubgraph& merged,
                                         const std::vector<DiagnosisResult>& diagnoses);

enum class RemediationActionKind {
  regenerate_response,
  sanitize_memory_then_regenerate,
  discard_tool_output_then_regenerate,
};

const char* remediation_action_name(RemediationActionKind k);

struct RemediationAction {
  int node = 0;
  RemediationActionKind action = RemediationActionKind::regenerate_response;
  bool requires_tool_reinvoke = false;
};

// Repairs one source node according to its diagnosed cause and regenerates
// its response with the benign dynamics on the node's original RNG stream.
// A msg-caused source is a contract violation: its true cause lies upstream.
std::pair<sim::NodeState, RemediationAction> remediate_source(int node,
                                                              const DiagnosisResult& diagnosis,
                                                              const sim::EpisodeRecord& episode);

struct SourceCorrection {
  sim::NodeState state;
  sim::Cause channel = sim::Cause::none;  // self / memory / tool
};

// Recomputes the downstream dependency closure of the corrected sources in
// ascending round order, reusing each node's original RNG stream. Channel
// corrections persist for the agent's later rounds (a sanitized memory or a
// disconnected poisoned tool stays clean). Nodes outside the closure keep
// their original states bit-identically.
sim::EpisodeRecord replay_downstream(const sim::EpisodeRecord& episode, const graph::STGraph& g,
                                     const std::map<int, SourceCorrection>& corrections);

// Mitigation ablation: drop the outgoing messages of the given nodes and
// replay their recipients, without correcting any source.
sim::EpisodeRecord replay_with_pruned(const sim::EpisodeRecord& episode, const graph::STGraph& g,
                                      const std::set<int>& pruned);

enum class DefenseVariant { full, prune, none };

struct DefenseConfig {
  int top_k = 3;
  int n_reveal = 2;
  int budget = 12;
  graph::FeatureConfig features;
  DefenseVariant variant = DefenseVariant::full;
  uint64_t rollout_seed = 0;  // combined with the episode seed for rollout RNG
};

struct DefenseOutcome {
  std::vector<double> priors;
  std::vector<int> seeds;
  explore::SuspiciousSubgraph merged;
  std::vector<DiagnosisResult> diagnoses;
  HarmfulSubgraph harmful;
  std::vector<RemediationAction> actions;
  std::vector<int> flagged_msg_sources;  // surfaced, not remediated
  bool cycle_fallback = false;
  sim::EpisodeRecord remediated;
};

// Full pipeline: graph construction, priors, top-K seeds, per-seed
// exploration, merge, diagnosis, extraction, localization, remediation,
// replay. Stage failures propagate with a stage tag.
DefenseOutcome run_defense(const sim::EpisodeRecord& episode,
                           const scorer::ScorerParameters& scorer_params,
                           explore::ExplorationPolicy& policy, Diagnoser& diagnoser,
                           const DefenseConfig& cfg);

// Stages 3..8 with externally supplied priors; backs the no-prior ablation
// and the engineered-prior tests.
DefenseOutcome run_defense_with_priors(const sim::EpisodeRecord& episode, const graph::STGraph& g,
                                       const std::vector<double>& priors,
                                       explore::ExplorationPolicy& policy, Diagnoser& diagnoser,
                                       const DefenseConfig& cfg);

}  // namespace propguard::defense
