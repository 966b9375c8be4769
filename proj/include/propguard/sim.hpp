#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "propguard/rng.hpp"
#include "propguard/topology.hpp"

namespace propguard::sim {

constexpr int kNoLabel = -1;

// Small fixed token vocabulary standing in for message text. MARKER is
// present in a content's token list exactly when payload_strength > 0.
constexpr int kMarkerToken = 1;
constexpr int kLabelTokenBase = 2;  // label l -> token 2 + l
constexpr int kTaskToken = 6;
constexpr int kToolToken = 7;
constexpr int kFillerTokenBase = 8;
constexpr int kVocabSize = 64;

struct Content {
  int label = kNoLabel;
  double payload_strength = 0.0;  // sigma, 0 = clean
  double stealth = 0.0;           // s, meaningful only when sigma > 0
  std::vector<int> tokens;

  // The part of the payload an observer can actually see.
  double visibility() const { return payload_strength * (1.0 - stealth); }
  bool has_marker() const;

  bool operator==(const Content&) const = default;
};

struct Task {
  std::string task_id;
  int n_labels = 4;
  int true_label = 0;
  int adversarial_label = 1;
  bool requires_tool = false;

  bool operator==(const Task&) const = default;
};

struct Message {
  AgentId sender = 0;
  AgentId receiver = 0;
  int send_round = 0;
  Content content;

  bool operator==(const Message&) const = default;
};

enum class AttackFamily { prompt_injection, tool_attack, memory_attack };

const char* attack_family_name(AttackFamily f);
AttackFamily attack_family_from(const std::string& name);

struct AttackSpec {
  AttackFamily family = AttackFamily::prompt_injection;
  std::set<AgentId> targets;
  double strength = 1.0;        // sigma
  double stealth = 0.0;         // s
  double susceptibility = 1.0;  // rho

  bool operator==(const AttackSpec&) const = default;
};

// Which channel contaminated a node. `self` marks injected attacker agents.
enum class Cause { none, msg, tool, memory, self };

const char* cause_name(Cause c);
Cause cause_from(const std::string& name);

struct NodeState {
  AgentId agent = 0;
  int round = 0;
  Content response;
  std::vector<Message> inbox;
  Content memory;
  Content tool_obs;
  bool compromised = false;  // ground truth, hidden from defenses
  Cause cause = Cause::none;  // ground truth, hidden from defenses

  bool operator==(const NodeState&) const = default;
};

enum class ProvEdgeType { temporal, communication };

struct ProvNode {
  AgentId agent = 0;
  int round = 0;
  auto operator<=>(const ProvNode&) const = default;
};

struct ProvEdge {
  ProvNode src;
  ProvNode dst;
  ProvEdgeType etype = ProvEdgeType::temporal;
  auto operator<=>(const ProvEdge&) const = default;
};

// Ground-truth malicious propagation subgraph Z.
struct ProvenanceGraph {
  std::set<ProvNode> nodes;
  std::set<ProvEdge> edges;

  bool operator==(const ProvenanceGraph&) const = default;
};

struct EpisodeRecord {
  Topology topology;
  Task task;
  std::optional<AttackSpec> attack;
  int rounds = 0;           // T
  uint64_t rng_seed = 0;
  double alpha = 0.95;      // benign per-agent accuracy
  std::vector<NodeState> states;  // index = round * n_agents + agent
  std::vector<Message> messages;
  int final_output = kNoLabel;
  ProvenanceGraph provenance;

  int state_index(AgentId agent, int round) const { return round * topology.n_agents + agent; }
  const NodeState& state(AgentId agent, int round) const { return states[state_index(agent, round)]; }

  bool operator==(const EpisodeRecord&) const = default;
};

struct AttackerEmission {
  double strength = 0.0;
  double stealth = 0.0;
};

struct StepResult {
  Content response;
  bool compromised = false;
  Cause cause = Cause::none;
};

Content make_clean_memory(const Task& task);
Content make_clean_tool_obs();
Content make_poisoned_content(int adversarial_label, double strength, double stealth,
                              int carrier_token);

// One agent update. Clean inputs produce the true label with probability
// alpha, otherwise a uniformly wrong one. A contaminated input (sigma > 0
// anywhere in inbox/memory/tool) flips the agent with probability
// min(1, susceptibility * sigma_max); on a flip the response carries the
// adversarial label and the inherited payload, and `cause` names the
// maximal-sigma channel (priority memory > tool > msg on ties). An attacker
// emission overrides everything and yields cause=self while its strength
// is positive.
StepResult step_agent(AgentId agent, int round, const Task& task, std::span<const Message> inbox,
                      const Content& memory, const Content& tool_obs, double susceptibility,
                      Rng& rng, double alpha = 0.95,
                      std::optional<AttackerEmission> attacker = std::nullopt);

// Runs T rounds of message passing with optional round-0 attack injection
// and records ground-truth provenance. Deterministic in all arguments.
EpisodeRecord run_episode(const Topology& topology, const Task& task,
                          const std::optional<AttackSpec>& attack, int rounds, uint64_t rng_seed,
                          double alpha = 0.95);

// Pure accessor for the recorded Z.
const ProvenanceGraph& ground_truth_subgraph(const EpisodeRecord& episode);

// Rebuilds Z from node states and inboxes; run_episode and replay share it.
ProvenanceGraph build_provenance(const std::vector<NodeState>& states, int n_agents, int rounds);

int majority_label(const EpisodeRecord& episode);

}  // namespace propguard::sim
