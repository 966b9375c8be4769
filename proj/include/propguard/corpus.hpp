#pragma once

#include <cstdint>
#include <vector>

#include "propguard/sim.hpp"

namespace propguard::harness {

// Deterministic synthetic episode corpus. Attack parameters are drawn
// uniformly from the configured ranges per episode.
struct CorpusSpec {
  std::vector<sim::TopologyKind> topologies = {sim::TopologyKind::random};
  int n_agents = 8;
  double edge_prob = 0.3;
  int rounds = 4;
  int count = 100;
  bool benign = false;
  std::vector<sim::AttackFamily> families = {sim::AttackFamily::prompt_injection,
                                             sim::AttackFamily::tool_attack,
                                             sim::AttackFamily::memory_attack};
  int n_targets = 2;
  int n_targets_max = 0;  // when > n_targets, the count is drawn per episode
  double strength_min = 0.7;
  double strength_max = 1.0;
  double stealth_min = 0.0;
  double stealth_max = 0.4;
  double susceptibility_min = 0.7;
  double susceptibility_max = 1.0;
  int n_labels = 4;
  double alpha = 0.95;
  uint64_t base_seed = 0;
};

std::vector<sim::EpisodeRecord> generate_episodes(const CorpusSpec& spec);

}  // namespace propguard::harness
