#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "propguard/config.hpp"
#include "propguard/corpus.hpp"
#include "propguard/inspector.hpp"
#include "propguard/scorer.hpp"

namespace propguard::harness {

struct SweepConfig {
  std::vector<std::string> topologies = {"random"};
  std::vector<std::string> attacks = {"prompt_injection"};
  std::vector<std::string> variants = {"full"};
  std::vector<uint64_t> seeds = {1};
  std::vector<int> k_values;  // when set, expands variants as "<variant>-k<K>"
  int episodes_per_cell = 20;

  int n_agents = 8;
  double edge_prob = 0.3;
  int rounds = 4;
  int n_targets = 2;
  double strength = 0.9;
  double stealth = 0.2;
  double susceptibility = 0.8;
  int n_labels = 4;
  double alpha = 0.95;

  int top_k = 3;
  int n_reveal = 2;
  int budget = 12;
  std::string policy = "greedy";      // trained | greedy | bfs | random | topk
  std::string diagnoser = "oracle";   // oracle | heuristic | external
  double oracle_eta = 0.0;
  double heuristic_threshold = 0.15;
  int topk_k = 8;
  std::string adapter_url;
  int adapter_timeout_ms = 2000;

  int workers = 1;
  std::string out_csv;

  static SweepConfig from(const Config& cfg);
};

struct SweepRow {
  std::string topology;
  std::string attack;
  std::string variant;
  std::string seed_label;  // seed value or "mean"
  double asr = 0.0;
  double mdsr = 0.0;
  double src_recall = 0.0;
  double src_precision = 0.0;
  double src_f1 = 0.0;
  double src_accuracy = 0.0;
  long long runtime_ms = 0;
};

// Cartesian product over (topology x attack x variant x seed); per-cell
// means plus one aggregate row per (topology x attack x variant). Cells run
// on up to cfg.workers threads; output order is deterministic.
std::vector<SweepRow> run_sweep(const SweepConfig& cfg,
                                const scorer::ScorerParameters& scorer_params,
                                const std::optional<grpo::PolicyParameters>& policy_params);

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out);

// Exact decimal text for doubles; round-trips through strtod.
std::string format_double(double v);

}  // namespace propguard::harness
