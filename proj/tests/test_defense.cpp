#include <doctest.h>

#include <cmath>

#include "propguard/corpus.hpp"
#include "propguard/defense.hpp"
#include "propguard/episode_io.hpp"
#include "propguard/inspector.hpp"
#include "propguard/metrics.hpp"
#include "support/oracles.hpp"

using namespace propguard;
using namespace propguard::sim;
using namespace propguard::graph;
using namespace propguard::explore;
using namespace propguard::defense;

namespace {

Task make_task() {
  Task t;
  t.task_id = "d";
  t.n_labels = 4;
  t.true_label = 0;
  t.adversarial_label = 2;
  return t;
}

EpisodeRecord chain_attack_episode() {
  Topology topo = build_topology(TopologyKind::chain, 3, 0.0, 1);
  AttackSpec atk;
  atk.family = AttackFamily::prompt_injection;
  atk.targets = {0};
  atk.strength = 1.0;
  atk.stealth = 0.0;
  atk.susceptibility = 1.0;
  return run_episode(topo, make_task(), atk, 3, 21, 1.0);
}

// Expansion policy that explores everything reachable; stands in for a
// perfect inspector in oracle-completeness tests.
class ExpandAll final : public ExplorationPolicy {
 public:
  int choose(const ExplorationState&, const STGraph&, const std::vector<double>&,
             const std::vector<int>& fr, Rng&) override {
    return fr.front();
  }
};

SuspiciousSubgraph full_merged(const EpisodeRecord& ep, const STGraph& g) {
  SuspiciousSubgraph h;
  for (int v = 0; v < g.node_count(); ++v) h.nodes.insert(v);
  for (const STEdge& e : g.edges) h.edges.insert(e);
  (void)ep;
  return h;
}

}  // namespace

TEST_CASE("oracle diagnoser is a ground-truth passthrough at eta=0") {
  EpisodeRecord ep = chain_attack_episode();
  STGraph g = build_backbone(ep);
  SuspiciousSubgraph merged = full_merged(ep, g);
  OracleDiagnoser oracle;
  DiagnosisResult d0 = diagnose_node(g.node_index(0, 0), ep, merged, oracle);
  CHECK(d0.harmful);
  CHECK(d0.cause == Cause::self);
  CHECK(d0.mode == FailureMode::answer_manipulation);
  DiagnosisResult d1 = diagnose_node(g.node_index(1, 1), ep, merged, oracle);
  CHECK(d1.harmful);
  CHECK(d1.cause == Cause::msg);
  DiagnosisResult clean = diagnose_node(g.node_index(2, 0), ep, merged, oracle);
  CHECK_FALSE(clean.harmful);
  CHECK(clean.cause == Cause::none);
}

TEST_CASE("fully stealthy payloads escape the heuristic diagnoser") {
  Topology topo = build_topology(TopologyKind::chain, 3, 0.0, 1);
  AttackSpec atk;
  atk.family = AttackFamily::prompt_injection;
  atk.targets = {0};
  atk.strength = 1.0;
  atk.stealth = 1.0;  // invisible
  atk.susceptibility = 1.0;
  EpisodeRecord ep = run_episode(topo, make_task(), atk, 3, 5, 1.0);
  STGraph g = build_backbone(ep);
  SuspiciousSubgraph merged = full_merged(ep, g);
  HeuristicDiagnoser heuristic;
  DiagnosisResult d = diagnose_node(g.node_index(0, 0), ep, merged, heuristic);
  CHECK_FALSE(d.harmful);

  // The oracle still sees it.
  OracleDiagnoser oracle;
  CHECK(diagnose_node(g.node_index(0, 0), ep, merged, oracle).harmful);
}

TEST_CASE("heuristic flag rate matches the threshold-crossing probability") {
  // 500 single-channel nodes with sigma, s ~ U(0,1); the closed-form
  // crossing probability comes from the quadrature oracle.
  const double tau = 0.15;
  const int batch = 500;
  Task task = make_task();
  Topology topo = build_topology(TopologyKind::chain, 2, 0.0, 1);
  EpisodeRecord ep = run_episode(topo, task, std::nullopt, 1, 3, 1.0);
  STGraph g = build_backbone(ep);
  SuspiciousSubgraph merged = full_merged(ep, g);
  HeuristicDiagnoser heuristic(tau);

  Rng rng(2024);
  int flagged = 0;
  for (int i = 0; i < batch; ++i) {
    EpisodeRecord probe = ep;
    double sigma = rng.next_unit();
    double stealth = rng.next_unit();
    probe.states[0].memory = make_poisoned_content(task.adversarial_label, sigma, stealth,
                                                   kTaskToken);
    flagged += heuristic.diagnose(0, probe, merged).harmful;
  }
  double expect = oracles::visibility_crossing_probability(tau);
  double stderr3 = 3.0 * std::sqrt(expect * (1 - expect) / batch);
  CHECK(std::abs(static_cast<double>(flagged) / batch - expect) < stderr3 + 0.01);

  // Clean nodes are never flagged (zero false positives without payloads).
  CHECK_FALSE(heuristic.diagnose(0, ep, merged).harmful);
}

TEST_CASE("extraction: harmful path, disjoint chains, empty case") {
  auto diag = [](int node, bool harmful, Cause cause) {
    DiagnosisResult d;
    d.node = node;
    d.harmful = harmful;
    d.cause = cause;
    return d;
  };

  SuspiciousSubgraph merged;
  merged.nodes = {0, 1, 2};
  merged.edges = {{0, 1, EdgeType::communication}, {1, 2, EdgeType::communication}};
  std::vector<DiagnosisResult> diags{diag(0, true, Cause::self), diag(1, true, Cause::msg),
                                     diag(2, true, Cause::msg)};
  HarmfulSubgraph h = extract_harmful_subgraph(merged, diags);
  CHECK(h.nodes == std::set<int>{0, 1, 2});
  CHECK(h.sources == std::set<int>{0});

  // All benign -> empty subgraph, empty sources.
  std::vector<DiagnosisResult> benign{diag(0, false, Cause::none), diag(1, false, Cause::none),
                                      diag(2, false, Cause::none)};
  HarmfulSubgraph empty = extract_harmful_subgraph(merged, benign);
  CHECK(empty.nodes.empty());
  CHECK(empty.sources.empty());

  // Two disjoint harmful chains -> one source each.
  SuspiciousSubgraph two;
  two.nodes = {0, 1, 10, 11};
  two.edges = {{0, 1, EdgeType::temporal}, {10, 11, EdgeType::temporal}};
  std::vector<DiagnosisResult> d2{diag(0, true, Cause::memory), diag(1, true, Cause::memory),
                                  diag(10, true, Cause::tool), diag(11, true, Cause::tool)};
  HarmfulSubgraph hh = extract_harmful_subgraph(two, d2);
  CHECK(hh.sources == std::set<int>{0, 10});
}

TEST_CASE("extraction drops communication edges into non-msg nodes") {
  // A memory-caused node also received a contaminated message: the comm edge
  // is not its diagnosed dependency, so it stays a source.
  auto diag = [](int node, bool harmful, Cause cause) {
    DiagnosisResult d;
    d.node = node;
    d.harmful = harmful;
    d.cause = cause;
    return d;
  };
  SuspiciousSubgraph merged;
  merged.nodes = {0, 1};
  merged.edges = {{0, 1, EdgeType::communication}};
  std::vector<DiagnosisResult> diags{diag(0, true, Cause::self), diag(1, true, Cause::memory)};
  HarmfulSubgraph h = extract_harmful_subgraph(merged, diags);
  CHECK(h.edges.empty());
  CHECK(h.sources == std::set<int>{0, 1});
}

TEST_CASE("cycle fallback picks the earliest harmful node and flags it") {
  // Merged subgraphs are unions of per-seed explorations, so a fabricated
  // cyclic edge set exercises the fallback path directly through the
  // pipeline entry.
  EpisodeRecord ep = chain_attack_episode();
  STGraph g = build_backbone(ep);

  class FixedMergedPolicy final : public ExplorationPolicy {
   public:
    int choose(const ExplorationState&, const STGraph&, const std::vector<double>&,
               const std::vector<int>&, Rng&) override {
      return kStopAction;
    }
  };

  SuspiciousSubgraph merged;
  merged.nodes = {0, 3};
  merged.edges = {{0, 3, EdgeType::communication}, {3, 0, EdgeType::communication}};
  std::vector<DiagnosisResult> diags;
  for (int v : {0, 3}) {
    DiagnosisResult d;
    d.node = v;
    d.harmful = true;
    d.cause = Cause::msg;
    diags.push_back(d);
  }
  HarmfulSubgraph h = extract_harmful_subgraph(merged, diags);
  CHECK(h.sources.empty());
  CHECK_FALSE(h.nodes.empty());
}

TEST_CASE("remediation repairs each channel and regenerates cleanly") {
  Task task = make_task();
  Topology topo = build_topology(TopologyKind::star, 4, 0.0, 1);

  SUBCASE("memory-poisoned source") {
    AttackSpec atk;
    atk.family = AttackFamily::memory_attack;
    atk.targets = {1};
    atk.strength = 1.0;
    atk.susceptibility = 1.0;
    EpisodeRecord ep = run_episode(topo, task, atk, 2, 7, 1.0);
    STGraph g = build_backbone(ep);
    int node = g.node_index(1, 0);
    REQUIRE(ep.state(1, 0).compromised);
    DiagnosisResult d;
    d.node = node;
    d.harmful = true;
    d.cause = Cause::memory;
    auto [corrected, action] = remediate_source(node, d, ep);
    CHECK(action.action == RemediationActionKind::sanitize_memory_then_regenerate);
    CHECK(corrected.memory.payload_strength == 0.0);
    CHECK(corrected.response.label == task.true_label);  // alpha = 1
    CHECK(corrected.response.payload_strength == 0.0);
    CHECK_FALSE(corrected.compromised);

    // Re-encoding the corrected state shows clean payload channels.
    std::vector<double> feat = encode_full_state(corrected, 4, 24, 36, 0.0, 9);
    CHECK(feat[4] == 0.0);       // response visibility
    CHECK(feat[25] == 0.0);      // memory channel
  }

  SUBCASE("self attacker source") {
    EpisodeRecord ep = chain_attack_episode();
    STGraph g = build_backbone(ep);
    DiagnosisResult d;
    d.node = g.node_index(0, 0);
    d.harmful = true;
    d.cause = Cause::self;
    auto [corrected, action] = remediate_source(d.node, d, ep);
    CHECK(action.action == RemediationActionKind::regenerate_response);
    CHECK(corrected.response.payload_strength == 0.0);
    CHECK_FALSE(corrected.response.has_marker());
  }

  SUBCASE("tool source honors requires_tool") {
    Task tool_task = task;
    tool_task.requires_tool = true;
    AttackSpec atk;
    atk.family = AttackFamily::tool_attack;
    atk.targets = {2};
    atk.strength = 1.0;
    atk.susceptibility = 1.0;
    EpisodeRecord ep = run_episode(topo, tool_task, atk, 2, 9, 1.0);
    STGraph g = build_backbone(ep);
    DiagnosisResult d;
    d.node = g.node_index(2, 0);
    d.harmful = true;
    d.cause = Cause::tool;
    auto [corrected, action] = remediate_source(d.node, d, ep);
    CHECK(action.action == RemediationActionKind::discard_tool_output_then_regenerate);
    CHECK(action.requires_tool_reinvoke);
    CHECK(corrected.tool_obs.payload_strength == 0.0);
  }

  SUBCASE("message-caused source is a contract violation") {
    EpisodeRecord ep = chain_attack_episode();
    DiagnosisResult d;
    d.node = 4;  // (1,1)
    d.harmful = true;
    d.cause = Cause::msg;
    CHECK_THROWS_AS(remediate_source(4, d, ep), Error);
  }
}

TEST_CASE("replay: empty corrections preserve the episode") {
  EpisodeRecord ep = chain_attack_episode();
  STGraph g = build_backbone(ep);
  EpisodeRecord replayed = replay_downstream(ep, g, {});
  CHECK(replayed == ep);
}

TEST_CASE("replay fixes the deterministic chain attack end to end") {
  EpisodeRecord ep = chain_attack_episode();
  STGraph g = build_backbone(ep);
  int src = g.node_index(0, 0);
  DiagnosisResult d;
  d.node = src;
  d.harmful = true;
  d.cause = Cause::self;
  auto [corrected, action] = remediate_source(src, d, ep);
  std::map<int, SourceCorrection> corrections{{src, {corrected, Cause::self}}};
  EpisodeRecord fixed = replay_downstream(ep, g, corrections);

  CHECK(harness::compute_asr(fixed) == 0.0);
  CHECK(fixed.final_output == make_task().true_label);
  CHECK(fixed.provenance.nodes.empty());

  // Idempotence: replaying the replay with the same corrections is a fixed
  // point.
  EpisodeRecord again = replay_downstream(fixed, g, corrections);
  CHECK(again == fixed);
}

TEST_CASE("replay leaves nodes outside the closure bit-identical") {
  harness::CorpusSpec spec;
  spec.count = 5;
  spec.n_agents = 6;
  spec.rounds = 4;
  spec.base_seed = 61;
  for (EpisodeRecord& ep : harness::generate_episodes(spec)) {
    STGraph g = build_backbone(ep);
    std::set<int> truth = harness::true_sources(ep);
    REQUIRE_FALSE(truth.empty());
    std::map<int, SourceCorrection> corrections;
    OracleDiagnoser oracle;
    SuspiciousSubgraph merged;
    for (int v = 0; v < g.node_count(); ++v) merged.nodes.insert(v);
    for (int src : truth) {
      DiagnosisResult d = oracle.diagnose(src, ep, merged);
      if (d.cause == Cause::msg) continue;
      auto [corrected, action] = remediate_source(src, d, ep);
      corrections[src] = {corrected, d.cause};
    }
    EpisodeRecord fixed = replay_downstream(ep, g, corrections);
    std::set<int> affected = downstream_closure(g, harness::true_sources(ep));
    for (int v = 0; v < g.node_count(); ++v) {
      if (affected.count(v) || corrections.count(v)) continue;
      CHECK(fixed.states[v] == ep.states[v]);
    }
  }
}

TEST_CASE("run_defense leaves benign episodes untouched") {
  Topology topo = build_topology(TopologyKind::tree, 5, 0.0, 1);
  EpisodeRecord ep = run_episode(topo, make_task(), std::nullopt, 3, 13);
  scorer::ScorerParameters sp = scorer::ScorerParameters::random_init(24, 8, 3, 0.2);
  HeuristicDiagnoser diagnoser;
  ExpandAll policy;
  DefenseConfig cfg;
  DefenseOutcome out = run_defense(ep, sp, policy, diagnoser, cfg);
  CHECK(out.harmful.nodes.empty());
  CHECK(out.actions.empty());
  CHECK(out.remediated == ep);
}

TEST_CASE("oracle completeness: full coverage empties the compromised set") {
  harness::CorpusSpec spec;
  spec.count = 12;
  spec.n_agents = 6;
  spec.rounds = 4;
  spec.base_seed = 88;
  spec.topologies = {TopologyKind::random, TopologyKind::chain, TopologyKind::star,
                     TopologyKind::tree};
  for (EpisodeRecord& ep : harness::generate_episodes(spec)) {
    scorer::ScorerParameters sp = scorer::ScorerParameters::random_init(24, 8, 3, 0.2);
    OracleDiagnoser diagnoser;
    ExpandAll policy;
    DefenseConfig cfg;
    cfg.top_k = 3;
    cfg.budget = 1000;  // merged_H covers everything reachable
    cfg.n_reveal = 2;
    DefenseOutcome out = run_defense(ep, sp, policy, diagnoser, cfg);
    for (const NodeState& st : out.remediated.states) CHECK_FALSE(st.compromised);
    CHECK(out.remediated.provenance.nodes.empty());
  }
}

TEST_CASE("diagnosis is independent of priors") {
  EpisodeRecord ep = chain_attack_episode();
  STGraph g = build_backbone(ep);
  OracleDiagnoser diagnoser;
  ExpandAll policy;
  DefenseConfig cfg;
  cfg.budget = 50;

  std::vector<double> priors(g.node_count());
  Rng rng(4);
  for (double& p : priors) p = rng.next_unit();
  DefenseOutcome a = run_defense_with_priors(ep, g, priors, policy, diagnoser, cfg);

  std::vector<double> permuted = priors;
  std::reverse(permuted.begin(), permuted.end());
  DefenseOutcome b = run_defense_with_priors(ep, g, permuted, policy, diagnoser, cfg);

  // Seeds may differ, but diagnosis per node must agree wherever both
  // explorations covered the node.
  std::map<int, bool> verdict_a, verdict_b;
  for (const DiagnosisResult& d : a.diagnoses) verdict_a[d.node] = d.harmful;
  for (const DiagnosisResult& d : b.diagnoses) verdict_b[d.node] = d.harmful;
  for (const auto& [node, harmful] : verdict_a)
    if (verdict_b.count(node)) CHECK(verdict_b[node] == harmful);
}

TEST_CASE("defense pipeline is deterministic across runs") {
  harness::CorpusSpec spec;
  spec.count = 1;
  spec.n_agents = 6;
  spec.rounds = 4;
  spec.base_seed = 31;
  EpisodeRecord ep = harness::generate_episodes(spec)[0];
  scorer::ScorerParameters sp = scorer::ScorerParameters::random_init(24, 8, 9, 0.2);
  OracleDiagnoser diagnoser;
  DefenseConfig cfg;
  auto run_once = [&]() {
    auto policy = heuristic_policy(Heuristic::random);
    return run_defense(ep, sp, *policy, diagnoser, cfg);
  };
  DefenseOutcome a = run_once();
  DefenseOutcome b = run_once();
  CHECK(harness::outcome_to_json(a) == harness::outcome_to_json(b));
  CHECK(a.remediated == b.remediated);
}

TEST_CASE("defending an already-remediated episode changes nothing") {
  EpisodeRecord ep = chain_attack_episode();
  scorer::ScorerParameters sp = scorer::ScorerParameters::random_init(24, 8, 3, 0.2);
  OracleDiagnoser oracle;
  ExpandAll policy;
  DefenseConfig cfg;
  cfg.budget = 50;
  DefenseOutcome first = run_defense(ep, sp, policy, oracle, cfg);
  CHECK(harness::compute_asr(first.remediated) == 0.0);

  // Second pass with the heuristic diagnoser: nothing visible remains.
  HeuristicDiagnoser heuristic;
  DefenseOutcome second = run_defense(first.remediated, sp, policy, heuristic, cfg);
  CHECK(second.harmful.nodes.empty());
  CHECK(second.remediated == first.remediated);
}

TEST_CASE("round-0 attacker seeds confirm as sources and replay restores the answer") {
  // Reliable-prior case: seeds sit on the true round-0 attackers, which have
  // no temporal predecessors, and the defended output is correct again.
  Topology topo = build_topology(TopologyKind::random, 6, 0.4, 15);
  AttackSpec atk;
  atk.family = AttackFamily::prompt_injection;
  atk.targets = {1, 4};
  atk.strength = 1.0;
  atk.stealth = 0.0;
  atk.susceptibility = 1.0;
  EpisodeRecord ep = run_episode(topo, make_task(), atk, 3, 44, 1.0);
  REQUIRE(ep.final_output == make_task().adversarial_label);
  STGraph g = build_backbone(ep);

  // Engineered reliable priors: ground-truth attacker nodes at round 0.
  std::vector<double> priors(g.node_count(), 0.1);
  priors[g.node_index(1, 0)] = 0.99;
  priors[g.node_index(4, 0)] = 0.98;

  OracleDiagnoser diagnoser;
  ExpandAll policy;
  DefenseConfig cfg;
  cfg.top_k = 2;
  cfg.budget = 60;
  DefenseOutcome out = run_defense_with_priors(ep, g, priors, policy, diagnoser, cfg);
  CHECK(out.seeds == std::vector<int>{g.node_index(1, 0), g.node_index(4, 0)});
  CHECK(out.harmful.sources.count(g.node_index(1, 0)));
  CHECK(out.harmful.sources.count(g.node_index(4, 0)));
  CHECK(out.remediated.final_output == make_task().true_label);
}

TEST_CASE("misleading priors: exploration still reaches the true attackers") {
  // Seeds on benign agents; the explorer walks the dependency structure and
  // the recovered sources still cover every true injection node.
  Topology topo = build_topology(TopologyKind::random, 6, 0.4, 19);
  AttackSpec atk;
  atk.family = AttackFamily::memory_attack;
  atk.targets = {0, 3};
  atk.strength = 1.0;
  atk.stealth = 0.0;
  atk.susceptibility = 1.0;
  EpisodeRecord ep = run_episode(topo, make_task(), atk, 3, 46, 1.0);
  STGraph g = build_backbone(ep);

  std::vector<double> priors(g.node_count(), 0.05);
  // High scores only on benign late-round nodes.
  for (int a = 0; a < 6; ++a)
    if (!atk.targets.count(a)) priors[g.node_index(a, 2)] = 0.9;

  OracleDiagnoser diagnoser;
  ExpandAll policy;
  DefenseConfig cfg;
  cfg.top_k = 3;
  cfg.budget = 80;
  DefenseOutcome out = run_defense_with_priors(ep, g, priors, policy, diagnoser, cfg);
  for (int seed : out.seeds) {
    auto agent = seed % 6;
    CHECK_FALSE(atk.targets.count(agent));
  }
  std::set<int> truth = harness::true_sources(ep);
  for (int t : truth) CHECK(out.harmful.sources.count(t));
  CHECK(harness::compute_asr(out.remediated) == 0.0);
}
