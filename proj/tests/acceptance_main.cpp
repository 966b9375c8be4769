// Acceptance suite: one criterion per section, each printed as a single
// PASS/FAIL line with the measured values. Thresholds are fixed here, not
// configurable. Exit code is the number of failed criteria.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <vector>

#include "propguard/corpus.hpp"
#include "propguard/defense.hpp"
#include "propguard/episode_io.hpp"
#include "propguard/inspector.hpp"
#include "propguard/metrics.hpp"
#include "propguard/sweep.hpp"
#include "support/oracles.hpp"

using namespace propguard;
using namespace propguard::sim;
using namespace propguard::graph;
using namespace propguard::explore;
using namespace propguard::grpo;
using namespace propguard::defense;
using propguard::harness::CorpusSpec;

namespace {

struct Criterion {
  int id;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// ---------------------------------------------------------------------------
// Shared fixtures: corpora, trained scorer, trained inspector.
// ---------------------------------------------------------------------------

struct Fixtures {
  // Random-topology attack corpus for scorer + inspector training.
  std::vector<EpisodeRecord> train_episodes;    // 160
  std::vector<EpisodeRecord> heldout_episodes;  // 40 (scorer AUC)
  std::vector<EpisodeRecord> eval_episodes;     // 100 (exploration ordering)
  std::vector<STGraph> train_graphs;
  std::vector<STGraph> heldout_graphs;
  std::vector<STGraph> eval_graphs;

  scorer::ScorerParameters scorer_params = scorer::ScorerParameters::zeros(24, 16);
  double scorer_train_seconds = 0.0;

  PolicyParameters inspector;
  double inspector_train_seconds = 0.0;

  static CorpusSpec base_spec(int count, uint64_t seed) {
    CorpusSpec spec;
    spec.topologies = {TopologyKind::random};
    spec.n_agents = 8;
    spec.edge_prob = 0.3;
    spec.rounds = 3;  // defense runs after three interaction rounds
    spec.count = count;
    spec.n_targets = 1;
    spec.n_targets_max = 3;
    spec.strength_min = 0.7;
    spec.strength_max = 1.0;
    spec.stealth_min = 0.2;
    spec.stealth_max = 0.8;
    spec.susceptibility_min = 0.4;
    spec.susceptibility_max = 0.8;
    spec.base_seed = seed;
    return spec;
  }

  void build() {
    train_episodes = harness::generate_episodes(base_spec(160, 1000));
    heldout_episodes = harness::generate_episodes(base_spec(40, 2000));
    eval_episodes = harness::generate_episodes(base_spec(100, 3000));
    for (const auto& ep : train_episodes) train_graphs.push_back(build_backbone(ep));
    for (const auto& ep : heldout_episodes) heldout_graphs.push_back(build_backbone(ep));
    for (const auto& ep : eval_episodes) eval_graphs.push_back(build_backbone(ep));

    double t0 = now_seconds();
    scorer::ScorerConfig scfg;
    scfg.pretrain_steps = 500;
    scfg.finetune_steps = 300;
    scfg.lr = 0.05;
    scfg.rng_seed = 11;
    scorer_params = scorer::ScorerParameters::random_init(24, 16, 7, 0.1);
    scorer_params = scorer::pretrain_selfsupervised(scorer_params, train_graphs, scfg);
    // A few attack episodes end with every target resisting; they carry no
    // labels and no reward signal, so training skips them.
    std::vector<scorer::LabeledGraph> labeled;
    for (size_t i = 0; i < train_graphs.size(); ++i) {
      if (train_episodes[i].provenance.nodes.empty()) continue;
      labeled.push_back({&train_graphs[i],
                         provenance_node_indices(train_episodes[i].provenance, 8)});
    }
    scorer_params = scorer::finetune_supervised(scorer_params, labeled, scfg);
    scorer_train_seconds = now_seconds() - t0;

    t0 = now_seconds();
    std::vector<STGraph> env_graphs;
    std::vector<const EpisodeRecord*> ptrs;
    for (size_t i = 0; i < train_episodes.size(); ++i) {
      if (train_episodes[i].provenance.nodes.empty()) continue;
      env_graphs.push_back(train_graphs[i]);
      ptrs.push_back(&train_episodes[i]);
    }
    std::vector<TrainEnv> envs = make_train_envs(env_graphs, ptrs, scorer_params, 3);
    TrainConfig tcfg;  // 300 steps, G=8, eps 0.2, beta 0.001, K=3, n=2, L_max=12
    tcfg.lr = 0.4;
    tcfg.rng_seed = 5;
    RewardConfig rcfg;  // lambda_f1 1.0, lambda_prior 0.1, gamma 0.5
    inspector = train_inspector(envs, tcfg, rcfg);
    inspector_train_seconds = now_seconds() - t0;
  }
};

double mean_merged_f1(const std::vector<EpisodeRecord>& episodes,
                      const std::vector<STGraph>& graphs,
                      const scorer::ScorerParameters& scorer_params, ExplorationPolicy& policy,
                      double* mean_subgraph_size = nullptr) {
  double total = 0.0, total_size = 0.0;
  for (size_t i = 0; i < episodes.size(); ++i) {
    const STGraph& g = graphs[i];
    std::vector<double> priors = scorer::score_forward(scorer_params, g);
    std::vector<int> seeds = scorer::select_seeds(priors, 3);
    std::vector<SuspiciousSubgraph> per_seed;
    for (size_t s = 0; s < seeds.size(); ++s) {
      Rng rng(derive_seed(episodes[i].rng_seed, 0xE0E0 + s));
      per_seed.push_back(rollout(policy, g, priors, seeds[s], 2, 12, rng).subgraph);
    }
    SuspiciousSubgraph merged = merge_subgraphs(per_seed);
    std::set<int> truth = provenance_node_indices(episodes[i].provenance, g.n_agents);
    total += f1_node(merged.nodes, truth);
    total_size += static_cast<double>(merged.nodes.size());
  }
  if (mean_subgraph_size) *mean_subgraph_size = total_size / episodes.size();
  return total / episodes.size();
}

double mean_topk_f1(const std::vector<EpisodeRecord>& episodes,
                    const std::vector<STGraph>& graphs,
                    const scorer::ScorerParameters& scorer_params, int k) {
  double total = 0.0;
  for (size_t i = 0; i < episodes.size(); ++i) {
    const STGraph& g = graphs[i];
    std::vector<double> priors = scorer::score_forward(scorer_params, g);
    SuspiciousSubgraph h = topk_subgraph(g, priors, k);
    std::set<int> truth = provenance_node_indices(episodes[i].provenance, g.n_agents);
    total += f1_node(h.nodes, truth);
  }
  return total / episodes.size();
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

Criterion criterion_environment() {
  Criterion c{1, "explorer invariants vs brute-force oracles (>=1000 states, <=50 nodes)"};
  double t0 = now_seconds();
  int states = 0, violations = 0;
  for (uint64_t seed = 0; states < 1000; ++seed) {
    CorpusSpec spec = Fixtures::base_spec(1, 5000 + seed);
    spec.n_agents = 5 + static_cast<int>(seed % 6);  // up to 10 agents
    spec.rounds = 3 + static_cast<int>(seed % 3);    // up to 5 rounds -> <=50 nodes
    EpisodeRecord ep = harness::generate_episodes(spec)[0];
    STGraph g = build_backbone(ep);
    if (g.node_count() > 50) continue;

    Rng rng(seed);
    int seed_node = static_cast<int>(rng.next_below(static_cast<uint32_t>(g.node_count())));
    const int budget = 10;
    ExplorationState st = init_exploration(g, seed_node, 2, budget);
    std::set<int> prev_susp = st.suspicious_nodes;
    std::set<int> prev_vis = st.visible_nodes;
    while (true) {
      std::vector<int> fr = frontier(st, g);
      std::set<int> oracle = oracles::frontier_brute(st.visible_nodes, st.suspicious_nodes, g);
      if (std::set<int>(fr.begin(), fr.end()) != oracle) ++violations;
      ++states;

      // Connectivity of the suspicious subgraph in the undirected closure.
      {
        std::set<int> seen{st.seed};
        std::vector<int> stack{st.seed};
        while (!stack.empty()) {
          int v = stack.back();
          stack.pop_back();
          for (const STEdge& e : st.suspicious_edges) {
            int other = e.src == v ? e.dst : (e.dst == v ? e.src : -1);
            if (other >= 0 && st.suspicious_nodes.count(other) && seen.insert(other).second)
              stack.push_back(other);
          }
        }
        if (seen.size() != st.suspicious_nodes.size()) ++violations;
      }
      // Monotonicity and budget.
      if (!std::includes(st.suspicious_nodes.begin(), st.suspicious_nodes.end(),
                         prev_susp.begin(), prev_susp.end()))
        ++violations;
      if (!std::includes(st.visible_nodes.begin(), st.visible_nodes.end(), prev_vis.begin(),
                         prev_vis.end()))
        ++violations;
      if (static_cast<int>(st.trajectory.size()) - 1 > budget) ++violations;

      if (st.terminated || fr.empty()) break;
      prev_susp = st.suspicious_nodes;
      prev_vis = st.visible_nodes;
      st = apply_action(st, g, fr[rng.next_below(static_cast<uint32_t>(fr.size()))]);
    }
  }
  c.seconds = now_seconds() - t0;
  c.pass = violations == 0 && states >= 1000 && c.seconds < 10.0;
  char buf[160];
  std::snprintf(buf, sizeof buf, "states=%d violations=%d runtime=%.2fs", states, violations,
                c.seconds);
  c.detail = buf;
  return c;
}

Criterion criterion_reward() {
  Criterion c{2, "reward reproduces the trajectory-reward formula to 1e-12"};
  double t0 = now_seconds();
  Rng rng(77);
  int bad = 0;

  // 100 randomized instances, recomputed by straight-line set arithmetic.
  for (int trial = 0; trial < 100; ++trial) {
    int n = 10 + static_cast<int>(rng.next_below(30));
    std::vector<double> priors;
    for (int i = 0; i < n; ++i) priors.push_back(rng.next_unit());
    SuspiciousSubgraph h;
    ProvenanceGraph z;
    int n_agents = 5;
    for (int i = 0; i < n; ++i) {
      if (rng.bernoulli(0.35)) h.nodes.insert(i);
      if (rng.bernoulli(0.3)) z.nodes.insert({i % n_agents, i / n_agents});
    }
    RewardConfig cfg;
    cfg.lambda_f1 = rng.next_unit() * 2;
    cfg.lambda_prior = rng.next_unit() * 0.5;
    cfg.gamma = rng.next_unit();

    std::set<int> truth;
    for (const ProvNode& v : z.nodes) truth.insert(v.round * n_agents + v.agent);
    size_t inter = 0;
    for (int v : h.nodes) inter += truth.count(v);
    double f1;
    if (h.nodes.empty() && truth.empty())
      f1 = 1.0;
    else if (h.nodes.empty() || truth.empty() || inter == 0)
      f1 = 0.0;
    else {
      double p = double(inter) / h.nodes.size(), r = double(inter) / truth.size();
      f1 = 2 * p * r / (p + r);
    }
    double prior_sum = 0;
    for (int v : h.nodes) prior_sum += priors[v] - cfg.gamma;
    double expect = cfg.lambda_f1 * f1 + cfg.lambda_prior * prior_sum;
    if (std::abs(reward(h, z, priors, cfg, n_agents) - expect) > 1e-12) ++bad;

    // lambda_prior = 0 collapses to lambda_f1 * F1 exactly.
    RewardConfig collapse = cfg;
    collapse.lambda_prior = 0.0;
    if (reward(h, z, priors, collapse, n_agents) != collapse.lambda_f1 * f1) ++bad;
  }

  // f1_node against a set-arithmetic oracle on 1000 random pairs.
  for (int trial = 0; trial < 1000; ++trial) {
    std::set<int> a, b;
    int n = 1 + static_cast<int>(rng.next_below(20));
    for (int i = 0; i < n; ++i) {
      if (rng.bernoulli(0.5)) a.insert(i);
      if (rng.bernoulli(0.5)) b.insert(i);
    }
    double expect;
    if (a.empty() && b.empty())
      expect = 1.0;
    else {
      size_t inter = 0;
      for (int v : a) inter += b.count(v);
      if (a.empty() || b.empty() || inter == 0)
        expect = 0.0;
      else {
        double p = double(inter) / a.size(), r = double(inter) / b.size();
        expect = 2 * p * r / (p + r);
      }
    }
    if (std::abs(f1_node(a, b) - expect) > 1e-12) ++bad;
  }

  c.seconds = now_seconds() - t0;
  c.pass = bad == 0;
  c.detail = "mismatches=" + std::to_string(bad);
  return c;
}

Criterion criterion_gradients() {
  Criterion c{3, "analytic gradients match finite differences (1e-4 rel)"};
  double t0 = now_seconds();
  double worst_scorer = 0.0, worst_grpo = 0.0, worst_adv = 0.0, worst_kl = 0.0;

  // Scorer gradient, 20 random instances.
  for (uint64_t seed = 0; seed < 20; ++seed) {
    CorpusSpec spec = Fixtures::base_spec(1, 7000 + seed);
    spec.n_agents = 4;
    spec.rounds = 3;
    EpisodeRecord ep = harness::generate_episodes(spec)[0];
    FeatureConfig fcfg;
    fcfg.d_r = 8;
    fcfg.d_s = 20;
    STGraph g = build_backbone(ep, fcfg);
    scorer::ScorerParameters p = scorer::ScorerParameters::random_init(8, 4, seed + 1, 0.4);
    Rng rng(seed);
    std::vector<int> labels(g.node_count());
    std::vector<bool> mask(g.node_count(), true);
    for (int v = 0; v < g.node_count(); ++v) labels[v] = rng.bernoulli(0.4);
    double lambda_nc = (seed % 2) ? 0.05 : 0.0;

    scorer::ScorerParameters analytic = score_gradient(p, g, labels, mask, lambda_nc);
    std::vector<double> af;
    analytic.for_each([&](double v) { af.push_back(v); });
    std::vector<double*> view;
    p.for_each([&](double& v) { view.push_back(&v); });
    auto loss = [&]() { return scorer_loss(p, g, labels, mask, lambda_nc); };
    std::vector<double> fd = oracles::central_differences(loss, view);
    for (size_t i = 0; i < fd.size(); ++i) {
      double rel = std::abs(fd[i] - af[i]) / std::max({std::abs(fd[i]), std::abs(af[i]), 1e-6});
      worst_scorer = std::max(worst_scorer, rel);
    }
  }

  // GE-GRPO objective gradient, 20 random instances.
  for (uint64_t seed = 0; seed < 20; ++seed) {
    CorpusSpec spec = Fixtures::base_spec(1, 8000 + seed);
    spec.n_agents = 5;
    spec.rounds = 3;
    EpisodeRecord ep = harness::generate_episodes(spec)[0];
    STGraph g = build_backbone(ep);
    Rng prior_rng(seed);
    std::vector<double> priors;
    for (int i = 0; i < g.node_count(); ++i) priors.push_back(prior_rng.next_unit());

    auto random_params = [&](uint64_t s) {
      PolicyParameters p = PolicyParameters::zeros();
      Rng r(s);
      for (double& v : p.w_action) v = r.next_gaussian(0, 0.4);
      for (double& v : p.w_stop) v = r.next_gaussian(0, 0.4);
      return p;
    };
    PolicyParameters theta_old = random_params(seed + 100);
    PolicyParameters theta = random_params(seed + 200);
    PolicyParameters ref = random_params(seed + 300);

    LearnedPolicy sampler(theta_old, true);
    GroupRollout group;
    RewardConfig rcfg;
    for (int i = 0; i < 4; ++i) {
      Rng rng(derive_seed(seed, i));
      group.rollouts.push_back(rollout(sampler, g, priors, 0, 2, 6, rng));
      group.rewards.push_back(
          reward(group.rollouts.back().subgraph, ep.provenance, priors, rcfg, g.n_agents));
    }
    group.advantages = group_advantages(group.rewards);

    ObjectiveResult res = grpo_objective(theta, theta_old, ref, group, 0.2, 0.1, g, priors);
    std::vector<double> af;
    res.gradient.for_each([&](double v) { af.push_back(v); });
    std::vector<double*> view;
    theta.for_each([&](double& v) { view.push_back(&v); });
    auto objective = [&]() {
      return grpo_objective(theta, theta_old, ref, group, 0.2, 0.1, g, priors).objective;
    };
    std::vector<double> fd = oracles::central_differences(objective, view);
    for (size_t i = 0; i < fd.size(); ++i) {
      double rel = std::abs(fd[i] - af[i]) / std::max({std::abs(fd[i]), std::abs(af[i]), 1e-6});
      worst_grpo = std::max(worst_grpo, rel);
    }

    // Advantage centering and KL(pi || pi) = 0.
    double sum = 0.0;
    for (double a : group.advantages) sum += a;
    worst_adv = std::max(worst_adv, std::abs(sum));
    ObjectiveResult self_kl =
        grpo_objective(theta, theta_old, theta, group, 0.2, 1.0, g, priors);
    worst_kl = std::max(worst_kl, std::abs(self_kl.kl));
  }

  c.seconds = now_seconds() - t0;
  c.pass = worst_scorer < 1e-4 && worst_grpo < 1e-4 && worst_adv <= 1e-9 && worst_kl == 0.0;
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "scorer_rel=%.2e grpo_rel=%.2e adv_sum=%.1e self_kl=%.1e", worst_scorer,
                worst_grpo, worst_adv, worst_kl);
  c.detail = buf;
  return c;
}

Criterion criterion_scorer_quality(const Fixtures& fx) {
  Criterion c{4, "scorer held-out AUC >= 0.85 after 500 pretrain + 300 finetune steps"};
  double t0 = now_seconds();
  std::vector<double> scores;
  std::vector<int> labels;
  for (size_t i = 0; i < fx.heldout_graphs.size(); ++i) {
    std::vector<double> s = scorer::score_forward(fx.scorer_params, fx.heldout_graphs[i]);
    std::set<int> z = provenance_node_indices(fx.heldout_episodes[i].provenance, 8);
    for (int v = 0; v < fx.heldout_graphs[i].node_count(); ++v) {
      scores.push_back(s[v]);
      labels.push_back(z.count(v) ? 1 : 0);
    }
  }
  double auc = oracles::auc_mann_whitney(scores, labels);
  c.seconds = now_seconds() - t0 + fx.scorer_train_seconds;
  c.pass = auc >= 0.85 && fx.scorer_train_seconds < 120.0;
  char buf[120];
  std::snprintf(buf, sizeof buf, "auc=%.4f train_time=%.2fs", auc, fx.scorer_train_seconds);
  c.detail = buf;
  return c;
}

Criterion criterion_exploration_ordering(const Fixtures& fx) {
  Criterion c{5, "mean F1 ordering: trained > greedy >= topk >= bfs >= random (+0.05 margin)"};
  double t0 = now_seconds();

  LearnedPolicy trained(fx.inspector);  // argmax decoding at evaluation
  double trained_size = 0.0;
  double f1_trained =
      mean_merged_f1(fx.eval_episodes, fx.eval_graphs, fx.scorer_params, trained, &trained_size);

  auto greedy = heuristic_policy(Heuristic::greedy);
  auto bfs = heuristic_policy(Heuristic::bfs);
  auto rnd = heuristic_policy(Heuristic::random);
  double f1_greedy = mean_merged_f1(fx.eval_episodes, fx.eval_graphs, fx.scorer_params, *greedy);
  double f1_bfs = mean_merged_f1(fx.eval_episodes, fx.eval_graphs, fx.scorer_params, *bfs);
  double f1_random = mean_merged_f1(fx.eval_episodes, fx.eval_graphs, fx.scorer_params, *rnd);
  int k = std::max(1, static_cast<int>(std::lround(trained_size)));
  double f1_topk = mean_topk_f1(fx.eval_episodes, fx.eval_graphs, fx.scorer_params, k);

  c.seconds = now_seconds() - t0;
  c.pass = f1_trained > f1_greedy && f1_greedy >= f1_topk && f1_topk >= f1_bfs &&
           f1_bfs >= f1_random && (f1_trained - f1_greedy) >= 0.05 &&
           fx.inspector_train_seconds < 600.0;
  char buf[240];
  std::snprintf(buf, sizeof buf,
                "trained=%.3f greedy=%.3f topk(k=%d)=%.3f bfs=%.3f random=%.3f "
                "train_time=%.1fs",
                f1_trained, f1_greedy, k, f1_topk, f1_bfs, f1_random,
                fx.inspector_train_seconds);
  c.detail = buf;
  return c;
}

Criterion criterion_defense_end_to_end(const Fixtures& fx) {
  Criterion c{6, "oracle-diagnosis defense: ASR<=0.05, MDSR>=0.95, recall>=0.9, potency>=0.40"};
  double t0 = now_seconds();

  CorpusSpec spec = Fixtures::base_spec(200, 9000);
  spec.topologies = {TopologyKind::chain, TopologyKind::tree, TopologyKind::star,
                     TopologyKind::random};
  std::vector<EpisodeRecord> episodes = harness::generate_episodes(spec);

  double asr_before = 0, asr_after = 0, recall = 0;
  std::vector<EpisodeRecord> after;
  OracleDiagnoser diagnoser;
  DefenseConfig dcfg;  // K=3, n=2, L_max=12
  for (const EpisodeRecord& ep : episodes) {
    LearnedPolicy policy(fx.inspector);  // trained on random topology only
    DefenseOutcome out = run_defense(ep, fx.scorer_params, policy, diagnoser, dcfg);
    asr_before += harness::compute_asr(ep);
    asr_after += harness::compute_asr(out.remediated);
    recall += harness::source_metrics(out.harmful.sources, harness::true_sources(ep),
                                      ep.topology.n_agents * ep.rounds)
                  .recall;
    after.push_back(std::move(out.remediated));
  }
  double n = static_cast<double>(episodes.size());
  asr_before /= n;
  asr_after /= n;
  recall /= n;
  double mdsr = harness::compute_mdsr(after);

  c.seconds = now_seconds() - t0;
  c.pass = asr_after <= 0.05 && mdsr >= 0.95 && asr_before >= 0.40 && recall >= 0.9;
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "no_defense_asr=%.3f post_asr=%.3f mdsr=%.3f source_recall=%.3f", asr_before,
                asr_after, mdsr, recall);
  c.detail = buf;
  return c;
}

Criterion criterion_utility_preservation(const Fixtures& fx) {
  Criterion c{7, "benign episodes: zero state changes, MDSR unchanged"};
  double t0 = now_seconds();

  CorpusSpec spec = Fixtures::base_spec(100, 10000);
  spec.benign = true;
  spec.topologies = {TopologyKind::chain, TopologyKind::tree, TopologyKind::star,
                     TopologyKind::random};
  std::vector<EpisodeRecord> episodes = harness::generate_episodes(spec);

  HeuristicDiagnoser diagnoser;
  DefenseConfig dcfg;
  int changed = 0;
  std::vector<EpisodeRecord> after;
  for (const EpisodeRecord& ep : episodes) {
    LearnedPolicy policy(fx.inspector);
    DefenseOutcome out = run_defense(ep, fx.scorer_params, policy, diagnoser, dcfg);
    if (!(out.remediated == ep)) ++changed;
    after.push_back(std::move(out.remediated));
  }
  double mdsr_before = harness::compute_mdsr(episodes);
  double mdsr_after = harness::compute_mdsr(after);

  c.seconds = now_seconds() - t0;
  c.pass = changed == 0 && mdsr_before == mdsr_after;
  char buf[120];
  std::snprintf(buf, sizeof buf, "changed_episodes=%d mdsr=%.3f->%.3f", changed, mdsr_before,
                mdsr_after);
  c.detail = buf;
  return c;
}

Criterion criterion_replay_determinism(const Fixtures& fx) {
  Criterion c{8, "byte-identical defended outputs across runs; double remediation fixed point"};
  double t0 = now_seconds();

  CorpusSpec spec = Fixtures::base_spec(10, 11000);
  std::vector<EpisodeRecord> episodes = harness::generate_episodes(spec);
  OracleDiagnoser diagnoser;
  DefenseConfig dcfg;

  bool identical = true, fixed_point = true;
  int fixed_checked = 0;
  for (const EpisodeRecord& ep : episodes) {
    LearnedPolicy p1(fx.inspector), p2(fx.inspector);
    DefenseOutcome a = run_defense(ep, fx.scorer_params, p1, diagnoser, dcfg);
    DefenseOutcome b = run_defense(ep, fx.scorer_params, p2, diagnoser, dcfg);
    if (harness::outcome_to_json(a) != harness::outcome_to_json(b)) identical = false;
    if (harness::episode_to_json(a.remediated) != harness::episode_to_json(b.remediated))
      identical = false;

    // Replaying the replay with the same corrections is a fixed point.
    STGraph g = build_backbone(ep);
    std::map<int, SourceCorrection> corrections;
    std::map<int, const DiagnosisResult*> by_node;
    for (const DiagnosisResult& d : a.diagnoses) by_node[d.node] = &d;
    for (const RemediationAction& act : a.actions) {
      auto [state, unused] = remediate_source(act.node, *by_node[act.node], ep);
      corrections[act.node] = {std::move(state), by_node[act.node]->cause};
    }
    EpisodeRecord once = replay_downstream(ep, g, corrections);
    EpisodeRecord twice = replay_downstream(once, g, corrections);
    if (harness::episode_to_json(once) != harness::episode_to_json(twice)) fixed_point = false;

    // Defending the defended episode with the same components changes
    // nothing once nothing compromised remains.
    bool clean = true;
    for (const NodeState& st : a.remediated.states) clean &= !st.compromised;
    if (clean) {
      ++fixed_checked;
      LearnedPolicy p3(fx.inspector);
      DefenseOutcome again = run_defense(a.remediated, fx.scorer_params, p3, diagnoser, dcfg);
      if (!(again.remediated == a.remediated)) fixed_point = false;
    }
  }

  c.seconds = now_seconds() - t0;
  c.pass = identical && fixed_point && fixed_checked > 0;
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "byte_identical=%d replay_fixed_point=%d redefended_clean_episodes=%d",
                identical ? 1 : 0, fixed_point ? 1 : 0, fixed_checked);
  c.detail = buf;
  return c;
}

Criterion criterion_k_sensitivity(const Fixtures& fx) {
  Criterion c{9, "sweep over K in 1..5: source recall non-decreasing then saturating (CSV)"};
  double t0 = now_seconds();

  harness::SweepConfig sc;
  sc.topologies = {"random"};
  sc.attacks = {"prompt_injection", "memory_attack", "tool_attack"};
  sc.variants = {"full"};
  sc.seeds = {21, 22};
  sc.k_values = {1, 2, 3, 4, 5};
  sc.episodes_per_cell = 10;
  sc.n_agents = 8;
  sc.rounds = 4;
  sc.policy = "trained";
  sc.diagnoser = "oracle";
  sc.workers = 4;
  std::vector<harness::SweepRow> rows = harness::run_sweep(sc, fx.scorer_params, fx.inspector);

  std::ostringstream csv;
  harness::write_sweep_csv(rows, csv);
  bool csv_ok = csv.str().find("full-k3") != std::string::npos;

  // Mean source recall per K across aggregate rows.
  std::vector<double> recall_by_k(6, 0.0);
  std::vector<int> counts(6, 0);
  for (const harness::SweepRow& r : rows) {
    if (r.seed_label != "mean") continue;
    size_t pos = r.variant.rfind("-k");
    int k = std::stoi(r.variant.substr(pos + 2));
    recall_by_k[k] += r.src_recall;
    counts[k] += 1;
  }
  for (int k = 1; k <= 5; ++k) recall_by_k[k] /= std::max(1, counts[k]);

  bool non_decreasing = true;
  for (int k = 1; k < 5; ++k)
    if (recall_by_k[k + 1] < recall_by_k[k] - 0.02) non_decreasing = false;
  bool saturating = (recall_by_k[5] - recall_by_k[4]) <= 0.03;
  bool overall = recall_by_k[5] >= recall_by_k[1] - 1e-9;

  c.seconds = now_seconds() - t0;
  c.pass = csv_ok && non_decreasing && saturating && overall;
  char buf[200];
  std::snprintf(buf, sizeof buf, "recall(K=1..5)= %.3f %.3f %.3f %.3f %.3f", recall_by_k[1],
                recall_by_k[2], recall_by_k[3], recall_by_k[4], recall_by_k[5]);
  c.detail = buf;
  return c;
}

Criterion criterion_scalability(const Fixtures& fx) {
  Criterion c{10, "N=50 agents, T=10 rounds: full pipeline < 5 s with invariants intact"};

  Topology topo = build_topology(TopologyKind::random, 50, 0.1, 424242);
  Task task;
  task.task_id = "scale";
  task.n_labels = 4;
  task.true_label = 1;
  task.adversarial_label = 3;
  AttackSpec atk;
  atk.family = AttackFamily::prompt_injection;
  atk.targets = {3, 17, 29, 35, 44};
  atk.strength = 0.9;
  atk.stealth = 0.3;
  atk.susceptibility = 0.7;

  double t0 = now_seconds();
  EpisodeRecord ep = run_episode(topo, task, atk, 10, 616161);
  LearnedPolicy policy(fx.inspector);
  OracleDiagnoser diagnoser;
  DefenseConfig dcfg;
  DefenseOutcome out = run_defense(ep, fx.scorer_params, policy, diagnoser, dcfg);
  double elapsed = now_seconds() - t0;

  // Invariants: sources have zero in-degree in E+; merged subgraph inside the
  // backbone; replay kept unaffected nodes identical.
  bool invariants = true;
  for (int s : out.harmful.sources)
    for (const STEdge& e : out.harmful.edges)
      if (e.dst == s) invariants = false;
  for (int v : out.merged.nodes)
    if (v < 0 || v >= 500) invariants = false;
  STGraph g = build_backbone(ep);
  std::set<int> roots = out.harmful.sources;
  std::set<int> affected = downstream_closure(g, roots);
  for (int v = 0; v < g.node_count(); ++v)
    if (!affected.count(v) && !roots.count(v) && !(out.remediated.states[v] == ep.states[v]))
      invariants = false;

  c.seconds = elapsed;
  c.pass = elapsed < 5.0 && invariants;
  char buf[160];
  std::snprintf(buf, sizeof buf, "episode+defense=%.3fs asr %.3f->%.3f invariants=%d", elapsed,
                harness::compute_asr(ep), harness::compute_asr(out.remediated),
                invariants ? 1 : 0);
  c.detail = buf;
  return c;
}

}  // namespace

int main() {
  std::vector<Criterion> results;
  std::printf("building fixtures (corpora, scorer, inspector)...\n");
  Fixtures fx;
  fx.build();
  std::printf("fixtures ready: scorer %.1fs, inspector %.1fs\n\n", fx.scorer_train_seconds,
              fx.inspector_train_seconds);

  results.push_back(criterion_environment());
  results.push_back(criterion_reward());
  results.push_back(criterion_gradients());
  results.push_back(criterion_scorer_quality(fx));
  results.push_back(criterion_exploration_ordering(fx));
  results.push_back(criterion_defense_end_to_end(fx));
  results.push_back(criterion_utility_preservation(fx));
  results.push_back(criterion_replay_determinism(fx));
  results.push_back(criterion_k_sensitivity(fx));
  results.push_back(criterion_scalability(fx));

  int failed = 0;
  for (const Criterion& c : results) {
    std::printf("[%s] criterion %2d: %s\n          %s  (%.2fs)\n", c.pass ? "PASS" : "FAIL", c.id,
                c.name.c_str(), c.detail.c_str(), c.seconds);
    failed += c.pass ? 0 : 1;
  }
  std::printf("\n%d/%zu criteria passed\n", static_cast<int>(results.size()) - failed,
              results.size());
  return failed;
}
