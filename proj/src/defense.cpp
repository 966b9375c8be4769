#include "propguard/defense.hpp"

#include <algorithm>
#include <cmath>

#include "propguard/error.hpp"

namespace propguard::defense {

using sim::Cause;

const char* failure_mode_name(FailureMode m) {
  switch (m) {
    case FailureMode::answer_manipulation: return "answer_manipulation";
    case FailureMode::instruction_injection: return "instruction_injection";
    case FailureMode::reasoning_corruption: return "reasoning_corruption";
    case FailureMode::information_leak: return "information_leak";
    case FailureMode::task_deviation: return "task_deviation";
  }
  return "unknown";
}

FailureMode failure_mode_from(const std::string& name) {
  if (name == "answer_manipulation") return FailureMode::answer_manipulation;
  if (name == "instruction_injection") return FailureMode::instruction_injection;
  if (name == "reasoning_corruption") return FailureMode::reasoning_corruption;
  if (name == "information_leak") return FailureMode::information_leak;
  if (name == "task_deviation") return FailureMode::task_deviation;
  throw Error(Errc::schema_violation, "unknown failure mode '" + name + "'");
}

const char* remediation_action_name(RemediationActionKind k) {
  switch (k) {
    case RemediationActionKind::regenerate_response: return "regenerate_response";
    case RemediationActionKind::sanitize_memory_then_regenerate:
      return "sanitize_memory_then_regenerate";
    case RemediationActionKind::discard_tool_output_then_regenerate:
      return "discard_tool_output_then_regenerate";
  }
  return "unknown";
}

namespace {

std::pair<sim::AgentId, int> decode_node(int node, int n_agents) {
  return {node % n_agents, node / n_agents};
}

FailureMode mode_for(const sim::NodeState& st, const sim::Task& task) {
  return st.response.label != task.true_label ? FailureMode::answer_manipulation
                                              : FailureMode::instruction_injection;
}

}  // namespace

DiagnosisResult OracleDiagnoser::diagnose(int node, const sim::EpisodeRecord& episode,
                                          const explore::SuspiciousSubgraph& /*merged*/) {
  auto [agent, round] = decode_node(node, episode.topology.n_agents);
  const sim::NodeState& st = episode.state(agent, round);
  Rng rng(derive_seed(derive_seed(rng_seed_, 0x6F7261636Cull), static_cast<uint64_t>(node)));

  DiagnosisResult d;
  d.node = node;
  d.harmful = st.compromised;
  if (eta_ > 0.0 && rng.bernoulli(eta_)) d.harmful = !d.harmful;
  if (d.harmful) {
    d.cause = st.compromised ? st.cause : Cause::self;
    if (eta_ > 0.0 && rng.bernoulli(eta_)) {
      constexpr Cause all[] = {Cause::msg, Cause::tool, Cause::memory, Cause::self};
      Cause alt = all[rng.next_below(4)];
      d.cause = alt == d.cause ? all[(rng.next_below(3) + 1) % 4] : alt;
    }
    d.mode = mode_for(st, episode.task);
    if (eta_ > 0.0 && rng.bernoulli(eta_))
      d.mode = static_cast<FailureMode>(rng.next_below(5));
  }
  d.confidence = 1.0 - eta_;
  return d;
}

DiagnosisResult HeuristicDiagnoser::diagnose(int node, const sim::EpisodeRecord& episode,
                                             const explore::SuspiciousSubgraph& /*merged*/) {
  auto [agent, round] = decode_node(node, episode.topology.n_agents);
  const sim::NodeState& st = episode.state(agent, round);

  double response_vis = st.response.visibility();
  double inbox_vis = 0.0;
  for (const sim::Message& m : st.inbox) inbox_vis = std::max(inbox_vis, m.content.visibility());
  double memory_vis = st.memory.visibility();
  double tool_vis = st.tool_obs.visibility();

  DiagnosisResult d;
  d.node = node;
  double max_vis = std::max({response_vis, inbox_vis, memory_vis, tool_vis});
  d.harmful = max_vis > threshold_;
  if (d.harmful) {
    bool inputs_contaminated =
        inbox_vis > threshold_ || memory_vis > threshold_ || tool_vis > threshold_;
    if (!inputs_contaminated && st.response.has_marker()) {
      d.cause = Cause::self;
    } else if (memory_vis >= tool_vis && memory_vis >= inbox_vis) {
      d.cause = Cause::memory;
    } else if (tool_vis >= inbox_vis) {
      d.cause = Cause::tool;
    } else {
      d.cause = Cause::msg;
    }
    d.mode = mode_for(st, episode.task);
  }
  d.confidence = std::min(1.0, std::abs(max_vis - threshold_) / threshold_);
  return d;
}

DiagnosisResult diagnose_node(int node, const sim::EpisodeRecord& episode,
                              const explore::SuspiciousSubgraph& merged, Diagnoser& diagnoser) {
  require(merged.nodes.count(node), Errc::invalid_node,
          "diagnosed node is not in the merged subgraph");
  try {
    return diagnoser.diagnose(node, episode, merged);
  } catch (const Error& e) {
    if (e.code() == Errc::timeout || e.code() == Errc::connection_refused ||
        e.code() == Errc::schema_violation) {
      HeuristicDiagnoser fallback;
      DiagnosisResult d = fallback.diagnose(node, episode, merged);
      d.fallback = true;
      return d;
    }
    throw;
  }
}

HarmfulSubgraph extract_harmful_subgraph(const explore::SuspiciousSubgraph& merged,
                                         const std::vector<DiagnosisResult>& diagnoses) {
  std::map<int, const DiagnosisResult*> by_node;
  for (const DiagnosisResult& d : diagnoses) by_node[d.node] = &d;
  for (int v : merged.nodes)
    require(by_node.count(v), Errc::invalid_input, "diagnoses do not cover the merged subgraph");

  HarmfulSubgraph out;
  for (const DiagnosisResult& d : diagnoses)
    if (d.harmful && merged.nodes.count(d.node)) out.nodes.insert(d.node);

  for (const graph::STEdge& e : merged.edges) {
    if (!out.nodes.count(e.src) || !out.nodes.count(e.dst)) continue;
    // A communication edge is a diagnosed dependency only when the receiving
    // node's harm actually came through messages.
    if (e.etype == graph::EdgeType::communication && by_node[e.dst]->cause != Cause::msg)
      continue;
    out.edges.insert(e);
  }

  std::set<int> has_in;
  for (const graph::STEdge& e : out.edges) has_in.insert(e.dst);
  for (int v : out.nodes)
    if (!has_in.count(v)) out.sources.insert(v);
  return out;
}

std::pair<sim::NodeState, RemediationAction> remediate_source(int node,
                                                              const DiagnosisResult& diagnosis,
                                                              const sim::EpisodeRecord& episode) {
  require(diagnosis.harmful, Errc::invalid_input, "remediation target was not diagnosed harmful");
  require(diagnosis.cause != Cause::msg, Errc::contract_violation,
          "a true source cannot be message-caused; upstream cause was missed");
  require(diagnosis.cause != Cause::none, Errc::invalid_input,
          "remediation needs a diagnosed risk source");

  auto [agent, round] = decode_node(node, episode.topology.n_agents);
  const sim::NodeState& original = episode.state(agent, round);

  sim::NodeState corrected = original;
  RemediationAction action;
  action.node = node;
  switch (diagnosis.cause) {
    case Cause::self:
      action.action = RemediationActionKind::regenerate_response;
      break;
    case Cause::memory:
      action.action = RemediationActionKind::sanitize_memory_then_regenerate;
      corrected.memory = sim::make_clean_memory(episode.task);
      break;
    case Cause::tool:
      action.action = RemediationActionKind::discard_tool_output_then_regenerate;
      corrected.tool_obs = sim::make_clean_tool_obs();
      action.requires_tool_reinvoke = episode.task.requires_tool;
      break;
    default: break;
  }

  // Regenerate with benign dynamics: contaminated inbox entries are ignored
  // for the regeneration, the node's original stream keeps it deterministic.
  std::vector<sim::Message> clean_inbox;
  for (const sim::Message& m : original.inbox)
    if (m.content.payload_strength == 0.0) clean_inbox.push_back(m);
  Rng rng = node_stream(episode.rng_seed, agent, round);
  sim::StepResult r = sim::step_agent(agent, round, episode.task, clean_inbox, corrected.memory,
                                      corrected.tool_obs, 0.0, rng, episode.alpha);
  corrected.response = std::move(r.response);
  corrected.compromised = false;
  corrected.cause = Cause::none;
  return {std::move(corrected), action};
}

namespace {

struct ChannelFixes {
  // Earliest round at which each channel of an agent was repaired.
  std::map<sim::AgentId, int> self_fix, memory_fix, tool_fix;

  static ChannelFixes from(const std::map<int, SourceCorrection>& corrections, int n_agents) {
    ChannelFixes fx;
    auto note = [](std::map<sim::AgentId, int>& m, sim::AgentId a, int t) {
      auto it = m.find(a);
      if (it == m.end() || t < it->second) m[a] = t;
    };
    for (const auto& [node, corr] : corrections) {
      auto [agent, round] = decode_node(node, n_agents);
      switch (corr.channel) {
        case Cause::self: note(fx.self_fix, agent, round); break;
        case Cause::memory: note(fx.memory_fix, agent, round); break;
        case Cause::tool: note(fx.tool_fix, agent, round); break;
        default: break;
      }
    }
    return fx;
  }

  static bool fixed_at(const std::map<sim::AgentId, int>& m, sim::AgentId a, int t) {
    auto it = m.find(a);
    return it != m.end() && it->second <= t;
  }
};

sim::EpisodeRecord replay_impl(const sim::EpisodeRecord& episode, const graph::STGraph& g,
                               const std::map<int, SourceCorrection>& corrections,
                               const std::set<int>& pruned) {
  const int n = episode.topology.n_agents;
  sim::EpisodeRecord out = episode;

  std::set<int> roots = pruned;
  for (const auto& [node, corr] : corrections) {
    require(node >= 0 && node < g.node_count(), Errc::invalid_node,
            "correction node out of range");
    out.states[node] = corr.state;
    roots.insert(node);
  }
  if (roots.empty()) return out;

  std::set<int> affected = graph::downstream_closure(g, roots);
  for (const auto& [node, corr] : corrections) affected.erase(node);
  // Pruned nodes keep their own states; only their influence is dropped.
  for (int v : pruned)
    if (!corrections.count(v)) affected.erase(v);

  ChannelFixes fx = ChannelFixes::from(corrections, n);
  const sim::AttackSpec* attack = episode.attack ? &*episode.attack : nullptr;
  const bool pi = attack && attack->family == sim::AttackFamily::prompt_injection;

  // Node indices are round-major, so ascending index order is ascending
  // round with ties by agent.
  for (int node : affected) {
    auto [agent, round] = decode_node(node, n);

    std::vector<sim::Message> inbox;
    if (round > 0) {
      for (const auto& [s, d] : episode.topology.edges) {
        if (d != agent) continue;
        int sender_node = (round - 1) * n + s;
        if (pruned.count(sender_node)) continue;
        inbox.push_back({s, agent, round - 1, out.states[sender_node].response});
      }
    }

    const sim::NodeState& original = episode.state(agent, round);
    sim::Content memory = ChannelFixes::fixed_at(fx.memory_fix, agent, round)
                              ? sim::make_clean_memory(episode.task)
                              : original.memory;
    sim::Content tool = ChannelFixes::fixed_at(fx.tool_fix, agent, round)
                            ? sim::make_clean_tool_obs()
                            : original.tool_obs;

    std::optional<sim::AttackerEmission> attacker;
    if (pi && attack->targets.count(agent) && !ChannelFixes::fixed_at(fx.self_fix, agent, round))
      attacker = sim::AttackerEmission{attack->strength, attack->stealth};

    sim::NodeState st;
    st.agent = agent;
    st.round = round;
    st.inbox = std::move(inbox);
    st.memory = std::move(memory);
    st.tool_obs = std::move(tool);

    Rng rng = node_stream(episode.rng_seed, agent, round);
    const sim::NodeState* prev = round > 0 ? &out.states[(round - 1) * n + agent] : nullptr;
    if (attacker) {
      sim::StepResult r =
          sim::step_agent(agent, round, episode.task, st.inbox, st.memory, st.tool_obs,
                          attack ? attack->susceptibility : 0.0, rng, episode.alpha, attacker);
      st.response = std::move(r.response);
      st.compromised = true;
      st.cause = Cause::self;
    } else if (prev && prev->compromised) {
      st.response = prev->response;
      st.compromised = true;
      st.cause = prev->cause;
    } else {
      sim::StepResult r =
          sim::step_agent(agent, round, episode.task, st.inbox, st.memory, st.tool_obs,
                          attack ? attack->susceptibility : 0.0, rng, episode.alpha);
      st.response = std::move(r.response);
      st.compromised = r.compromised;
      st.cause = r.cause;
    }
    out.states[node] = std::move(st);
  }

  out.messages.clear();
  for (int t = 0; t + 1 < out.rounds; ++t)
    for (const auto& [s, d] : out.topology.edges)
      out.messages.push_back({s, d, t, out.states[t * n + s].response});
  out.provenance = sim::build_provenance(out.states, n, out.rounds);
  out.final_output = sim::majority_label(out);
  return out;
}

}  // namespace

sim::EpisodeRecord replay_downstream(const sim::EpisodeRecord& episode, const graph::STGraph& g,
                                     const std::map<int, SourceCorrection>& corrections) {
  return replay_impl(episode, g, corrections, {});
}

sim::EpisodeRecord replay_with_pruned(const sim::EpisodeRecord& episode, const graph::STGraph& g,
                                      const std::set<int>& pruned) {
  return replay_impl(episode, g, {}, pruned);
}

namespace {

[[noreturn]] void rethrow_with_stage(const Error& e, const char* stage) {
  throw Error(e.code(), std::string("stage ") + stage + ": " + e.what());
}

}  // namespace

DefenseOutcome run_defense_with_priors(const sim::EpisodeRecord& episode, const graph::STGraph& g,
                                       const std::vector<double>& priors,
                                       explore::ExplorationPolicy& policy, Diagnoser& diagnoser,
                                       const DefenseConfig& cfg) {
  DefenseOutcome out;
  out.priors = priors;

  try {
    out.seeds = scorer::select_seeds(priors, cfg.top_k);
  } catch (const Error& e) {
    rethrow_with_stage(e, "seed-selection");
  }

  try {
    std::vector<explore::SuspiciousSubgraph> per_seed;
    for (size_t i = 0; i < out.seeds.size(); ++i) {
      Rng rng(derive_seed(derive_seed(episode.rng_seed, 0x64656600ull + i), cfg.rollout_seed));
      per_seed.push_back(explore::rollout(policy, g, priors, out.seeds[i], cfg.n_reveal,
                                          cfg.budget, rng)
                             .subgraph);
    }
    out.merged = explore::merge_subgraphs(per_seed);
  } catch (const Error& e) {
    rethrow_with_stage(e, "exploration");
  }

  try {
    for (int v : out.merged.nodes)
      out.diagnoses.push_back(diagnose_node(v, episode, out.merged, diagnoser));
  } catch (const Error& e) {
    rethrow_with_stage(e, "diagnosis");
  }

  try {
    out.harmful = extract_harmful_subgraph(out.merged, out.diagnoses);
    if (out.harmful.sources.empty() && !out.harmful.nodes.empty()) {
      // Unreachable for backbone subgraphs (edges always advance rounds) but
      // merged subgraphs are arbitrary: fall back to the earliest-round
      // harmful node per weak component and flag the episode.
      out.cycle_fallback = true;
      std::map<int, int> comp;
      int next_comp = 0;
      for (int v : out.harmful.nodes)
        if (!comp.count(v)) {
          std::vector<int> stack{v};
          comp[v] = next_comp;
          while (!stack.empty()) {
            int x = stack.back();
            stack.pop_back();
            for (const graph::STEdge& e : out.harmful.edges) {
              int other = -1;
              if (e.src == x) other = e.dst;
              if (e.dst == x) other = e.src;
              if (other >= 0 && !comp.count(other)) {
                comp[other] = next_comp;
                stack.push_back(other);
              }
            }
          }
          ++next_comp;
        }
      std::map<int, int> earliest;  // component -> node
      for (int v : out.harmful.nodes) {
        int c = comp[v];
        if (!earliest.count(c) || v < earliest[c]) earliest[c] = v;
      }
      for (const auto& [c, v] : earliest) out.harmful.sources.insert(v);
    }
  } catch (const Error& e) {
    rethrow_with_stage(e, "extraction");
  }

  std::map<int, SourceCorrection> corrections;
  if (cfg.variant == DefenseVariant::full) {
    try {
      std::map<int, const DiagnosisResult*> by_node;
      for (const DiagnosisResult& d : out.diagnoses) by_node[d.node] = &d;
      for (int v : out.harmful.sources) {
        const DiagnosisResult& d = *by_node[v];
        if (d.cause == Cause::msg) {
          out.flagged_msg_sources.push_back(v);
          continue;
        }
        auto [state, action] = remediate_source(v, d, episode);
        out.actions.push_back(action);
        corrections[v] = SourceCorrection{std::move(state), d.cause};
      }
    } catch (const Error& e) {
      rethrow_with_stage(e, "remediation");
    }
  }

  try {
    switch (cfg.variant) {
      case DefenseVariant::full:
        out.remediated = replay_downstream(episode, g, corrections);
        break;
      case DefenseVariant::prune:
        out.remediated = replay_with_pruned(episode, g, out.harmful.nodes);
        break;
      case DefenseVariant::none:
        out.remediated = episode;
        break;
    }
  } catch (const Error& e) {
    rethrow_with_stage(e, "replay");
  }
  return out;
}

DefenseOutcome run_defense(const sim::EpisodeRecord& episode,
                           const scorer::ScorerParameters& scorer_params,
                           explore::ExplorationPolicy& policy, Diagnoser& diagnoser,
                           const DefenseConfig& cfg) {
  graph::STGraph g;
  std::vector<double> priors;
  try {
    g = graph::build_backbone(episode, cfg.features);
  } catch (const Error& e) {
    rethrow_with_stage(e, "graph-construction");
  }
  try {
    priors = scorer::score_forward(scorer_params, g);
  } catch (const Error& e) {
    rethrow_with_stage(e, "risk-priors");
  }
  return run_defense_with_priors(episode, g, priors, policy, diagnoser, cfg);
}

}  // namespace propguard::defense
