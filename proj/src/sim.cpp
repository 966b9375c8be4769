#include "propguard/sim.hpp"

#include <algorithm>

namespace propguard::sim {

namespace {

// Filler tokens give responses a varying length without carrying meaning.
void append_filler(std::vector<int>& tokens, Rng& rng) {
  int extra = static_cast<int>(rng.next_below(5));
  for (int i = 0; i < extra; ++i)
    tokens.push_back(kFillerTokenBase +
                     static_cast<int>(rng.next_below(kVocabSize - kFillerTokenBase)));
}

Content make_clean_response(int label, Rng& rng) {
  Content c;
  c.label = label;
  c.tokens.push_back(kLabelTokenBase + label);
  append_filler(c.tokens, rng);
  return c;
}

Content make_contaminated_response(int label, double strength, double stealth, Rng& rng) {
  Content c;
  c.label = label;
  c.payload_strength = strength;
  c.stealth = stealth;
  c.tokens.push_back(kMarkerToken);
  c.tokens.push_back(kLabelTokenBase + label);
  append_filler(c.tokens, rng);
  return c;
}

int draw_wrong_label(const Task& task, Rng& rng) {
  int w = static_cast<int>(rng.next_below(static_cast<uint32_t>(task.n_labels - 1)));
  return w >= task.true_label ? w + 1 : w;
}

}  // namespace

bool Content::has_marker() const {
  return std::find(tokens.begin(), tokens.end(), kMarkerToken) != tokens.end();
}

const char* attack_family_name(AttackFamily f) {
  switch (f) {
    case AttackFamily::prompt_injection: return "prompt_injection";
    case AttackFamily::tool_attack: return "tool_attack";
    case AttackFamily::memory_attack: return "memory_attack";
  }
  return "unknown";
}

AttackFamily attack_family_from(const std::string& name) {
  if (name == "prompt_injection") return AttackFamily::prompt_injection;
  if (name == "tool_attack") return AttackFamily::tool_attack;
  if (name == "memory_attack") return AttackFamily::memory_attack;
  throw Error(Errc::invalid_config, "unknown attack family '" + name + "'");
}

const char* cause_name(Cause c) {
  switch (c) {
    case Cause::none: return "none";
    case Cause::msg: return "msg";
    case Cause::tool: return "tool";
    case Cause::memory: return "memory";
    case Cause::self: return "self";
  }
  return "unknown";
}

Cause cause_from(const std::string& name) {
  if (name == "none") return Cause::none;
  if (name == "msg") return Cause::msg;
  if (name == "tool") return Cause::tool;
  if (name == "memory") return Cause::memory;
  if (name == "self") return Cause::self;
  throw Error(Errc::invalid_config, "unknown cause '" + name + "'");
}

Content make_clean_memory(const Task& task) {
  Content c;
  c.tokens.push_back(kTaskToken);
  uint64_t h = 0xcbf29ce484222325ull;
  for (char ch : task.task_id) h = (h ^ static_cast<unsigned char>(ch)) * 0x100000001b3ull;
  c.tokens.push_back(kFillerTokenBase +
                     static_cast<int>(h % (kVocabSize - kFillerTokenBase)));
  return c;
}

Content make_clean_tool_obs() {
  Content c;
  c.tokens.push_back(kToolToken);
  return c;
}

Content make_poisoned_content(int adversarial_label, double strength, double stealth,
                              int carrier_token) {
  Content c;
  c.label = adversarial_label;
  c.payload_strength = strength;
  c.stealth = stealth;
  c.tokens = {kMarkerToken, carrier_token, kLabelTokenBase + adversarial_label};
  return c;
}

StepResult step_agent(AgentId /*agent*/, int /*round*/, const Task& task,
                      std::span<const Message> inbox, const Content& memory,
                      const Content& tool_obs, double susceptibility, Rng& rng, double alpha,
                      std::optional<AttackerEmission> attacker) {
  if (attacker && attacker->strength > 0.0) {
    return {make_contaminated_response(task.adversarial_label, attacker->strength,
                                       attacker->stealth, rng),
            true, Cause::self};
  }

  // Maximal-sigma contaminated input. Strict '>' plus descending-priority
  // scan order implements the memory > tool > msg tie rule.
  double sigma_max = 0.0;
  double inherited_stealth = 0.0;
  Cause cause = Cause::none;
  auto consider = [&](double sigma, double stealth, Cause c) {
    if (sigma > sigma_max) {
      sigma_max = sigma;
      inherited_stealth = stealth;
      cause = c;
    }
  };
  consider(memory.payload_strength, memory.stealth, Cause::memory);
  consider(tool_obs.payload_strength, tool_obs.stealth, Cause::tool);
  for (const Message& m : inbox)
    consider(m.content.payload_strength, m.content.stealth, Cause::msg);

  if (sigma_max > 0.0 && rng.bernoulli(std::min(1.0, susceptibility * sigma_max))) {
    return {make_contaminated_response(task.adversarial_label, sigma_max, inherited_stealth, rng),
            true, cause};
  }

  int label = rng.bernoulli(alpha) ? task.true_label : draw_wrong_label(task, rng);
  return {make_clean_response(label, rng), false, Cause::none};
}

namespace {

// Shared per-node update used by run_episode and replay: handles attacker
// emission and temporal persistence (a compromised agent never recovers on
// its own; it re-emits its previous contaminated response).
NodeState step_node(AgentId agent, int round, const Task& task, std::vector<Message> inbox,
                    Content memory, Content tool_obs, double susceptibility, double alpha,
                    std::optional<AttackerEmission> attacker, const NodeState* prev,
                    uint64_t episode_seed) {
  NodeState st;
  st.agent = agent;
  st.round = round;
  st.inbox = std::move(inbox);
  st.memory = std::move(memory);
  st.tool_obs = std::move(tool_obs);

  Rng rng = node_stream(episode_seed, agent, round);
  if (attacker && attacker->strength > 0.0) {
    StepResult r = step_agent(agent, round, task, st.inbox, st.memory, st.tool_obs, susceptibility,
                              rng, alpha, attacker);
    st.response = std::move(r.response);
    st.compromised = true;
    st.cause = Cause::self;
  } else if (prev && prev->compromised) {
    st.response = prev->response;
    st.compromised = true;
    st.cause = prev->cause;
  } else {
    StepResult r = step_agent(agent, round, task, st.inbox, st.memory, st.tool_obs, susceptibility,
                              rng, alpha, std::nullopt);
    st.response = std::move(r.response);
    st.compromised = r.compromised;
    st.cause = r.cause;
  }
  return st;
}

}  // namespace

ProvenanceGraph build_provenance(const std::vector<NodeState>& states, int n_agents, int rounds) {
  ProvenanceGraph z;
  auto at = [&](AgentId a, int t) -> const NodeState& { return states[t * n_agents + a]; };
  for (int t = 0; t < rounds; ++t) {
    for (AgentId a = 0; a < n_agents; ++a) {
      const NodeState& st = at(a, t);
      if (!st.compromised) continue;
      z.nodes.insert({a, t});
      bool persisted = t > 0 && at(a, t - 1).compromised;
      if (persisted) z.edges.insert({{a, t - 1}, {a, t}, ProvEdgeType::temporal});
      if (!persisted && st.cause == Cause::msg) {
        // The compromise was caused by a maximal-sigma message this round.
        double sigma_max = 0.0;
        for (const Message& m : st.inbox)
          sigma_max = std::max(sigma_max, m.content.payload_strength);
        for (const Message& m : st.inbox)
          if (m.content.payload_strength == sigma_max && at(m.sender, t - 1).compromised)
            z.edges.insert(
                {{m.sender, t - 1}, {a, t}, ProvEdgeType::communication});
      }
    }
  }
  return z;
}

EpisodeRecord run_episode(const Topology& topology, const Task& task,
                          const std::optional<AttackSpec>& attack, int rounds, uint64_t rng_seed,
                          double alpha) {
  require(rounds >= 1, Errc::invalid_config, "rounds must be >= 1");
  require(task.n_labels >= 2, Errc::invalid_config, "need at least 2 labels");
  require(task.true_label != task.adversarial_label, Errc::invalid_config,
          "adversarial label must differ from the true label");
  if (attack) {
    require(!attack->targets.empty(), Errc::invalid_config, "attack targets empty");
    for (AgentId a : attack->targets)
      require(a >= 0 && a < topology.n_agents, Errc::invalid_config,
              "attack target outside agent set");
  }

  const int n = topology.n_agents;
  EpisodeRecord ep;
  ep.topology = topology;
  ep.task = task;
  ep.attack = attack;
  ep.rounds = rounds;
  ep.rng_seed = rng_seed;
  ep.alpha = alpha;
  ep.states.resize(static_cast<size_t>(n) * rounds);

  const bool pi = attack && attack->family == AttackFamily::prompt_injection;
  const bool ta = attack && attack->family == AttackFamily::tool_attack;
  const bool ma = attack && attack->family == AttackFamily::memory_attack;
  const double rho = attack ? attack->susceptibility : 0.0;

  std::vector<Content> memory(n);
  for (AgentId a = 0; a < n; ++a) {
    memory[a] = (ma && attack->targets.count(a))
                    ? make_poisoned_content(task.adversarial_label, attack->strength,
                                            attack->stealth, kTaskToken)
                    : make_clean_memory(task);
  }

  for (int t = 0; t < rounds; ++t) {
    for (AgentId a = 0; a < n; ++a) {
      std::vector<Message> inbox;
      if (t > 0)
        for (const Message& m : ep.messages)
          if (m.receiver == a && m.send_round == t - 1) inbox.push_back(m);

      Content tool = (ta && attack->targets.count(a))
                         ? make_poisoned_content(task.adversarial_label, attack->strength,
                                                 attack->stealth, kToolToken)
                         : make_clean_tool_obs();
      std::optional<AttackerEmission> attacker;
      if (pi && attack->targets.count(a))
        attacker = AttackerEmission{attack->strength, attack->stealth};
      const NodeState* prev = t > 0 ? &ep.states[ep.state_index(a, t - 1)] : nullptr;

      ep.states[ep.state_index(a, t)] = step_node(a, t, task, std::move(inbox), memory[a], tool,
                                                  rho, alpha, attacker, prev, rng_seed);
    }
    if (t < rounds - 1) {
      for (const auto& [s, d] : topology.edges)
        ep.messages.push_back({s, d, t, ep.states[ep.state_index(s, t)].response});
    }
  }

  ep.provenance = build_provenance(ep.states, n, rounds);
  ep.final_output = majority_label(ep);
  return ep;
}

const ProvenanceGraph& ground_truth_subgraph(const EpisodeRecord& episode) {
  return episode.provenance;
}

int majority_label(const EpisodeRecord& episode) {
  std::vector<int> counts(episode.task.n_labels, 0);
  for (AgentId a = 0; a < episode.topology.n_agents; ++a) {
    int l = episode.state(a, episode.rounds - 1).response.label;
    if (l >= 0 && l < episode.task.n_labels) ++counts[l];
  }
  int best = 0;
  for (int l = 1; l < episode.task.n_labels; ++l)
    if (counts[l] > counts[best]) best = l;  // ties keep the smallest index
  return best;
}

}  // namespace propguard::sim
