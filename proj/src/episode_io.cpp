#include "propguard/episode_io.hpp"

#include <json.hpp>

#include "propguard/error.hpp"

namespace propguard::harness {

using nlohmann::ordered_json;
using namespace propguard::sim;

namespace {

ordered_json content_to_json(const Content& c) {
  ordered_json j;
  j["label"] = c.label;
  j["payload_strength"] = c.payload_strength;
  j["stealth"] = c.stealth;
  j["tokens"] = c.tokens;
  return j;
}

Content content_from_json(const ordered_json& j) {
  Content c;
  c.label = j.at("label").get<int>();
  c.payload_strength = j.at("payload_strength").get<double>();
  c.stealth = j.at("stealth").get<double>();
  c.tokens = j.at("tokens").get<std::vector<int>>();
  return c;
}

ordered_json message_to_json(const Message& m) {
  ordered_json j;
  j["sender"] = m.sender;
  j["receiver"] = m.receiver;
  j["send_round"] = m.send_round;
  j["content"] = content_to_json(m.content);
  return j;
}

Message message_from_json(const ordered_json& j) {
  Message m;
  m.sender = j.at("sender").get<int>();
  m.receiver = j.at("receiver").get<int>();
  m.send_round = j.at("send_round").get<int>();
  m.content = content_from_json(j.at("content"));
  return m;
}

}  // namespace

std::string episode_to_json(const EpisodeRecord& ep) {
  ordered_json j;
  j["rng_seed"] = ep.rng_seed;
  j["rounds"] = ep.rounds;
  j["alpha"] = ep.alpha;

  ordered_json topo;
  topo["kind"] = topology_kind_name(ep.topology.kind);
  topo["n_agents"] = ep.topology.n_agents;
  ordered_json edges = ordered_json::array();
  for (const auto& [s, d] : ep.topology.edges) edges.push_back({s, d});
  topo["edges"] = edges;
  j["topology"] = topo;

  ordered_json task;
  task["task_id"] = ep.task.task_id;
  task["n_labels"] = ep.task.n_labels;
  task["true_label"] = ep.task.true_label;
  task["adversarial_label"] = ep.task.adversarial_label;
  task["requires_tool"] = ep.task.requires_tool;
  j["task"] = task;

  if (ep.attack) {
    ordered_json atk;
    atk["family"] = attack_family_name(ep.attack->family);
    atk["targets"] = std::vector<int>(ep.attack->targets.begin(), ep.attack->targets.end());
    atk["strength"] = ep.attack->strength;
    atk["stealth"] = ep.attack->stealth;
    atk["susceptibility"] = ep.attack->susceptibility;
    j["attack"] = atk;
  } else {
    j["attack"] = nullptr;
  }

  ordered_json states = ordered_json::array();
  for (const NodeState& st : ep.states) {
    ordered_json s;
    s["agent"] = st.agent;
    s["round"] = st.round;
    s["response"] = content_to_json(st.response);
    ordered_json inbox = ordered_json::array();
    for (const Message& m : st.inbox) inbox.push_back(message_to_json(m));
    s["inbox"] = inbox;
    s["memory"] = content_to_json(st.memory);
    s["tool_obs"] = content_to_json(st.tool_obs);
    s["compromised"] = st.compromised;
    s["cause"] = cause_name(st.cause);
    states.push_back(s);
  }
  j["states"] = states;

  ordered_json msgs = ordered_json::array();
  for (const Message& m : ep.messages) msgs.push_back(message_to_json(m));
  j["messages"] = msgs;

  ordered_json prov;
  ordered_json pn = ordered_json::array();
  for (const ProvNode& v : ep.provenance.nodes) pn.push_back({v.agent, v.round});
  prov["nodes"] = pn;
  ordered_json pe = ordered_json::array();
  for (const ProvEdge& e : ep.provenance.edges) {
    ordered_json je;
    je["src"] = {e.src.agent, e.src.round};
    je["dst"] = {e.dst.agent, e.dst.round};
    je["etype"] = e.etype == ProvEdgeType::temporal ? "temporal" : "communication";
    pe.push_back(je);
  }
  prov["edges"] = pe;
  j["provenance"] = prov;

  j["final_output"] = ep.final_output;
  return j.dump();
}

EpisodeRecord episode_from_json(const std::string& line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const std::exception& e) {
    throw Error(Errc::io_error, std::string("episode JSON parse failed: ") + e.what());
  }
  EpisodeRecord ep;
  try {
    ep.rng_seed = j.at("rng_seed").get<uint64_t>();
    ep.rounds = j.at("rounds").get<int>();
    ep.alpha = j.at("alpha").get<double>();

    const auto& topo = j.at("topology");
    ep.topology.kind = topology_kind_from(topo.at("kind").get<std::string>());
    ep.topology.n_agents = topo.at("n_agents").get<int>();
    for (const auto& e : topo.at("edges"))
      ep.topology.edges.insert({e.at(0).get<int>(), e.at(1).get<int>()});

    const auto& task = j.at("task");
    ep.task.task_id = task.at("task_id").get<std::string>();
    ep.task.n_labels = task.at("n_labels").get<int>();
    ep.task.true_label = task.at("true_label").get<int>();
    ep.task.adversarial_label = task.at("adversarial_label").get<int>();
    ep.task.requires_tool = task.at("requires_tool").get<bool>();

    if (!j.at("attack").is_null()) {
      AttackSpec atk;
      const auto& a = j.at("attack");
      atk.family = attack_family_from(a.at("family").get<std::string>());
      for (const auto& t : a.at("targets")) atk.targets.insert(t.get<int>());
      atk.strength = a.at("strength").get<double>();
      atk.stealth = a.at("stealth").get<double>();
      atk.susceptibility = a.at("susceptibility").get<double>();
      ep.attack = atk;
    }

    for (const auto& s : j.at("states")) {
      NodeState st;
      st.agent = s.at("agent").get<int>();
      st.round = s.at("round").get<int>();
      st.response = content_from_json(s.at("response"));
      for (const auto& m : s.at("inbox")) st.inbox.push_back(message_from_json(m));
      st.memory = content_from_json(s.at("memory"));
      st.tool_obs = content_from_json(s.at("tool_obs"));
      st.compromised = s.at("compromised").get<bool>();
      st.cause = cause_from(s.at("cause").get<std::string>());
      ep.states.push_back(std::move(st));
    }

    for (const auto& m : j.at("messages")) ep.messages.push_back(message_from_json(m));

    const auto& prov = j.at("provenance");
    for (const auto& v : prov.at("nodes"))
      ep.provenance.nodes.insert({v.at(0).get<int>(), v.at(1).get<int>()});
    for (const auto& e : prov.at("edges")) {
      ProvEdge pe;
      pe.src = {e.at("src").at(0).get<int>(), e.at("src").at(1).get<int>()};
      pe.dst = {e.at("dst").at(0).get<int>(), e.at("dst").at(1).get<int>()};
      pe.etype = e.at("etype").get<std::string>() == "temporal" ? ProvEdgeType::temporal
                                                                : ProvEdgeType::communication;
      ep.provenance.edges.insert(pe);
    }

    ep.final_output = j.at("final_output").get<int>();
  } catch (const ordered_json::exception& e) {
    throw Error(Errc::io_error, std::string("episode JSON missing field: ") + e.what());
  }
  return ep;
}

void write_episodes_jsonl(const std::vector<EpisodeRecord>& episodes, std::ostream& out) {
  for (const EpisodeRecord& ep : episodes) out << episode_to_json(ep) << "\n";
}

std::vector<EpisodeRecord> read_episodes_jsonl(std::istream& in) {
  std::vector<EpisodeRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(episode_from_json(line));
  }
  return out;
}

std::string outcome_to_json(const defense::DefenseOutcome& outcome) {
  ordered_json j;
  j["seeds"] = outcome.seeds;
  j["merged_nodes"] = std::vector<int>(outcome.merged.nodes.begin(), outcome.merged.nodes.end());
  ordered_json medges = ordered_json::array();
  for (const graph::STEdge& e : outcome.merged.edges)
    medges.push_back({e.src, e.dst, e.etype == graph::EdgeType::temporal ? "temporal"
                                                                         : "communication"});
  j["merged_edges"] = medges;
  ordered_json diags = ordered_json::array();
  for (const defense::DiagnosisResult& d : outcome.diagnoses) {
    ordered_json jd;
    jd["node"] = d.node;
    jd["is_compromised"] = d.harmful;
    jd["risk_source"] = cause_name(d.cause);
    jd["failure_mode"] = d.mode ? failure_mode_name(*d.mode) : "none";
    jd["confidence"] = d.confidence;
    jd["fallback"] = d.fallback;
    diags.push_back(jd);
  }
  j["diagnoses"] = diags;
  j["harmful_nodes"] =
      std::vector<int>(outcome.harmful.nodes.begin(), outcome.harmful.nodes.end());
  j["sources"] = std::vector<int>(outcome.harmful.sources.begin(), outcome.harmful.sources.end());
  ordered_json acts = ordered_json::array();
  for (const defense::RemediationAction& a : outcome.actions) {
    ordered_json ja;
    ja["node"] = a.node;
    ja["remediation_action"] = remediation_action_name(a.action);
    ja["requires_tool_reinvoke"] = a.requires_tool_reinvoke;
    acts.push_back(ja);
  }
  j["actions"] = acts;
  j["flagged_msg_sources"] = outcome.flagged_msg_sources;
  j["cycle_fallback"] = outcome.cycle_fallback;
  j["final_output_after"] = outcome.remediated.final_output;
  return j.dump();
}

void write_outcomes_jsonl(const std::vector<defense::DefenseOutcome>& outcomes,
                          std::ostream& out) {
  for (const defense::DefenseOutcome& o : outcomes) out << outcome_to_json(o) << "\n";
}

}  // namespace propguard::harness
