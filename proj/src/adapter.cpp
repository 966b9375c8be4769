#include "propguard/adapter.hpp"

#include <cstdlib>

#include <httplib.h>

#include "propguard/error.hpp"

namespace propguard::harness {

using nlohmann::json;

const char* adapter_role_name(AdapterRole role) {
  switch (role) {
    case AdapterRole::agent: return "agent";
    case AdapterRole::diagnoser: return "diagnoser";
    case AdapterRole::remediator: return "remediator";
    case AdapterRole::policy: return "policy";
  }
  return "unknown";
}

Transport http_transport() {
  return [](const std::string& url, const std::string& body, int timeout_ms) {
    TransportReply reply;
    size_t scheme = url.find("://");
    size_t path_start = scheme == std::string::npos ? url.find('/')
                                                    : url.find('/', scheme + 3);
    std::string host = path_start == std::string::npos ? url : url.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(host);
    client.set_connection_timeout(0, timeout_ms * 1000);
    client.set_read_timeout(0, timeout_ms * 1000);
    client.set_write_timeout(0, timeout_ms * 1000);
    auto res = client.Post(path, body, "application/json");
    if (!res) {
      auto err = res.error();
      reply.status = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                      err == httplib::Error::Write)
                         ? TransportReply::Status::timeout
                         : TransportReply::Status::connection_refused;
      return reply;
    }
    reply.http_status = res->status;
    reply.body = res->body;
    return reply;
  };
}

namespace {

void validate_enum(const json& j, const char* key, std::initializer_list<const char*> allowed) {
  if (!j.contains(key) || !j.at(key).is_string())
    throw Error(Errc::schema_violation, std::string("adapter response missing '") + key + "'");
  std::string v = j.at(key).get<std::string>();
  for (const char* a : allowed)
    if (v == a) return;
  throw Error(Errc::schema_violation,
              std::string("adapter response has invalid ") + key + " '" + v + "'");
}

void validate_response(AdapterRole role, const json& j) {
  switch (role) {
    case AdapterRole::diagnoser:
      if (!j.contains("is_compromised") || !j.at("is_compromised").is_boolean())
        throw Error(Errc::schema_violation, "diagnoser response missing 'is_compromised'");
      if (j.at("is_compromised").get<bool>()) {
        validate_enum(j, "risk_source", {"msg", "tool", "memory", "self"});
        validate_enum(j, "failure_mode",
                      {"answer_manipulation", "instruction_injection", "reasoning_corruption",
                       "information_leak", "task_deviation"});
      }
      break;
    case AdapterRole::remediator:
      validate_enum(j, "remediation_action",
                    {"regenerate_response", "sanitize_memory_then_regenerate",
                     "discard_tool_output_then_regenerate"});
      if (!j.contains("new_response"))
        throw Error(Errc::schema_violation, "remediator response missing 'new_response'");
      break;
    case AdapterRole::policy:
      if (!j.contains("action") || !j.at("action").is_string())
        throw Error(Errc::schema_violation, "policy response missing 'action'");
      break;
    case AdapterRole::agent:
      if (!j.contains("label") || !j.at("label").is_number_integer())
        throw Error(Errc::schema_violation, "agent response missing 'label'");
      break;
  }
}

}  // namespace

json external_call(AdapterRole role, const json& request, const std::string& endpoint,
                   int timeout_ms, const Transport& transport) {
  require(!endpoint.empty(), Errc::invalid_config, "adapter endpoint not configured");

  json wrapped = request;
  wrapped["role"] = adapter_role_name(role);
  TransportReply reply = transport(endpoint, wrapped.dump(), timeout_ms);
  if (reply.status == TransportReply::Status::timeout)
    throw Error(Errc::timeout, "adapter call timed out");
  if (reply.status == TransportReply::Status::connection_refused)
    throw Error(Errc::connection_refused, "adapter endpoint unreachable");
  if (reply.http_status != 200)
    throw Error(Errc::schema_violation,
                "adapter returned HTTP " + std::to_string(reply.http_status));

  json parsed;
  try {
    parsed = json::parse(reply.body);
  } catch (const std::exception& e) {
    throw Error(Errc::schema_violation, std::string("adapter response is not JSON: ") + e.what());
  }
  validate_response(role, parsed);
  return parsed;
}

defense::DiagnosisResult ExternalDiagnoser::diagnose(int node, const sim::EpisodeRecord& episode,
                                                     const explore::SuspiciousSubgraph& merged) {
  int n = episode.topology.n_agents;
  sim::AgentId agent = node % n;
  int round = node / n;
  const sim::NodeState& st = episode.state(agent, round);

  json req;
  req["node"] = node;
  req["agent"] = agent;
  req["round"] = round;
  req["task_id"] = episode.task.task_id;
  req["response_label"] = st.response.label;
  req["response_tokens"] = st.response.tokens;
  req["memory_tokens"] = st.memory.tokens;
  req["tool_tokens"] = st.tool_obs.tokens;
  json inbox = json::array();
  for (const sim::Message& m : st.inbox)
    inbox.push_back({{"sender", m.sender}, {"tokens", m.content.tokens}});
  req["inbox"] = inbox;
  req["suspicious_context"] = std::vector<int>(merged.nodes.begin(), merged.nodes.end());

  json resp = external_call(AdapterRole::diagnoser, req, endpoint_, timeout_ms_, transport_);

  defense::DiagnosisResult d;
  d.node = node;
  d.harmful = resp.at("is_compromised").get<bool>();
  if (d.harmful) {
    d.cause = sim::cause_from(resp.at("risk_source").get<std::string>());
    d.mode = defense::failure_mode_from(resp.at("failure_mode").get<std::string>());
  }
  d.confidence = resp.value("confidence", 1.0);
  return d;
}

std::string adapter_url_from_env() {
  const char* url = std::getenv("PROPGUARD_ADAPTER_URL");
  return url ? url : "";
}

}  // namespace propguard::harness
