#pragma once

#include <functional>
#include <optional>
#include <string>

#include <json.hpp>

#include "propguard/defense.hpp"

namespace propguard::harness {

enum class AdapterRole { agent, diagnoser, remediator, policy };

const char* adapter_role_name(AdapterRole role);

struct TransportReply {
  enum class Status { ok, timeout, connection_refused } status = Status::ok;
  int http_status = 0;
  std::string body;
};

// POSTs a JSON body and returns the raw reply; injectable for tests.
using Transport =
    std::function<TransportReply(const std::string& url, const std::string& body, int timeout_ms)>;

Transport http_transport();

// Serializes the request as one JSON object over HTTP POST and validates the
// role-specific response shape. Timeout, connection failure and malformed
// responses raise distinct errors so callers can fall back to built-ins.
nlohmann::json external_call(AdapterRole role, const nlohmann::json& request,
                             const std::string& endpoint, int timeout_ms,
                             const Transport& transport = http_transport());

// Diagnoser backed by the adapter protocol; any adapter failure falls back
// to the heuristic and flags the result.
class ExternalDiagnoser final : public defense::Diagnoser {
 public:
  ExternalDiagnoser(std::string endpoint, int timeout_ms,
                    Transport transport = http_transport())
      : endpoint_(std::move(endpoint)), timeout_ms_(timeout_ms),
        transport_(std::move(transport)) {}

  defense::DiagnosisResult diagnose(int node, const sim::EpisodeRecord& episode,
                                    const explore::SuspiciousSubgraph& merged) override;

 private:
  std::string endpoint_;
  int timeout_ms_;
  Transport transport_;
};

// Reads PROPGUARD_ADAPTER_URL; empty when unset.
std::string adapter_url_from_env();

}  // namespace propguard::harness
