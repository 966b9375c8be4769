#pragma once

#include <stdexcept>
#include <string>

namespace propguard {

enum class Errc {
  invalid_config,
  invalid_node,
  invalid_params,
  invalid_input,
  illegal_action,
  contract_violation,
  io_error,
  timeout,
  connection_refused,
  schema_violation,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::invalid_config: return "invalid-config";
    case Errc::invalid_node: return "invalid-node";
    case Errc::invalid_params: return "invalid-params";
    case Errc::invalid_input: return "invalid-input";
    case Errc::illegal_action: return "illegal-action";
    case Errc::contract_violation: return "contract-violation";
    case Errc::io_error: return "io-error";
    case Errc::timeout: return "timeout";
    case Errc::connection_refused: return "connection-refused";
    case Errc::schema_violation: return "schema-violation";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

inline void require(bool cond, Errc code, const std::string& msg) {
  if (!cond) throw Error(code, msg);
}

}  // namespace propguard
