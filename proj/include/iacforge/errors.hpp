#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace iacforge {

/// Machine-readable error codes for hard failures (configuration faults,
/// malformed inputs, contract violations). Validation outcomes are never
/// thrown; they travel as counterexamples in reports.
enum class ErrorCode {
  parse_error,
  malformed_plan,
  unknown_kind,
  duplicate_kind,
  region_unavailable,
  version_conflict,
  unresolvable_reference,
  cyclic_plan,
  dead_state,
  proposer_exhausted,
  missing_sku,
  sandbox_unavailable,
  unknown_rule_predicate,
  locus_not_found,
  no_applicable_edit,
  contract_violation,
  budget_exhausted,
  unsupported_intent,
  not_a_success,
  fragment_not_closed,
  incomplete_blackboard,
  remote_timeout,
  remote_transport,
  remote_invalid_response,
  config_error,
  io_error,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::malformed_plan: return "malformed_plan";
    case ErrorCode::unknown_kind: return "unknown_kind";
    case ErrorCode::duplicate_kind: return "duplicate_kind";
    case ErrorCode::region_unavailable: return "region_unavailable";
    case ErrorCode::version_conflict: return "version_conflict";
    case ErrorCode::unresolvable_reference: return "unresolvable_reference";
    case ErrorCode::cyclic_plan: return "cyclic_plan";
    case ErrorCode::dead_state: return "dead_state";
    case ErrorCode::proposer_exhausted: return "proposer_exhausted";
    case ErrorCode::missing_sku: return "missing_sku";
    case ErrorCode::sandbox_unavailable: return "sandbox_unavailable";
    case ErrorCode::unknown_rule_predicate: return "unknown_rule_predicate";
    case ErrorCode::locus_not_found: return "locus_not_found";
    case ErrorCode::no_applicable_edit: return "no_applicable_edit";
    case ErrorCode::contract_violation: return "contract_violation";
    case ErrorCode::budget_exhausted: return "budget_exhausted";
    case ErrorCode::unsupported_intent: return "unsupported_intent";
    case ErrorCode::not_a_success: return "not_a_success";
    case ErrorCode::fragment_not_closed: return "fragment_not_closed";
    case ErrorCode::incomplete_blackboard: return "incomplete_blackboard";
    case ErrorCode::remote_timeout: return "remote_timeout";
    case ErrorCode::remote_transport: return "remote_transport";
    case ErrorCode::remote_invalid_response: return "remote_invalid_response";
    case ErrorCode::config_error: return "config_error";
    case ErrorCode::io_error: return "io_error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string locus = "")
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message +
                           (locus.empty() ? "" : " (at " + locus + ")")),
        code_(code),
        locus_(std::move(locus)) {}

  [[nodiscard]] ErrorCode code() const { return code_; }
  [[nodiscard]] const std::string& locus() const { return locus_; }

 private:
  ErrorCode code_;
  std::string locus_;
};

}  // namespace iacforge
