#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iacforge/digest.hpp"
#include "iacforge/errors.hpp"

namespace iacforge::orch {

struct ToolchainDigests {
  std::string registry_version;
  std::string registry_digest;
  std::string catalog_version;
  std::string catalog_digest;
  std::string rules_digest;
  std::string mapping_table_version;
  std::string sandbox_manifest_digest;

  [[nodiscard]] nlohmann::json to_json() const {
    return nlohmann::json{{"registry_version", registry_version},
                          {"registry_digest", registry_digest},
                          {"catalog_version", catalog_version},
                          {"catalog_digest", catalog_digest},
                          {"rules_digest", rules_digest},
                          {"mapping_table_version", mapping_table_version},
                          {"sandbox_manifest_digest", sandbox_manifest_digest}};
  }
};

struct BlackboardEntry {
  int seq = 0;
  std::string state;          // FSM state tag at write time
  std::string artifact_kind;  // plan | program | report | edit | trace | log | bundle
  std::string digest;         // sha256 of the payload bytes
  std::string timestamp;      // ISO-8601 UTC; excluded from all digests
  std::string payload_ref;    // file name under the run dir, or "inline"
  nlohmann::json payload;     // kept in memory for bundle building and replay

  [[nodiscard]] nlohmann::json to_json() const {
    return nlohmann::json{{"seq", seq},
                          {"state", state},
                          {"artifact_kind", artifact_kind},
                          {"digest", digest},
                          {"timestamp", timestamp},
                          {"payload_ref", payload_ref},
                          {"payload", payload}};
  }
};

/// Append-only, digest-stamped artifact log. One writer per run; persisted
/// as JSON-lines under the run directory for offline audit and replay.
class Blackboard {
 public:
  Blackboard(std::filesystem::path run_dir, ToolchainDigests toolchain)
      : run_dir_(std::move(run_dir)), toolchain_(std::move(toolchain)) {
    std::filesystem::create_directories(run_dir_);
    log_.open(run_dir_ / "run.jsonl", std::ios::binary | std::ios::trunc);
    if (!log_) throw Error(ErrorCode::io_error, "cannot open blackboard log in " + run_dir_.string());
    nlohmann::json header{{"toolchain", toolchain_.to_json()}};
    log_ << header.dump() << "\n";
    log_.flush();
  }

  /// Appends an entry whose payload is a JSON document. The digest covers
  /// the compact serialization, never the timestamp.
  int append_json(const std::string& state, const std::string& kind,
                  const nlohmann::json& payload, const std::string& payload_ref = "inline") {
    return append_raw(state, kind, payload.dump(), payload, payload_ref);
  }

  /// Appends an entry for a text artifact (program text, logs). The payload
  /// is wrapped for the in-memory view; the digest covers the raw bytes.
  int append_text(const std::string& state, const std::string& kind, const std::string& text,
                  const std::string& payload_ref) {
    return append_raw(state, kind, text, nlohmann::json{{"text", text}}, payload_ref);
  }

  [[nodiscard]] const std::vector<BlackboardEntry>& entries() const { return entries_; }
  [[nodiscard]] const ToolchainDigests& toolchain() const { return toolchain_; }
  [[nodiscard]] const std::filesystem::path& run_dir() const { return run_dir_; }

  /// Latest entry of a kind, optionally filtered by state tag.
  [[nodiscard]] const BlackboardEntry* latest(const std::string& kind,
                                              const std::string& state = "") const {
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
      if (it->artifact_kind == kind && (state.empty() || it->state == state)) return &*it;
    return nullptr;
  }

 private:
  int append_raw(const std::string& state, const std::string& kind, const std::string& bytes,
                 nlohmann::json payload, const std::string& payload_ref) {
    BlackboardEntry e;
    e.seq = next_seq_++;
    e.state = state;
    e.artifact_kind = kind;
    e.digest = sha256_hex(bytes);
    e.timestamp = now_iso8601();
    e.payload_ref = payload_ref;
    e.payload = std::move(payload);
    log_ << e.to_json().dump() << "\n";
    log_.flush();
    entries_.push_back(std::move(e));
    return entries_.back().seq;
  }

  static std::string now_iso8601() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

  std::filesystem::path run_dir_;
  ToolchainDigests toolchain_;
  std::ofstream log_;
  std::vector<BlackboardEntry> entries_;
  int next_seq_ = 0;
};

}  // namespace iacforge::orch
