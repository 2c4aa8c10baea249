#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iacforge/blackboard.hpp"
#include "iacforge/hcl.hpp"
#include "iacforge/hcl_lift.hpp"
#include "iacforge/repair.hpp"
#include "iacforge/validators.hpp"

namespace iacforge::evidence {

inline constexpr const char* kBundleVersion = "1";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kProgramFile = "program.tf";
inline constexpr const char* kPlanFile = "plan.json";

inline const std::vector<std::string>& section_files() {
  static const std::vector<std::string> kSections = {
      "policy_traces.json",    "cost_sheet.json",  "static_validation.json",
      "roundtrip.json",        "repair_path.json", "deploy_log.json",
      "confirmations.json",
  };
  return kSections;
}

/// The proof-carrying bundle: a manifest plus one file per evidence section.
/// Self-contained, diff-able, offline-verifiable.
struct EvidenceBundle {
  nlohmann::json manifest;
  std::string program_text;
  std::string plan_json;
  std::map<std::string, std::string> sections;  // file name -> bytes

  void write_to(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    auto write = [&](const std::filesystem::path& p, const std::string& bytes) {
      std::ofstream out(p, std::ios::binary);
      if (!out) throw Error(ErrorCode::io_error, "cannot write " + p.string());
      out << bytes;
    };
    write(dir / kManifestFile, manifest.dump(2) + "\n");
    write(dir / kProgramFile, program_text);
    write(dir / kPlanFile, plan_json);
    for (const auto& [name, bytes] : sections) write(dir / name, bytes);
  }

  [[nodiscard]] std::string manifest_digest() const { return sha256_hex(manifest.dump(2) + "\n"); }
};

namespace detail {

inline nlohmann::json confirmations(const iir::Plan& plan) {
  nlohmann::json residency{{"constrained", false}};
  if (plan.specs.residency) {
    nlohmann::json allowed = nlohmann::json::array();
    for (const auto& r : *plan.specs.residency) allowed.push_back(r);
    nlohmann::json regions = nlohmann::json::object();
    bool ok = true;
    for (const auto& n : plan.nodes) {
      regions[n.id] = n.region;
      if (!plan.specs.residency->count(n.region)) ok = false;
    }
    residency = {{"constrained", true}, {"allowed", allowed}, {"regions", regions}, {"ok", ok}};
  }
  nlohmann::json redundancy{{"constrained", false}};
  if (plan.specs.availability_zones_min) {
    std::set<std::string> zones;
    for (const auto& n : plan.nodes) {
      if (n.kind != "subnet") continue;
      if (const iir::TypedValue* z = n.field("availability_zone");
          z && z->type == iir::ValueType::string)
        zones.insert(z->str);
    }
    redundancy = {{"constrained", true},
                  {"required", *plan.specs.availability_zones_min},
                  {"zones", std::vector<std::string>(zones.begin(), zones.end())},
                  {"ok", static_cast<std::int64_t>(zones.size()) >=
                             *plan.specs.availability_zones_min}};
  }
  return nlohmann::json{{"residency", residency}, {"redundancy", redundancy}};
}

}  // namespace detail

/// Builds the bundle from blackboard contents. A run that reached done with
/// J = 0 has every required artifact class recorded; anything missing is an
/// incomplete-blackboard error. Building twice from the same blackboard
/// yields byte-identical files: nothing here consults a clock.
inline EvidenceBundle build_bundle(const orch::Blackboard& bb,
                                   const hcl::HclProgram& final_program) {
  auto require = [&](const orch::BlackboardEntry* e, const char* what) {
    if (!e) throw Error(ErrorCode::incomplete_blackboard, std::string("missing ") + what);
    return e;
  };
  const auto* plan_entry = require(bb.latest("plan"), "final plan");
  const auto* report_entry = require(bb.latest("report"), "validator report");
  const auto* roundtrip_entry = require(bb.latest("trace", "compile"), "round-trip record");
  const auto* deploy_entry = require(bb.latest("log", "deploy"), "deploy log");
  const nlohmann::json& report = report_entry->payload;
  if (!report.contains("traces"))
    throw Error(ErrorCode::incomplete_blackboard, "report lacks policy traces");

  iir::Plan plan = iir::plan_from_json(plan_entry->payload);

  EvidenceBundle bundle;
  bundle.program_text = hcl::print(final_program);
  bundle.plan_json = iir::canonical_serialize(plan);

  bundle.sections["policy_traces.json"] =
      nlohmann::json{{"rules_digest", bb.toolchain().rules_digest},
                     {"traces", report.at("traces")}}
          .dump(2) +
      "\n";
  bundle.sections["cost_sheet.json"] =
      nlohmann::json{{"catalog_version", bb.toolchain().catalog_version},
                     {"v_cost", report.value("v_cost", "0")},
                     {"line_items", report.value("cost_sheet", nlohmann::json::array())}}
          .dump(2) +
      "\n";
  nlohmann::json review_diags = nlohmann::json::array();
  if (const auto* review_log = bb.latest("log", "review"))
    review_diags = review_log->payload.value("diagnostics", nlohmann::json::array());
  bundle.sections["static_validation.json"] =
      nlohmann::json{{"schema", report.value("schema", "")},
                     {"counterexamples", report.value("counterexamples", nlohmann::json::array())},
                     {"review_diagnostics", review_diags}}
          .dump(2) +
      "\n";
  bundle.sections["roundtrip.json"] = roundtrip_entry->payload.dump(2) + "\n";

  nlohmann::json path = nlohmann::json::array();
  for (const auto& e : bb.entries())
    if (e.artifact_kind == "edit" && e.payload.value("committed", false)) path.push_back(e.payload);
  bundle.sections["repair_path.json"] = nlohmann::json{{"edits", path}}.dump(2) + "\n";

  bundle.sections["deploy_log.json"] = deploy_entry->payload.dump(2) + "\n";
  bundle.sections["confirmations.json"] = detail::confirmations(plan).dump(2) + "\n";

  nlohmann::json sections = nlohmann::json::object();
  for (const auto& [name, bytes] : bundle.sections) sections[name] = sha256_hex(bytes);

  nlohmann::json constraints = nlohmann::json::object();
  {
    // Constraints ride in the manifest so offline verification can re-run
    // the policy and cost validators with the original inputs.
    const iir::ConstraintSet& c = plan.specs;
    if (c.budget_ceiling) constraints["budget_ceiling"] = c.budget_ceiling->to_string();
    if (c.residency)
      constraints["residency"] = std::vector<std::string>(c.residency->begin(), c.residency->end());
    if (!c.required_effects.empty()) {
      nlohmann::json effects = nlohmann::json::array();
      for (iir::Effect e : c.required_effects) effects.push_back(iir::effect_name(e));
      constraints["required_effects"] = effects;
    }
    if (c.availability_zones_min) constraints["availability_zones_min"] = *c.availability_zones_min;
  }

  bundle.manifest = nlohmann::json{{"bundle_version", kBundleVersion},
                                   {"digest_algorithm", kDigestAlgorithm},
                                   {"toolchain", bb.toolchain().to_json()},
                                   {"constraints", constraints},
                                   {"program_digest", sha256_hex(bundle.program_text)},
                                   {"plan_digest", iir::plan_digest(plan).hex},
                                   {"sections", sections}};
  return bundle;
}

// ---------------------------------------------------------------------------
// Offline verification
// ---------------------------------------------------------------------------

struct VerifyFinding {
  std::string code;     // digest_mismatch | trace_divergence | verdict_divergence | ...
  std::string section;
  std::string detail;

  [[nodiscard]] nlohmann::json to_json() const {
    return nlohmann::json{{"code", code}, {"section", section}, {"detail", detail}};
  }
};

struct VerifyReport {
  std::vector<VerifyFinding> findings;

  [[nodiscard]] bool pass() const { return findings.empty(); }

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json f = nlohmann::json::array();
    for (const auto& x : findings) f.push_back(x.to_json());
    return nlohmann::json{{"verdict", pass() ? "pass" : "fail"}, {"findings", f}};
  }
};

/// Offline re-verification of a bundle: recompute digests, re-run the
/// deterministic validators (schema, policy, cost) against the program, and
/// compare verdicts and traces with the recorded evidence. Deploy logs are
/// digest-checked only; nothing here needs a network or a sandbox binary.
inline VerifyReport verify_bundle(const std::filesystem::path& bundle_dir,
                                  const std::filesystem::path& program_path,
                                  const schema::SchemaRegistry& registry,
                                  const std::vector<val::PolicyRule>& rules,
                                  const val::PriceCatalog& catalog) {
  VerifyReport report;
  auto finding = [&](std::string code, std::string section, std::string detail) {
    report.findings.push_back({std::move(code), std::move(section), std::move(detail)});
  };
  auto read = [&](const std::filesystem::path& p) -> std::optional<std::string> {
    std::ifstream in(p, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };

  auto manifest_bytes = read(bundle_dir / kManifestFile);
  if (!manifest_bytes) {
    finding("missing_section", kManifestFile, "manifest not found");
    return report;
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(*manifest_bytes);
  } catch (const nlohmann::json::parse_error& e) {
    finding("malformed_manifest", kManifestFile, e.what());
    return report;
  }
  if (manifest.value("digest_algorithm", "") != kDigestAlgorithm)
    finding("algorithm_mismatch", kManifestFile,
            "expected " + std::string(kDigestAlgorithm));

  std::map<std::string, std::string> section_bytes;
  for (const auto& name : section_files()) {
    auto bytes = read(bundle_dir / name);
    if (!bytes) {
      finding("missing_section", name, "section file not found");
      continue;
    }
    section_bytes[name] = *bytes;
    std::string want = manifest.at("sections").value(name, "");
    if (sha256_hex(*bytes) != want)
      finding("digest_mismatch", name, "section bytes do not match the manifest digest");
  }

  auto program_bytes = read(program_path);
  if (!program_bytes) {
    finding("missing_section", kProgramFile, "program file not found");
    return report;
  }
  if (sha256_hex(*program_bytes) != manifest.value("program_digest", ""))
    finding("digest_mismatch", kProgramFile, "program bytes do not match program_digest");

  auto plan_bytes = read(bundle_dir / kPlanFile);
  std::optional<iir::Plan> plan;
  if (!plan_bytes) {
    finding("missing_section", kPlanFile, "plan file not found");
  } else {
    try {
      plan = iir::plan_from_json_text(*plan_bytes);
      if (iir::plan_digest(*plan).hex != manifest.value("plan_digest", ""))
        finding("digest_mismatch", kPlanFile, "plan does not match plan_digest");
    } catch (const Error& e) {
      finding("malformed_section", kPlanFile, e.what());
    }
  }

  std::optional<hcl::HclProgram> program;
  try {
    program = hcl::parse(*program_bytes);
  } catch (const Error& e) {
    finding("malformed_program", kProgramFile, e.what());
  }

  iir::ConstraintSet constraints;
  if (manifest.contains("constraints"))
    constraints = iir::constraints_from_json(manifest.at("constraints"));

  if (program) {
    auto [schema_ok, schema_ces] = val::validate_schema(*program, registry);
    if (!schema_ok)
      finding("verdict_divergence", "static_validation.json",
              "program no longer passes schema validation (" +
                  std::to_string(schema_ces.size()) + " CEs)");

    if (schema_ok) {
      auto [policy_ok, traces, policy_ces] = val::eval_policies(*program, rules, constraints);
      if (!policy_ok)
        finding("verdict_divergence", "policy_traces.json", "policy verdict is no longer pass");
      if (section_bytes.count("policy_traces.json")) {
        try {
          nlohmann::json recorded =
              nlohmann::json::parse(section_bytes["policy_traces.json"]).at("traces");
          nlohmann::json recomputed = nlohmann::json::array();
          for (const auto& t : traces) recomputed.push_back(t.to_json());
          if (recorded != recomputed)
            finding("trace_divergence", "policy_traces.json",
                    "re-evaluated traces differ from the recorded traces");
        } catch (const nlohmann::json::exception& e) {
          finding("malformed_section", "policy_traces.json", e.what());
        }
      }

      try {
        auto [total, sheet, cost_ces] = val::estimate_cost(*program, catalog, constraints);
        if (section_bytes.count("cost_sheet.json")) {
          nlohmann::json recorded = nlohmann::json::parse(section_bytes["cost_sheet.json"]);
          if (recorded.value("v_cost", "") != total.to_string())
            finding("verdict_divergence", "cost_sheet.json",
                    "recomputed estimate " + total.to_string() + " differs from recorded " +
                        recorded.value("v_cost", ""));
          nlohmann::json recomputed = nlohmann::json::array();
          for (const auto& li : sheet) recomputed.push_back(li.to_json());
          if (recorded.value("line_items", nlohmann::json::array()) != recomputed)
            finding("trace_divergence", "cost_sheet.json", "line items diverge");
        }
      } catch (const Error& e) {
        finding("verdict_divergence", "cost_sheet.json",
                std::string("cost recomputation failed: ") + e.what());
      }
    }

    if (plan && program) {
      try {
        iir::Plan lifted = hcl::lift(*program, registry);
        lifted.specs = plan->specs;
        if (!iir::plan_equiv(lifted, *plan))
          finding("equivalence_mismatch", "roundtrip.json",
                  "lifted program is not equivalent to the bundled plan");
      } catch (const Error& e) {
        finding("equivalence_mismatch", "roundtrip.json",
                std::string("program does not lift: ") + e.what());
      }
    }
  }

  if (section_bytes.count("repair_path.json")) {
    try {
      nlohmann::json path = nlohmann::json::parse(section_bytes["repair_path.json"]);
      std::optional<Decimal> prev;
      for (const auto& edit : path.value("edits", nlohmann::json::array())) {
        Decimal before = Decimal::parse(edit.at("j_before").get<std::string>());
        Decimal after = Decimal::parse(edit.at("j_after").get<std::string>());
        if (after > before)
          finding("j_monotonicity", "repair_path.json",
                  "edit increases J: " + before.to_string() + " -> " + after.to_string());
        if (prev && before > *prev)
          finding("j_monotonicity", "repair_path.json",
                  "J rises between committed edits");
        prev = after;
      }
    } catch (const nlohmann::json::exception& e) {
      finding("malformed_section", "repair_path.json", e.what());
    }
  }

  return report;
}

}  // namespace iacforge::evidence
