#pragma once

#include <cstdlib>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iacforge/memory.hpp"
#include "iacforge/synthesis.hpp"
#include "iacforge/validators.hpp"

namespace iacforge::agents {

inline constexpr const char* kWireSchemaVersion = "1";
inline constexpr const char* kEndpointEnv = "IACFORGE_LLM_ENDPOINT";
inline constexpr const char* kApiKeyEnv = "IACFORGE_LLM_API_KEY";

// ---------------------------------------------------------------------------
// Intents and invariants
// ---------------------------------------------------------------------------

/// User intent: free text (opaque to the deterministic backend) and/or a
/// structured request. The deterministic backend requires the structured
/// form; free-text understanding lives behind the remote adapter.
struct IntentSpec {
  std::string text;
  std::optional<nlohmann::json> structured;

  static IntentSpec from_json(const nlohmann::json& j) {
    IntentSpec s;
    if (j.is_string()) {
      s.text = j.get<std::string>();
      return s;
    }
    s.text = j.value("text", "");
    if (j.contains("structured")) s.structured = j.at("structured");
    if (s.text.empty() && !s.structured)
      throw Error(ErrorCode::parse_error, "intent needs text or structured content");
    return s;
  }

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json j;
    if (!text.empty()) j["text"] = text;
    if (structured) j["structured"] = *structured;
    return j;
  }
};

struct PlanInvariant {
  std::string name;
  std::string kind;  // "effect" | "constraint"
  std::string detail;
};

using PlanInvariants = std::vector<PlanInvariant>;

// ---------------------------------------------------------------------------
// Remote backend (JSON over HTTP, one endpoint per role)
// ---------------------------------------------------------------------------

struct RemoteConfig {
  std::string endpoint;  // e.g. http://127.0.0.1:8419
  std::string api_key;
  int timeout_seconds = 60;
  int retries = 3;

  static RemoteConfig from_env() {
    RemoteConfig c;
    if (const char* e = std::getenv(kEndpointEnv)) c.endpoint = e;
    if (const char* k = std::getenv(kApiKeyEnv)) c.api_key = k;
    return c;
  }

  [[nodiscard]] bool configured() const { return !endpoint.empty(); }
};

nlohmann::json call_remote(const std::string& role, const nlohmann::json& payload,
                           const RemoteConfig& config);

/// Minimal output-schema gate per role; responses failing it never reach the
/// blackboard.
inline bool response_matches_role(const std::string& role, const nlohmann::json& response) {
  if (role == "architect") return response.contains("plan") && response.at("plan").is_object();
  if (role == "engineer") return response.contains("value");
  if (role == "reviewer")
    return response.contains("diagnostics") && response.at("diagnostics").is_array();
  return response.is_object();
}

// ---------------------------------------------------------------------------
// Deterministic Architect
// ---------------------------------------------------------------------------

namespace detail {

inline std::string pick_intent_region(const nlohmann::json& structured,
                                      const iir::ConstraintSet& constraints) {
  if (structured.contains("region")) return structured.at("region").get<std::string>();
  if (constraints.residency && !constraints.residency->empty())
    return *constraints.residency->begin();
  return "eu-west-1";
}

inline void apply_required_effects(iir::Plan& plan, const iir::ConstraintSet& constraints) {
  for (iir::Effect e : constraints.required_effects) {
    for (auto& n : plan.nodes) {
      if (!val::effect_applicable(e, n.kind)) continue;
      n.effects.insert(e);
      if (auto evidence = val::effect_evidence(e, n.kind)) {
        if (evidence->value.type == iir::ValueType::map) {
          iir::TypedValue* existing = nullptr;
          for (auto& [fn, fv] : n.fields)
            if (fn == evidence->field && fv.type == iir::ValueType::map) existing = &fv;
          if (existing) {
            for (const auto& [k, v] : evidence->value.map) existing->map.emplace(k, v);
            continue;
          }
        }
        n.set_field(evidence->field, evidence->value);
      }
    }
  }
}

/// First existing node of a kind (lexicographic), if any.
inline const iir::ResourceNode* existing_of_kind(const iir::Plan& plan, std::string_view kind) {
  const iir::ResourceNode* best = nullptr;
  for (const auto& n : plan.nodes)
    if (n.kind == kind && (!best || n.id < best->id)) best = &n;
  return best;
}

}  // namespace detail

/// Expected kind multiset and effect obligations for an intent; the plan-time
/// memory retrieval queries the store with this signature.
inline memory::Signature intent_signature(const IntentSpec& intent,
                                          const iir::ConstraintSet& constraints) {
  memory::Signature sig;
  if (!intent.structured) return sig;
  const nlohmann::json& s = *intent.structured;
  if (s.contains("plan")) {
    iir::Plan p = iir::plan_from_json(s.at("plan"));
    return memory::compute_signature(p);
  }
  auto push = [&](const char* kind, std::int64_t count = 1) {
    for (std::int64_t i = 0; i < count; ++i) sig.kinds.push_back(kind);
  };
  bool base_network = s.contains("network") || s.contains("web") || s.contains("database");
  if (base_network) {
    push("vpc");
    std::int64_t subnets = 1;
    if (s.contains("network")) subnets = s.at("network").value("subnets", std::int64_t{1});
    push("subnet", std::max<std::int64_t>(subnets, 1));
  }
  if (s.contains("web")) {
    push("security_group");
    push("ec2", s.at("web").value("instances", std::int64_t{1}));
  }
  if (s.contains("database")) push("rds");
  if (s.contains("storage")) push("s3_bucket", s.at("storage").value("buckets", std::int64_t{1}));
  if (s.contains("iam")) push("iam_role", s.at("iam").value("roles", std::int64_t{1}));
  std::sort(sig.kinds.begin(), sig.kinds.end());
  for (iir::Effect e : constraints.required_effects) sig.effects.insert(iir::effect_name(e));
  return sig;
}

/// The deterministic Architect: a template table keyed by structured-intent
/// family. Produces a structurally well-formed plan whose required effects
/// already carry their evidence, plus the named invariants. The top-ranked
/// motif seeds the plan; template families reuse motif nodes where kinds
/// match and create the remainder.
inline std::pair<iir::Plan, PlanInvariants> architect_plan(
    const IntentSpec& intent, const iir::ConstraintSet& constraints,
    const std::vector<memory::Motif>& motifs) {
  if (!intent.structured)
    throw Error(ErrorCode::unsupported_intent,
                "deterministic architect needs a structured intent; free text requires the "
                "remote backend");
  const nlohmann::json& s = *intent.structured;

  PlanInvariants invariants;
  for (iir::Effect e : constraints.required_effects)
    invariants.push_back({iir::effect_name(e), "effect", "required on all applicable resources"});
  if (constraints.residency) {
    std::string regions;
    for (const auto& r : *constraints.residency) regions += (regions.empty() ? "" : ",") + r;
    invariants.push_back({"residency", "constraint", regions});
  }
  if (constraints.budget_ceiling)
    invariants.push_back({"budget", "constraint", constraints.budget_ceiling->to_string()});
  if (constraints.availability_zones_min)
    invariants.push_back({"availability", "constraint",
                          std::to_string(*constraints.availability_zones_min) + " zones"});

  if (s.contains("plan")) {
    iir::Plan plan = iir::plan_from_json(s.at("plan"));
    plan.specs = constraints;
    iir::check_well_formed(plan);
    return {std::move(plan), std::move(invariants)};
  }

  iir::Plan plan;
  plan.specs = constraints;
  std::string region = detail::pick_intent_region(s, constraints);

  if (!motifs.empty()) {
    // Splice the top-ranked motif; collide-renaming keeps ids unique.
    const memory::Motif& m = motifs.front();
    std::unordered_map<std::string, std::string> renaming;
    for (const auto& n : m.fragment.nodes)
      renaming[n.id] = plan.node(n.id) ? n.id + "_m" : n.id;
    iir::Plan frag = iir::detail::rename_nodes(m.fragment, renaming);
    for (auto& n : frag.nodes) {
      if (n.region.empty()) n.region = region;
      plan.nodes.push_back(std::move(n));
    }
    for (auto& e : frag.edges) plan.edges.push_back(std::move(e));
  }

  bool base_network = s.contains("network") || s.contains("web") || s.contains("database");
  std::vector<std::string> subnet_ids;
  std::string vpc_id;
  if (base_network) {
    if (const iir::ResourceNode* v = detail::existing_of_kind(plan, "vpc")) {
      vpc_id = v->id;
    } else {
      iir::ResourceNode vpc;
      vpc.id = "main";
      vpc.kind = "vpc";
      vpc.provider = "aws";
      vpc.region = region;
      plan.nodes.push_back(std::move(vpc));
      vpc_id = "main";
    }
    for (const auto& n : plan.nodes)
      if (n.kind == "subnet") subnet_ids.push_back(n.id);
    std::sort(subnet_ids.begin(), subnet_ids.end());
    std::int64_t want = 1;
    if (s.contains("network")) want = std::max<std::int64_t>(s.at("network").value("subnets", std::int64_t{1}), 1);
    static constexpr const char* kZones[] = {"a", "b", "c"};
    for (std::int64_t i = static_cast<std::int64_t>(subnet_ids.size()); i < want; ++i) {
      iir::ResourceNode sn;
      sn.id = "app_" + std::to_string(i);
      sn.kind = "subnet";
      sn.provider = "aws";
      sn.region = region;
      sn.set_field("vpc_id", iir::TypedValue::make_ref(vpc_id));
      sn.set_field("cidr_block", iir::TypedValue::make_string("10.0." + std::to_string(i + 1) + ".0/24"));
      sn.set_field("availability_zone", iir::TypedValue::make_string(kZones[i % 3]));
      plan.nodes.push_back(std::move(sn));
      subnet_ids.push_back("app_" + std::to_string(i));
    }
  }

  std::vector<std::string> web_ids;
  if (s.contains("web")) {
    const nlohmann::json& web = s.at("web");
    std::string sg_id;
    if (const iir::ResourceNode* g = detail::existing_of_kind(plan, "security_group")) {
      sg_id = g->id;
    } else {
      iir::ResourceNode sg;
      sg.id = "web_sg";
      sg.kind = "security_group";
      sg.provider = "aws";
      sg.region = region;
      sg.set_field("vpc_id", iir::TypedValue::make_ref(vpc_id));
      sg.set_field("description", iir::TypedValue::make_string("web tier"));
      plan.nodes.push_back(std::move(sg));
      sg_id = "web_sg";
    }
    if (web.contains("open_ports")) {
      iir::ResourceNode* sg = plan.node(sg_id);
      std::vector<iir::TypedValue> entries;
      if (const iir::TypedValue* existing = sg->field(hcl::kOpenIngressField);
          existing && existing->type == iir::ValueType::list)
        entries = existing->list;
      for (const auto& p : web.at("open_ports")) {
        std::map<std::string, iir::TypedValue> entry;
        entry["cidr"] = iir::TypedValue::make_string("0.0.0.0/0");
        entry["port"] = iir::TypedValue::make_int(p.get<std::int64_t>());
        entry["protocol"] = iir::TypedValue::make_string("tcp");
        entries.push_back(iir::TypedValue::make_map(std::move(entry)));
      }
      sg->set_field(hcl::kOpenIngressField, iir::TypedValue::make_list(std::move(entries)));
    }
    std::int64_t instances = web.value("instances", std::int64_t{1});
    std::string itype = web.value("instance_type", "t3.micro");
    for (std::int64_t i = 0; i < instances; ++i) {
      iir::ResourceNode ec2;
      ec2.id = "web_" + std::to_string(i);
      ec2.kind = "ec2";
      ec2.provider = "aws";
      ec2.region = region;
      ec2.set_field("ami", iir::TypedValue::make_string("ami-0a1b2c3d4e5f6a7b8"));
      ec2.set_field("instance_type", iir::TypedValue::make_string(itype));
      ec2.set_field("subnet_id",
                    iir::TypedValue::make_ref(subnet_ids[i % subnet_ids.size()]));
      web_ids.push_back(ec2.id);
      plan.nodes.push_back(std::move(ec2));
      plan.edges.push_back(iir::PlanEdge::connects("web_" + std::to_string(i), sg_id,
                                                   iir::Proto::tcp, 443));
    }
    invariants.push_back({"exposure", "constraint", "web tier reachable through " + sg_id});
  }

  if (s.contains("database")) {
    const nlohmann::json& db = s.at("database");
    std::string engine = db.value("engine", "postgres");
    if (!detail::existing_of_kind(plan, "rds")) {
      iir::ResourceNode rds;
      rds.id = "db";
      rds.kind = "rds";
      rds.provider = "aws";
      rds.region = region;
      rds.set_field("engine", iir::TypedValue::make_string(engine));
      rds.set_field("instance_class",
                    iir::TypedValue::make_string(db.value("instance_class", "db.t3.micro")));
      rds.set_field("subnet_id", iir::TypedValue::make_ref(subnet_ids.front()));
      plan.nodes.push_back(std::move(rds));
    }
    std::uint16_t port = engine == "mysql" ? 3306 : 5432;
    for (const auto& w : web_ids)
      plan.edges.push_back(iir::PlanEdge::connects(w, "db", iir::Proto::tcp, port));
  }

  if (s.contains("storage")) {
    std::int64_t buckets = s.at("storage").value("buckets", std::int64_t{1});
    for (std::int64_t i = 0; i < buckets; ++i) {
      std::string id = "data_" + std::to_string(i);
      if (plan.node(id)) continue;
      iir::ResourceNode b;
      b.id = id;
      b.kind = "s3_bucket";
      b.provider = "aws";
      b.region = region;
      b.set_field("bucket", iir::TypedValue::make_string(id));
      plan.nodes.push_back(std::move(b));
    }
  }

  if (s.contains("iam")) {
    std::int64_t roles = s.at("iam").value("roles", std::int64_t{1});
    for (std::int64_t i = 0; i < roles; ++i) {
      std::string id = "svc_role_" + std::to_string(i);
      if (plan.node(id)) continue;
      iir::ResourceNode r;
      r.id = id;
      r.kind = "iam_role";
      r.provider = "aws";
      r.region = region;
      plan.nodes.push_back(std::move(r));
    }
  }

  detail::apply_required_effects(plan, constraints);
  iir::check_well_formed(plan);
  return {std::move(plan), std::move(invariants)};
}

// ---------------------------------------------------------------------------
// Reviewer (static, advisory)
// ---------------------------------------------------------------------------

struct Diagnostic {
  std::string code;   // unused_variable | dangling_output | dead_resource | naming
  std::string locus;
  std::string message;
  bool escalate = false;  // dangling references escalate to schema CEs

  [[nodiscard]] nlohmann::json to_json() const {
    return nlohmann::json{
        {"code", code}, {"locus", locus}, {"message", message}, {"escalate", escalate}};
  }
};

inline std::vector<Diagnostic> review_static(const hcl::HclProgram& program) {
  std::vector<Diagnostic> out;
  std::set<std::string> declared_vars;
  std::set<std::string> used_vars;
  std::set<std::string> referenced;  // resource names referenced anywhere
  std::set<std::string> exposed;     // resource names surfaced by outputs

  auto scan_expr = [&](const hcl::HclExpr& e, auto&& self) -> void {
    if (e.kind == hcl::HclExpr::Kind::reference) {
      if (e.ref_path[0] == "var") {
        if (e.ref_path.size() > 1) used_vars.insert(e.ref_path[1]);
      } else if (e.ref_path.size() > 1) {
        referenced.insert(e.ref_path[1]);
      }
    }
    for (const auto& item : e.items) self(item, self);
    for (const auto& [_, v] : e.entries) self(v, self);
  };

  for (const auto& b : program.blocks) {
    if (b.type == "variable") declared_vars.insert(b.labels[0]);
    for (const auto& [_, v] : b.attributes) scan_expr(v, scan_expr);
    for (const auto& nested : b.nested)
      for (const auto& [_, v] : nested.attributes) scan_expr(v, scan_expr);
    if (b.type == "output") {
      if (const hcl::HclExpr* value = b.attribute("value");
          value && value->kind == hcl::HclExpr::Kind::reference &&
          value->ref_path[0] != "var" && value->ref_path.size() > 1) {
        if (!program.resource(value->ref_path[0], value->ref_path[1])) {
          out.push_back({"dangling_output", b.address(),
                         "output references undeclared " + value->ref_path[0] + "." +
                             value->ref_path[1],
                         true});
        } else {
          exposed.insert(value->ref_path[1]);
        }
      }
    }
  }

  for (const auto& v : declared_vars)
    if (!used_vars.count(v))
      out.push_back({"unused_variable", "var." + v, "variable '" + v + "' is never used", false});

  for (const auto& b : program.blocks) {
    if (b.type != "resource") continue;
    const std::string& name = b.labels[1];
    bool has_outbound = false;
    for (const auto& [_, v] : b.attributes) {
      std::vector<const std::vector<std::string>*> refs;
      val::detail::collect_expr_refs(v, refs);
      if (!refs.empty()) has_outbound = true;
    }
    bool has_rule_blocks = !b.nested.empty();
    if (!has_outbound && !has_rule_blocks && !referenced.count(name) && !exposed.count(name))
      out.push_back({"dead_resource", b.address(),
                     "resource has no edges and is not exposed by an output", false});
    if (!iir::valid_identifier(name))
      out.push_back({"naming", b.address(),
                     "resource name '" + name + "' violates the lowercase identifier convention",
                     false});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Remote proposer (Engineer over the wire) and backend dispatch
// ---------------------------------------------------------------------------

struct AgentConfig {
  enum class Mode { deterministic, remote };
  Mode mode = Mode::deterministic;
  RemoteConfig remote;
};

/// Engineer adapter: one remote call per hole; transport failures and
/// inadmissible responses fall back to the deterministic stub (the decoder
/// re-checks every value regardless). Notes feed the blackboard.
class RemoteProposer final : public synth::Proposer {
 public:
  explicit RemoteProposer(RemoteConfig config) : config_(std::move(config)) {}

  hcl::HclExpr propose(const synth::HoleContext& ctx) override {
    nlohmann::json payload{{"node", ctx.desc.node_id},
                           {"field", ctx.desc.field},
                           {"type", ctx.desc.decl.type_string()},
                           {"candidates", ctx.ref_candidates}};
    if (ctx.desc.decl.allowed_values) payload["allowed"] = *ctx.desc.decl.allowed_values;
    try {
      nlohmann::json response = call_remote("engineer", payload, config_);
      return expr_from_wire(response.at("value"), ctx);
    } catch (const Error& e) {
      notes.push_back(std::string("remote engineer fell back to stub: ") + e.what());
      return synth::stub_choice(ctx);
    }
  }

  std::vector<std::string> notes;

 private:
  static hcl::HclExpr expr_from_wire(const nlohmann::json& v, const synth::HoleContext& ctx) {
    using hcl::HclExpr;
    if (ctx.desc.decl.type == iir::ValueType::reference && v.is_string()) {
      iir::Reference r = iir::Reference::parse(v.get<std::string>());
      std::vector<std::string> path{r.target};
      path.insert(path.end(), r.path.begin(), r.path.end());
      return HclExpr::reference(std::move(path));
    }
    switch (v.type()) {
      case nlohmann::json::value_t::string: return HclExpr::string_lit(v.get<std::string>());
      case nlohmann::json::value_t::boolean: return HclExpr::bool_lit(v.get<bool>());
      case nlohmann::json::value_t::number_integer:
      case nlohmann::json::value_t::number_unsigned:
        return HclExpr::number_lit(Decimal::from_int(v.get<std::int64_t>()), false);
      case nlohmann::json::value_t::number_float: {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6f", v.get<double>());
        return HclExpr::number_lit(Decimal::parse(buf), true);
      }
      default:
        throw Error(ErrorCode::remote_invalid_response, "engineer returned a non-scalar value");
    }
  }

  RemoteConfig config_;
};

/// Architect dispatch: remote backend with schema gating and deterministic
/// fallback, or the template table directly.
inline std::pair<iir::Plan, PlanInvariants> architect_plan_with_backend(
    const IntentSpec& intent, const iir::ConstraintSet& constraints,
    const std::vector<memory::Motif>& motifs, const AgentConfig& config,
    std::vector<std::string>* notes = nullptr) {
  if (config.mode == AgentConfig::Mode::remote && config.remote.configured()) {
    nlohmann::json payload{{"intent", intent.to_json()}};
    try {
      nlohmann::json response = call_remote("architect", payload, config.remote);
      if (!response_matches_role("architect", response))
        throw Error(ErrorCode::remote_invalid_response, "architect response missing plan");
      iir::Plan plan = iir::plan_from_json(response.at("plan"));
      plan.specs = constraints;
      iir::check_well_formed(plan);
      PlanInvariants invariants;
      for (const auto& inv : response.value("invariants", nlohmann::json::array()))
        invariants.push_back({inv.value("name", ""), inv.value("kind", "constraint"),
                              inv.value("detail", "")});
      return {std::move(plan), std::move(invariants)};
    } catch (const std::exception& e) {
      if (notes)
        notes->push_back(std::string("remote architect fell back to deterministic: ") + e.what());
      if (!intent.structured) throw;
    }
  }
  return architect_plan(intent, constraints, motifs);
}

}  // namespace iacforge::agents

// call_remote lives out of line conceptually but stays header-only; httplib
// is pulled in here, at the bottom, to keep the heavy include localized.
#include <httplib.h>

namespace iacforge::agents {

inline nlohmann::json call_remote(const std::string& role, const nlohmann::json& payload,
                                  const RemoteConfig& config) {
  if (!config.configured())
    throw Error(ErrorCode::config_error,
                std::string("remote endpoint not configured (set ") + kEndpointEnv + ")");
  nlohmann::json request{{"role", role},
                         {"schema_version", kWireSchemaVersion},
                         {"payload", payload}};
  httplib::Client client(config.endpoint);
  client.set_connection_timeout(config.timeout_seconds);
  client.set_read_timeout(config.timeout_seconds);
  httplib::Headers headers;
  if (!config.api_key.empty()) headers.emplace("Authorization", "Bearer " + config.api_key);

  std::string last_error;
  for (int attempt = 0; attempt < std::max(config.retries, 1); ++attempt) {
    auto res = client.Post("/" + role, headers, request.dump(), "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      if (res.error() == httplib::Error::ConnectionTimeout ||
          res.error() == httplib::Error::Read)
        continue;  // retry timeouts
      throw Error(ErrorCode::remote_transport, "transport failure calling " + role + " (" +
                                                   last_error + ")");
    }
    if (res->status != 200) {
      last_error = "http " + std::to_string(res->status);
      continue;
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error&) {
      last_error = "malformed JSON body";
      continue;
    }
  }
  throw Error(ErrorCode::remote_invalid_response,
              role + " endpoint failed after retries: " + last_error);
}

}  // namespace iacforge::agents
