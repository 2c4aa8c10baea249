#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iacforge/hcl.hpp"
#include "iacforge/hcl_lift.hpp"
#include "iacforge/schema_registry.hpp"

namespace iacforge::val {

// ---------------------------------------------------------------------------
// Counterexamples and reports
// ---------------------------------------------------------------------------

enum class CeClass { schema, run, policy, cost };

inline const char* ce_class_name(CeClass c) {
  switch (c) {
    case CeClass::schema: return "schema";
    case CeClass::run: return "run";
    case CeClass::policy: return "policy";
    case CeClass::cost: return "cost";
  }
  return "?";
}

inline CeClass ce_class_from_name(std::string_view n) {
  if (n == "schema") return CeClass::schema;
  if (n == "run") return CeClass::run;
  if (n == "policy") return CeClass::policy;
  if (n == "cost") return CeClass::cost;
  throw Error(ErrorCode::parse_error, "unknown CE class: " + std::string(n));
}

/// Merge priority: structural failures first. schema > run > policy > cost.
inline int ce_class_priority(CeClass c) {
  switch (c) {
    case CeClass::schema: return 0;
    case CeClass::run: return 1;
    case CeClass::policy: return 2;
    case CeClass::cost: return 3;
  }
  return 9;
}

struct Counterexample {
  CeClass cls = CeClass::schema;
  std::string locus;    // node id / block address / field path
  std::string code;     // machine identifier
  std::string message;
  nlohmann::json witness = nlohmann::json::object();

  [[nodiscard]] auto sort_key() const { return std::tuple(ce_class_priority(cls), locus, code); }

  [[nodiscard]] nlohmann::json to_json() const {
    return nlohmann::json{{"class", ce_class_name(cls)},
                          {"locus", locus},
                          {"code", code},
                          {"message", message},
                          {"witness", witness}};
  }
};

struct PolicyTrace {
  std::string rule_id;
  std::string locus;
  bool passed = false;
  std::string justification;

  [[nodiscard]] nlohmann::json to_json() const {
    return nlohmann::json{{"rule_id", rule_id},
                          {"locus", locus},
                          {"passed", passed},
                          {"justification", justification}};
  }
};

struct CostLineItem {
  std::string address;
  std::string sku;
  Decimal monthly;

  [[nodiscard]] nlohmann::json to_json() const {
    return nlohmann::json{{"address", address}, {"sku", sku}, {"monthly", monthly.to_string()}};
  }
};

enum class ValidatorStatus { passed, failed, gated };

inline const char* validator_status_name(ValidatorStatus s) {
  switch (s) {
    case ValidatorStatus::passed: return "passed";
    case ValidatorStatus::failed: return "failed";
    case ValidatorStatus::gated: return "gated";
  }
  return "?";
}

/// The structured outcome vector v plus counterexamples and audit payloads.
/// Gated validators report gated status, never stale results; a gated
/// validator counts as failed in routing arithmetic (cost contributes zero).
struct ValidatorReport {
  ValidatorStatus schema_status = ValidatorStatus::gated;
  ValidatorStatus policy_status = ValidatorStatus::gated;
  ValidatorStatus cost_status = ValidatorStatus::gated;
  ValidatorStatus deploy_status = ValidatorStatus::gated;
  Decimal v_cost;  // zero while gated
  std::vector<Counterexample> counterexamples;
  std::vector<PolicyTrace> traces;
  std::vector<CostLineItem> cost_sheet;

  [[nodiscard]] bool v_schema() const { return schema_status == ValidatorStatus::passed; }
  [[nodiscard]] bool v_policy() const { return policy_status == ValidatorStatus::passed; }
  [[nodiscard]] bool v_deploy() const { return deploy_status == ValidatorStatus::passed; }

  void sort_counterexamples() {
    std::stable_sort(counterexamples.begin(), counterexamples.end(),
                     [](const Counterexample& a, const Counterexample& b) {
                       return a.sort_key() < b.sort_key();
                     });
  }

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json ces = nlohmann::json::array();
    for (const auto& ce : counterexamples) ces.push_back(ce.to_json());
    nlohmann::json tr = nlohmann::json::array();
    for (const auto& t : traces) tr.push_back(t.to_json());
    nlohmann::json sheet = nlohmann::json::array();
    for (const auto& li : cost_sheet) sheet.push_back(li.to_json());
    return nlohmann::json{{"schema", validator_status_name(schema_status)},
                          {"policy", validator_status_name(policy_status)},
                          {"cost", validator_status_name(cost_status)},
                          {"deploy", validator_status_name(deploy_status)},
                          {"v_cost", v_cost.to_string()},
                          {"counterexamples", ces},
                          {"traces", tr},
                          {"cost_sheet", sheet}};
  }
};

// ---------------------------------------------------------------------------
// Effect evidence table
// ---------------------------------------------------------------------------

/// Attribute evidence that discharges an effect on a given kind. Shared by
/// the deterministic Architect (plans arrive policy-clean) and the repair
/// mapper (AddEffect edits carry the evidence assignment).
struct EffectEvidence {
  std::string field;
  iir::TypedValue value;
};

inline std::optional<EffectEvidence> effect_evidence(iir::Effect e, std::string_view kind) {
  using iir::Effect;
  using iir::TypedValue;
  switch (e) {
    case Effect::encrypt_at_rest:
      if (kind == "ec2" || kind == "rds") return EffectEvidence{"encrypted", TypedValue::make_bool(true)};
      if (kind == "s3_bucket")
        return EffectEvidence{"encryption", TypedValue::make_string("aes256")};
      return std::nullopt;
    case Effect::least_privilege:
      if (kind == "iam_role") return EffectEvidence{"wildcard_actions", TypedValue::make_bool(false)};
      return std::nullopt;
    case Effect::redundant:
      if (kind == "rds") return EffectEvidence{"multi_az", TypedValue::make_bool(true)};
      return std::nullopt;
    case Effect::tagged: {
      std::map<std::string, TypedValue> tags;
      tags["env"] = TypedValue::make_string("prod");
      return EffectEvidence{"tags", TypedValue::make_map(std::move(tags))};
    }
    case Effect::restricted_ingress:
    case Effect::region_pinned: return std::nullopt;  // non-field evidence
  }
  return std::nullopt;
}

inline bool effect_applicable(iir::Effect e, std::string_view kind) {
  using iir::Effect;
  switch (e) {
    case Effect::encrypt_at_rest: return kind == "ec2" || kind == "rds" || kind == "s3_bucket";
    case Effect::least_privilege: return kind == "iam_role";
    case Effect::restricted_ingress: return kind == "security_group";
    case Effect::redundant: return kind == "rds";
    case Effect::region_pinned:
    case Effect::tagged: return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Schema validator
// ---------------------------------------------------------------------------

namespace detail {

inline void collect_expr_refs(const hcl::HclExpr& e,
                              std::vector<const std::vector<std::string>*>& out) {
  switch (e.kind) {
    case hcl::HclExpr::Kind::reference: out.push_back(&e.ref_path); break;
    case hcl::HclExpr::Kind::list:
      for (const auto& item : e.items) collect_expr_refs(item, out);
      break;
    case hcl::HclExpr::Kind::map:
      for (const auto& [_, v] : e.entries) collect_expr_refs(v, out);
      break;
    default: break;
  }
}

}  // namespace detail

/// Static schema validation: program-level checks (duplicate addresses,
/// dangling references, regions) then lift + the iir typing judgment.
/// Failures are counterexamples, never errors.
inline std::pair<bool, std::vector<Counterexample>> validate_schema(
    const hcl::HclProgram& program, const schema::SchemaRegistry& registry) {
  std::vector<Counterexample> ces;

  std::set<std::string> addresses;
  std::set<std::string> resource_names;
  std::set<std::string> variables;
  for (const auto& b : program.blocks) {
    if (!addresses.insert(b.type + "." + b.address()).second)
      ces.push_back({CeClass::schema, b.address(), "duplicate_address",
                     "duplicate block address " + b.address()});
    if (b.type == "resource") {
      resource_names.insert(b.labels[1]);
      if (!iir::valid_identifier(b.labels[1]))
        ces.push_back({CeClass::schema, b.address(), "invalid_name",
                       "resource name '" + b.labels[1] + "' is not a lowercase identifier"});
    }
    if (b.type == "variable") variables.insert(b.labels[0]);
  }

  auto check_attr_refs = [&](const hcl::Block& b, const std::string& field,
                             const hcl::HclExpr& v) {
    std::vector<const std::vector<std::string>*> refs;
    detail::collect_expr_refs(v, refs);
    for (const auto* path : refs) {
      const auto& p = *path;
      bool ok = p[0] == "var" ? (p.size() >= 2 && variables.count(p[1]) > 0)
                              : (p.size() >= 2 && program.resource(p[0], p[1]) != nullptr);
      if (!ok) {
        std::string addr = p[0] + (p.size() > 1 ? "." + p[1] : "");
        ces.push_back({CeClass::schema, b.address() + "." + field, "dangling_reference",
                       "reference to undeclared " + addr,
                       nlohmann::json{{"reference", addr},
                                      {"field", field},
                                      {"node", b.type == "resource" ? b.labels[1] : ""}}});
      }
    }
  };
  for (const auto& b : program.blocks) {
    for (const auto& [name, v] : b.attributes) check_attr_refs(b, name, v);
    for (const auto& nested : b.nested)
      for (const auto& [name, v] : nested.attributes) check_attr_refs(b, name, v);
  }

  if (!ces.empty()) {
    std::stable_sort(ces.begin(), ces.end(), [](const auto& a, const auto& b) {
      return a.sort_key() < b.sort_key();
    });
    return {false, ces};
  }

  try {
    iir::Plan plan = hcl::lift(program, registry);
    for (const auto& ce : iir::validate_types(plan, registry))
      ces.push_back({CeClass::schema, ce.node_id + (ce.field.empty() ? "" : "." + ce.field),
                     ce.code, ce.message,
                     nlohmann::json{{"node", ce.node_id}, {"field", ce.field}}});
    for (const auto& n : plan.nodes) {
      const schema::KindSchema* ks = registry.find(n.provider, n.kind);
      if (!ks) continue;
      if (n.region.empty()) {
        ces.push_back({CeClass::schema, n.id + ".region", "missing_required",
                       "resource block must pin a region",
                       nlohmann::json{{"node", n.id}, {"field", "region"}}});
      } else if (!ks->regions_available.count(n.region)) {
        ces.push_back({CeClass::schema, n.id + ".region", "region_unavailable",
                       "kind " + n.kind + " not offered in region " + n.region,
                       nlohmann::json{{"node", n.id}, {"region", n.region}}});
      }
    }
  } catch (const Error& e) {
    ces.push_back({CeClass::schema, e.locus(), error_code_name(e.code()), e.what()});
  }

  std::stable_sort(ces.begin(), ces.end(),
                   [](const auto& a, const auto& b) { return a.sort_key() < b.sort_key(); });
  return {ces.empty(), ces};
}

// ---------------------------------------------------------------------------
// Policy engine (native rule DSL; an external-engine adapter slot exists
// behind the same eval_policies surface but is not shipped)
// ---------------------------------------------------------------------------

struct Predicate {
  enum class Kind {
    field_equals,
    field_member_of,
    field_present,
    port_range,
    effect_required,
    tag_present,
    all_of,
    any_of,
    negation,
  };
  Kind kind = Kind::field_present;
  std::string field;
  nlohmann::json value;                 // field_equals
  std::vector<std::string> values;      // field_member_of
  std::int64_t port_min = 0, port_max = 0;
  std::string cidr;                     // port_range source filter
  iir::Effect effect = iir::Effect::encrypt_at_rest;
  std::string tag_key;
  std::vector<Predicate> children;
};

struct PolicyRule {
  std::string id;
  std::vector<std::string> target_kinds;  // empty means every kind
  std::string severity = "medium";
  Predicate predicate;
  std::string message;
  std::optional<iir::Effect> discharges;

  [[nodiscard]] bool applies_to(std::string_view kind) const {
    if (target_kinds.empty()) return true;
    return std::find(target_kinds.begin(), target_kinds.end(), kind) != target_kinds.end();
  }
};

namespace detail {

inline Predicate predicate_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.size() != 1)
    throw Error(ErrorCode::unknown_rule_predicate, "predicate must be a single-key object");
  const std::string key = j.begin().key();
  const nlohmann::json& body = *j.begin();
  Predicate p;
  if (key == "field_equals") {
    p.kind = Predicate::Kind::field_equals;
    p.field = body.at("field").get<std::string>();
    p.value = body.at("value");
  } else if (key == "field_member_of") {
    p.kind = Predicate::Kind::field_member_of;
    p.field = body.at("field").get<std::string>();
    for (const auto& v : body.at("values")) p.values.push_back(v.get<std::string>());
  } else if (key == "field_present") {
    p.kind = Predicate::Kind::field_present;
    p.field = body.at("field").get<std::string>();
  } else if (key == "port_range") {
    p.kind = Predicate::Kind::port_range;
    p.port_min = body.at("min").get<std::int64_t>();
    p.port_max = body.at("max").get<std::int64_t>();
    p.cidr = body.value("cidr", "0.0.0.0/0");
  } else if (key == "effect_required") {
    p.kind = Predicate::Kind::effect_required;
    p.effect = iir::effect_from_name(body.at("effect").get<std::string>());
  } else if (key == "tag_present") {
    p.kind = Predicate::Kind::tag_present;
    p.tag_key = body.at("key").get<std::string>();
  } else if (key == "all") {
    p.kind = Predicate::Kind::all_of;
    for (const auto& c : body) p.children.push_back(predicate_from_json(c));
  } else if (key == "any") {
    p.kind = Predicate::Kind::any_of;
    for (const auto& c : body) p.children.push_back(predicate_from_json(c));
  } else if (key == "not") {
    p.kind = Predicate::Kind::negation;
    p.children.push_back(predicate_from_json(body));
  } else {
    throw Error(ErrorCode::unknown_rule_predicate, "unknown predicate '" + key + "'");
  }
  return p;
}

}  // namespace detail

inline std::vector<PolicyRule> rules_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::parse_error, std::string("rule file: ") + e.what());
  }
  std::vector<PolicyRule> rules;
  std::set<std::string> ids;
  for (const auto& jr : j.value("rules", nlohmann::json::array())) {
    PolicyRule r;
    r.id = jr.at("id").get<std::string>();
    if (!ids.insert(r.id).second)
      throw Error(ErrorCode::parse_error, "duplicate rule id: " + r.id);
    if (jr.contains("target"))
      for (const auto& k : jr.at("target").value("kinds", nlohmann::json::array()))
        r.target_kinds.push_back(k.get<std::string>());
    r.severity = jr.value("severity", "medium");
    r.predicate = detail::predicate_from_json(jr.at("predicate"));
    r.message = jr.value("message", "");
    if (jr.contains("discharges"))
      r.discharges = iir::effect_from_name(jr.at("discharges").get<std::string>());
    rules.push_back(std::move(r));
  }
  return rules;
}

inline std::string read_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::config_error, std::string("cannot open ") + what + ": " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RuleSet {
  std::vector<PolicyRule> rules;
  std::string digest;  // over the raw file bytes
};

inline RuleSet load_rules(const std::string& path) {
  std::string text = read_file(path, "rule file");
  return RuleSet{rules_from_json_text(text), sha256_hex(text)};
}

namespace detail {

/// Flat evaluation view of one program block: attribute values, effects, and
/// the open (CIDR) ingress entries gathered from attribute and nested forms.
struct BlockView {
  const hcl::Block* block = nullptr;
  std::string kind;
  std::string name;
  std::string address;
  std::string region;
  std::set<iir::Effect> effects;
  struct OpenIngress {
    std::string cidr;
    std::int64_t port = 0;
    std::string protocol;
  };
  std::vector<OpenIngress> open_ingress;

  [[nodiscard]] const hcl::HclExpr* attr(std::string_view n) const {
    return block->attribute(n);
  }
};

inline std::vector<BlockView> block_views(const hcl::HclProgram& program) {
  std::vector<BlockView> out;
  for (const auto& b : program.blocks) {
    if (b.type != "resource") continue;
    BlockView v;
    v.block = &b;
    v.kind = b.labels[0];
    v.name = b.labels[1];
    v.address = v.kind + "." + v.name;
    if (const hcl::HclExpr* r = b.attribute(hcl::kRegionAttr);
        r && r->kind == hcl::HclExpr::Kind::string)
      v.region = r->str;
    if (const hcl::HclExpr* eff = b.attribute(hcl::kEffectsAttr);
        eff && eff->kind == hcl::HclExpr::Kind::list)
      for (const auto& item : eff->items)
        if (item.kind == hcl::HclExpr::Kind::string)
          v.effects.insert(iir::effect_from_name(item.str));
    auto take_entry = [&](const std::string& cidr, std::int64_t port, std::string proto) {
      v.open_ingress.push_back({cidr, port, std::move(proto)});
    };
    if (const hcl::HclExpr* ing = b.attribute(hcl::kOpenIngressField);
        ing && ing->kind == hcl::HclExpr::Kind::list) {
      for (const auto& item : ing->items) {
        if (item.kind != hcl::HclExpr::Kind::map) continue;
        std::string cidr, proto;
        std::int64_t port = 0;
        for (const auto& [k, val] : item.entries) {
          if (k == "cidr" && val.kind == hcl::HclExpr::Kind::string) cidr = val.str;
          if (k == "protocol" && val.kind == hcl::HclExpr::Kind::string) proto = val.str;
          if (k == "port" && val.kind == hcl::HclExpr::Kind::number)
            port = val.num.scaled() / Decimal::kScale;
        }
        if (!cidr.empty()) take_entry(cidr, port, proto);
      }
    }
    for (const auto& nested : b.nested) {
      if (nested.type != hcl::kIngressBlock) continue;
      const hcl::HclExpr* cidr = nested.attribute("cidr");
      if (!cidr || cidr->kind != hcl::HclExpr::Kind::string) continue;
      std::int64_t port = 0;
      std::string proto;
      if (const hcl::HclExpr* p = nested.attribute("port");
          p && p->kind == hcl::HclExpr::Kind::number)
        port = p->num.scaled() / Decimal::kScale;
      if (const hcl::HclExpr* p = nested.attribute("protocol");
          p && p->kind == hcl::HclExpr::Kind::string)
        proto = p->str;
      take_entry(cidr->str, port, proto);
    }
    out.push_back(std::move(v));
  }
  return out;
}

inline bool expr_equals_json(const hcl::HclExpr& e, const nlohmann::json& want) {
  using hcl::HclExpr;
  switch (want.type()) {
    case nlohmann::json::value_t::string:
      return e.kind == HclExpr::Kind::string && e.str == want.get<std::string>();
    case nlohmann::json::value_t::boolean:
      return e.kind == HclExpr::Kind::boolean && e.b == want.get<bool>();
    case nlohmann::json::value_t::number_integer:
    case nlohmann::json::value_t::number_unsigned:
      return e.kind == HclExpr::Kind::number && !e.decimal_form &&
             e.num == Decimal::from_int(want.get<std::int64_t>());
    case nlohmann::json::value_t::number_float: {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.6f", want.get<double>());
      return e.kind == HclExpr::Kind::number && e.num == Decimal::parse(buf);
    }
    default: return false;
  }
}

struct PredicateOutcome {
  bool passed = false;
  nlohmann::json witness = nlohmann::json::object();
};

inline PredicateOutcome eval_predicate(const Predicate& p, const BlockView& v) {
  PredicateOutcome out;
  switch (p.kind) {
    case Predicate::Kind::field_equals: {
      const hcl::HclExpr* e = v.attr(p.field);
      out.passed = e && expr_equals_json(*e, p.value);
      if (!out.passed) out.witness = {{"field", p.field}, {"expected", p.value}};
      return out;
    }
    case Predicate::Kind::field_member_of: {
      const hcl::HclExpr* e = v.attr(p.field);
      out.passed = e && e->kind == hcl::HclExpr::Kind::string &&
                   std::find(p.values.begin(), p.values.end(), e->str) != p.values.end();
      if (!out.passed)
        out.witness = {{"field", p.field},
                       {"actual", e && e->kind == hcl::HclExpr::Kind::string
                                      ? nlohmann::json(e->str)
                                      : nlohmann::json()}};
      return out;
    }
    case Predicate::Kind::field_present: {
      out.passed = v.attr(p.field) != nullptr;
      if (!out.passed) out.witness = {{"field", p.field}};
      return out;
    }
    case Predicate::Kind::port_range: {
      out.passed = true;
      for (const auto& entry : v.open_ingress) {
        if (entry.cidr == p.cidr && entry.port >= p.port_min && entry.port <= p.port_max) {
          out.passed = false;
          out.witness = {{"cidr", entry.cidr}, {"port", entry.port},
                         {"protocol", entry.protocol}};
          return out;
        }
      }
      return out;
    }
    case Predicate::Kind::effect_required: {
      out.passed = v.effects.count(p.effect) > 0;
      if (!out.passed) out.witness = {{"effect", iir::effect_name(p.effect)}};
      return out;
    }
    case Predicate::Kind::tag_present: {
      const hcl::HclExpr* tags = v.attr("tags");
      out.passed = false;
      if (tags && tags->kind == hcl::HclExpr::Kind::map)
        for (const auto& [k, _] : tags->entries)
          if (k == p.tag_key) out.passed = true;
      if (!out.passed) out.witness = {{"tag", p.tag_key}};
      return out;
    }
    case Predicate::Kind::all_of: {
      for (const auto& c : p.children) {
        PredicateOutcome r = eval_predicate(c, v);
        if (!r.passed) return r;
      }
      out.passed = true;
      return out;
    }
    case Predicate::Kind::any_of: {
      PredicateOutcome last;
      for (const auto& c : p.children) {
        last = eval_predicate(c, v);
        if (last.passed) return last;
      }
      return last;  // witness of the final failing branch
    }
    case Predicate::Kind::negation: {
      PredicateOutcome r = eval_predicate(p.children.at(0), v);
      out.passed = !r.passed;
      return out;
    }
  }
  return out;
}

inline std::string render_message(const PolicyRule& r, const BlockView& v) {
  std::string msg = r.message.empty() ? ("rule " + r.id + " failed") : r.message;
  const std::string token = "{locus}";
  auto pos = msg.find(token);
  if (pos != std::string::npos) msg.replace(pos, token.size(), v.address);
  return msg;
}

}  // namespace detail

/// Policy evaluation: every applicable rule yields a trace; failures yield
/// class=policy counterexamples. The boolean also demands every required
/// effect be discharged (obligation present on each applicable block and the
/// discharging rules passing) and the built-in residency / availability
/// checks hold.
inline std::tuple<bool, std::vector<PolicyTrace>, std::vector<Counterexample>> eval_policies(
    const hcl::HclProgram& program, const std::vector<PolicyRule>& rules,
    const iir::ConstraintSet& constraints) {
  std::vector<PolicyTrace> traces;
  std::vector<Counterexample> ces;
  std::vector<detail::BlockView> views = detail::block_views(program);

  for (const auto& rule : rules) {
    for (const auto& v : views) {
      if (!rule.applies_to(v.kind)) continue;
      detail::PredicateOutcome r = detail::eval_predicate(rule.predicate, v);
      PolicyTrace t;
      t.rule_id = rule.id;
      t.locus = v.address;
      t.passed = r.passed;
      t.justification = r.passed ? "rule satisfied" : detail::render_message(rule, v);
      traces.push_back(t);
      if (!r.passed) {
        nlohmann::json witness = r.witness;
        witness["rule_id"] = rule.id;
        if (rule.discharges) witness["discharges"] = iir::effect_name(*rule.discharges);
        ces.push_back({CeClass::policy, v.address, rule.id,
                       detail::render_message(rule, v), witness});
      }
    }
  }

  // Required-effect discharge: each block a discharging rule targets must
  // carry the obligation; the rules themselves verify the evidence.
  for (iir::Effect e : constraints.required_effects) {
    bool has_discharger = false;
    for (const auto& rule : rules) {
      if (!rule.discharges || *rule.discharges != e) continue;
      has_discharger = true;
      for (const auto& v : views) {
        if (!rule.applies_to(v.kind)) continue;
        if (!v.effects.count(e)) {
          ces.push_back({CeClass::policy, v.address, "undischarged_effect",
                         "required effect " + std::string(iir::effect_name(e)) +
                             " is not declared on " + v.address,
                         nlohmann::json{{"effect", iir::effect_name(e)}}});
        }
      }
    }
    if (!has_discharger && e != iir::Effect::region_pinned && e != iir::Effect::redundant) {
      ces.push_back({CeClass::policy, "", "undischarged_effect",
                     "no rule discharges required effect " +
                         std::string(iir::effect_name(e)),
                     nlohmann::json{{"effect", iir::effect_name(e)}}});
    }
  }

  if (constraints.residency) {
    for (const auto& v : views) {
      bool ok = constraints.residency->count(v.region) > 0;
      PolicyTrace t;
      t.rule_id = "builtin-residency";
      t.locus = v.address;
      t.passed = ok;
      t.justification = ok ? "region within residency set"
                           : "region " + v.region + " violates residency constraint";
      traces.push_back(t);
      if (!ok) {
        nlohmann::json allowed = nlohmann::json::array();
        for (const auto& r : *constraints.residency) allowed.push_back(r);
        ces.push_back({CeClass::policy, v.address, "residency_violation",
                       "region " + v.region + " not in residency set",
                       nlohmann::json{{"region", v.region}, {"allowed", allowed}}});
      }
    }
  }

  if (constraints.availability_zones_min) {
    std::set<std::string> zones;
    std::int64_t subnet_count = 0;
    for (const auto& v : views) {
      if (v.kind != "subnet") continue;
      ++subnet_count;
      if (const hcl::HclExpr* az = v.attr("availability_zone");
          az && az->kind == hcl::HclExpr::Kind::string)
        zones.insert(az->str);
    }
    bool ok = static_cast<std::int64_t>(zones.size()) >= *constraints.availability_zones_min;
    PolicyTrace t;
    t.rule_id = "builtin-availability";
    t.locus = "";
    t.passed = ok;
    t.justification = ok ? "availability-zone spread satisfied"
                         : "subnets span " + std::to_string(zones.size()) + " zones, need " +
                               std::to_string(*constraints.availability_zones_min);
    traces.push_back(t);
    if (!ok)
      ces.push_back({CeClass::policy, "", "availability_below_min",
                     "availability-zone spread below minimum",
                     nlohmann::json{{"required", *constraints.availability_zones_min},
                                    {"actual", zones.size()},
                                    {"subnets", subnet_count}}});
  }

  std::stable_sort(ces.begin(), ces.end(),
                   [](const auto& a, const auto& b) { return a.sort_key() < b.sort_key(); });
  return {ces.empty(), traces, ces};
}

// ---------------------------------------------------------------------------
// Cost estimator
// ---------------------------------------------------------------------------

struct PriceCatalog {
  std::string catalog_version;
  std::map<std::string, std::string> billing_fields;             // kind -> field
  std::map<std::tuple<std::string, std::string, std::string>, Decimal> prices;
  std::string digest;  // over the raw file bytes

  [[nodiscard]] std::optional<Decimal> price(const std::string& region,
                                             const std::string& sku) const {
    for (const auto& [key, value] : prices)
      if (std::get<1>(key) == region && std::get<2>(key) == sku) return value;
    return std::nullopt;
  }

  /// Same-kind skus in a region, cheapest first; feeds the cost repair.
  [[nodiscard]] std::vector<std::pair<std::string, Decimal>> skus_for_kind(
      const std::string& region, const std::string& kind) const {
    std::vector<std::pair<std::string, Decimal>> out;
    std::string prefix = kind + ":";
    for (const auto& [key, value] : prices) {
      if (std::get<1>(key) != region) continue;
      const std::string& sku = std::get<2>(key);
      if (sku.rfind(prefix, 0) == 0) out.emplace_back(sku, value);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second < b.second : a.first < b.first;
    });
    return out;
  }
};

inline PriceCatalog catalog_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::parse_error, std::string("price catalog: ") + e.what());
  }
  PriceCatalog cat;
  cat.catalog_version = j.value("catalog_version", "");
  if (j.contains("billing_fields"))
    for (auto it = j.at("billing_fields").begin(); it != j.at("billing_fields").end(); ++it)
      cat.billing_fields[it.key()] = it->get<std::string>();
  for (const auto& je : j.value("prices", nlohmann::json::array())) {
    Decimal price = iir::detail::decimal_from_json(je.at("unit_price"), "unit_price");
    if (price.is_negative())
      throw Error(ErrorCode::parse_error, "negative price for " + je.at("sku").get<std::string>());
    cat.prices[{je.value("provider", "aws"), je.at("region").get<std::string>(),
                je.at("sku").get<std::string>()}] = price;
  }
  cat.digest = sha256_hex(text);
  return cat;
}

inline PriceCatalog load_catalog(const std::string& path) {
  std::string text = read_file(path, "price catalog");
  PriceCatalog cat = catalog_from_json_text(text);
  cat.digest = sha256_hex(text);
  return cat;
}

/// Resolves a block to its catalog sku: `<kind>:<billing field value>` when
/// the catalog names a billing field for the kind, else the flat `<kind>`.
inline std::string block_sku(const detail::BlockView& v, const PriceCatalog& catalog) {
  auto it = catalog.billing_fields.find(v.kind);
  if (it == catalog.billing_fields.end()) return v.kind;
  const hcl::HclExpr* e = v.attr(it->second);
  if (!e || e->kind != hcl::HclExpr::Kind::string)
    throw Error(ErrorCode::missing_sku,
                "block " + v.address + " lacks billing field '" + it->second + "'");
  return v.kind + ":" + e->str;
}

/// Deterministic monthly estimate as a sum of per-resource line items.
/// Exceeding the ceiling is a cost counterexample; a sku the catalog cannot
/// price is a missing-sku error (artifact misconfiguration, not plan
/// infeasibility).
inline std::tuple<Decimal, std::vector<CostLineItem>, std::vector<Counterexample>> estimate_cost(
    const hcl::HclProgram& program, const PriceCatalog& catalog,
    const iir::ConstraintSet& constraints) {
  std::vector<CostLineItem> sheet;
  Decimal total;
  for (const auto& v : detail::block_views(program)) {
    std::string sku = block_sku(v, catalog);
    if (v.region.empty())
      throw Error(ErrorCode::missing_sku, "block " + v.address + " has no region to price in");
    std::optional<Decimal> price = catalog.price(v.region, sku);
    if (!price)
      throw Error(ErrorCode::missing_sku,
                  "no catalog price for sku '" + sku + "' in region " + v.region, v.address);
    sheet.push_back({v.address, sku, *price});
    total += *price;
  }
  std::vector<Counterexample> ces;
  if (constraints.budget_ceiling && total > *constraints.budget_ceiling) {
    Decimal overrun = total - *constraints.budget_ceiling;
    auto top = sheet;
    std::stable_sort(top.begin(), top.end(),
                     [](const auto& a, const auto& b) { return b.monthly < a.monthly; });
    nlohmann::json top_items = nlohmann::json::array();
    for (std::size_t i = 0; i < top.size() && i < 3; ++i)
      top_items.push_back(top[i].to_json());
    ces.push_back({CeClass::cost, top.empty() ? "" : top.front().address, "budget_exceeded",
                   "estimated " + total.to_string() + " exceeds ceiling " +
                       constraints.budget_ceiling->to_string() + " by " + overrun.to_string(),
                   nlohmann::json{{"estimate", total.to_string()},
                                  {"ceiling", constraints.budget_ceiling->to_string()},
                                  {"overrun", overrun.to_string()},
                                  {"top_items", top_items}}});
  }
  return {total, sheet, ces};
}

// ---------------------------------------------------------------------------
// Deploy sandbox adapters
// ---------------------------------------------------------------------------

class SandboxAdapter {
 public:
  virtual ~SandboxAdapter() = default;
  virtual std::pair<bool, std::vector<Counterexample>> run(const std::string& program_text) = 0;
  [[nodiscard]] virtual std::string describe() const = 0;
  [[nodiscard]] virtual std::string manifest_digest() const { return ""; }
};

/// Rule-driven fault injection: verdicts are a pure function of the program
/// text and the manifest. Each manifest entry matches on kind plus an
/// optional (field, value) pair.
class StubSandbox final : public SandboxAdapter {
 public:
  struct Fault {
    std::string kind;
    std::string field;          // optional
    nlohmann::json value;       // optional, requires field
    std::string code;
    std::string message;
  };

  StubSandbox() = default;
  explicit StubSandbox(std::vector<Fault> faults, std::string digest = "")
      : faults_(std::move(faults)), digest_(std::move(digest)) {}

  static StubSandbox from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::parse_error, std::string("sandbox manifest: ") + e.what());
    }
    std::vector<Fault> faults;
    for (const auto& jf : j.is_array() ? j : j.value("faults", nlohmann::json::array())) {
      Fault f;
      const nlohmann::json& m = jf.at("match");
      f.kind = m.at("kind").get<std::string>();
      f.field = m.value("field", "");
      if (m.contains("value")) f.value = m.at("value");
      f.code = jf.at("code").get<std::string>();
      f.message = jf.value("message", "");
      faults.push_back(std::move(f));
    }
    return StubSandbox(std::move(faults), sha256_hex(text));
  }

  static StubSandbox load(const std::string& path) {
    return from_json_text(read_file(path, "sandbox manifest"));
  }

  std::pair<bool, std::vector<Counterexample>> run(const std::string& program_text) override {
    hcl::HclProgram program = hcl::parse(program_text);
    std::vector<Counterexample> ces;
    for (const auto& v : detail::block_views(program)) {
      for (const auto& f : faults_) {
        if (f.kind != v.kind) continue;
        if (!f.field.empty()) {
          const hcl::HclExpr* e = v.attr(f.field);
          if (!e) continue;
          if (!f.value.is_null() && !detail::expr_equals_json(*e, f.value)) continue;
        }
        ces.push_back({CeClass::run, v.address, f.code,
                       f.message.empty() ? "sandbox rejected " + v.address : f.message,
                       nlohmann::json{{"kind", f.kind},
                                      {"field", f.field},
                                      {"value", f.value}}});
      }
    }
    std::stable_sort(ces.begin(), ces.end(),
                     [](const auto& a, const auto& b) { return a.sort_key() < b.sort_key(); });
    return {ces.empty(), ces};
  }

  [[nodiscard]] std::string describe() const override { return "stub"; }
  [[nodiscard]] std::string manifest_digest() const override { return digest_; }
  [[nodiscard]] const std::vector<Fault>& faults() const { return faults_; }

 private:
  std::vector<Fault> faults_;
  std::string digest_;
};

/// Invokes an external plan/apply binary (`IACFORGE_TF_BIN` or explicit
/// path) with `init` then `plan` in a temp workspace and maps diagnostics
/// to run counterexamples via a small regex-free line table: lines shaped
/// `Error: <code>: <locus>: <message>`.
class ExternalToolSandbox final : public SandboxAdapter {
 public:
  explicit ExternalToolSandbox(std::string binary) : binary_(std::move(binary)) {
    if (binary_.empty())
      if (const char* env = std::getenv("IACFORGE_TF_BIN")) binary_ = env;
  }

  std::pair<bool, std::vector<Counterexample>> run(const std::string& program_text) override {
    namespace fs = std::filesystem;
    if (binary_.empty() || !fs::exists(binary_))
      throw Error(ErrorCode::sandbox_unavailable,
                  "external sandbox binary not configured (set IACFORGE_TF_BIN)");
    fs::path dir = fs::temp_directory_path() /
                   ("iacforge-sbx-" + sha256_hex(program_text).substr(0, 12));
    fs::create_directories(dir);
    {
      std::ofstream out(dir / "main.tf", std::ios::binary);
      out << program_text;
    }
    std::vector<Counterexample> ces;
    bool ok = true;
    for (const char* phase : {"init", "plan"}) {
      std::string cmd = binary_ + " " + phase + " " + dir.string() + " 2>&1";
      std::string output;
      if (FILE* pipe = popen(cmd.c_str(), "r")) {
        char buf[512];
        while (fgets(buf, sizeof buf, pipe)) output += buf;
        int status = pclose(pipe);
        if (status != 0) {
          ok = false;
          std::istringstream lines(output);
          std::string line;
          while (std::getline(lines, line)) {
            if (line.rfind("Error:", 0) != 0) continue;
            std::string rest = line.substr(6);
            auto p1 = rest.find(':');
            auto p2 = p1 == std::string::npos ? std::string::npos : rest.find(':', p1 + 1);
            Counterexample ce;
            ce.cls = CeClass::run;
            if (p1 != std::string::npos && p2 != std::string::npos) {
              ce.code = rest.substr(0, p1);
              ce.locus = rest.substr(p1 + 1, p2 - p1 - 1);
              ce.message = rest.substr(p2 + 1);
            } else {
              ce.code = "external_error";
              ce.message = rest;
            }
            auto trim = [](std::string& s) {
              while (!s.empty() && s.front() == ' ') s.erase(s.begin());
              while (!s.empty() && s.back() == ' ') s.pop_back();
            };
            trim(ce.code);
            trim(ce.locus);
            trim(ce.message);
            ce.witness = nlohmann::json{{"phase", phase}, {"raw", line}};
            ces.push_back(std::move(ce));
          }
          if (ces.empty())
            ces.push_back({CeClass::run, "", "external_error",
                           "external sandbox failed in " + std::string(phase),
                           nlohmann::json{{"raw", output.substr(0, 2000)}}});
          break;
        }
      } else {
        throw Error(ErrorCode::sandbox_unavailable, "could not spawn sandbox binary");
      }
    }
    return {ok, ces};
  }

  [[nodiscard]] std::string describe() const override { return "external:" + binary_; }

 private:
  std::string binary_;
};

inline std::pair<bool, std::vector<Counterexample>> deploy_test(const hcl::HclProgram& program,
                                                                SandboxAdapter& sandbox) {
  return sandbox.run(hcl::print(program));
}

// ---------------------------------------------------------------------------
// run_all
// ---------------------------------------------------------------------------

/// The validator battery with gating: policy and cost need a schema-valid
/// program; deploy needs policy too. Merged counterexamples are sorted by
/// (class priority, locus, code) so the report is deterministic regardless
/// of execution order.
inline ValidatorReport run_all(const hcl::HclProgram& program,
                               const schema::SchemaRegistry& registry,
                               const std::vector<PolicyRule>& rules, const PriceCatalog& catalog,
                               SandboxAdapter& sandbox, const iir::ConstraintSet& constraints) {
  ValidatorReport report;
  auto [schema_ok, schema_ces] = validate_schema(program, registry);
  report.schema_status = schema_ok ? ValidatorStatus::passed : ValidatorStatus::failed;
  for (auto& ce : schema_ces) report.counterexamples.push_back(std::move(ce));

  if (schema_ok) {
    auto [policy_ok, traces, policy_ces] = eval_policies(program, rules, constraints);
    report.policy_status = policy_ok ? ValidatorStatus::passed : ValidatorStatus::failed;
    report.traces = std::move(traces);
    for (auto& ce : policy_ces) report.counterexamples.push_back(std::move(ce));

    auto [total, sheet, cost_ces] = estimate_cost(program, catalog, constraints);
    report.v_cost = total;
    report.cost_sheet = std::move(sheet);
    report.cost_status = cost_ces.empty() ? ValidatorStatus::passed : ValidatorStatus::failed;
    for (auto& ce : cost_ces) report.counterexamples.push_back(std::move(ce));

    if (policy_ok) {
      auto [deploy_ok, deploy_ces] = deploy_test(program, sandbox);
      report.deploy_status = deploy_ok ? ValidatorStatus::passed : ValidatorStatus::failed;
      for (auto& ce : deploy_ces) report.counterexamples.push_back(std::move(ce));
    }
  }

  report.sort_counterexamples();
  return report;
}

}  // namespace iacforge::val
