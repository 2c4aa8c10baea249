#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "iacforge/synthesis.hpp"
#include "iacforge/validators.hpp"

namespace iacforge::repair {

/// Version tag for the CE-code -> edit matrix below; recorded in bundle
/// manifests so audits can cite the exact mapping. The matrix itself is
/// documented in docs/repair-mapping.md.
inline constexpr const char* kMappingTableVersion = "1";

// ---------------------------------------------------------------------------
// Routing score J (the repair-loop scalar)
// ---------------------------------------------------------------------------

struct RoutingWeights {
  Decimal schema_weight;   // lambda_1
  Decimal policy_weight;   // lambda_2
  Decimal cost_weight;     // lambda_3
  Decimal deploy_weight;   // lambda_4

  /// (1, 1, 1/B when a ceiling exists else 0, 1): a full-budget overrun
  /// weighs like one hard validator failure.
  static RoutingWeights defaults(const iir::ConstraintSet& constraints) {
    RoutingWeights w;
    w.schema_weight = Decimal::from_int(1);
    w.policy_weight = Decimal::from_int(1);
    w.deploy_weight = Decimal::from_int(1);
    if (constraints.budget_ceiling && !constraints.budget_ceiling->is_zero())
      w.cost_weight = Decimal::from_int(1) / *constraints.budget_ceiling;
    return w;
  }
};

/// J(T,C) = l1(1-v_schema) + l2(1-v_policy) + l3 max(0, v_cost - B)
///        + l4(1-v_deploy). Gated validators contribute their failure
/// indicator as 1; a gated cost estimate contributes zero overrun; with no
/// ceiling the cost term vanishes. Exact decimal arithmetic throughout.
inline Decimal routing_score(const val::ValidatorReport& report,
                             const iir::ConstraintSet& constraints, const RoutingWeights& w) {
  Decimal j;
  if (!report.v_schema()) j += w.schema_weight;
  if (!report.v_policy()) j += w.policy_weight;
  if (constraints.budget_ceiling && report.cost_status != val::ValidatorStatus::gated)
    j += w.cost_weight * max(Decimal{}, report.v_cost - *constraints.budget_ceiling);
  if (!report.v_deploy()) j += w.deploy_weight;
  return j;
}

// ---------------------------------------------------------------------------
// Edits
// ---------------------------------------------------------------------------

struct OpenIngressSelector {
  std::string cidr;
  std::int64_t port = 0;
  std::string protocol;
};

/// One element of the admissible edit set A: either a plan-level operator
/// (structural) or a code-level operator (local). Exactly one variant.
struct Edit {
  enum class Op {
    // plan-level
    set_region,
    add_effect,
    adjust_connectivity,
    add_node,
    remove_node,
    set_plan_field,
    // code-level
    add_required_field,
    correct_reference,
    rename_attribute,
    set_attribute_value,
  };

  Op op = Op::set_plan_field;
  std::string node_id;      // plan-edit locus
  std::string block;        // code-edit locus, "kind.name"
  std::string field;
  iir::TypedValue value;
  std::string region;
  iir::Effect effect = iir::Effect::encrypt_at_rest;
  std::optional<val::EffectEvidence> evidence;
  bool connect_add = false;
  std::optional<iir::PlanEdge> edge;
  std::optional<OpenIngressSelector> open_ingress;
  std::string kind;          // add_node
  std::string old_name;      // rename_attribute
  std::string new_name;
  std::string new_target;    // correct_reference (node id)

  [[nodiscard]] bool is_plan_edit() const {
    switch (op) {
      case Op::set_region:
      case Op::add_effect:
      case Op::adjust_connectivity:
      case Op::add_node:
      case Op::remove_node:
      case Op::set_plan_field: return true;
      default: return false;
    }
  }

  [[nodiscard]] std::string locus() const { return is_plan_edit() ? node_id : block; }

  [[nodiscard]] const char* op_name() const {
    switch (op) {
      case Op::set_region: return "SetRegion";
      case Op::add_effect: return "AddEffect";
      case Op::adjust_connectivity: return "AdjustConnectivity";
      case Op::add_node: return "AddNode";
      case Op::remove_node: return "RemoveNode";
      case Op::set_plan_field: return "SetPlanField";
      case Op::add_required_field: return "AddRequiredField";
      case Op::correct_reference: return "CorrectReference";
      case Op::rename_attribute: return "RenameAttribute";
      case Op::set_attribute_value: return "SetAttributeValue";
    }
    return "?";
  }

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json j{{"op", op_name()}, {"locus", locus()}};
    if (!field.empty()) j["field"] = field;
    if (!region.empty()) j["region"] = region;
    if (!kind.empty()) j["kind"] = kind;
    if (!old_name.empty()) j["old_name"] = old_name;
    if (!new_name.empty()) j["new_name"] = new_name;
    if (!new_target.empty()) j["new_target"] = new_target;
    if (op == Op::add_effect) j["effect"] = iir::effect_name(effect);
    if (open_ingress)
      j["open_ingress"] = {{"cidr", open_ingress->cidr},
                           {"port", open_ingress->port},
                           {"protocol", open_ingress->protocol}};
    return j;
  }
};

/// Total deterministic order over candidate edits: CE class priority first,
/// structural (plan-level) before local, then estimated blast radius, then
/// lexicographic locus.
struct EditOrderKey {
  int class_priority = 9;
  int local = 1;        // 0 structural, 1 local
  int blast_radius = 1;
  std::string locus;
  int stable_index = 0;

  [[nodiscard]] auto tuple() const {
    return std::tie(class_priority, local, blast_radius, locus, stable_index);
  }
  friend bool operator<(const EditOrderKey& a, const EditOrderKey& b) {
    return a.tuple() < b.tuple();
  }
};

inline int edit_blast_radius(const Edit& e) {
  switch (e.op) {
    case Edit::Op::add_node:
    case Edit::Op::remove_node: return 2;
    default: return 1;
  }
}

struct MappedEdit {
  Edit edit;
  val::Counterexample origin;
  EditOrderKey key;
};

// ---------------------------------------------------------------------------
// Error-to-Edit mapping
// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// Near-miss resolution: unique declared field within edit distance 2.
/// Ties or no candidate -> nullopt (conservative, falls through to
/// no-applicable-edit).
inline std::optional<std::string> near_miss(const std::string& name,
                                            const schema::KindSchema& ks) {
  std::optional<std::string> best;
  std::size_t best_d = 3;
  bool tie = false;
  for (const auto& f : ks.fields) {
    std::size_t d = edit_distance(name, f.name);
    if (d > 2) continue;
    if (d < best_d) {
      best = f.name;
      best_d = d;
      tie = false;
    } else if (d == best_d) {
      tie = true;
    }
  }
  if (tie) return std::nullopt;
  return best;
}

inline std::string node_of_locus(const std::string& locus) {
  // "kind.name" -> name; "name.field" from schema CEs -> name
  auto dot = locus.find('.');
  return dot == std::string::npos ? locus : locus.substr(0, dot);
}

inline std::vector<std::string> nodes_of_kind(const iir::Plan& plan, const std::string& kind) {
  std::vector<std::string> out;
  for (const auto& n : plan.nodes)
    if (n.kind == kind) out.push_back(n.id);
  std::sort(out.begin(), out.end());
  return out;
}

/// Deterministic stub value for a declared field, reusing the decoder's
/// fallback policy. Reference fields pick the smallest kind-compatible node.
inline std::optional<iir::TypedValue> stub_field_value(const schema::FieldDecl& decl,
                                                       const iir::Plan& plan) {
  if (decl.default_value) return decl.default_value;
  if (decl.type == iir::ValueType::reference) {
    auto targets = nodes_of_kind(plan, decl.ref_kind);
    if (targets.empty()) return std::nullopt;
    return iir::TypedValue::make_ref(targets.front());
  }
  synth::HoleContext ctx;
  ctx.desc.decl = decl;
  hcl::HclExpr e = synth::stub_choice(ctx);
  switch (e.kind) {
    case hcl::HclExpr::Kind::string: return iir::TypedValue::make_string(e.str);
    case hcl::HclExpr::Kind::number:
      return e.decimal_form ? iir::TypedValue::make_decimal(e.num)
                            : iir::TypedValue::make_int(e.num.scaled() / Decimal::kScale);
    case hcl::HclExpr::Kind::boolean: return iir::TypedValue::make_bool(e.b);
    case hcl::HclExpr::Kind::list: return iir::TypedValue::make_list({});
    case hcl::HclExpr::Kind::map: return iir::TypedValue::make_map({});
    default: return std::nullopt;
  }
}

inline std::optional<std::string> pick_region(const iir::Plan& plan,
                                              const schema::KindSchema& ks,
                                              const std::string& avoid) {
  if (plan.specs.residency)
    for (const auto& r : *plan.specs.residency)
      if (r != avoid && ks.regions_available.count(r)) return r;
  if (!plan.specs.residency)
    for (const auto& r : ks.regions_available)
      if (r != avoid) return r;
  return std::nullopt;
}

inline const iir::ResourceNode* node_for(const iir::Plan& plan, const std::string& locus) {
  if (const iir::ResourceNode* n = plan.node(node_of_locus(locus))) return n;
  // code locus "kind.name"
  auto dot = locus.find('.');
  if (dot != std::string::npos)
    if (const iir::ResourceNode* n = plan.node(locus.substr(dot + 1))) return n;
  return nullptr;
}

inline std::string block_address(const iir::ResourceNode& n) { return n.kind + "." + n.id; }

inline std::optional<Edit> map_one(const val::Counterexample& ce, const iir::Plan& plan,
                                   [[maybe_unused]] const hcl::HclProgram& program,
                                   const schema::SchemaRegistry& registry,
                                   const val::PriceCatalog& catalog) {
  using Op = Edit::Op;
  auto witness_str = [&](const char* key) -> std::string {
    if (ce.witness.contains(key) && ce.witness.at(key).is_string())
      return ce.witness.at(key).get<std::string>();
    return "";
  };

  if (ce.cls == val::CeClass::schema) {
    std::string node_id = witness_str("node");
    if (node_id.empty()) node_id = node_of_locus(ce.locus);
    const iir::ResourceNode* n = plan.node(node_id);
    std::string field = witness_str("field");
    if (field.empty()) {
      auto dot = ce.locus.find('.');
      if (dot != std::string::npos) field = ce.locus.substr(dot + 1);
    }

    if (ce.code == "missing_required") {
      if (!n) return std::nullopt;
      if (field == "region") {
        const schema::KindSchema* ks = registry.find(n->provider, n->kind);
        auto region = ks ? pick_region(plan, *ks, "") : std::nullopt;
        if (!region) return std::nullopt;
        Edit e;
        e.op = Op::set_region;
        e.node_id = n->id;
        e.region = *region;
        return e;
      }
      const schema::KindSchema* ks = registry.find(n->provider, n->kind);
      const schema::FieldDecl* decl = ks ? ks->field(field) : nullptr;
      if (!decl) return std::nullopt;
      if (decl->type == iir::ValueType::reference &&
          nodes_of_kind(plan, decl->ref_kind).empty()) {
        Edit e;
        e.op = Op::add_node;
        e.node_id = n->id + "_" + decl->ref_kind;
        e.kind = decl->ref_kind;
        return e;
      }
      auto value = stub_field_value(*decl, plan);
      if (!value) return std::nullopt;
      Edit e;
      e.op = Op::add_required_field;
      e.block = block_address(*n);
      e.field = field;
      e.value = *value;
      return e;
    }

    if (ce.code == "unknown_field") {
      if (!n || field.empty()) return std::nullopt;
      const schema::KindSchema* ks = registry.find(n->provider, n->kind);
      if (!ks) return std::nullopt;
      auto target = near_miss(field, *ks);
      if (!target) return std::nullopt;
      Edit e;
      e.op = Op::rename_attribute;
      e.block = block_address(*n);
      e.old_name = field;
      e.new_name = *target;
      return e;
    }

    if (ce.code == "dangling_reference" || ce.code == "reference_kind_mismatch" ||
        ce.code == "unsatisfiable_reference") {
      if (!n || field.empty()) return std::nullopt;
      const schema::KindSchema* ks = registry.find(n->provider, n->kind);
      const schema::FieldDecl* decl = ks ? ks->field(field) : nullptr;
      if (!decl || decl->type != iir::ValueType::reference) return std::nullopt;
      auto targets = nodes_of_kind(plan, decl->ref_kind);
      if (targets.size() == 1) {
        Edit e;
        e.op = Op::correct_reference;
        e.block = block_address(*n);
        e.field = field;
        e.new_target = targets.front();
        return e;
      }
      std::string wanted = witness_str("reference");
      std::string new_id = decl->ref_kind + "_for_" + n->id;
      auto dot = wanted.find('.');
      if (dot != std::string::npos && iir::valid_identifier(wanted.substr(dot + 1)) &&
          plan.node(wanted.substr(dot + 1)) == nullptr)
        new_id = wanted.substr(dot + 1);
      Edit e;
      e.op = Op::add_node;
      e.node_id = new_id;
      e.kind = decl->ref_kind;
      return e;
    }

    if (ce.code == "type_mismatch" || ce.code == "value_not_allowed") {
      if (!n || field.empty()) return std::nullopt;
      const schema::KindSchema* ks = registry.find(n->provider, n->kind);
      const schema::FieldDecl* decl = ks ? ks->field(field) : nullptr;
      if (!decl) return std::nullopt;
      auto value = stub_field_value(*decl, plan);
      if (!value) return std::nullopt;
      Edit e;
      e.op = Op::set_attribute_value;
      e.block = block_address(*n);
      e.field = field;
      e.value = *value;
      return e;
    }

    if (ce.code == "region_unavailable") {
      if (!n) return std::nullopt;
      const schema::KindSchema* ks = registry.find(n->provider, n->kind);
      if (!ks) return std::nullopt;
      auto region = pick_region(plan, *ks, n->region);
      if (!region) return std::nullopt;
      Edit e;
      e.op = Op::set_region;
      e.node_id = n->id;
      e.region = *region;
      return e;
    }

    return std::nullopt;
  }

  if (ce.cls == val::CeClass::policy) {
    if (ce.code == "undischarged_effect") {
      if (ce.locus.empty()) return std::nullopt;  // no discharging rule exists at all
      const iir::ResourceNode* n = node_for(plan, ce.locus);
      if (!n) return std::nullopt;
      iir::Effect effect = iir::effect_from_name(witness_str("effect"));
      Edit e;
      e.op = Op::add_effect;
      e.node_id = n->id;
      e.effect = effect;
      e.evidence = val::effect_evidence(effect, n->kind);
      return e;
    }
    if (ce.code == "residency_violation") {
      const iir::ResourceNode* n = node_for(plan, ce.locus);
      if (!n) return std::nullopt;
      const schema::KindSchema* ks = registry.find(n->provider, n->kind);
      if (!ks) return std::nullopt;
      auto region = pick_region(plan, *ks, n->region);
      if (!region) return std::nullopt;
      Edit e;
      e.op = Op::set_region;
      e.node_id = n->id;
      e.region = *region;
      return e;
    }
    if (ce.code == "availability_below_min") {
      auto subnets = nodes_of_kind(plan, "subnet");
      const schema::KindSchema* ks = registry.find_by_kind("subnet");
      const schema::FieldDecl* az = ks ? ks->field("availability_zone") : nullptr;
      if (!az || !az->allowed_values) return std::nullopt;
      std::int64_t required = ce.witness.value("required", std::int64_t{0});
      if (static_cast<std::int64_t>(subnets.size()) < required) {
        Edit e;
        e.op = Op::add_node;
        e.node_id = "subnet_az" + std::to_string(subnets.size());
        e.kind = "subnet";
        return e;
      }
      std::set<std::string> used;
      for (const auto& id : subnets) {
        const iir::ResourceNode* sn = plan.node(id);
        const iir::TypedValue* zone = sn->field("availability_zone");
        std::string z = zone && zone->type == iir::ValueType::string ? zone->str : "a";
        if (!used.insert(z).second) {
          for (const auto& candidate : *az->allowed_values) {
            if (!used.count(candidate)) {
              Edit e;
              e.op = Op::set_plan_field;
              e.node_id = id;
              e.field = "availability_zone";
              e.value = iir::TypedValue::make_string(candidate);
              return e;
            }
          }
        }
      }
      return std::nullopt;
    }
    // Rule failure: route via the effect the rule discharges.
    std::string discharges = witness_str("discharges");
    if (discharges.empty()) return std::nullopt;
    iir::Effect effect = iir::effect_from_name(discharges);
    const iir::ResourceNode* n = node_for(plan, ce.locus);
    if (!n) return std::nullopt;
    if (effect == iir::Effect::restricted_ingress) {
      if (!ce.witness.contains("cidr")) return std::nullopt;
      Edit e;
      e.op = Op::adjust_connectivity;
      e.node_id = n->id;
      e.connect_add = false;
      e.open_ingress = OpenIngressSelector{witness_str("cidr"),
                                           ce.witness.value("port", std::int64_t{0}),
                                           witness_str("protocol")};
      return e;
    }
    auto evidence = val::effect_evidence(effect, n->kind);
    if (!evidence) return std::nullopt;
    Edit e;
    e.op = Op::set_attribute_value;
    e.block = block_address(*n);
    e.field = evidence->field;
    e.value = evidence->value;
    return e;
  }

  if (ce.cls == val::CeClass::cost) {
    if (ce.code != "budget_exceeded" || !ce.witness.contains("top_items")) return std::nullopt;
    for (const auto& item : ce.witness.at("top_items")) {
      std::string address = item.value("address", "");
      std::string sku = item.value("sku", "");
      auto colon = sku.find(':');
      if (colon == std::string::npos) continue;  // flat-priced kinds cannot downgrade
      std::string kind = sku.substr(0, colon);
      auto bf = catalog.billing_fields.find(kind);
      if (bf == catalog.billing_fields.end()) continue;
      const iir::ResourceNode* n = node_for(plan, address);
      if (!n) continue;
      std::optional<Decimal> current = catalog.price(n->region, sku);
      if (!current) continue;
      // next cheaper: the most expensive sku strictly below the current one
      auto options = catalog.skus_for_kind(n->region, kind);
      std::optional<std::pair<std::string, Decimal>> pick;
      for (const auto& [s, p] : options)
        if (p < *current) pick = {s, p};
      if (!pick) continue;
      Edit e;
      e.op = Edit::Op::set_attribute_value;
      e.block = address;
      e.field = bf->second;
      e.value = iir::TypedValue::make_string(pick->first.substr(colon + 1));
      return e;
    }
    return std::nullopt;
  }

  if (ce.cls == val::CeClass::run) {
    const iir::ResourceNode* n = node_for(plan, ce.locus);
    if (!n) return std::nullopt;
    if (ce.code == "unsupported_sku") {
      std::string field = witness_str("field");
      if (field.empty()) return std::nullopt;
      const schema::KindSchema* ks = registry.find(n->provider, n->kind);
      const schema::FieldDecl* decl = ks ? ks->field(field) : nullptr;
      std::string current;
      if (const iir::TypedValue* v = n->field(field);
          v && v->type == iir::ValueType::string)
        current = v->str;
      if (decl && decl->allowed_values) {
        for (const auto& candidate : *decl->allowed_values) {
          if (candidate == current) continue;
          Edit e;
          e.op = Edit::Op::set_attribute_value;
          e.block = block_address(*n);
          e.field = field;
          e.value = iir::TypedValue::make_string(candidate);
          return e;
        }
      }
      return std::nullopt;
    }
    if (ce.code == "region_unavailable" || ce.code == "az_unavailable") {
      const schema::KindSchema* ks = registry.find(n->provider, n->kind);
      if (!ks) return std::nullopt;
      auto region = pick_region(plan, *ks, n->region);
      if (!region) return std::nullopt;
      Edit e;
      e.op = Edit::Op::set_region;
      e.node_id = n->id;
      e.region = *region;
      return e;
    }
    return std::nullopt;
  }

  return std::nullopt;
}

}  // namespace detail

/// Maps every counterexample that has a table entry and orders the candidate
/// edits by the deterministic total order. The head of this list is the edit
/// error_to_edit selects.
inline std::vector<MappedEdit> map_all_edits(const std::vector<val::Counterexample>& ces,
                                             const iir::Plan& plan,
                                             const hcl::HclProgram& program,
                                             const schema::SchemaRegistry& registry,
                                             const val::PriceCatalog& catalog) {
  std::vector<MappedEdit> out;
  int index = 0;
  for (const auto& ce : ces) {
    auto edit = detail::map_one(ce, plan, program, registry, catalog);
    ++index;
    if (!edit) continue;
    MappedEdit m;
    m.edit = std::move(*edit);
    m.origin = ce;
    m.key.class_priority = val::ce_class_priority(ce.cls);
    m.key.local = m.edit.is_plan_edit() ? 0 : 1;
    m.key.blast_radius = edit_blast_radius(m.edit);
    m.key.locus = m.edit.locus();
    m.key.stable_index = index;
    out.push_back(std::move(m));
  }
  std::sort(out.begin(), out.end(),
            [](const MappedEdit& a, const MappedEdit& b) { return a.key < b.key; });
  return out;
}

/// E2E: deterministic mapping from evidence to a single edit, the minimal
/// one under the edit order. no-applicable-edit signals an unsatisfied core.
inline Edit error_to_edit(const std::vector<val::Counterexample>& ces, const iir::Plan& plan,
                          const hcl::HclProgram& program, const schema::SchemaRegistry& registry,
                          const val::PriceCatalog& catalog) {
  if (ces.empty())
    throw Error(ErrorCode::no_applicable_edit, "no counterexamples to map");
  auto mapped = map_all_edits(ces, plan, program, registry, catalog);
  if (mapped.empty())
    throw Error(ErrorCode::no_applicable_edit,
                "no counterexample has a mapping-table entry (" +
                    std::to_string(ces.size()) + " CEs)");
  return mapped.front().edit;
}

// ---------------------------------------------------------------------------
// Edit application (Psi)
// ---------------------------------------------------------------------------

struct EditContext {
  const schema::SchemaRegistry* registry = nullptr;
  synth::Proposer* proposer = nullptr;
};

namespace detail {

/// Canonical attribute rank inside a block: region, declared fields in
/// registry order, undeclared, effects, depends_on.
inline int attr_rank(const std::string& name, const schema::KindSchema* ks) {
  if (name == hcl::kRegionAttr) return 0;
  if (name == hcl::kEffectsAttr) return 100000;
  if (name == hcl::kDependsOnAttr) return 100001;
  if (ks)
    for (std::size_t i = 0; i < ks->fields.size(); ++i)
      if (ks->fields[i].name == name) return static_cast<int>(i) + 1;
  return 99999;
}

inline void merge_map_value(hcl::HclExpr& existing, const hcl::HclExpr& incoming) {
  for (const auto& [k, v] : incoming.entries) {
    bool found = false;
    for (auto& [ek, ev] : existing.entries)
      if (ek == k) {
        ev = v;
        found = true;
      }
    if (!found) existing.entries.emplace_back(k, v);
  }
}

inline hcl::Block* find_block(hcl::HclProgram& program, const std::string& address) {
  auto dot = address.find('.');
  if (dot == std::string::npos) return nullptr;
  return program.resource(address.substr(0, dot), address.substr(dot + 1));
}

/// Recompile plan-touched blocks while keeping every untouched block's AST
/// byte-identical: splice current blocks into the fresh skeleton, leaving
/// holes only where the edit introduced new content.
inline hcl::HclProgram recompile_touched(const iir::Plan& plan, const hcl::HclProgram& current,
                                         const std::set<std::string>& touched,
                                         const EditContext& ctx, synth::DecodeTrace* trace) {
  auto [skel, symtab] = synth::compile_skeleton(plan, *ctx.registry);
  synth::SkeletonProgram spliced;
  for (auto& block : skel.program.blocks) {
    const std::string& name = block.labels[1];
    const hcl::Block* existing =
        current.resource(block.labels[0], name);
    if (existing && !touched.count(name)) {
      spliced.program.blocks.push_back(*existing);
    } else {
      spliced.program.blocks.push_back(block);
    }
  }
  // Keep only hole descriptors that survived the splice.
  std::set<int> live;
  std::function<void(const hcl::HclExpr&)> scan = [&](const hcl::HclExpr& e) {
    if (e.kind == hcl::HclExpr::Kind::hole) live.insert(e.hole_id);
    for (const auto& item : e.items) scan(item);
    for (const auto& [_, v] : e.entries) scan(v);
  };
  for (const auto& b : spliced.program.blocks)
    for (const auto& [_, v] : b.attributes) scan(v);
  for (const auto& h : skel.holes)
    if (live.count(h.id)) spliced.holes.push_back(h);

  synth::DeterministicStubProposer fallback;
  synth::Proposer& proposer = ctx.proposer ? *ctx.proposer : fallback;
  return synth::decode(spliced, proposer, *ctx.registry, trace);
}

}  // namespace detail

/// Psi: applies one edit. Plan edits mutate the plan and recompile only the
/// affected blocks; code edits mutate the program and re-lift so plan and
/// program stay in sync (specs and version pins are carried over). Untouched
/// blocks stay byte-identical.
inline std::pair<iir::Plan, hcl::HclProgram> apply_edit(const iir::Plan& plan_in,
                                                        const hcl::HclProgram& program_in,
                                                        const Edit& edit, const EditContext& ctx,
                                                        synth::DecodeTrace* trace = nullptr) {
  if (!ctx.registry) throw Error(ErrorCode::config_error, "apply_edit needs a registry");
  iir::Plan plan = plan_in;
  hcl::HclProgram program = program_in;

  if (edit.is_plan_edit()) {
    std::set<std::string> touched;
    switch (edit.op) {
      case Edit::Op::set_region: {
        iir::ResourceNode* n = plan.node(edit.node_id);
        if (!n) throw Error(ErrorCode::locus_not_found, "no node " + edit.node_id);
        n->region = edit.region;
        n->metadata.erase(schema::kVersionPinKey);  // re-pin on next harmonize
        touched.insert(n->id);
        break;
      }
      case Edit::Op::add_effect: {
        iir::ResourceNode* n = plan.node(edit.node_id);
        if (!n) throw Error(ErrorCode::locus_not_found, "no node " + edit.node_id);
        n->effects.insert(edit.effect);
        if (edit.evidence) {
          iir::TypedValue* existing = nullptr;
          for (auto& [fn, fv] : n->fields)
            if (fn == edit.evidence->field && fv.type == iir::ValueType::map) existing = &fv;
          if (edit.evidence->value.type == iir::ValueType::map && existing) {
            for (const auto& [k, v] : edit.evidence->value.map)
              existing->map.emplace(k, v);  // keep user keys
          } else {
            n->set_field(edit.evidence->field, edit.evidence->value);
          }
        }
        touched.insert(n->id);
        break;
      }
      case Edit::Op::adjust_connectivity: {
        iir::ResourceNode* n = plan.node(edit.node_id);
        if (!n) throw Error(ErrorCode::locus_not_found, "no node " + edit.node_id);
        touched.insert(n->id);
        if (edit.open_ingress) {
          iir::TypedValue* ing = nullptr;
          for (auto& [fn, fv] : n->fields)
            if (fn == hcl::kOpenIngressField && fv.type == iir::ValueType::list) ing = &fv;
          if (edit.connect_add) {
            std::map<std::string, iir::TypedValue> entry;
            entry["cidr"] = iir::TypedValue::make_string(edit.open_ingress->cidr);
            entry["port"] = iir::TypedValue::make_int(edit.open_ingress->port);
            entry["protocol"] = iir::TypedValue::make_string(edit.open_ingress->protocol);
            if (!ing) {
              n->set_field(hcl::kOpenIngressField, iir::TypedValue::make_list({}));
              ing = const_cast<iir::TypedValue*>(n->field(hcl::kOpenIngressField));
            }
            ing->list.push_back(iir::TypedValue::make_map(std::move(entry)));
          } else {
            if (!ing) throw Error(ErrorCode::locus_not_found, "no open ingress on " + n->id);
            auto matches = [&](const iir::TypedValue& entry) {
              if (entry.type != iir::ValueType::map) return false;
              auto get = [&](const char* k) -> const iir::TypedValue* {
                auto it = entry.map.find(k);
                return it == entry.map.end() ? nullptr : &it->second;
              };
              const auto* cidr = get("cidr");
              const auto* port = get("port");
              return cidr && cidr->type == iir::ValueType::string &&
                     cidr->str == edit.open_ingress->cidr && port &&
                     port->type == iir::ValueType::integer &&
                     port->integer == edit.open_ingress->port;
            };
            auto before = ing->list.size();
            ing->list.erase(std::remove_if(ing->list.begin(), ing->list.end(), matches),
                            ing->list.end());
            if (ing->list.size() == before)
              throw Error(ErrorCode::locus_not_found, "no matching ingress entry on " + n->id);
          }
        } else if (edit.edge) {
          if (edit.connect_add) {
            plan.edges.push_back(*edit.edge);
          } else {
            auto before = plan.edges.size();
            plan.edges.erase(std::remove(plan.edges.begin(), plan.edges.end(), *edit.edge),
                             plan.edges.end());
            if (plan.edges.size() == before)
              throw Error(ErrorCode::locus_not_found, "no matching Connects edge");
          }
          touched.insert(edit.edge->src);
          touched.insert(edit.edge->dst);
        } else {
          throw Error(ErrorCode::config_error, "AdjustConnectivity needs an edge or entry");
        }
        break;
      }
      case Edit::Op::add_node: {
        if (plan.node(edit.node_id))
          throw Error(ErrorCode::locus_not_found, "node already exists: " + edit.node_id);
        const schema::KindSchema* ks = ctx.registry->find_by_kind(edit.kind);
        if (!ks) throw Error(ErrorCode::unknown_kind, "cannot add node of kind " + edit.kind);
        iir::ResourceNode n;
        n.id = edit.node_id;
        n.kind = edit.kind;
        n.provider = ks->provider;
        if (plan.specs.residency)
          for (const auto& r : *plan.specs.residency)
            if (ks->regions_available.count(r)) {
              n.region = r;
              break;
            }
        if (n.region.empty() && !ks->regions_available.empty())
          n.region = *ks->regions_available.begin();
        for (const auto& decl : ks->fields)
          if (decl.default_value) n.fields.emplace_back(decl.name, *decl.default_value);
        // Required reference fields resolve to the smallest compatible node.
        for (const auto& decl : ks->fields) {
          if (!decl.required || decl.type != iir::ValueType::reference) continue;
          auto targets = detail::nodes_of_kind(plan, decl.ref_kind);
          if (!targets.empty())
            n.fields.emplace_back(decl.name, iir::TypedValue::make_ref(targets.front()));
        }
        touched.insert(n.id);
        plan.nodes.push_back(std::move(n));
        break;
      }
      case Edit::Op::remove_node: {
        iir::ResourceNode* n = plan.node(edit.node_id);
        if (!n) throw Error(ErrorCode::locus_not_found, "no node " + edit.node_id);
        plan.nodes.erase(std::remove_if(plan.nodes.begin(), plan.nodes.end(),
                                        [&](const iir::ResourceNode& x) {
                                          return x.id == edit.node_id;
                                        }),
                         plan.nodes.end());
        plan.edges.erase(std::remove_if(plan.edges.begin(), plan.edges.end(),
                                        [&](const iir::PlanEdge& e) {
                                          return e.src == edit.node_id || e.dst == edit.node_id;
                                        }),
                         plan.edges.end());
        iir::check_well_formed(plan);  // referencing fields would now dangle
        break;
      }
      case Edit::Op::set_plan_field: {
        iir::ResourceNode* n = plan.node(edit.node_id);
        if (!n) throw Error(ErrorCode::locus_not_found, "no node " + edit.node_id);
        n->set_field(edit.field, edit.value);
        touched.insert(n->id);
        break;
      }
      default: break;
    }
    hcl::HclProgram next = detail::recompile_touched(plan, program, touched, ctx, trace);
    return {std::move(plan), std::move(next)};
  }

  // Code-level edits: mutate the program, then re-lift to resync the plan.
  hcl::Block* block = detail::find_block(program, edit.block);
  if (!block) throw Error(ErrorCode::locus_not_found, "no block " + edit.block);
  const schema::KindSchema* ks = ctx.registry->find_by_kind(block->labels[0]);
  synth::SymbolTable symtab;
  for (const auto& n : plan.nodes) symtab.kind_of[n.id] = n.kind;
  // AddNode-created targets may be missing from the stale plan; derive the
  // rest of the table from the program itself.
  for (const auto& b : program.blocks)
    if (b.type == "resource") symtab.kind_of.emplace(b.labels[1], b.labels[0]);

  switch (edit.op) {
    case Edit::Op::add_required_field: {
      if (block->attribute(edit.field))
        throw Error(ErrorCode::locus_not_found,
                    "field already present: " + edit.block + "." + edit.field);
      hcl::HclExpr expr = synth::detail::value_to_expr(edit.value, symtab);
      int rank = detail::attr_rank(edit.field, ks);
      auto it = block->attributes.begin();
      while (it != block->attributes.end() && detail::attr_rank(it->first, ks) <= rank) ++it;
      block->attributes.insert(it, {edit.field, std::move(expr)});
      break;
    }
    case Edit::Op::correct_reference: {
      hcl::HclExpr* attr = block->attribute(edit.field);
      if (!symtab.has(edit.new_target))
        throw Error(ErrorCode::locus_not_found, "no target node " + edit.new_target);
      hcl::HclExpr expr = symtab.reference_expr(edit.new_target, {"id"});
      if (attr) {
        *attr = std::move(expr);
      } else {
        int rank = detail::attr_rank(edit.field, ks);
        auto it = block->attributes.begin();
        while (it != block->attributes.end() && detail::attr_rank(it->first, ks) <= rank) ++it;
        block->attributes.insert(it, {edit.field, std::move(expr)});
      }
      break;
    }
    case Edit::Op::rename_attribute: {
      bool renamed = false;
      for (auto& [name, _] : block->attributes)
        if (name == edit.old_name) {
          name = edit.new_name;
          renamed = true;
          break;
        }
      if (!renamed)
        throw Error(ErrorCode::locus_not_found,
                    "no attribute " + edit.old_name + " on " + edit.block);
      break;
    }
    case Edit::Op::set_attribute_value: {
      hcl::HclExpr expr = synth::detail::value_to_expr(edit.value, symtab);
      if (hcl::HclExpr* attr = block->attribute(edit.field)) {
        if (attr->kind == hcl::HclExpr::Kind::map && expr.kind == hcl::HclExpr::Kind::map) {
          detail::merge_map_value(*attr, expr);
        } else {
          *attr = std::move(expr);
        }
      } else {
        int rank = detail::attr_rank(edit.field, ks);
        auto it = block->attributes.begin();
        while (it != block->attributes.end() && detail::attr_rank(it->first, ks) <= rank) ++it;
        block->attributes.insert(it, {edit.field, std::move(expr)});
      }
      break;
    }
    default: break;
  }

  iir::Plan next = hcl::lift(program, *ctx.registry);
  next.specs = plan.specs;
  for (auto& n : next.nodes)
    if (const iir::ResourceNode* old = plan.node(n.id)) n.metadata = old->metadata;
  return {std::move(next), std::move(program)};
}

}  // namespace iacforge::repair
