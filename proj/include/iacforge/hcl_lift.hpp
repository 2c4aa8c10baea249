#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "iacforge/hcl.hpp"
#include "iacforge/schema_registry.hpp"

namespace iacforge::hcl {

/// Reserved attribute names on resource blocks. These realize I-IR record
/// parts that plain provider fields cannot carry, so that lifting recovers
/// the full node record (Eq-level round trips need effects and regions back).
inline constexpr const char* kRegionAttr = "region";
inline constexpr const char* kEffectsAttr = "effects";
inline constexpr const char* kDependsOnAttr = "depends_on";

/// Nested rule-block vocabulary realizing Connects edges and open ingress.
inline constexpr const char* kIngressBlock = "ingress";
inline constexpr const char* kEgressBlock = "egress";
inline constexpr const char* kConnectsBlock = "connects";

/// The security_group field holding CIDR-sourced ingress rules; the compiler
/// realizes its entries as nested ingress blocks instead of an attribute.
inline constexpr const char* kOpenIngressField = "ingress";
inline constexpr const char* kSecurityGroupKind = "security_group";

inline bool is_reserved_attr(std::string_view name) {
  return name == kRegionAttr || name == kEffectsAttr || name == kDependsOnAttr;
}

inline bool is_rule_block_type(std::string_view t) {
  return t == kIngressBlock || t == kEgressBlock || t == kConnectsBlock;
}

namespace detail {

struct LiftContext {
  const schema::SchemaRegistry* registry;
  std::map<std::string, std::string> name_to_kind;  // resource name -> kind

  [[nodiscard]] bool resolves(const std::vector<std::string>& path) const {
    if (path.size() < 2) return false;
    auto it = name_to_kind.find(path[1]);
    return it != name_to_kind.end() && it->second == path[0];
  }
};

inline iir::TypedValue expr_to_value(const HclExpr& e, const LiftContext& ctx,
                                     const std::string& locus) {
  switch (e.kind) {
    case HclExpr::Kind::string: return iir::TypedValue::make_string(e.str);
    case HclExpr::Kind::number:
      if (e.decimal_form) return iir::TypedValue::make_decimal(e.num);
      return iir::TypedValue::make_int(e.num.scaled() / Decimal::kScale);
    case HclExpr::Kind::boolean: return iir::TypedValue::make_bool(e.b);
    case HclExpr::Kind::list: {
      std::vector<iir::TypedValue> items;
      for (const auto& item : e.items) items.push_back(expr_to_value(item, ctx, locus));
      return iir::TypedValue::make_list(std::move(items));
    }
    case HclExpr::Kind::map: {
      std::map<std::string, iir::TypedValue> entries;
      for (const auto& [k, v] : e.entries) entries[k] = expr_to_value(v, ctx, locus);
      return iir::TypedValue::make_map(std::move(entries));
    }
    case HclExpr::Kind::reference: {
      if (e.ref_path[0] == "var")
        throw Error(ErrorCode::unresolvable_reference,
                    "variable references are not liftable into I-IR", locus);
      if (!ctx.resolves(e.ref_path)) {
        std::string addr = e.ref_path[0] + "." + (e.ref_path.size() > 1 ? e.ref_path[1] : "?");
        throw Error(ErrorCode::unresolvable_reference, "reference to undeclared " + addr, locus);
      }
      iir::TypedValue v;
      v.type = iir::ValueType::reference;
      v.ref.target = e.ref_path[1];
      v.ref.path.assign(e.ref_path.begin() + 2, e.ref_path.end());
      return v;
    }
    case HclExpr::Kind::hole:
      throw Error(ErrorCode::contract_violation, "cannot lift a skeleton hole", locus);
  }
  throw Error(ErrorCode::contract_violation, "unreachable");
}

inline std::uint16_t rule_port(const Block& rule, const std::string& locus) {
  const HclExpr* p = rule.attribute("port");
  if (!p || p->kind != HclExpr::Kind::number || p->decimal_form)
    throw Error(ErrorCode::parse_error, rule.type + " block needs an integer port", locus);
  std::int64_t v = p->num.scaled() / Decimal::kScale;
  if (v < 0 || v > 65535)
    throw Error(ErrorCode::parse_error, "port out of range: " + std::to_string(v), locus);
  return static_cast<std::uint16_t>(v);
}

inline iir::Proto rule_proto(const Block& rule, const std::string& locus) {
  const HclExpr* p = rule.attribute("protocol");
  if (!p || p->kind != HclExpr::Kind::string)
    throw Error(ErrorCode::parse_error, rule.type + " block needs a protocol string", locus);
  return iir::proto_from_name(p->str);
}

}  // namespace detail

/// Lift: HCL program -> I-IR plan. Resource blocks become nodes, reference
/// expressions become Depends edges plus reference values, rule blocks become
/// Connects edges (or open-ingress entries when CIDR-sourced), and the
/// reserved attributes restore region/effects/extra dependencies.
/// variable/output/module/provider blocks carry no I-IR content and are
/// skipped; the Reviewer handles them.
inline iir::Plan lift(const HclProgram& program, const schema::SchemaRegistry& registry) {
  detail::LiftContext ctx;
  ctx.registry = &registry;
  for (const auto& b : program.blocks) {
    if (b.type != "resource") continue;
    const std::string& kind = b.labels[0];
    const std::string& name = b.labels[1];
    if (const schema::KindSchema* ks = registry.find_by_kind(kind); ks == nullptr)
      throw Error(ErrorCode::unknown_kind, "kind not in registry: " + kind, b.address());
    auto [it, inserted] = ctx.name_to_kind.emplace(name, kind);
    if (!inserted)
      throw Error(ErrorCode::malformed_plan,
                  "resource name '" + name + "' is used by more than one block", b.address());
  }

  iir::Plan plan;
  for (const auto& b : program.blocks) {
    if (b.type != "resource") continue;
    const std::string locus = b.address();
    const schema::KindSchema* ks = registry.find_by_kind(b.labels[0]);
    iir::ResourceNode n;
    n.kind = b.labels[0];
    n.id = b.labels[1];
    n.provider = ks->provider;

    for (const auto& [name, expr] : b.attributes) {
      if (name == kRegionAttr) {
        if (expr.kind != HclExpr::Kind::string)
          throw Error(ErrorCode::parse_error, "region must be a string", locus);
        n.region = expr.str;
      } else if (name == kEffectsAttr) {
        if (expr.kind != HclExpr::Kind::list)
          throw Error(ErrorCode::parse_error, "effects must be a list of strings", locus);
        for (const auto& item : expr.items) {
          if (item.kind != HclExpr::Kind::string)
            throw Error(ErrorCode::parse_error, "effects entries must be strings", locus);
          n.effects.insert(iir::effect_from_name(item.str));
        }
      } else if (name == kDependsOnAttr) {
        if (expr.kind != HclExpr::Kind::list)
          throw Error(ErrorCode::parse_error, "depends_on must be a list of addresses", locus);
        for (const auto& item : expr.items) {
          if (item.kind != HclExpr::Kind::reference || item.ref_path.size() != 2 ||
              !ctx.resolves(item.ref_path))
            throw Error(ErrorCode::unresolvable_reference, "bad depends_on entry", locus);
          plan.edges.push_back(iir::PlanEdge::depends(n.id, item.ref_path[1]));
        }
      } else {
        iir::TypedValue v = detail::expr_to_value(expr, ctx, locus);
        std::vector<const iir::Reference*> refs;
        iir::detail::collect_refs(v, refs);
        for (const auto* r : refs)
          if (r->target != n.id) plan.edges.push_back(iir::PlanEdge::depends(n.id, r->target));
        n.fields.emplace_back(name, std::move(v));
      }
    }

    // Zero ingress blocks on a security group mean an empty rule list; keep
    // the field explicit so compile/lift round-trips the harmonized default.
    if (n.kind == kSecurityGroupKind && n.field(kOpenIngressField) == nullptr)
      n.set_field(kOpenIngressField, iir::TypedValue::make_list({}));

    for (const auto& rule : b.nested) {
      if (!is_rule_block_type(rule.type))
        throw Error(ErrorCode::unknown_kind, "unknown nested block type '" + rule.type + "'",
                    locus);
      std::uint16_t port = detail::rule_port(rule, locus);
      iir::Proto proto = detail::rule_proto(rule, locus);
      if (rule.type == kIngressBlock) {
        const HclExpr* cidr = rule.attribute("cidr");
        const HclExpr* source = rule.attribute("source");
        if (cidr && cidr->kind == HclExpr::Kind::string) {
          std::map<std::string, iir::TypedValue> entry;
          entry["cidr"] = iir::TypedValue::make_string(cidr->str);
          entry["port"] = iir::TypedValue::make_int(port);
          entry["protocol"] = iir::TypedValue::make_string(iir::proto_name(proto));
          iir::TypedValue* existing = nullptr;
          for (auto& [fn, fv] : n.fields)
            if (fn == kOpenIngressField) existing = &fv;
          if (!existing) {
            n.fields.emplace_back(kOpenIngressField, iir::TypedValue::make_list({}));
            existing = &n.fields.back().second;
          }
          existing->list.push_back(iir::TypedValue::make_map(std::move(entry)));
        } else if (source && source->kind == HclExpr::Kind::reference) {
          if (!ctx.resolves(source->ref_path))
            throw Error(ErrorCode::unresolvable_reference, "ingress source does not resolve",
                        locus);
          plan.edges.push_back(
              iir::PlanEdge::connects(source->ref_path[1], n.id, proto, port));
        } else {
          throw Error(ErrorCode::parse_error, "ingress block needs cidr or source", locus);
        }
      } else if (rule.type == kEgressBlock) {
        const HclExpr* dest = rule.attribute("destination");
        if (!dest || dest->kind != HclExpr::Kind::reference || !ctx.resolves(dest->ref_path))
          throw Error(ErrorCode::parse_error, "egress block needs a resolvable destination",
                      locus);
        plan.edges.push_back(iir::PlanEdge::connects(n.id, dest->ref_path[1], proto, port));
      } else {  // connects
        const HclExpr* to = rule.attribute("to");
        if (!to || to->kind != HclExpr::Kind::reference || !ctx.resolves(to->ref_path))
          throw Error(ErrorCode::parse_error, "connects block needs a resolvable 'to'", locus);
        plan.edges.push_back(iir::PlanEdge::connects(n.id, to->ref_path[1], proto, port));
      }
    }

    plan.nodes.push_back(std::move(n));
  }
  return plan;
}

}  // namespace iacforge::hcl
