#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "iacforge/decimal.hpp"
#include "iacforge/digest.hpp"
#include "iacforge/errors.hpp"
#include "iacforge/json_text.hpp"

namespace iacforge::iir {

// ---------------------------------------------------------------------------
// Value domain
// ---------------------------------------------------------------------------

enum class ValueType { string, integer, boolean, decimal, list, map, reference };

inline const char* value_type_name(ValueType t) {
  switch (t) {
    case ValueType::string: return "string";
    case ValueType::integer: return "int";
    case ValueType::boolean: return "bool";
    case ValueType::decimal: return "decimal";
    case ValueType::list: return "list";
    case ValueType::map: return "map";
    case ValueType::reference: return "reference";
  }
  return "?";
}

inline ValueType value_type_from_name(std::string_view n) {
  if (n == "string") return ValueType::string;
  if (n == "int") return ValueType::integer;
  if (n == "bool") return ValueType::boolean;
  if (n == "decimal") return ValueType::decimal;
  if (n == "list") return ValueType::list;
  if (n == "map") return ValueType::map;
  if (n == "reference") return ValueType::reference;
  throw Error(ErrorCode::parse_error, "unknown value type: " + std::string(n));
}

/// Reference to another node's exported attribute. An empty path refers to
/// the resource itself (the form `kind.name` in HCL).
struct Reference {
  std::string target;
  std::vector<std::string> path;

  friend bool operator==(const Reference&, const Reference&) = default;
  friend auto operator<=>(const Reference&, const Reference&) = default;

  [[nodiscard]] std::string to_string() const {
    std::string s = target;
    for (const auto& p : path) s += "." + p;
    return s;
  }

  static Reference parse(std::string_view text) {
    Reference r;
    std::size_t start = 0;
    while (start <= text.size()) {
      std::size_t dot = text.find('.', start);
      std::string part(text.substr(start, dot == std::string_view::npos ? dot : dot - start));
      if (part.empty()) throw Error(ErrorCode::parse_error, "bad $ref: " + std::string(text));
      if (r.target.empty() && start == 0)
        r.target = part;
      else
        r.path.push_back(part);
      if (dot == std::string_view::npos) break;
      start = dot + 1;
    }
    return r;
  }
};

struct TypedValue {
  ValueType type = ValueType::string;
  std::string str;
  std::int64_t integer = 0;
  bool boolean = false;
  Decimal decimal;
  std::vector<TypedValue> list;
  std::map<std::string, TypedValue> map;
  Reference ref;

  static TypedValue make_string(std::string s) {
    TypedValue v;
    v.type = ValueType::string;
    v.str = std::move(s);
    return v;
  }
  static TypedValue make_int(std::int64_t i) {
    TypedValue v;
    v.type = ValueType::integer;
    v.integer = i;
    return v;
  }
  static TypedValue make_bool(bool b) {
    TypedValue v;
    v.type = ValueType::boolean;
    v.boolean = b;
    return v;
  }
  static TypedValue make_decimal(Decimal d) {
    TypedValue v;
    v.type = ValueType::decimal;
    v.decimal = d;
    return v;
  }
  static TypedValue make_list(std::vector<TypedValue> items) {
    TypedValue v;
    v.type = ValueType::list;
    v.list = std::move(items);
    return v;
  }
  static TypedValue make_map(std::map<std::string, TypedValue> entries) {
    TypedValue v;
    v.type = ValueType::map;
    v.map = std::move(entries);
    return v;
  }
  static TypedValue make_ref(std::string target, std::vector<std::string> path = {"id"}) {
    TypedValue v;
    v.type = ValueType::reference;
    v.ref = Reference{std::move(target), std::move(path)};
    return v;
  }

  friend bool operator==(const TypedValue& a, const TypedValue& b) {
    if (a.type != b.type) return false;
    switch (a.type) {
      case ValueType::string: return a.str == b.str;
      case ValueType::integer: return a.integer == b.integer;
      case ValueType::boolean: return a.boolean == b.boolean;
      case ValueType::decimal: return a.decimal == b.decimal;
      case ValueType::list: return a.list == b.list;
      case ValueType::map: return a.map == b.map;
      case ValueType::reference: return a.ref == b.ref;
    }
    return false;
  }
};

// ---------------------------------------------------------------------------
// Effects
// ---------------------------------------------------------------------------

/// Deferred obligations attached to nodes; validators discharge them on the
/// compiled program. Closed enumeration; serialized as the lowercase name.
enum class Effect {
  encrypt_at_rest,
  least_privilege,
  restricted_ingress,
  region_pinned,
  tagged,
  redundant,
};

inline constexpr Effect kAllEffects[] = {
    Effect::encrypt_at_rest,   Effect::least_privilege, Effect::restricted_ingress,
    Effect::region_pinned,     Effect::tagged,          Effect::redundant,
};

inline const char* effect_name(Effect e) {
  switch (e) {
    case Effect::encrypt_at_rest: return "encrypt_at_rest";
    case Effect::least_privilege: return "least_privilege";
    case Effect::restricted_ingress: return "restricted_ingress";
    case Effect::region_pinned: return "region_pinned";
    case Effect::tagged: return "tagged";
    case Effect::redundant: return "redundant";
  }
  return "?";
}

inline Effect effect_from_name(std::string_view n) {
  for (Effect e : kAllEffects)
    if (n == effect_name(e)) return e;
  throw Error(ErrorCode::parse_error, "unknown effect: " + std::string(n));
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

inline bool valid_identifier(std::string_view id) {
  if (id.empty()) return false;
  if (id[0] < 'a' || id[0] > 'z') return false;
  for (char c : id)
    if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_')) return false;
  return true;
}

struct ResourceNode {
  std::string id;
  std::string kind;
  std::string provider;
  std::string region;
  std::vector<std::pair<std::string, TypedValue>> fields;  // insertion-ordered
  std::set<Effect> effects;
  /// Out-of-band annotations (provider version pins). Never part of the
  /// canonical serialization, equivalence, or the wire format.
  std::map<std::string, std::string> metadata;

  [[nodiscard]] const TypedValue* field(std::string_view name) const {
    for (const auto& [n, v] : fields)
      if (n == name) return &v;
    return nullptr;
  }

  void set_field(std::string name, TypedValue v) {
    for (auto& [n, existing] : fields) {
      if (n == name) {
        existing = std::move(v);
        return;
      }
    }
    fields.emplace_back(std::move(name), std::move(v));
  }

  bool remove_field(std::string_view name) {
    for (auto it = fields.begin(); it != fields.end(); ++it) {
      if (it->first == name) {
        fields.erase(it);
        return true;
      }
    }
    return false;
  }

  friend bool operator==(const ResourceNode& a, const ResourceNode& b) {
    return a.id == b.id && a.kind == b.kind && a.provider == b.provider && a.region == b.region &&
           a.fields == b.fields && a.effects == b.effects;  // metadata intentionally ignored
  }
};

enum class Proto { tcp, udp, icmp };

inline const char* proto_name(Proto p) {
  switch (p) {
    case Proto::tcp: return "tcp";
    case Proto::udp: return "udp";
    case Proto::icmp: return "icmp";
  }
  return "?";
}

inline Proto proto_from_name(std::string_view n) {
  if (n == "tcp") return Proto::tcp;
  if (n == "udp") return Proto::udp;
  if (n == "icmp") return Proto::icmp;
  throw Error(ErrorCode::parse_error, "unknown protocol: " + std::string(n));
}

struct PlanEdge {
  enum class Type { depends, connects };
  Type type = Type::depends;
  std::string src;
  std::string dst;
  Proto proto = Proto::tcp;   // connects only
  std::uint16_t port = 0;     // connects only

  static PlanEdge depends(std::string src, std::string dst) {
    PlanEdge e;
    e.type = Type::depends;
    e.src = std::move(src);
    e.dst = std::move(dst);
    return e;
  }
  static PlanEdge connects(std::string src, std::string dst, Proto proto, std::uint16_t port) {
    PlanEdge e;
    e.type = Type::connects;
    e.src = std::move(src);
    e.dst = std::move(dst);
    e.proto = proto;
    e.port = port;
    return e;
  }

  [[nodiscard]] auto sort_key() const {
    return std::tuple(static_cast<int>(type), src, dst, static_cast<int>(proto),
                      type == Type::connects ? port : std::uint16_t{0});
  }

  friend bool operator==(const PlanEdge& a, const PlanEdge& b) {
    return a.sort_key() == b.sort_key();
  }
  friend bool operator<(const PlanEdge& a, const PlanEdge& b) { return a.sort_key() < b.sort_key(); }
};

struct ConstraintSet {
  std::optional<Decimal> budget_ceiling;            // currency/month
  std::optional<std::set<std::string>> residency;   // allowed region codes
  std::set<Effect> required_effects;
  std::optional<std::int64_t> availability_zones_min;

  friend bool operator==(const ConstraintSet&, const ConstraintSet&) = default;
};

struct Plan {
  std::vector<ResourceNode> nodes;
  std::vector<PlanEdge> edges;
  ConstraintSet specs;

  [[nodiscard]] const ResourceNode* node(std::string_view id) const {
    for (const auto& n : nodes)
      if (n.id == id) return &n;
    return nullptr;
  }
  [[nodiscard]] ResourceNode* node(std::string_view id) {
    for (auto& n : nodes)
      if (n.id == id) return &n;
    return nullptr;
  }

  friend bool operator==(const Plan& a, const Plan& b) {
    return a.nodes == b.nodes && a.edges == b.edges && a.specs == b.specs;
  }
};

struct PlanDigest {
  std::string algorithm;
  std::string hex;

  friend bool operator==(const PlanDigest&, const PlanDigest&) = default;
};

/// Schema-class violation found by validate_types. The validators module
/// wraps these into full counterexamples.
struct SchemaCE {
  std::string code;     // missing_required | unknown_field | type_mismatch | ...
  std::string node_id;
  std::string field;
  std::string message;

  friend bool operator==(const SchemaCE&, const SchemaCE&) = default;
};

// ---------------------------------------------------------------------------
// Well-formedness
// ---------------------------------------------------------------------------

namespace detail {

inline void collect_refs(const TypedValue& v, std::vector<const Reference*>& out) {
  switch (v.type) {
    case ValueType::reference: out.push_back(&v.ref); break;
    case ValueType::list:
      for (const auto& item : v.list) collect_refs(item, out);
      break;
    case ValueType::map:
      for (const auto& [_, item] : v.map) collect_refs(item, out);
      break;
    default: break;
  }
}

}  // namespace detail

/// Structural well-formedness: ids unique and well-shaped, edge endpoints
/// and value references resolve, Depends edges are not self-loops, specs
/// invariants hold. Throws malformed_plan on the first violation.
inline void check_well_formed(const Plan& plan) {
  std::unordered_set<std::string> ids;
  for (const auto& n : plan.nodes) {
    if (!valid_identifier(n.id))
      throw Error(ErrorCode::malformed_plan, "node id violates identifier grammar", n.id);
    if (!ids.insert(n.id).second)
      throw Error(ErrorCode::malformed_plan, "duplicate node id", n.id);
  }
  for (const auto& e : plan.edges) {
    if (e.type == PlanEdge::Type::depends && e.src == e.dst)
      throw Error(ErrorCode::malformed_plan, "Depends self-loop", e.src);
    if (!ids.count(e.src))
      throw Error(ErrorCode::malformed_plan, "edge source does not exist", e.src);
    if (!ids.count(e.dst))
      throw Error(ErrorCode::malformed_plan, "edge target does not exist", e.dst);
  }
  for (const auto& n : plan.nodes) {
    std::vector<const Reference*> refs;
    for (const auto& [_, v] : n.fields) detail::collect_refs(v, refs);
    for (const auto* r : refs)
      if (!ids.count(r->target))
        throw Error(ErrorCode::malformed_plan, "value reference to missing node: " + r->target,
                    n.id);
  }
  if (plan.specs.budget_ceiling && plan.specs.budget_ceiling->is_negative())
    throw Error(ErrorCode::malformed_plan, "budget_ceiling must be nonnegative");
  if (plan.specs.residency && plan.specs.residency->empty())
    throw Error(ErrorCode::malformed_plan, "residency set must be non-empty when present");
  if (plan.specs.availability_zones_min && *plan.specs.availability_zones_min < 0)
    throw Error(ErrorCode::malformed_plan, "availability_zones_min must be nonnegative");
}

/// True iff the Depends subgraph has no directed cycle. Connects edges are
/// ignored: connectivity is naturally cyclic. Kahn's algorithm.
inline bool check_acyclic(const Plan& plan) {
  check_well_formed(plan);
  std::unordered_map<std::string, int> indegree;
  std::unordered_map<std::string, std::vector<std::string>> fwd;  // dst -> srcs that depend on it
  for (const auto& n : plan.nodes) indegree[n.id] = 0;
  for (const auto& e : plan.edges) {
    if (e.type != PlanEdge::Type::depends) continue;
    indegree[e.src] += 1;  // src depends on dst: src is ready once dst is placed
    fwd[e.dst].push_back(e.src);
  }
  std::vector<std::string> ready;
  for (const auto& [id, d] : indegree)
    if (d == 0) ready.push_back(id);
  std::size_t placed = 0;
  while (!ready.empty()) {
    std::string id = ready.back();
    ready.pop_back();
    ++placed;
    auto it = fwd.find(id);
    if (it == fwd.end()) continue;
    for (const auto& s : it->second)
      if (--indegree[s] == 0) ready.push_back(s);
  }
  return placed == plan.nodes.size();
}

// ---------------------------------------------------------------------------
// Normalization and equivalence
// ---------------------------------------------------------------------------

/// Canonical form without schema knowledge: reference-implied Depends edges
/// materialized, edges deduped and sorted, nodes sorted by id, fields sorted
/// by name. Idempotent. The overload taking a SchemaRegistry (declared with
/// the registry) additionally expands declared defaults.
inline Plan normalize_plan(const Plan& plan) {
  Plan out = plan;
  for (const auto& n : out.nodes) {
    std::vector<const Reference*> refs;
    for (const auto& [_, v] : n.fields) detail::collect_refs(v, refs);
    for (const auto* r : refs)
      if (r->target != n.id) out.edges.push_back(PlanEdge::depends(n.id, r->target));
  }
  std::sort(out.edges.begin(), out.edges.end());
  out.edges.erase(std::unique(out.edges.begin(), out.edges.end()), out.edges.end());
  std::sort(out.nodes.begin(), out.nodes.end(),
            [](const ResourceNode& a, const ResourceNode& b) { return a.id < b.id; });
  for (auto& n : out.nodes)
    std::sort(n.fields.begin(), n.fields.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

namespace detail {

inline TypedValue rename_refs(const TypedValue& v,
                              const std::unordered_map<std::string, std::string>& renaming) {
  TypedValue out = v;
  switch (v.type) {
    case ValueType::reference: {
      auto it = renaming.find(v.ref.target);
      if (it != renaming.end()) out.ref.target = it->second;
      break;
    }
    case ValueType::list:
      for (auto& item : out.list) item = rename_refs(item, renaming);
      break;
    case ValueType::map:
      for (auto& [_, item] : out.map) item = rename_refs(item, renaming);
      break;
    default: break;
  }
  return out;
}

inline Plan rename_nodes(const Plan& plan,
                         const std::unordered_map<std::string, std::string>& renaming) {
  Plan out = plan;
  for (auto& n : out.nodes) {
    auto it = renaming.find(n.id);
    if (it != renaming.end()) n.id = it->second;
    for (auto& [_, v] : n.fields) v = rename_refs(v, renaming);
  }
  for (auto& e : out.edges) {
    auto s = renaming.find(e.src);
    if (s != renaming.end()) e.src = s->second;
    auto d = renaming.find(e.dst);
    if (d != renaming.end()) e.dst = d->second;
  }
  return out;
}

/// Id-insensitive shape key used to prune the α-renaming search: everything
/// about a node except its own name and the names inside its references.
inline std::string node_shape_key(const ResourceNode& n) {
  JsonTextWriter w;
  w.begin_object();
  w.key("kind");
  w.string(n.kind);
  w.key("provider");
  w.string(n.provider);
  w.key("region");
  w.string(n.region);
  w.key("effects");
  w.begin_array();
  for (Effect e : n.effects) w.string(effect_name(e));
  w.end_array();
  w.key("fields");
  w.begin_array();
  auto sorted = n.fields;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [name, v] : sorted) {
    w.string(name);
    // mask reference targets, keep paths
    std::function<void(const TypedValue&)> emit = [&](const TypedValue& tv) {
      switch (tv.type) {
        case ValueType::string: w.string("s:" + tv.str); break;
        case ValueType::integer: w.string("i:" + std::to_string(tv.integer)); break;
        case ValueType::boolean: w.string(tv.boolean ? "b:1" : "b:0"); break;
        case ValueType::decimal: w.string("d:" + tv.decimal.to_string()); break;
        case ValueType::list:
          w.begin_array();
          for (const auto& item : tv.list) emit(item);
          w.end_array();
          break;
        case ValueType::map:
          w.begin_object();
          for (const auto& [k, item] : tv.map) {
            w.key(k);
            emit(item);
          }
          w.end_object();
          break;
        case ValueType::reference: {
          std::string p;
          for (const auto& part : tv.ref.path) p += "." + part;
          w.string("r:*" + p);
          break;
        }
      }
    };
    emit(v);
  }
  w.end_array();
  w.end_object();
  return w.take();
}

}  // namespace detail

/// Structural equivalence modulo normalization and a consistent α-renaming
/// of node ids: a bijection that preserves kinds, fields, effects, edges and
/// reference structure. Backtracking over shape-compatible candidates; the
/// final check renames and compares whole normalized plans.
inline bool plan_equiv(const Plan& p1, const Plan& p2) {
  Plan a = normalize_plan(p1);
  Plan b = normalize_plan(p2);
  if (a.nodes.size() != b.nodes.size()) return false;
  if (!(a.specs == b.specs)) return false;

  std::unordered_map<std::string, std::vector<std::size_t>> groups_b;
  for (std::size_t j = 0; j < b.nodes.size(); ++j)
    groups_b[detail::node_shape_key(b.nodes[j])].push_back(j);

  std::vector<std::pair<std::size_t, std::string>> order;  // (index in a, shape key)
  for (std::size_t i = 0; i < a.nodes.size(); ++i) {
    std::string key = detail::node_shape_key(a.nodes[i]);
    auto it = groups_b.find(key);
    if (it == groups_b.end() || it->second.empty()) return false;
    order.emplace_back(i, std::move(key));
  }
  // Most-constrained nodes first.
  std::sort(order.begin(), order.end(), [&](const auto& x, const auto& y) {
    return groups_b[x.second].size() < groups_b[y.second].size();
  });

  std::vector<bool> used(b.nodes.size(), false);
  std::unordered_map<std::string, std::string> renaming;

  std::function<bool(std::size_t)> assign = [&](std::size_t idx) -> bool {
    if (idx == order.size()) {
      Plan renamed = normalize_plan(detail::rename_nodes(a, renaming));
      return renamed == b;
    }
    const auto& [i, key] = order[idx];
    for (std::size_t j : groups_b[key]) {
      if (used[j]) continue;
      used[j] = true;
      renaming[a.nodes[i].id] = b.nodes[j].id;
      if (assign(idx + 1)) return true;
      renaming.erase(a.nodes[i].id);
      used[j] = false;
    }
    return false;
  };
  return assign(0);
}

// ---------------------------------------------------------------------------
// Canonical serialization, digest, wire format
// ---------------------------------------------------------------------------

namespace detail {

inline void write_value(JsonTextWriter& w, const TypedValue& v) {
  switch (v.type) {
    case ValueType::string: w.string(v.str); break;
    case ValueType::integer: w.raw_number(std::to_string(v.integer)); break;
    case ValueType::boolean: w.boolean(v.boolean); break;
    case ValueType::decimal: {
      std::string t = v.decimal.to_string();
      if (t.find('.') == std::string::npos) t += ".0";  // keep decimal-ness on the wire
      w.raw_number(t);
      break;
    }
    case ValueType::list:
      w.begin_array();
      for (const auto& item : v.list) write_value(w, item);
      w.end_array();
      break;
    case ValueType::map:
      w.begin_object();
      for (const auto& [k, item] : v.map) {
        w.key(k);
        write_value(w, item);
      }
      w.end_object();
      break;
    case ValueType::reference:
      w.begin_object();
      w.key("$ref");
      w.string(v.ref.to_string());
      w.end_object();
      break;
  }
}

inline void write_specs(JsonTextWriter& w, const ConstraintSet& specs) {
  w.begin_object();
  if (specs.availability_zones_min) {
    w.key("availability_zones_min");
    w.raw_number(std::to_string(*specs.availability_zones_min));
  }
  if (specs.budget_ceiling) {
    w.key("budget_ceiling");
    w.raw_number(specs.budget_ceiling->to_string());
  }
  if (!specs.required_effects.empty()) {
    w.key("required_effects");
    w.begin_array();
    for (Effect e : specs.required_effects) w.string(effect_name(e));
    w.end_array();
  }
  if (specs.residency) {
    w.key("residency");
    w.begin_array();
    for (const auto& r : *specs.residency) w.string(r);
    w.end_array();
  }
  w.end_object();
}

}  // namespace detail

/// Deterministic sorted-key UTF-8 text form of a plan. Metadata is excluded.
/// Callers who want the *canonical* bytes pass a normalized plan; this
/// function serializes exactly what it is given.
inline std::string serialize_plan(const Plan& plan) {
  JsonTextWriter w;
  w.begin_object();
  w.key("edges");
  w.begin_array();
  for (const auto& e : plan.edges) {
    w.begin_object();
    w.key("dst");
    w.string(e.dst);
    if (e.type == PlanEdge::Type::connects) {
      w.key("port");
      w.raw_number(std::to_string(e.port));
      w.key("proto");
      w.string(proto_name(e.proto));
    }
    w.key("src");
    w.string(e.src);
    w.key("type");
    w.string(e.type == PlanEdge::Type::depends ? "depends" : "connects");
    w.end_object();
  }
  w.end_array();
  w.key("nodes");
  w.begin_array();
  for (const auto& n : plan.nodes) {
    w.begin_object();
    w.key("effects");
    w.begin_array();
    for (Effect e : n.effects) w.string(effect_name(e));
    w.end_array();
    w.key("fields");
    w.begin_object();
    auto sorted = n.fields;
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [name, v] : sorted) {
      w.key(name);
      detail::write_value(w, v);
    }
    w.end_object();
    w.key("id");
    w.string(n.id);
    w.key("kind");
    w.string(n.kind);
    w.key("provider");
    w.string(n.provider);
    w.key("region");
    w.string(n.region);
    w.end_object();
  }
  w.end_array();
  w.key("specs");
  detail::write_specs(w, plan.specs);
  w.key("version");
  w.raw_number("1");
  w.end_object();
  return w.take();
}

inline std::string canonical_serialize(const Plan& plan) {
  return serialize_plan(normalize_plan(plan));
}

/// Digest of the named canonical form. α-renaming is *not* quotiented:
/// equivalent-but-renamed plans hash differently by design.
inline PlanDigest plan_digest(const Plan& plan) {
  return PlanDigest{kDigestAlgorithm, sha256_hex(canonical_serialize(plan))};
}

// --- wire format (parse side uses nlohmann; emit side is serialize_plan) ---

namespace detail {

inline Decimal decimal_from_double(double d) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", d);
  return Decimal::parse(buf);
}

inline TypedValue value_from_json(const nlohmann::json& j) {
  using nlohmann::json;
  switch (j.type()) {
    case json::value_t::string: return TypedValue::make_string(j.get<std::string>());
    case json::value_t::boolean: return TypedValue::make_bool(j.get<bool>());
    case json::value_t::number_integer:
    case json::value_t::number_unsigned:
      return TypedValue::make_int(j.get<std::int64_t>());
    case json::value_t::number_float:
      return TypedValue::make_decimal(decimal_from_double(j.get<double>()));
    case json::value_t::array: {
      std::vector<TypedValue> items;
      for (const auto& item : j) items.push_back(value_from_json(item));
      return TypedValue::make_list(std::move(items));
    }
    case json::value_t::object: {
      if (j.size() == 1 && j.contains("$ref")) {
        Reference r = Reference::parse(j.at("$ref").get<std::string>());
        TypedValue v;
        v.type = ValueType::reference;
        v.ref = std::move(r);
        return v;
      }
      std::map<std::string, TypedValue> entries;
      for (auto it = j.begin(); it != j.end(); ++it) entries[it.key()] = value_from_json(*it);
      return TypedValue::make_map(std::move(entries));
    }
    default: throw Error(ErrorCode::parse_error, "unsupported JSON value in fields");
  }
}

inline Decimal decimal_from_json(const nlohmann::json& j, const char* what) {
  if (j.is_string()) return Decimal::parse(j.get<std::string>());
  if (j.is_number_integer() || j.is_number_unsigned()) return Decimal::from_int(j.get<std::int64_t>());
  if (j.is_number_float()) return decimal_from_double(j.get<double>());
  throw Error(ErrorCode::parse_error, std::string("expected decimal for ") + what);
}

}  // namespace detail

inline ConstraintSet constraints_from_json(const nlohmann::json& j) {
  ConstraintSet specs;
  if (j.contains("budget_ceiling"))
    specs.budget_ceiling = detail::decimal_from_json(j.at("budget_ceiling"), "budget_ceiling");
  if (j.contains("residency")) {
    std::set<std::string> regions;
    for (const auto& r : j.at("residency")) regions.insert(r.get<std::string>());
    specs.residency = std::move(regions);
  }
  if (j.contains("required_effects"))
    for (const auto& e : j.at("required_effects"))
      specs.required_effects.insert(effect_from_name(e.get<std::string>()));
  if (j.contains("availability_zones_min"))
    specs.availability_zones_min = j.at("availability_zones_min").get<std::int64_t>();
  return specs;
}

inline Plan plan_from_json(const nlohmann::json& j) {
  Plan plan;
  if (j.contains("specs")) plan.specs = constraints_from_json(j.at("specs"));
  for (const auto& jn : j.value("nodes", nlohmann::json::array())) {
    ResourceNode n;
    n.id = jn.at("id").get<std::string>();
    n.kind = jn.at("kind").get<std::string>();
    n.provider = jn.value("provider", "aws");
    n.region = jn.value("region", "");
    if (jn.contains("fields"))
      for (auto it = jn.at("fields").begin(); it != jn.at("fields").end(); ++it)
        n.fields.emplace_back(it.key(), detail::value_from_json(*it));
    if (jn.contains("effects"))
      for (const auto& e : jn.at("effects")) n.effects.insert(effect_from_name(e.get<std::string>()));
    plan.nodes.push_back(std::move(n));
  }
  for (const auto& je : j.value("edges", nlohmann::json::array())) {
    std::string type = je.at("type").get<std::string>();
    if (type == "depends") {
      plan.edges.push_back(
          PlanEdge::depends(je.at("src").get<std::string>(), je.at("dst").get<std::string>()));
    } else if (type == "connects") {
      auto port = je.at("port").get<std::int64_t>();
      if (port < 0 || port > 65535)
        throw Error(ErrorCode::parse_error, "port out of range: " + std::to_string(port));
      plan.edges.push_back(PlanEdge::connects(
          je.at("src").get<std::string>(), je.at("dst").get<std::string>(),
          proto_from_name(je.at("proto").get<std::string>()), static_cast<std::uint16_t>(port)));
    } else {
      throw Error(ErrorCode::parse_error, "unknown edge type: " + type);
    }
  }
  return plan;
}

inline Plan plan_from_json_text(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::parse_error, std::string("plan JSON: ") + e.what());
  }
  return plan_from_json(j);
}

}  // namespace iacforge::iir
