#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "iacforge/hcl.hpp"
#include "iacforge/hcl_lift.hpp"
#include "iacforge/iir.hpp"
#include "iacforge/schema_registry.hpp"

namespace iacforge::synth {

// ---------------------------------------------------------------------------
// Symbol table
// ---------------------------------------------------------------------------

/// Node id -> HCL address. Addresses are `<kind>.<id>`; injectivity follows
/// from plan id uniqueness.
struct SymbolTable {
  std::map<std::string, std::string> kind_of;  // node id -> kind

  [[nodiscard]] std::string address(const std::string& node_id) const {
    auto it = kind_of.find(node_id);
    if (it == kind_of.end())
      throw Error(ErrorCode::locus_not_found, "no symbol for node: " + node_id);
    return it->second + "." + node_id;
  }

  /// Reference expression for (node id, attribute path). Empty path yields
  /// the bare two-segment address.
  [[nodiscard]] hcl::HclExpr reference_expr(const std::string& node_id,
                                            const std::vector<std::string>& path) const {
    auto it = kind_of.find(node_id);
    if (it == kind_of.end())
      throw Error(ErrorCode::locus_not_found, "no symbol for node: " + node_id);
    std::vector<std::string> segs{it->second, node_id};
    segs.insert(segs.end(), path.begin(), path.end());
    return hcl::HclExpr::reference(std::move(segs));
  }

  [[nodiscard]] bool has(const std::string& node_id) const { return kind_of.count(node_id) > 0; }
};

// ---------------------------------------------------------------------------
// Skeletons and holes
// ---------------------------------------------------------------------------

struct HoleDesc {
  int id = -1;
  std::string node_id;
  std::string field;
  schema::FieldDecl decl;  // value domain, allowed set, ref kind
};

/// Compiler output T-tilde: a program whose unresolved attribute values are
/// typed holes. Every required field of every resource appears either as an
/// attribute or as a hole.
struct SkeletonProgram {
  hcl::HclProgram program;
  std::vector<HoleDesc> holes;  // document order

  [[nodiscard]] const HoleDesc* hole(int id) const {
    for (const auto& h : holes)
      if (h.id == id) return &h;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Structural compiler C_s
// ---------------------------------------------------------------------------

namespace detail {

inline hcl::HclExpr value_to_expr(const iir::TypedValue& v, const SymbolTable& symtab) {
  using hcl::HclExpr;
  switch (v.type) {
    case iir::ValueType::string: return HclExpr::string_lit(v.str);
    case iir::ValueType::integer:
      return HclExpr::number_lit(Decimal::from_int(v.integer), false);
    case iir::ValueType::decimal: return HclExpr::number_lit(v.decimal, true);
    case iir::ValueType::boolean: return HclExpr::bool_lit(v.boolean);
    case iir::ValueType::list: {
      std::vector<HclExpr> items;
      for (const auto& item : v.list) items.push_back(value_to_expr(item, symtab));
      return HclExpr::list(std::move(items));
    }
    case iir::ValueType::map: {
      std::vector<std::pair<std::string, HclExpr>> entries;
      for (const auto& [k, item] : v.map) entries.emplace_back(k, value_to_expr(item, symtab));
      return HclExpr::map(std::move(entries));
    }
    case iir::ValueType::reference: return symtab.reference_expr(v.ref.target, v.ref.path);
  }
  throw Error(ErrorCode::contract_violation, "unreachable");
}

/// Deterministic topological order of the Depends partial order: among ready
/// nodes, smallest id first.
inline std::vector<std::string> topo_order(const iir::Plan& plan) {
  std::map<std::string, int> pending;  // node -> unplaced dependencies
  std::map<std::string, std::vector<std::string>> dependents;
  for (const auto& n : plan.nodes) pending[n.id] = 0;
  for (const auto& e : plan.edges) {
    if (e.type != iir::PlanEdge::Type::depends) continue;
    pending[e.src] += 1;
    dependents[e.dst].push_back(e.src);
  }
  std::set<std::string> ready;
  for (const auto& [id, c] : pending)
    if (c == 0) ready.insert(id);
  std::vector<std::string> order;
  while (!ready.empty()) {
    std::string id = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(id);
    for (const auto& s : dependents[id])
      if (--pending[s] == 0) ready.insert(s);
  }
  if (order.size() != plan.nodes.size())
    throw Error(ErrorCode::cyclic_plan, "Depends subgraph has a cycle");
  return order;
}

}  // namespace detail

/// C_s: plan -> (skeleton, symbol table). One resource block per node in
/// topological Depends order; required fields become attributes when the plan
/// knows the value and typed holes otherwise; Connects edges are realized as
/// nested rule blocks; CIDR ingress entries on security groups become nested
/// ingress blocks.
inline std::pair<SkeletonProgram, SymbolTable> compile_skeleton(
    const iir::Plan& input, const schema::SchemaRegistry& registry) {
  iir::Plan plan = iir::normalize_plan(input);  // materializes ref-implied edges for topo
  for (const auto& n : plan.nodes) static_cast<void>(registry.require(n));

  SymbolTable symtab;
  for (const auto& n : plan.nodes) symtab.kind_of[n.id] = n.kind;

  std::vector<std::string> order = detail::topo_order(plan);

  SkeletonProgram skel;
  int next_hole = 0;
  for (const auto& id : order) {
    const iir::ResourceNode& n = *plan.node(id);
    const schema::KindSchema& ks = *registry.find(n.provider, n.kind);
    hcl::Block b;
    b.type = "resource";
    b.labels = {n.kind, n.id};

    if (!n.region.empty())
      b.attributes.emplace_back(hcl::kRegionAttr, hcl::HclExpr::string_lit(n.region));

    std::set<std::string> declared;
    bool realize_ingress_as_blocks = n.kind == hcl::kSecurityGroupKind;
    for (const auto& decl : ks.fields) {
      declared.insert(decl.name);
      if (realize_ingress_as_blocks && decl.name == hcl::kOpenIngressField) continue;
      const iir::TypedValue* v = n.field(decl.name);
      if (v) {
        b.attributes.emplace_back(decl.name, detail::value_to_expr(*v, symtab));
      } else if (decl.required) {
        HoleDesc h;
        h.id = next_hole++;
        h.node_id = n.id;
        h.field = decl.name;
        h.decl = decl;
        skel.holes.push_back(h);
        b.attributes.emplace_back(decl.name, hcl::HclExpr::hole(h.id));
      }
    }
    // Plan fields the registry does not declare still compile; the schema
    // validator reports them downstream.
    for (const auto& [name, v] : n.fields) {
      if (declared.count(name)) continue;
      b.attributes.emplace_back(name, detail::value_to_expr(v, symtab));
    }

    if (!n.effects.empty()) {
      std::vector<hcl::HclExpr> items;
      for (iir::Effect e : n.effects)
        items.push_back(hcl::HclExpr::string_lit(iir::effect_name(e)));
      b.attributes.emplace_back(hcl::kEffectsAttr, hcl::HclExpr::list(std::move(items)));
    }

    // Depends edges not implied by reference fields become depends_on.
    std::set<std::string> implied;
    for (const auto& [_, v] : n.fields) {
      std::vector<const iir::Reference*> refs;
      iir::detail::collect_refs(v, refs);
      for (const auto* r : refs) implied.insert(r->target);
    }
    std::set<std::string> extra;
    for (const auto& e : plan.edges)
      if (e.type == iir::PlanEdge::Type::depends && e.src == n.id && !implied.count(e.dst))
        extra.insert(e.dst);
    if (!extra.empty()) {
      std::vector<hcl::HclExpr> items;
      for (const auto& dst : extra) items.push_back(symtab.reference_expr(dst, {}));
      b.attributes.emplace_back(hcl::kDependsOnAttr, hcl::HclExpr::list(std::move(items)));
    }

    // Open (CIDR) ingress entries first, then edge-derived rule blocks.
    if (realize_ingress_as_blocks) {
      if (const iir::TypedValue* open = n.field(hcl::kOpenIngressField);
          open && open->type == iir::ValueType::list) {
        for (const auto& entry : open->list) {
          if (entry.type != iir::ValueType::map) continue;
          hcl::Block rule;
          rule.type = hcl::kIngressBlock;
          auto get = [&](const char* k) -> const iir::TypedValue* {
            auto it = entry.map.find(k);
            return it == entry.map.end() ? nullptr : &it->second;
          };
          if (const auto* cidr = get("cidr"))
            rule.attributes.emplace_back("cidr", detail::value_to_expr(*cidr, symtab));
          if (const auto* port = get("port"))
            rule.attributes.emplace_back("port", detail::value_to_expr(*port, symtab));
          if (const auto* proto = get("protocol"))
            rule.attributes.emplace_back("protocol", detail::value_to_expr(*proto, symtab));
          b.nested.push_back(std::move(rule));
        }
      }
    }
    for (const auto& e : plan.edges) {
      if (e.type != iir::PlanEdge::Type::connects) continue;
      const iir::ResourceNode* src = plan.node(e.src);
      const iir::ResourceNode* dst = plan.node(e.dst);
      hcl::Block rule;
      if (src->kind == hcl::kSecurityGroupKind && e.src == n.id) {
        rule.type = hcl::kEgressBlock;
        rule.attributes.emplace_back("destination", symtab.reference_expr(e.dst, {}));
      } else if (src->kind != hcl::kSecurityGroupKind && dst->kind == hcl::kSecurityGroupKind &&
                 e.dst == n.id) {
        rule.type = hcl::kIngressBlock;
        rule.attributes.emplace_back("source", symtab.reference_expr(e.src, {}));
      } else if (src->kind != hcl::kSecurityGroupKind && dst->kind != hcl::kSecurityGroupKind &&
                 e.src == n.id) {
        rule.type = hcl::kConnectsBlock;
        rule.attributes.emplace_back("to", symtab.reference_expr(e.dst, {}));
      } else {
        continue;
      }
      rule.attributes.emplace_back("port",
                                   hcl::HclExpr::number_lit(Decimal::from_int(e.port), false));
      rule.attributes.emplace_back("protocol", hcl::HclExpr::string_lit(iir::proto_name(e.proto)));
      b.nested.push_back(std::move(rule));
    }

    skel.program.blocks.push_back(std::move(b));
  }
  return {std::move(skel), std::move(symtab)};
}

// ---------------------------------------------------------------------------
// Token patterns and the grammar automaton (Sigma_HCL)
// ---------------------------------------------------------------------------

/// One admissible continuation: a token class, optionally narrowed to a
/// finite text set, an exclusion set, or an integer range.
struct TokenPattern {
  hcl::TokKind kind = hcl::TokKind::end;
  std::optional<std::vector<std::string>> texts;
  std::optional<std::vector<std::string>> excluded;
  bool integer_only = false;
  std::optional<std::pair<std::int64_t, std::int64_t>> int_range;

  [[nodiscard]] bool matches(const hcl::Token& t) const {
    if (t.kind != kind) return false;
    if (texts && std::find(texts->begin(), texts->end(), t.text) == texts->end()) return false;
    if (excluded && std::find(excluded->begin(), excluded->end(), t.text) != excluded->end())
      return false;
    if (kind == hcl::TokKind::number_lit) {
      bool has_dot = t.text.find('.') != std::string::npos;
      if (integer_only && has_dot) return false;
      if (int_range) {
        if (has_dot) return false;
        std::int64_t v = Decimal::parse(t.text).scaled() / Decimal::kScale;
        if (v < int_range->first || v > int_range->second) return false;
      }
    }
    return true;
  }

  [[nodiscard]] std::string describe() const {
    std::string s = hcl::tok_kind_name(kind);
    if (texts) {
      s += " in {";
      for (std::size_t i = 0; i < texts->size(); ++i) {
        if (i) s += ", ";
        s += (*texts)[i];
      }
      s += "}";
    }
    return s;
  }
};

inline bool matches_any(const std::vector<TokenPattern>& pats, const hcl::Token& t) {
  for (const auto& p : pats)
    if (p.matches(t)) return true;
  return false;
}

/// Structural event a grammar step produces, consumed by the provider
/// automaton so the two stay in lock-step without duplicating parse logic.
struct GrammarEvent {
  enum class Kind {
    none,
    block_type,    // top-level block type ident
    label,         // block label string
    block_open,    // '{' after labels
    name_seen,     // identifier at body level, role not yet known
    nested_open,   // nested block: name + '{'
    block_close,   // '}' closing a block body
    attr_name,     // name before '='
    scalar,        // string/number/bool in value position
    ref_seg,       // identifier segment of a reference (index in text2)
    list_open,
    list_close,
    map_open,
    map_key,
    map_close,
    value_done,    // a whole attribute value completed
  };
  Kind kind = Kind::none;
  std::string text;
  int seg_index = 0;
  bool also_value_done = false;  // scalar/close that completes the attr value
};

/// Deterministic pushdown automaton over the token-class alphabet of
/// docs/hcl-subset.ebnf. Tracks only syntax; pairs with the provider-field
/// automaton for schema admissibility.
class GrammarAutomaton {
 public:
  enum class State {
    top,
    label,
    body,
    after_name,
    expr,
    ref_need_dot,
    ref_seg,
    ref_cont,
    list_item,
    list_sep,
    map_key,
    map_eq,
    map_sep,
  };
  enum class Frame { body, list, map };

  [[nodiscard]] bool accepting() const { return state_ == State::top && stack_.empty(); }
  [[nodiscard]] State state() const { return state_; }
  [[nodiscard]] std::optional<Frame> innermost_frame() const {
    if (stack_.empty()) return std::nullopt;
    return stack_.back();
  }
  [[nodiscard]] int block_depth() const {
    int d = 0;
    for (Frame f : stack_)
      if (f == Frame::body) ++d;
    return d;
  }
  [[nodiscard]] int labels_left() const { return labels_left_; }

  /// Admissible token classes in the current state; purely syntactic.
  [[nodiscard]] std::vector<TokenPattern> admissible() const {
    using hcl::TokKind;
    std::vector<TokenPattern> out;
    auto add = [&](TokKind k) {
      TokenPattern p;
      p.kind = k;
      out.push_back(std::move(p));
    };
    switch (state_) {
      case State::top: {
        TokenPattern p;
        p.kind = TokKind::ident;
        p.texts = std::vector<std::string>(std::begin(hcl::kTopBlockTypes),
                                           std::end(hcl::kTopBlockTypes));
        out.push_back(std::move(p));
        break;
      }
      case State::label:
        if (labels_left_ > 0) {
          add(TokKind::string_lit);
        } else {
          add(TokKind::lbrace);
        }
        break;
      case State::body:
        add(TokKind::ident);
        add(TokKind::rbrace);
        break;
      case State::after_name:
        add(TokKind::equals);
        add(TokKind::lbrace);
        break;
      case State::expr:
      case State::list_item:
        add(TokKind::string_lit);
        add(TokKind::number_lit);
        add(TokKind::bool_lit);
        add(TokKind::lbracket);
        add(TokKind::lbrace);
        add(TokKind::ident);
        if (state_ == State::list_item) add(TokKind::rbracket);
        break;
      case State::ref_need_dot: add(TokKind::dot); break;
      case State::ref_seg: add(TokKind::ident); break;
      case State::ref_cont: {
        add(TokKind::dot);
        for (auto& p : after_value_patterns()) out.push_back(p);
        break;
      }
      case State::list_sep:
        add(TokKind::comma);
        add(TokKind::rbracket);
        break;
      case State::map_key:
        add(TokKind::ident);
        add(TokKind::bool_lit);
        add(TokKind::string_lit);
        add(TokKind::rbrace);
        break;
      case State::map_eq: add(TokKind::equals); break;
      case State::map_sep:
        add(TokKind::comma);
        add(TokKind::ident);
        add(TokKind::bool_lit);
        add(TokKind::string_lit);
        add(TokKind::rbrace);
        break;
    }
    return out;
  }

  /// Advances on one token (which must be admissible) and reports the
  /// structural event. Throws dead_state on an inadmissible token.
  GrammarEvent step(const hcl::Token& t) {
    using hcl::TokKind;
    if (!matches_any(admissible(), t))
      throw Error(ErrorCode::dead_state,
                  "token " + std::string(hcl::tok_kind_name(t.kind)) + " '" + t.text +
                      "' not admissible in grammar state");
    GrammarEvent ev;
    switch (state_) {
      case State::top:
        pending_block_type_ = t.text;
        labels_left_ = hcl::label_count(t.text);
        state_ = State::label;
        ev.kind = GrammarEvent::Kind::block_type;
        ev.text = t.text;
        return ev;
      case State::label:
        if (t.kind == TokKind::string_lit) {
          --labels_left_;
          ev.kind = GrammarEvent::Kind::label;
          ev.text = t.text;
          return ev;
        }
        stack_.push_back(Frame::body);
        state_ = State::body;
        ev.kind = GrammarEvent::Kind::block_open;
        return ev;
      case State::body:
        if (t.kind == TokKind::rbrace) return close_body();
        pending_name_ = t.text;
        state_ = State::after_name;
        ev.kind = GrammarEvent::Kind::name_seen;  // classified at '=' or '{'
        ev.text = t.text;
        return ev;
      case State::after_name:
        if (t.kind == TokKind::equals) {
          state_ = State::expr;
          ev.kind = GrammarEvent::Kind::attr_name;
          ev.text = pending_name_;
          return ev;
        }
        stack_.push_back(Frame::body);
        state_ = State::body;
        ev.kind = GrammarEvent::Kind::nested_open;
        ev.text = pending_name_;
        return ev;
      case State::expr:
      case State::list_item:
        if (t.kind == TokKind::rbracket) {  // list_item only: '[' ... ']' or trailing comma
          stack_.pop_back();
          ev.kind = GrammarEvent::Kind::list_close;
          ev.also_value_done = complete_value();
          return ev;
        }
        return begin_value(t);
      case State::ref_need_dot:
        state_ = State::ref_seg;
        ev.kind = GrammarEvent::Kind::none;
        return ev;
      case State::ref_seg:
        ++ref_index_;
        state_ = State::ref_cont;
        ev.kind = GrammarEvent::Kind::ref_seg;
        ev.text = t.text;
        ev.seg_index = ref_index_;
        return ev;
      case State::ref_cont:
        if (t.kind == TokKind::dot) {
          state_ = State::ref_seg;
          ev.kind = GrammarEvent::Kind::none;
          return ev;
        }
        // The reference is complete; this token belongs to the enclosing
        // construct. Finish the value, then re-dispatch.
        {
          bool done = complete_value();
          GrammarEvent inner = step(t);
          inner.also_value_done = inner.also_value_done || done;
          return inner;
        }
      case State::list_sep:
        if (t.kind == TokKind::comma) {
          state_ = State::list_item;
          ev.kind = GrammarEvent::Kind::none;
          return ev;
        }
        stack_.pop_back();
        ev.kind = GrammarEvent::Kind::list_close;
        ev.also_value_done = complete_value();
        return ev;
      case State::map_key:
      case State::map_sep:
        if (t.kind == TokKind::rbrace) {
          stack_.pop_back();
          ev.kind = GrammarEvent::Kind::map_close;
          ev.also_value_done = complete_value();
          return ev;
        }
        if (state_ == State::map_sep && t.kind == TokKind::comma) {
          state_ = State::map_key;
          ev.kind = GrammarEvent::Kind::none;
          return ev;
        }
        state_ = State::map_eq;
        ev.kind = GrammarEvent::Kind::map_key;
        ev.text = t.text;
        return ev;
      case State::map_eq:
        state_ = State::expr;
        ev.kind = GrammarEvent::Kind::none;
        return ev;
    }
    throw Error(ErrorCode::contract_violation, "unreachable grammar state");
  }

 private:
  GrammarEvent begin_value(const hcl::Token& t) {
    using hcl::TokKind;
    GrammarEvent ev;
    switch (t.kind) {
      case TokKind::string_lit:
      case TokKind::number_lit:
      case TokKind::bool_lit:
        ev.kind = GrammarEvent::Kind::scalar;
        ev.text = t.text;
        ev.also_value_done = complete_value();
        return ev;
      case TokKind::lbracket:
        stack_.push_back(Frame::list);
        state_ = State::list_item;
        ev.kind = GrammarEvent::Kind::list_open;
        return ev;
      case TokKind::lbrace:
        stack_.push_back(Frame::map);
        state_ = State::map_key;
        ev.kind = GrammarEvent::Kind::map_open;
        return ev;
      case TokKind::ident:
        ref_index_ = 0;
        state_ = State::ref_need_dot;
        ev.kind = GrammarEvent::Kind::ref_seg;
        ev.text = t.text;
        ev.seg_index = 0;
        return ev;
      default:
        throw Error(ErrorCode::contract_violation, "bad value token");
    }
  }

  /// A value finished; resume per the enclosing frame. Returns true when the
  /// completed value was a whole attribute value (body frame).
  bool complete_value() {
    if (stack_.empty())
      throw Error(ErrorCode::contract_violation, "value outside any frame");
    switch (stack_.back()) {
      case Frame::body: state_ = State::body; return true;
      case Frame::list: state_ = State::list_sep; return false;
      case Frame::map: state_ = State::map_sep; return false;
    }
    return false;
  }

  GrammarEvent close_body() {
    stack_.pop_back();
    GrammarEvent ev;
    ev.kind = GrammarEvent::Kind::block_close;
    state_ = stack_.empty() ? State::top : State::body;
    return ev;
  }

  [[nodiscard]] std::vector<TokenPattern> after_value_patterns() const {
    using hcl::TokKind;
    std::vector<TokenPattern> out;
    auto add = [&](TokKind k) {
      TokenPattern p;
      p.kind = k;
      out.push_back(std::move(p));
    };
    if (stack_.empty()) return out;
    switch (stack_.back()) {
      case Frame::body:
        add(TokKind::ident);
        add(TokKind::rbrace);
        break;
      case Frame::list:
        add(TokKind::comma);
        add(TokKind::rbracket);
        break;
      case Frame::map:
        add(TokKind::comma);
        add(TokKind::ident);
        add(TokKind::bool_lit);
        add(TokKind::string_lit);
        add(TokKind::rbrace);
        break;
    }
    return out;
  }

  State state_ = State::top;
  std::vector<Frame> stack_;
  std::string pending_block_type_;
  std::string pending_name_;
  int labels_left_ = 0;
  int ref_index_ = 0;
};

// ---------------------------------------------------------------------------
// Provider-field automaton (Sigma_prov)
// ---------------------------------------------------------------------------

/// Schema-side admissibility: per resource block it tracks declared fields,
/// the emitted and remaining-required sets, and a per-field value-domain
/// acceptor (allowed-value masks, integer ranges, reference-kind masks).
/// Block close only becomes admissible once every required field is emitted.
class ProviderFieldAutomaton {
 public:
  ProviderFieldAutomaton(const schema::SchemaRegistry& registry,
                         std::map<std::string, std::vector<std::string>> program_addresses)
      : registry_(&registry), program_addresses_(std::move(program_addresses)) {}

  struct AttrDomain {
    enum class Kind {
      none,
      decl,
      region,
      effects,
      depends_on,
      rule_port,
      rule_protocol,
      rule_cidr,
      rule_ref,
      free,
    };
    Kind kind = Kind::none;
    schema::FieldDecl decl;
    int depth = 0;  // container nesting inside the current value
    std::string ref_kind_chosen;
    int ref_segs = 0;
  };

  struct Ctx {
    enum class Type { resource, rule, passthrough };
    Type type = Type::passthrough;
    const schema::KindSchema* ks = nullptr;
    std::string kind;
    std::string name;
    std::string rule_type;
    std::set<std::string> emitted;
    std::string pending_name;
    AttrDomain attr;
  };

  void apply(const GrammarEvent& ev) {
    using K = GrammarEvent::Kind;
    switch (ev.kind) {
      case K::block_type:
        pending_type_ = ev.text;
        pending_labels_.clear();
        break;
      case K::label: pending_labels_.push_back(ev.text); break;
      case K::block_open: {
        Ctx ctx;
        if (pending_type_ == "resource") {
          ctx.type = Ctx::Type::resource;
          ctx.kind = pending_labels_.at(0);
          ctx.name = pending_labels_.at(1);
          ctx.ks = registry_->find_by_kind(ctx.kind);
        }
        stack_.push_back(std::move(ctx));
        break;
      }
      case K::name_seen:
        if (!stack_.empty()) stack_.back().pending_name = ev.text;
        break;
      case K::nested_open: {
        Ctx ctx;
        if (!stack_.empty() && stack_.back().type == Ctx::Type::resource &&
            hcl::is_rule_block_type(ev.text)) {
          ctx.type = Ctx::Type::rule;
          ctx.rule_type = ev.text;
        }
        stack_.push_back(std::move(ctx));
        break;
      }
      case K::block_close: {
        if (!stack_.empty()) {
          if (stack_.back().type == Ctx::Type::resource) {
            closed_[stack_.back().kind].push_back(stack_.back().name);
            used_names_.push_back(stack_.back().name);
          }
          stack_.pop_back();
        }
        break;
      }
      case K::attr_name: {
        Ctx& ctx = stack_.back();
        ctx.emitted.insert(ev.text);
        ctx.attr = AttrDomain{};
        if (ctx.type == Ctx::Type::resource) {
          if (ev.text == hcl::kRegionAttr) {
            ctx.attr.kind = AttrDomain::Kind::region;
          } else if (ev.text == hcl::kEffectsAttr) {
            ctx.attr.kind = AttrDomain::Kind::effects;
          } else if (ev.text == hcl::kDependsOnAttr) {
            ctx.attr.kind = AttrDomain::Kind::depends_on;
          } else if (const schema::FieldDecl* d = ctx.ks ? ctx.ks->field(ev.text) : nullptr) {
            ctx.attr.kind = AttrDomain::Kind::decl;
            ctx.attr.decl = *d;
          } else {
            ctx.attr.kind = AttrDomain::Kind::free;
          }
        } else if (ctx.type == Ctx::Type::rule) {
          if (ev.text == "port") {
            ctx.attr.kind = AttrDomain::Kind::rule_port;
          } else if (ev.text == "protocol") {
            ctx.attr.kind = AttrDomain::Kind::rule_protocol;
          } else if (ev.text == "cidr") {
            ctx.attr.kind = AttrDomain::Kind::rule_cidr;
          } else {
            ctx.attr.kind = AttrDomain::Kind::rule_ref;  // source | destination | to
          }
        } else {
          ctx.attr.kind = AttrDomain::Kind::free;
        }
        break;
      }
      case K::list_open:
      case K::map_open:
        if (!stack_.empty()) ++stack_.back().attr.depth;
        break;
      case K::list_close:
      case K::map_close:
        if (!stack_.empty()) --stack_.back().attr.depth;
        break;
      case K::ref_seg:
        if (!stack_.empty()) {
          stack_.back().attr.ref_segs = ev.seg_index + 1;
          if (ev.seg_index == 0) stack_.back().attr.ref_kind_chosen = ev.text;
        }
        break;
      case K::scalar:
      case K::map_key:
      case K::none:
      case K::value_done: break;
    }
    if (ev.also_value_done && !stack_.empty()) stack_.back().attr = AttrDomain{};
  }

  /// Provider-refined admissible set for the current grammar state. Always a
  /// subset of the grammar automaton's structural set.
  [[nodiscard]] std::vector<TokenPattern> admissible(const GrammarAutomaton& g) const {
    using hcl::TokKind;
    using GS = GrammarAutomaton::State;
    std::vector<TokenPattern> out;
    auto add = [&](TokKind k) {
      TokenPattern p;
      p.kind = k;
      out.push_back(p);
    };
    auto add_texts = [&](TokKind k, std::vector<std::string> texts) {
      if (texts.empty()) return;  // empty mask admits nothing; omit
      std::sort(texts.begin(), texts.end());
      texts.erase(std::unique(texts.begin(), texts.end()), texts.end());
      TokenPattern p;
      p.kind = k;
      p.texts = std::move(texts);
      out.push_back(std::move(p));
    };

    switch (g.state()) {
      case GS::top: {
        TokenPattern p;
        p.kind = TokKind::ident;
        p.texts = std::vector<std::string>(std::begin(hcl::kTopBlockTypes),
                                           std::end(hcl::kTopBlockTypes));
        out.push_back(std::move(p));
        break;
      }
      case GS::label: {
        if (g.labels_left() == 0) {
          add(TokKind::lbrace);
          break;
        }
        if (pending_type_ == "resource") {
          if (pending_labels_.empty()) {
            std::vector<std::string> kinds;
            for (const auto& [key, _] : registry_->kinds) kinds.push_back(key.second);
            add_texts(TokKind::string_lit, std::move(kinds));
          } else {
            TokenPattern p;
            p.kind = TokKind::string_lit;
            if (!used_names_.empty()) p.excluded = used_names_;
            out.push_back(std::move(p));
          }
        } else {
          add(TokKind::string_lit);
        }
        break;
      }
      case GS::body: body_patterns(out); break;
      case GS::after_name: {
        const Ctx& ctx = stack_.back();
        if (ctx.type == Ctx::Type::resource) {
          bool declared = (ctx.ks && ctx.ks->field(ctx.pending_name)) ||
                          hcl::is_reserved_attr(ctx.pending_name);
          // emitted-set membership was updated when the name token arrived? No:
          // emitted is updated at attr_name (on '='), so check here against it.
          if (declared && !ctx.emitted.count(ctx.pending_name)) add(TokKind::equals);
          if (hcl::is_rule_block_type(ctx.pending_name)) add(TokKind::lbrace);
        } else if (ctx.type == Ctx::Type::rule) {
          add(TokKind::equals);
        } else {
          add(TokKind::equals);
          add(TokKind::lbrace);
        }
        break;
      }
      case GS::expr:
      case GS::list_item:
        value_patterns(out, g.state() == GS::list_item);
        break;
      case GS::ref_need_dot: add(TokKind::dot); break;
      case GS::ref_seg: {
        const AttrDomain& a = stack_.back().attr;
        if (a.ref_segs == 1) {
          add_texts(TokKind::ident, ref_name_candidates(a));
        } else {
          add(TokKind::ident);  // attribute path segment
        }
        break;
      }
      case GS::ref_cont: {
        const AttrDomain& a = stack_.back().attr;
        // depends_on entries and rule-block refs are exact two-segment
        // addresses; declared reference fields may carry an attribute path.
        bool allow_path = a.kind != AttrDomain::Kind::depends_on &&
                          a.kind != AttrDomain::Kind::rule_ref;
        if (allow_path) add(TokKind::dot);
        after_value_patterns(g, out);
        break;
      }
      case GS::list_sep:
        add(TokKind::comma);
        add(TokKind::rbracket);
        break;
      case GS::map_key:
        add(TokKind::ident);
        add(TokKind::bool_lit);
        add(TokKind::string_lit);
        add(TokKind::rbrace);
        break;
      case GS::map_eq: add(TokKind::equals); break;
      case GS::map_sep:
        add(TokKind::comma);
        add(TokKind::ident);
        add(TokKind::bool_lit);
        add(TokKind::string_lit);
        add(TokKind::rbrace);
        break;
    }
    return out;
  }

  [[nodiscard]] std::vector<std::string> closed_addresses(const std::string& kind) const {
    std::vector<std::string> out;
    auto it = closed_.find(kind);
    if (it == closed_.end()) return out;
    for (const auto& name : it->second) out.push_back(kind + "." + name);
    return out;
  }

 private:
  void body_patterns(std::vector<TokenPattern>& out) const {
    using hcl::TokKind;
    const Ctx& ctx = stack_.back();
    if (ctx.type == Ctx::Type::resource) {
      std::vector<std::string> names;
      if (ctx.ks)
        for (const auto& f : ctx.ks->fields)
          if (!ctx.emitted.count(f.name)) names.push_back(f.name);
      for (const char* r : {hcl::kRegionAttr, hcl::kEffectsAttr, hcl::kDependsOnAttr})
        if (!ctx.emitted.count(r)) names.push_back(r);
      names.push_back(hcl::kIngressBlock);
      names.push_back(hcl::kEgressBlock);
      names.push_back(hcl::kConnectsBlock);
      std::sort(names.begin(), names.end());
      names.erase(std::unique(names.begin(), names.end()), names.end());
      TokenPattern p;
      p.kind = TokKind::ident;
      p.texts = std::move(names);
      out.push_back(std::move(p));
      bool required_done = true;
      if (ctx.ks)
        for (const auto& f : ctx.ks->fields)
          if (f.required && !ctx.emitted.count(f.name)) required_done = false;
      if (required_done) {
        TokenPattern close;
        close.kind = TokKind::rbrace;
        out.push_back(close);
      }
    } else if (ctx.type == Ctx::Type::rule) {
      std::vector<std::string> names;
      std::vector<std::string> source_attrs;
      if (ctx.rule_type == hcl::kIngressBlock)
        source_attrs = {"cidr", "source"};
      else if (ctx.rule_type == hcl::kEgressBlock)
        source_attrs = {"destination"};
      else
        source_attrs = {"to"};
      bool source_emitted = false;
      for (const auto& s : source_attrs)
        if (ctx.emitted.count(s)) source_emitted = true;
      if (!source_emitted)
        for (const auto& s : source_attrs) names.push_back(s);
      if (!ctx.emitted.count("port")) names.push_back("port");
      if (!ctx.emitted.count("protocol")) names.push_back("protocol");
      std::sort(names.begin(), names.end());
      if (!names.empty()) {
        TokenPattern p;
        p.kind = hcl::TokKind::ident;
        p.texts = std::move(names);
        out.push_back(std::move(p));
      }
      if (source_emitted && ctx.emitted.count("port") && ctx.emitted.count("protocol")) {
        TokenPattern close;
        close.kind = hcl::TokKind::rbrace;
        out.push_back(close);
      }
    } else {
      TokenPattern p;
      p.kind = hcl::TokKind::ident;
      out.push_back(p);
      TokenPattern close;
      close.kind = hcl::TokKind::rbrace;
      out.push_back(close);
    }
  }

  void value_patterns(std::vector<TokenPattern>& out, bool in_list) const {
    using hcl::TokKind;
    const Ctx& ctx = stack_.back();
    const AttrDomain& a = ctx.attr;
    auto add = [&](TokKind k) {
      TokenPattern p;
      p.kind = k;
      out.push_back(p);
    };
    auto any_expr = [&] {
      add(TokKind::string_lit);
      add(TokKind::number_lit);
      add(TokKind::bool_lit);
      add(TokKind::lbracket);
      add(TokKind::lbrace);
      add(TokKind::ident);
    };
    auto add_texts = [&](TokKind k, std::vector<std::string> texts) {
      if (texts.empty()) return;
      std::sort(texts.begin(), texts.end());
      TokenPattern p;
      p.kind = k;
      p.texts = std::move(texts);
      out.push_back(std::move(p));
    };

    if (a.depth > 0) {
      // Inside a container value: elements of effects/depends_on are masked,
      // everything else is structural.
      switch (a.kind) {
        case AttrDomain::Kind::effects: {
          std::vector<std::string> names;
          for (iir::Effect e : iir::kAllEffects) names.push_back(iir::effect_name(e));
          add_texts(TokKind::string_lit, std::move(names));
          break;
        }
        case AttrDomain::Kind::depends_on: {
          std::vector<std::string> kinds;
          for (const auto& [kind, names] : closed_)
            if (!names.empty()) kinds.push_back(kind);
          add_texts(TokKind::ident, std::move(kinds));
          break;
        }
        default: any_expr(); break;
      }
      if (in_list) add(TokKind::rbracket);
      return;
    }

    switch (a.kind) {
      case AttrDomain::Kind::decl:
        switch (a.decl.type) {
          case iir::ValueType::string:
            if (a.decl.allowed_values) {
              add_texts(TokKind::string_lit, *a.decl.allowed_values);
            } else {
              add(TokKind::string_lit);
            }
            break;
          case iir::ValueType::integer: {
            TokenPattern p;
            p.kind = TokKind::number_lit;
            p.integer_only = true;
            out.push_back(p);
            break;
          }
          case iir::ValueType::decimal: add(TokKind::number_lit); break;
          case iir::ValueType::boolean: add(TokKind::bool_lit); break;
          case iir::ValueType::list: add(TokKind::lbracket); break;
          case iir::ValueType::map: add(TokKind::lbrace); break;
          case iir::ValueType::reference: {
            if (!closed_addresses(a.decl.ref_kind).empty())
              add_texts(TokKind::ident, {a.decl.ref_kind});
            break;
          }
        }
        break;
      case AttrDomain::Kind::region: {
        std::vector<std::string> regions;
        if (ctx.ks)
          regions.assign(ctx.ks->regions_available.begin(), ctx.ks->regions_available.end());
        add_texts(TokKind::string_lit, std::move(regions));
        break;
      }
      case AttrDomain::Kind::effects:
      case AttrDomain::Kind::depends_on: add(TokKind::lbracket); break;
      case AttrDomain::Kind::rule_port: {
        TokenPattern p;
        p.kind = TokKind::number_lit;
        p.integer_only = true;
        p.int_range = {0, 65535};
        out.push_back(p);
        break;
      }
      case AttrDomain::Kind::rule_protocol:
        add_texts(TokKind::string_lit, {"tcp", "udp", "icmp"});
        break;
      case AttrDomain::Kind::rule_cidr: add(TokKind::string_lit); break;
      case AttrDomain::Kind::rule_ref: {
        std::vector<std::string> kinds;
        for (const auto& [kind, names] : program_addresses_)
          if (!names.empty()) kinds.push_back(kind);
        add_texts(TokKind::ident, std::move(kinds));
        break;
      }
      case AttrDomain::Kind::free:
      case AttrDomain::Kind::none: any_expr(); break;
    }
    if (in_list) add(TokKind::rbracket);
  }

  [[nodiscard]] std::vector<std::string> ref_name_candidates(const AttrDomain& a) const {
    std::vector<std::string> names;
    if (a.depth > 0 && a.kind == AttrDomain::Kind::depends_on) {
      auto it = closed_.find(a.ref_kind_chosen);
      if (it != closed_.end()) names = it->second;
      return names;
    }
    switch (a.kind) {
      case AttrDomain::Kind::decl: {
        auto it = closed_.find(a.ref_kind_chosen);
        if (it != closed_.end()) names = it->second;
        break;
      }
      case AttrDomain::Kind::rule_ref: {
        auto it = program_addresses_.find(a.ref_kind_chosen);
        if (it != program_addresses_.end()) names = it->second;
        break;
      }
      default: return {};  // free refs: any ident (caller adds unrestricted)
    }
    return names;
  }

  void after_value_patterns(const GrammarAutomaton& g, std::vector<TokenPattern>& out) const {
    using hcl::TokKind;
    auto frame = g.innermost_frame();
    if (!frame) return;
    switch (*frame) {
      case GrammarAutomaton::Frame::body: {
        // The pending attribute value completes here; body admissibility
        // already accounts for it (emitted was updated at attr_name).
        body_patterns(out);
        break;
      }
      case GrammarAutomaton::Frame::list: {
        TokenPattern c;
        c.kind = TokKind::comma;
        out.push_back(c);
        TokenPattern r;
        r.kind = TokKind::rbracket;
        out.push_back(r);
        break;
      }
      case GrammarAutomaton::Frame::map: {
        for (TokKind k : {TokKind::comma, TokKind::ident, TokKind::bool_lit, TokKind::string_lit,
                          TokKind::rbrace}) {
          TokenPattern p;
          p.kind = k;
          out.push_back(p);
        }
        break;
      }
    }
  }

  const schema::SchemaRegistry* registry_;
  std::map<std::string, std::vector<std::string>> program_addresses_;  // kind -> names
  std::map<std::string, std::vector<std::string>> closed_;             // fully emitted blocks
  std::vector<std::string> used_names_;
  std::string pending_type_;
  std::vector<std::string> pending_labels_;
  std::vector<Ctx> stack_;
};

// ---------------------------------------------------------------------------
// Decoder
// ---------------------------------------------------------------------------

/// Composite decoder state: the grammar automaton and the provider-field
/// automaton advanced in lock-step over the emitted token stream.
class DecoderState {
 public:
  DecoderState(const schema::SchemaRegistry& registry,
               std::map<std::string, std::vector<std::string>> program_addresses)
      : provider_(registry, std::move(program_addresses)) {}

  /// Intersection of Sigma_HCL- and Sigma_prov-admissible continuations.
  [[nodiscard]] std::vector<TokenPattern> admissible_tokens() const {
    return provider_.admissible(grammar_);
  }

  /// Emits one token. Verifies it against both automata; a violation is a
  /// dead-state error (a skeleton/automaton inconsistency, surfaced loudly).
  void feed(const hcl::Token& t) {
    if (!matches_any(grammar_.admissible(), t) || !matches_any(admissible_tokens(), t))
      throw Error(ErrorCode::dead_state,
                  "emitted token " + std::string(hcl::tok_kind_name(t.kind)) + " '" + t.text +
                      "' is outside the admissible set");
    GrammarEvent ev = grammar_.step(t);
    provider_.apply(ev);
    ++steps_;
  }

  [[nodiscard]] bool accepting() const { return grammar_.accepting(); }
  [[nodiscard]] std::size_t steps() const { return steps_; }
  [[nodiscard]] const GrammarAutomaton& grammar() const { return grammar_; }
  [[nodiscard]] const ProviderFieldAutomaton& provider() const { return provider_; }

 private:
  GrammarAutomaton grammar_;
  ProviderFieldAutomaton provider_;
  std::size_t steps_ = 0;
};

/// Everything a proposer gets to see for one hole: the typed descriptor and
/// the admissible candidates derived from the automata.
struct HoleContext {
  HoleDesc desc;
  std::vector<std::string> ref_candidates;  // addresses, reference holes only
};

/// Value-granularity admissibility: the whole proposed expression must fit
/// the hole's domain. Token-level verification still happens on emission.
inline bool admissible_value(const HoleContext& ctx, const hcl::HclExpr& e) {
  using hcl::HclExpr;
  const schema::FieldDecl& d = ctx.desc.decl;
  switch (d.type) {
    case iir::ValueType::string:
      if (e.kind != HclExpr::Kind::string) return false;
      if (d.allowed_values)
        return std::find(d.allowed_values->begin(), d.allowed_values->end(), e.str) !=
               d.allowed_values->end();
      return true;
    case iir::ValueType::integer: return e.kind == HclExpr::Kind::number && !e.decimal_form;
    case iir::ValueType::decimal: return e.kind == HclExpr::Kind::number;
    case iir::ValueType::boolean: return e.kind == HclExpr::Kind::boolean;
    case iir::ValueType::list: return e.kind == HclExpr::Kind::list;
    case iir::ValueType::map: return e.kind == HclExpr::Kind::map;
    case iir::ValueType::reference: {
      if (e.kind != HclExpr::Kind::reference) return false;
      if (e.ref_path.size() != 2 && e.ref_path.size() != 3) return false;
      if (e.ref_path.size() == 3 && e.ref_path[2] != "id") return false;
      std::string addr = e.ref_path[0] + "." + e.ref_path[1];
      return std::find(ctx.ref_candidates.begin(), ctx.ref_candidates.end(), addr) !=
             ctx.ref_candidates.end();
    }
  }
  return false;
}

/// The deterministic fallback policy: lexicographically smallest admissible
/// value; numbers take the registry default, else the domain minimum. Also
/// what the decoder force-selects after the proposer retry bound.
inline hcl::HclExpr stub_choice(const HoleContext& ctx) {
  using hcl::HclExpr;
  const schema::FieldDecl& d = ctx.desc.decl;
  switch (d.type) {
    case iir::ValueType::string: {
      if (d.allowed_values)
        return HclExpr::string_lit(*std::min_element(d.allowed_values->begin(),
                                                     d.allowed_values->end()));
      if (d.default_value && d.default_value->type == iir::ValueType::string)
        return HclExpr::string_lit(d.default_value->str);
      return HclExpr::string_lit("");
    }
    case iir::ValueType::integer: {
      if (d.default_value && d.default_value->type == iir::ValueType::integer)
        return HclExpr::number_lit(Decimal::from_int(d.default_value->integer), false);
      return HclExpr::number_lit(Decimal::from_int(0), false);
    }
    case iir::ValueType::decimal: {
      if (d.default_value && d.default_value->type == iir::ValueType::decimal)
        return HclExpr::number_lit(d.default_value->decimal, true);
      return HclExpr::number_lit(Decimal::from_int(0), true);
    }
    case iir::ValueType::boolean: return HclExpr::bool_lit(false);
    case iir::ValueType::list: return HclExpr::list({});
    case iir::ValueType::map: return HclExpr::map({});
    case iir::ValueType::reference: {
      if (ctx.ref_candidates.empty())
        throw Error(ErrorCode::dead_state,
                    "reference hole has no admissible target: " + ctx.desc.node_id + "." +
                        ctx.desc.field);
      std::string addr = *std::min_element(ctx.ref_candidates.begin(), ctx.ref_candidates.end());
      auto dot = addr.find('.');
      return HclExpr::reference({addr.substr(0, dot), addr.substr(dot + 1), "id"});
    }
  }
  throw Error(ErrorCode::contract_violation, "unreachable");
}

/// Hole-filling interface. Implementations: DeterministicStubProposer,
/// RandomizedStubProposer (seeded, for fuzzing), and the remote LLM backend
/// adapter in the agents module. The decoder re-checks every returned value;
/// a misbehaving backend cannot break admissibility.
class Proposer {
 public:
  virtual ~Proposer() = default;
  virtual hcl::HclExpr propose(const HoleContext& ctx) = 0;
};

class DeterministicStubProposer final : public Proposer {
 public:
  hcl::HclExpr propose(const HoleContext& ctx) override { return stub_choice(ctx); }
};

class RandomizedStubProposer final : public Proposer {
 public:
  explicit RandomizedStubProposer(std::uint64_t seed) : rng_(seed) {}

  hcl::HclExpr propose(const HoleContext& ctx) override {
    using hcl::HclExpr;
    const schema::FieldDecl& d = ctx.desc.decl;
    switch (d.type) {
      case iir::ValueType::string: {
        if (d.allowed_values) return HclExpr::string_lit(pick(*d.allowed_values));
        static const std::vector<std::string> pool = {"alpha", "bravo", "10.0.0.0/16", "x"};
        return HclExpr::string_lit(pick(pool));
      }
      case iir::ValueType::integer:
        return HclExpr::number_lit(Decimal::from_int(static_cast<std::int64_t>(rng_() % 100)),
                                   false);
      case iir::ValueType::decimal:
        return HclExpr::number_lit(
            Decimal::from_scaled(static_cast<std::int64_t>(rng_() % 10000) * 10000), true);
      case iir::ValueType::boolean: return HclExpr::bool_lit(rng_() % 2 == 0);
      case iir::ValueType::list: return HclExpr::list({});
      case iir::ValueType::map: return HclExpr::map({});
      case iir::ValueType::reference: {
        if (ctx.ref_candidates.empty()) return HclExpr::reference({"none", "none"});
        std::string addr = pick(ctx.ref_candidates);
        auto dot = addr.find('.');
        return HclExpr::reference({addr.substr(0, dot), addr.substr(dot + 1), "id"});
      }
    }
    return HclExpr::string_lit("");
  }

 private:
  const std::string& pick(const std::vector<std::string>& v) {
    return v[rng_() % v.size()];
  }
  std::mt19937_64 rng_;
};

struct DecodeTrace {
  std::vector<std::string> notes;  // retries, forced selections
  std::size_t steps = 0;
};

namespace detail {

inline hcl::Token make_tok(hcl::TokKind k, std::string text = "") {
  hcl::Token t;
  t.kind = k;
  t.text = std::move(text);
  return t;
}

inline void append_expr_tokens(std::vector<hcl::Token>& out, const hcl::HclExpr& e) {
  using hcl::HclExpr;
  using hcl::TokKind;
  switch (e.kind) {
    case HclExpr::Kind::string: out.push_back(make_tok(TokKind::string_lit, e.str)); break;
    case HclExpr::Kind::number: {
      std::string t = e.num.to_string();
      if (e.decimal_form && t.find('.') == std::string::npos) t += ".0";
      out.push_back(make_tok(TokKind::number_lit, t));
      break;
    }
    case HclExpr::Kind::boolean:
      out.push_back(make_tok(TokKind::bool_lit, e.b ? "true" : "false"));
      break;
    case HclExpr::Kind::list:
      out.push_back(make_tok(TokKind::lbracket));
      for (std::size_t i = 0; i < e.items.size(); ++i) {
        if (i) out.push_back(make_tok(TokKind::comma));
        append_expr_tokens(out, e.items[i]);
      }
      out.push_back(make_tok(TokKind::rbracket));
      break;
    case HclExpr::Kind::map:
      out.push_back(make_tok(TokKind::lbrace));
      for (std::size_t i = 0; i < e.entries.size(); ++i) {
        if (i) out.push_back(make_tok(TokKind::comma));
        out.push_back(make_tok(
            hcl::detail::plain_map_key(e.entries[i].first) ? TokKind::ident : TokKind::string_lit,
            e.entries[i].first));
        out.push_back(make_tok(TokKind::equals));
        append_expr_tokens(out, e.entries[i].second);
      }
      out.push_back(make_tok(TokKind::rbrace));
      break;
    case HclExpr::Kind::reference:
      for (std::size_t i = 0; i < e.ref_path.size(); ++i) {
        if (i) out.push_back(make_tok(TokKind::dot));
        out.push_back(make_tok(TokKind::ident, e.ref_path[i]));
      }
      break;
    case HclExpr::Kind::hole:
      throw Error(ErrorCode::contract_violation, "holes are not tokenizable");
  }
}

inline void substitute_holes(hcl::HclExpr& e, const std::map<int, hcl::HclExpr>& chosen) {
  switch (e.kind) {
    case hcl::HclExpr::Kind::hole: e = chosen.at(e.hole_id); break;
    case hcl::HclExpr::Kind::list:
      for (auto& item : e.items) substitute_holes(item, chosen);
      break;
    case hcl::HclExpr::Kind::map:
      for (auto& [_, v] : e.entries) substitute_holes(v, chosen);
      break;
    default: break;
  }
}

}  // namespace detail

inline constexpr int kProposerRetryBound = 3;

/// D: constrained decoding. Walks the skeleton emitting its token stream
/// through both automata, asking the proposer for each hole value at value
/// granularity, with every token verified against admissible_tokens. With
/// the deterministic stub the output is byte-identical across runs.
inline hcl::HclProgram decode(const SkeletonProgram& skeleton, Proposer& proposer,
                              const schema::SchemaRegistry& registry,
                              DecodeTrace* trace = nullptr) {
  using hcl::TokKind;
  std::map<std::string, std::vector<std::string>> addresses;
  for (const auto& b : skeleton.program.blocks)
    if (b.type == "resource") addresses[b.labels[0]].push_back(b.labels[1]);

  DecoderState st(registry, addresses);
  std::map<int, hcl::HclExpr> chosen;
  std::vector<std::pair<std::string, std::string>> emitted_blocks;  // (kind, name)

  auto feed = [&](const hcl::Token& t) { st.feed(t); };
  auto feed_expr = [&](const hcl::HclExpr& e) {
    std::vector<hcl::Token> toks;
    detail::append_expr_tokens(toks, e);
    for (const auto& t : toks) feed(t);
  };

  std::function<void(const hcl::Block&)> emit_block = [&](const hcl::Block& b) {
    if (b.type == "resource" || hcl::is_top_block_type(b.type)) {
      feed(detail::make_tok(TokKind::ident, b.type));
      for (const auto& l : b.labels) feed(detail::make_tok(TokKind::string_lit, l));
    } else {
      feed(detail::make_tok(TokKind::ident, b.type));
    }
    feed(detail::make_tok(TokKind::lbrace));
    for (const auto& [name, value] : b.attributes) {
      feed(detail::make_tok(TokKind::ident, name));
      feed(detail::make_tok(TokKind::equals));
      if (value.kind == hcl::HclExpr::Kind::hole) {
        const HoleDesc* desc = skeleton.hole(value.hole_id);
        if (!desc)
          throw Error(ErrorCode::contract_violation,
                      "hole " + std::to_string(value.hole_id) + " has no descriptor");
        HoleContext ctx;
        ctx.desc = *desc;
        if (desc->decl.type == iir::ValueType::reference) {
          for (const auto& [kind, bname] : emitted_blocks)
            if (kind == desc->decl.ref_kind) ctx.ref_candidates.push_back(kind + "." + bname);
          if (ctx.ref_candidates.empty())
            throw Error(ErrorCode::dead_state,
                        "required reference field has no admissible target",
                        desc->node_id + "." + desc->field);
        }
        hcl::HclExpr value_expr;
        bool accepted = false;
        for (int attempt = 0; attempt < kProposerRetryBound && !accepted; ++attempt) {
          value_expr = proposer.propose(ctx);
          accepted = admissible_value(ctx, value_expr);
          if (!accepted && trace)
            trace->notes.push_back("proposer returned inadmissible value for " + desc->node_id +
                                   "." + desc->field + " (attempt " +
                                   std::to_string(attempt + 1) + ")");
        }
        if (!accepted) {
          value_expr = stub_choice(ctx);
          if (trace)
            trace->notes.push_back("proposer exhausted retries; force-selected stub value for " +
                                   desc->node_id + "." + desc->field);
        }
        chosen[value.hole_id] = value_expr;
        feed_expr(value_expr);
      } else {
        feed_expr(value);
      }
    }
    for (const auto& nested : b.nested) emit_block(nested);
    feed(detail::make_tok(TokKind::rbrace));
    if (b.type == "resource") emitted_blocks.emplace_back(b.labels[0], b.labels[1]);
  };

  for (const auto& b : skeleton.program.blocks) emit_block(b);
  if (!st.accepting())
    throw Error(ErrorCode::dead_state, "decoder finished in a non-accepting state");

  hcl::HclProgram out = skeleton.program;
  for (auto& b : out.blocks)
    for (auto& [_, v] : b.attributes) detail::substitute_holes(v, chosen);
  if (trace) trace->steps += st.steps();
  return out;
}

}  // namespace iacforge::synth
