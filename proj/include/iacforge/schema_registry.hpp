#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iacforge/iir.hpp"

namespace iacforge::schema {

struct FieldDecl {
  std::string name;
  iir::ValueType type = iir::ValueType::string;
  std::string ref_kind;  // set when type == reference
  bool required = false;
  std::optional<iir::TypedValue> default_value;
  std::optional<std::vector<std::string>> allowed_values;  // string fields only

  [[nodiscard]] std::string type_string() const {
    if (type == iir::ValueType::reference) return "reference(" + ref_kind + ")";
    return iir::value_type_name(type);
  }
};

struct KindSchema {
  std::string kind;
  std::string provider;
  std::string version;  // semver
  std::vector<FieldDecl> fields;
  std::set<std::string> regions_available;

  [[nodiscard]] const FieldDecl* field(std::string_view name) const {
    for (const auto& f : fields)
      if (f.name == name) return &f;
    return nullptr;
  }
};

/// Provider schema environment: the typing context every stage consults.
/// Immutable after load; deterministic load gives an identical digest.
class SchemaRegistry {
 public:
  std::string registry_version;
  std::vector<std::string> compatible_versions;
  std::map<std::pair<std::string, std::string>, KindSchema> kinds;  // (provider, kind)
  std::string digest;

  [[nodiscard]] const KindSchema* find(std::string_view provider, std::string_view kind) const {
    auto it = kinds.find({std::string(provider), std::string(kind)});
    return it == kinds.end() ? nullptr : &it->second;
  }

  /// Kind lookup without a provider; used by the lifter, which sees bare
  /// resource types. Ambiguity across providers is a hard error.
  [[nodiscard]] const KindSchema* find_by_kind(std::string_view kind) const {
    const KindSchema* found = nullptr;
    for (const auto& [key, ks] : kinds) {
      if (key.second == kind) {
        if (found)
          throw Error(ErrorCode::unknown_kind, "kind is ambiguous across providers",
                      std::string(kind));
        found = &ks;
      }
    }
    return found;
  }

  [[nodiscard]] const KindSchema& require(const iir::ResourceNode& n) const {
    const KindSchema* ks = find(n.provider, n.kind);
    if (!ks)
      throw Error(ErrorCode::unknown_kind, "kind not in registry: " + n.provider + "/" + n.kind,
                  n.id);
    return *ks;
  }

  [[nodiscard]] bool version_compatible(const std::string& v) const {
    if (v == registry_version) return true;
    for (const auto& c : compatible_versions)
      if (c == v) return true;
    return false;
  }

  [[nodiscard]] std::string canonical_serialize() const {
    JsonTextWriter w;
    w.begin_object();
    w.key("compatible_versions");
    w.begin_array();
    for (const auto& v : compatible_versions) w.string(v);
    w.end_array();
    w.key("kinds");
    w.begin_array();
    for (const auto& [_, ks] : kinds) {
      w.begin_object();
      w.key("fields");
      w.begin_array();
      for (const auto& f : ks.fields) {
        w.begin_object();
        if (f.allowed_values) {
          w.key("allowed");
          w.begin_array();
          for (const auto& a : *f.allowed_values) w.string(a);
          w.end_array();
        }
        if (f.default_value) {
          w.key("default");
          iir::detail::write_value(w, *f.default_value);
        }
        w.key("name");
        w.string(f.name);
        w.key("required");
        w.boolean(f.required);
        w.key("type");
        w.string(f.type_string());
        w.end_object();
      }
      w.end_array();
      w.key("kind");
      w.string(ks.kind);
      w.key("provider");
      w.string(ks.provider);
      w.key("regions");
      w.begin_array();
      for (const auto& r : ks.regions_available) w.string(r);
      w.end_array();
      w.key("version");
      w.string(ks.version);
      w.end_object();
    }
    w.end_array();
    w.key("registry_version");
    w.string(registry_version);
    w.end_object();
    return w.take();
  }
};

namespace detail {

inline std::pair<int, int> line_col(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

inline FieldDecl field_decl_from_json(const nlohmann::json& jf) {
  FieldDecl f;
  f.name = jf.at("name").get<std::string>();
  std::string type = jf.at("type").get<std::string>();
  if (type.rfind("reference(", 0) == 0 && type.back() == ')') {
    f.type = iir::ValueType::reference;
    f.ref_kind = type.substr(10, type.size() - 11);
    if (f.ref_kind.empty())
      throw Error(ErrorCode::parse_error, "reference type needs a kind: " + f.name);
  } else {
    f.type = iir::value_type_from_name(type);
  }
  f.required = jf.value("required", false);
  if (jf.contains("default")) {
    if (f.required)
      throw Error(ErrorCode::parse_error, "required field may not declare a default: " + f.name);
    f.default_value = iir::detail::value_from_json(jf.at("default"));
  }
  if (jf.contains("allowed")) {
    std::vector<std::string> allowed;
    for (const auto& a : jf.at("allowed")) allowed.push_back(a.get<std::string>());
    if (allowed.empty())
      throw Error(ErrorCode::parse_error, "allowed set must be non-empty: " + f.name);
    f.allowed_values = std::move(allowed);
  }
  return f;
}

}  // namespace detail

inline SchemaRegistry registry_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    auto [line, col] = detail::line_col(text, e.byte > 0 ? e.byte - 1 : 0);
    throw Error(ErrorCode::parse_error, "registry JSON at line " + std::to_string(line) +
                                            ", column " + std::to_string(col) + ": " + e.what());
  }
  SchemaRegistry reg;
  reg.registry_version = j.value("registry_version", "");
  if (j.contains("compatible_versions"))
    for (const auto& v : j.at("compatible_versions"))
      reg.compatible_versions.push_back(v.get<std::string>());
  for (const auto& jk : j.value("kinds", nlohmann::json::array())) {
    KindSchema ks;
    ks.kind = jk.at("kind").get<std::string>();
    ks.provider = jk.value("provider", "aws");
    ks.version = jk.value("version", "0.0.0");
    for (const auto& r : jk.value("regions", nlohmann::json::array()))
      ks.regions_available.insert(r.get<std::string>());
    if (ks.regions_available.empty())
      throw Error(ErrorCode::parse_error, "regions_available must be non-empty", ks.kind);
    std::set<std::string> seen;
    for (const auto& jf : jk.value("fields", nlohmann::json::array())) {
      FieldDecl f = detail::field_decl_from_json(jf);
      if (!seen.insert(f.name).second)
        throw Error(ErrorCode::parse_error, "duplicate field name: " + f.name, ks.kind);
      ks.fields.push_back(std::move(f));
    }
    auto key = std::make_pair(ks.provider, ks.kind);
    if (reg.kinds.count(key))
      throw Error(ErrorCode::duplicate_kind, "duplicate kind: " + ks.provider + "/" + ks.kind);
    reg.kinds.emplace(std::move(key), std::move(ks));
  }
  reg.digest = sha256_hex(reg.canonical_serialize());
  return reg;
}

inline SchemaRegistry load_registry(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::config_error, "cannot open registry file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return registry_from_json_text(ss.str());
}

}  // namespace iacforge::schema

namespace iacforge::iir {

namespace detail {

inline bool value_matches_type(const TypedValue& v, const schema::FieldDecl& decl) {
  switch (decl.type) {
    case ValueType::string: return v.type == ValueType::string;
    case ValueType::integer: return v.type == ValueType::integer;
    case ValueType::boolean: return v.type == ValueType::boolean;
    case ValueType::decimal:
      return v.type == ValueType::decimal || v.type == ValueType::integer;
    case ValueType::list: return v.type == ValueType::list;
    case ValueType::map: return v.type == ValueType::map;
    case ValueType::reference: return v.type == ValueType::reference;
  }
  return false;
}

}  // namespace detail

/// Typing judgment over the registry environment: required-field presence,
/// value-domain membership, allowed-value sets, reference target kind
/// compatibility. Returns one SchemaCE per violation; throws only on
/// kinds missing from the registry.
inline std::vector<SchemaCE> validate_types(const Plan& plan, const schema::SchemaRegistry& reg) {
  std::vector<SchemaCE> ces;
  for (const auto& n : plan.nodes) {
    const schema::KindSchema& ks = reg.require(n);
    for (const auto& decl : ks.fields) {
      if (decl.required && n.field(decl.name) == nullptr)
        ces.push_back({"missing_required", n.id, decl.name,
                       "required field '" + decl.name + "' missing on " + n.kind});
    }
    for (const auto& [name, value] : n.fields) {
      const schema::FieldDecl* decl = ks.field(name);
      if (!decl) {
        ces.push_back({"unknown_field", n.id, name,
                       "field '" + name + "' is not declared for kind " + n.kind});
        continue;
      }
      if (!detail::value_matches_type(value, *decl)) {
        ces.push_back({"type_mismatch", n.id, name,
                       "field '" + name + "' expects " + decl->type_string()});
        continue;
      }
      if (decl->allowed_values && value.type == ValueType::string) {
        bool ok = false;
        for (const auto& a : *decl->allowed_values)
          if (a == value.str) ok = true;
        if (!ok)
          ces.push_back({"value_not_allowed", n.id, name,
                         "value '" + value.str + "' not in allowed set for '" + name + "'"});
      }
      if (decl->type == ValueType::reference) {
        const ResourceNode* target = plan.node(value.ref.target);
        if (!target) {
          ces.push_back({"dangling_reference", n.id, name,
                         "reference to missing node '" + value.ref.target + "'"});
        } else if (target->kind != decl->ref_kind) {
          ces.push_back({"reference_kind_mismatch", n.id, name,
                         "field '" + name + "' must reference a " + decl->ref_kind + ", got " +
                             target->kind});
        }
      }
    }
  }
  return ces;
}

/// normalize_plan with schema knowledge: also expands declared defaults.
inline Plan normalize_plan(const Plan& plan, const schema::SchemaRegistry& reg) {
  Plan out = plan;
  for (auto& n : out.nodes) {
    const schema::KindSchema* ks = reg.find(n.provider, n.kind);
    if (!ks) continue;  // unknown kinds surface via validate_types, not here
    for (const auto& decl : ks->fields)
      if (decl.default_value && n.field(decl.name) == nullptr)
        n.set_field(decl.name, *decl.default_value);
  }
  return normalize_plan(out);
}

}  // namespace iacforge::iir

namespace iacforge::schema {

/// Metadata key carrying the pinned provider schema version on each node.
inline constexpr const char* kVersionPinKey = "provider_version";

/// Provider harmonization: concretize regions, expand defaults, pin schema
/// versions into node metadata. Never removes user content and never drops
/// violations silently; residual type CEs stay for validate_types to report.
inline iir::Plan harmonize(const iir::Plan& plan, const SchemaRegistry& reg) {
  iir::check_well_formed(plan);
  iir::Plan out = plan;
  for (auto& n : out.nodes) {
    const KindSchema& ks = reg.require(n);
    if (n.region.empty()) {
      // Abstract node: concretize deterministically, preferring residency.
      std::string chosen;
      if (plan.specs.residency)
        for (const auto& r : *plan.specs.residency)
          if (ks.regions_available.count(r)) {
            chosen = r;
            break;
          }
      if (chosen.empty() && !ks.regions_available.empty()) chosen = *ks.regions_available.begin();
      n.region = chosen;
    }
    if (!ks.regions_available.count(n.region))
      throw Error(ErrorCode::region_unavailable,
                  "kind " + n.kind + " not offered in region " + n.region, n.id);
    auto pin = n.metadata.find(kVersionPinKey);
    if (pin != n.metadata.end() && pin->second != ks.version) {
      if (!reg.version_compatible(pin->second))
        throw Error(ErrorCode::version_conflict,
                    "node pinned to " + pin->second + ", registry offers " + ks.version, n.id);
    }
    n.metadata[kVersionPinKey] = ks.version;
  }
  return iir::normalize_plan(out, reg);
}

}  // namespace iacforge::schema
