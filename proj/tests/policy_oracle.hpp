#pragma once

// Brute-force policy oracle: a direct interpreter over the rule JSON and a
// freshly reparsed program. Shares no evaluation code with the engine.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "iacforge/hcl.hpp"

#include <nlohmann/json.hpp>

namespace policy_oracle {

using namespace iacforge;

struct OracleBlock {
  std::string kind, name, address;
  std::map<std::string, hcl::HclExpr> attrs;
  std::set<std::string> effects;
  struct Ingress {
    std::string cidr;
    long port;
  };
  std::vector<Ingress> open;
};

inline std::vector<OracleBlock> oracle_blocks(const std::string& program_text) {
  std::vector<OracleBlock> out;
  hcl::HclProgram prog = hcl::parse(program_text);
  for (const auto& b : prog.blocks) {
    if (b.type != "resource") continue;
    OracleBlock ob;
    ob.kind = b.labels[0];
    ob.name = b.labels[1];
    ob.address = ob.kind + "." + ob.name;
    for (const auto& [k, v] : b.attributes) {
      ob.attrs[k] = v;
      if (k == "effects" && v.kind == hcl::HclExpr::Kind::list)
        for (const auto& item : v.items) ob.effects.insert(item.str);
      if (k == "ingress" && v.kind == hcl::HclExpr::Kind::list) {
        for (const auto& item : v.items) {
          std::string cidr;
          long port = 0;
          for (const auto& [ek, ev] : item.entries) {
            if (ek == "cidr") cidr = ev.str;
            if (ek == "port") port = static_cast<long>(ev.num.scaled() / Decimal::kScale);
          }
          if (!cidr.empty()) ob.open.push_back({cidr, port});
        }
      }
    }
    for (const auto& nested : b.nested) {
      if (nested.type != "ingress") continue;
      const hcl::HclExpr* cidr = nested.attribute("cidr");
      if (!cidr || cidr->kind != hcl::HclExpr::Kind::string) continue;
      long port = 0;
      if (const hcl::HclExpr* p = nested.attribute("port"))
        port = static_cast<long>(p->num.scaled() / Decimal::kScale);
      ob.open.push_back({cidr->str, port});
    }
    out.push_back(std::move(ob));
  }
  return out;
}

inline bool oracle_pred(const nlohmann::json& pred, const OracleBlock& b) {
  std::string key = pred.begin().key();
  const nlohmann::json& body = *pred.begin();
  if (key == "field_equals") {
    auto it = b.attrs.find(body.at("field").get<std::string>());
    if (it == b.attrs.end()) return false;
    const hcl::HclExpr& e = it->second;
    const nlohmann::json& want = body.at("value");
    if (want.is_string()) return e.kind == hcl::HclExpr::Kind::string && e.str == want;
    if (want.is_boolean()) return e.kind == hcl::HclExpr::Kind::boolean && e.b == want;
    if (want.is_number_integer())
      return e.kind == hcl::HclExpr::Kind::number && !e.decimal_form &&
             e.num == Decimal::from_int(want.get<std::int64_t>());
    return false;
  }
  if (key == "field_member_of") {
    auto it = b.attrs.find(body.at("field").get<std::string>());
    if (it == b.attrs.end() || it->second.kind != hcl::HclExpr::Kind::string) return false;
    for (const auto& v : body.at("values"))
      if (v.get<std::string>() == it->second.str) return true;
    return false;
  }
  if (key == "field_present") return b.attrs.count(body.at("field").get<std::string>()) > 0;
  if (key == "port_range") {
    std::string cidr = body.value("cidr", "0.0.0.0/0");
    for (const auto& ing : b.open)
      if (ing.cidr == cidr && ing.port >= body.at("min").get<long>() &&
          ing.port <= body.at("max").get<long>())
        return false;
    return true;
  }
  if (key == "effect_required") return b.effects.count(body.at("effect").get<std::string>()) > 0;
  if (key == "tag_present") {
    auto it = b.attrs.find("tags");
    if (it == b.attrs.end() || it->second.kind != hcl::HclExpr::Kind::map) return false;
    for (const auto& [k, _] : it->second.entries)
      if (k == body.at("key").get<std::string>()) return true;
    return false;
  }
  if (key == "all") {
    for (const auto& c : body)
      if (!oracle_pred(c, b)) return false;
    return true;
  }
  if (key == "any") {
    for (const auto& c : body)
      if (oracle_pred(c, b)) return true;
    return false;
  }
  if (key == "not") return !oracle_pred(body, b);
  throw std::runtime_error("oracle: unknown predicate " + key);
}

/// (rule id, block address) -> verdict, interpreted straight from rule JSON.
inline std::map<std::pair<std::string, std::string>, bool> oracle_verdicts(
    const std::string& program_text, const nlohmann::json& rules_json) {
  std::map<std::pair<std::string, std::string>, bool> verdicts;
  auto blocks = oracle_blocks(program_text);
  for (const auto& rule : rules_json.at("rules")) {
    std::set<std::string> kinds;
    if (rule.contains("target"))
      for (const auto& k : rule.at("target").value("kinds", nlohmann::json::array()))
        kinds.insert(k.get<std::string>());
    for (const auto& b : blocks) {
      if (!kinds.empty() && !kinds.count(b.kind)) continue;
      verdicts[{rule.at("id").get<std::string>(), b.address}] =
          oracle_pred(rule.at("predicate"), b);
    }
  }
  return verdicts;
}

}  // namespace policy_oracle
