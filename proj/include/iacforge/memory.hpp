#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iacforge/iir.hpp"
#include "iacforge/schema_registry.hpp"

namespace iacforge::memory {

/// Symbolic motif signature: the kind multiset, the union of satisfied
/// effects, and a kind-level edge-shape summary. Purely symbolic — the dense
/// graph index the paper sketches is an extension point, not shipped.
struct Signature {
  std::vector<std::string> kinds;          // sorted multiset
  std::set<std::string> effects;           // union over fragment nodes
  std::vector<std::string> edge_shape;     // sorted "depends:src_kind>dst_kind"

  /// Subset match: every motif kind is available in the query multiset and
  /// the motif's effect obligations are within the query's.
  [[nodiscard]] bool subset_of(const Signature& query) const {
    std::map<std::string, int> have;
    for (const auto& k : query.kinds) have[k] += 1;
    for (const auto& k : kinds)
      if (--have[k] < 0) return false;
    for (const auto& e : effects)
      if (!query.effects.count(e)) return false;
    return true;
  }

  [[nodiscard]] nlohmann::json to_json() const {
    return nlohmann::json{{"kinds", kinds},
                          {"effects", std::vector<std::string>(effects.begin(), effects.end())},
                          {"edge_shape", edge_shape}};
  }

  static Signature from_json(const nlohmann::json& j) {
    Signature s;
    for (const auto& k : j.value("kinds", nlohmann::json::array()))
      s.kinds.push_back(k.get<std::string>());
    for (const auto& e : j.value("effects", nlohmann::json::array()))
      s.effects.insert(e.get<std::string>());
    for (const auto& x : j.value("edge_shape", nlohmann::json::array()))
      s.edge_shape.push_back(x.get<std::string>());
    return s;
  }
};

inline Signature compute_signature(const iir::Plan& fragment) {
  Signature s;
  std::map<std::string, std::string> kind_of;
  for (const auto& n : fragment.nodes) {
    s.kinds.push_back(n.kind);
    kind_of[n.id] = n.kind;
    for (iir::Effect e : n.effects) s.effects.insert(iir::effect_name(e));
  }
  std::sort(s.kinds.begin(), s.kinds.end());
  for (const auto& e : fragment.edges) {
    const char* tag = e.type == iir::PlanEdge::Type::depends ? "depends" : "connects";
    s.edge_shape.push_back(std::string(tag) + ":" + kind_of[e.src] + ">" + kind_of[e.dst]);
  }
  std::sort(s.edge_shape.begin(), s.edge_shape.end());
  return s;
}

/// A verified, typed, provider-versioned plan fragment. Motifs hold I-IR
/// only — never code text.
struct Motif {
  std::string id;  // canonical fragment digest; dedup key
  iir::Plan fragment;
  std::string registry_version;
  std::string provenance;  // source run digest
  Signature signature;
  int seq = 0;             // insertion order, newest wins ties

  [[nodiscard]] nlohmann::json to_json() const {
    return nlohmann::json{{"id", id},
                          {"fragment", nlohmann::json::parse(iir::canonical_serialize(fragment))},
                          {"registry_version", registry_version},
                          {"provenance", provenance},
                          {"signature", signature.to_json()},
                          {"seq", seq}};
  }
};

/// Append-only motif store with signature retrieval. Persisted as a single
/// JSON file; the index is rebuilt at load.
class MotifStore {
 public:
  /// Admits a fragment from a verified run. The selection must be closed
  /// under Depends edges; duplicates (same canonical fragment) dedupe to the
  /// existing id.
  std::string store_fragment(const iir::Plan& source, const std::vector<std::string>& node_ids,
                             const std::string& provenance,
                             const std::string& registry_version) {
    std::set<std::string> selected(node_ids.begin(), node_ids.end());
    iir::Plan fragment;
    for (const auto& n : source.nodes)
      if (selected.count(n.id)) fragment.nodes.push_back(n);
    if (fragment.nodes.size() != selected.size())
      throw Error(ErrorCode::fragment_not_closed, "selector names nodes absent from the plan");
    for (const auto& e : source.edges) {
      bool src_in = selected.count(e.src) > 0;
      bool dst_in = selected.count(e.dst) > 0;
      if (e.type == iir::PlanEdge::Type::depends && src_in && !dst_in)
        throw Error(ErrorCode::fragment_not_closed,
                    "fragment drops Depends target " + e.dst + " of " + e.src);
      if (src_in && dst_in) fragment.edges.push_back(e);
    }
    for (const auto& n : fragment.nodes) {
      std::vector<const iir::Reference*> refs;
      for (const auto& [_, v] : n.fields) iir::detail::collect_refs(v, refs);
      for (const auto* r : refs)
        if (!selected.count(r->target))
          throw Error(ErrorCode::fragment_not_closed,
                      "fragment drops reference target " + r->target + " of " + n.id);
    }
    fragment.specs = {};
    std::string id = iir::plan_digest(fragment).hex;
    for (const auto& m : motifs_)
      if (m.id == id && m.registry_version == registry_version) return m.id;
    Motif m;
    m.id = id;
    m.fragment = iir::normalize_plan(fragment);
    m.registry_version = registry_version;
    m.provenance = provenance;
    m.signature = compute_signature(fragment);
    m.seq = next_seq_++;
    motifs_.push_back(std::move(m));
    return id;
  }

  /// Signature-subset retrieval, restricted to registry-compatible motifs,
  /// ranked by signature overlap size then recency. Empty when nothing
  /// matches; never an error.
  [[nodiscard]] std::vector<Motif> retrieve(const Signature& query,
                                            const schema::SchemaRegistry& registry) const {
    std::vector<Motif> out;
    for (const auto& m : motifs_) {
      if (!registry.version_compatible(m.registry_version)) continue;
      if (!m.signature.subset_of(query)) continue;
      out.push_back(m);
    }
    std::sort(out.begin(), out.end(), [](const Motif& a, const Motif& b) {
      if (a.signature.kinds.size() != b.signature.kinds.size())
        return a.signature.kinds.size() > b.signature.kinds.size();
      return a.seq > b.seq;
    });
    return out;
  }

  [[nodiscard]] std::size_t size() const { return motifs_.size(); }
  [[nodiscard]] const std::vector<Motif>& motifs() const { return motifs_; }

  void save(const std::string& path) const {
    nlohmann::json j;
    j["motifs"] = nlohmann::json::array();
    for (const auto& m : motifs_) j["motifs"].push_back(m.to_json());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io_error, "cannot write motif store: " + path);
    out << j.dump(2) << "\n";
  }

  static MotifStore load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::config_error, "cannot open motif store: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::parse_error, std::string("motif store: ") + e.what());
    }
    MotifStore store;
    for (const auto& jm : j.value("motifs", nlohmann::json::array())) {
      Motif m;
      m.id = jm.at("id").get<std::string>();
      m.fragment = iir::plan_from_json(jm.at("fragment"));
      m.registry_version = jm.value("registry_version", "");
      m.provenance = jm.value("provenance", "");
      m.signature = Signature::from_json(jm.at("signature"));
      m.seq = jm.value("seq", 0);
      store.next_seq_ = std::max(store.next_seq_, m.seq + 1);
      store.motifs_.push_back(std::move(m));
    }
    return store;
  }

 private:
  std::vector<Motif> motifs_;
  int next_seq_ = 0;
};

}  // namespace iacforge::memory
