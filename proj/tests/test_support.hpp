#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "iacforge/orchestrator.hpp"

namespace testsupport {

using namespace iacforge;

inline const std::string kFixtureDir = IACFORGE_FIXTURE_DIR;

inline const schema::SchemaRegistry& fixture_registry() {
  static schema::SchemaRegistry reg = schema::load_registry(kFixtureDir + "/registry.json");
  return reg;
}

inline const val::RuleSet& fixture_rules() {
  static val::RuleSet rules = val::load_rules(kFixtureDir + "/rules.json");
  return rules;
}

inline const val::PriceCatalog& fixture_catalog() {
  static val::PriceCatalog cat = val::load_catalog(kFixtureDir + "/catalog.json");
  return cat;
}

inline std::filesystem::path fresh_temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("iacforge-test-" + tag + "-" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------
// Plan builders
// ---------------------------------------------------------------------------

inline iir::ResourceNode mk_node(std::string id, std::string kind,
                                 std::string region = "eu-west-1") {
  iir::ResourceNode n;
  n.id = std::move(id);
  n.kind = std::move(kind);
  n.provider = "aws";
  n.region = std::move(region);
  return n;
}

/// vpc -> subnet -> ec2 three-tier plan, fully typed.
inline iir::Plan tiny_web_plan() {
  iir::Plan plan;
  iir::ResourceNode vpc = mk_node("main", "vpc");
  vpc.set_field("cidr_block", iir::TypedValue::make_string("10.0.0.0/16"));
  iir::ResourceNode subnet = mk_node("app", "subnet");
  subnet.set_field("vpc_id", iir::TypedValue::make_ref("main"));
  subnet.set_field("cidr_block", iir::TypedValue::make_string("10.0.1.0/24"));
  iir::ResourceNode web = mk_node("web", "ec2");
  web.set_field("ami", iir::TypedValue::make_string("ami-0a1b2c3d4e5f6a7b8"));
  web.set_field("instance_type", iir::TypedValue::make_string("t3.micro"));
  web.set_field("subnet_id", iir::TypedValue::make_ref("app"));
  plan.nodes = {vpc, subnet, web};
  return plan;
}

// ---------------------------------------------------------------------------
// Randomized typed-plan generator over the fixture registry
// ---------------------------------------------------------------------------

struct PlanGenOptions {
  int max_extra_nodes = 5;   // beyond the base vpc
  bool policy_noise = false; // effects without evidence and vice versa
  bool connects = true;
  bool open_ingress = true;
};

/// Generates plans that pass validate_types by construction: required
/// fields present, allowed sets respected, references kind-correct and
/// acyclic (each layer only references earlier layers).
inline iir::Plan random_plan(std::mt19937_64& rng, const PlanGenOptions& opt = {}) {
  const schema::SchemaRegistry& reg = fixture_registry();
  iir::Plan plan;
  auto coin = [&](double p) {
    return std::uniform_real_distribution<double>(0, 1)(rng) < p;
  };
  auto pick_int = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  const std::vector<std::string> regions = {"eu-west-1", "eu-central-1", "us-east-1"};
  std::string region = regions[static_cast<std::size_t>(pick_int(0, 2))];

  auto add_node = [&](const std::string& id, const std::string& kind) -> iir::ResourceNode& {
    plan.nodes.push_back(mk_node(id, kind, region));
    return plan.nodes.back();
  };
  auto fill_fields = [&](iir::ResourceNode& n,
                         const std::map<std::string, std::string>& ref_targets) {
    const schema::KindSchema& ks = *reg.find("aws", n.kind);
    for (const auto& decl : ks.fields) {
      bool include = decl.required || coin(0.5);
      if (!include) continue;
      if (n.field(decl.name)) continue;
      switch (decl.type) {
        case iir::ValueType::string:
          if (decl.allowed_values) {
            const auto& allowed = *decl.allowed_values;
            n.set_field(decl.name, iir::TypedValue::make_string(
                                       allowed[static_cast<std::size_t>(
                                           pick_int(0, static_cast<int>(allowed.size()) - 1))]));
          } else {
            n.set_field(decl.name,
                        iir::TypedValue::make_string("v" + std::to_string(pick_int(0, 99))));
          }
          break;
        case iir::ValueType::integer:
          n.set_field(decl.name, iir::TypedValue::make_int(pick_int(1, 100)));
          break;
        case iir::ValueType::boolean:
          n.set_field(decl.name, iir::TypedValue::make_bool(coin(0.5)));
          break;
        case iir::ValueType::decimal:
          n.set_field(decl.name, iir::TypedValue::make_decimal(
                                     Decimal::from_scaled(pick_int(0, 500) * 10000)));
          break;
        case iir::ValueType::map: {
          std::map<std::string, iir::TypedValue> m;
          if (coin(0.7)) m["env"] = iir::TypedValue::make_string(coin(0.5) ? "prod" : "dev");
          if (coin(0.3)) m["team"] = iir::TypedValue::make_string("core");
          n.set_field(decl.name, iir::TypedValue::make_map(std::move(m)));
          break;
        }
        case iir::ValueType::list: break;  // only sg ingress in the fixture; handled below
        case iir::ValueType::reference: {
          auto it = ref_targets.find(decl.ref_kind);
          if (it != ref_targets.end()) {
            n.set_field(decl.name, iir::TypedValue::make_ref(it->second));
          } else if (decl.required) {
            // caller guarantees targets for required refs
          }
          break;
        }
      }
    }
  };

  int vpcs = pick_int(1, 2);
  std::vector<std::string> vpc_ids, subnet_ids, sg_ids, ec2_ids, rds_ids;
  for (int i = 0; i < vpcs; ++i) {
    auto& n = add_node("net" + std::to_string(i), "vpc");
    fill_fields(n, {});
    vpc_ids.push_back(n.id);
  }
  int subnets = pick_int(1, 3);
  for (int i = 0; i < subnets; ++i) {
    auto& n = add_node("sub" + std::to_string(i), "subnet");
    fill_fields(n, {{"vpc", vpc_ids[static_cast<std::size_t>(pick_int(0, vpcs - 1))]}});
    subnet_ids.push_back(n.id);
  }
  int extra = pick_int(0, opt.max_extra_nodes);
  for (int i = 0; i < extra; ++i) {
    switch (pick_int(0, 4)) {
      case 0: {
        auto& n = add_node("grp" + std::to_string(i), "security_group");
        fill_fields(n, {{"vpc", vpc_ids[static_cast<std::size_t>(pick_int(0, vpcs - 1))]}});
        if (opt.open_ingress && coin(0.5)) {
          std::vector<iir::TypedValue> entries;
          int rules = pick_int(1, 2);
          for (int r = 0; r < rules; ++r) {
            std::map<std::string, iir::TypedValue> entry;
            entry["cidr"] = iir::TypedValue::make_string(coin(0.5) ? "0.0.0.0/0" : "10.0.0.0/8");
            entry["port"] = iir::TypedValue::make_int(coin(0.3) ? 22 : pick_int(80, 9000));
            entry["protocol"] = iir::TypedValue::make_string("tcp");
            entries.push_back(iir::TypedValue::make_map(std::move(entry)));
          }
          n.set_field(hcl::kOpenIngressField, iir::TypedValue::make_list(std::move(entries)));
        }
        sg_ids.push_back(n.id);
        break;
      }
      case 1: {
        auto& n = add_node("box" + std::to_string(i), "ec2");
        fill_fields(n, {{"subnet",
                         subnet_ids[static_cast<std::size_t>(pick_int(0, subnets - 1))]}});
        ec2_ids.push_back(n.id);
        break;
      }
      case 2: {
        auto& n = add_node("db" + std::to_string(i), "rds");
        fill_fields(n, {{"subnet",
                         subnet_ids[static_cast<std::size_t>(pick_int(0, subnets - 1))]}});
        rds_ids.push_back(n.id);
        break;
      }
      case 3: {
        auto& n = add_node("store" + std::to_string(i), "s3_bucket");
        fill_fields(n, {});
        break;
      }
      case 4: {
        auto& n = add_node("role" + std::to_string(i), "iam_role");
        fill_fields(n, {});
        break;
      }
    }
  }

  if (opt.connects) {
    for (const auto& e : ec2_ids) {
      if (!sg_ids.empty() && coin(0.6))
        plan.edges.push_back(iir::PlanEdge::connects(
            e, sg_ids[static_cast<std::size_t>(pick_int(0, static_cast<int>(sg_ids.size()) - 1))],
            iir::Proto::tcp, static_cast<std::uint16_t>(pick_int(1, 9000))));
      if (!rds_ids.empty() && coin(0.6))
        plan.edges.push_back(iir::PlanEdge::connects(
            e,
            rds_ids[static_cast<std::size_t>(pick_int(0, static_cast<int>(rds_ids.size()) - 1))],
            iir::Proto::tcp, 5432));
    }
    for (const auto& g : sg_ids)
      if (!ec2_ids.empty() && coin(0.3))
        plan.edges.push_back(iir::PlanEdge::connects(
            g,
            ec2_ids[static_cast<std::size_t>(pick_int(0, static_cast<int>(ec2_ids.size()) - 1))],
            iir::Proto::tcp, static_cast<std::uint16_t>(pick_int(1, 9000))));
  }

  // Occasional bare structural dependency on the vpc layer (always acyclic).
  for (const auto& e : ec2_ids)
    if (coin(0.2)) plan.edges.push_back(iir::PlanEdge::depends(e, vpc_ids[0]));

  if (opt.policy_noise) {
    for (auto& n : plan.nodes) {
      for (iir::Effect eff : iir::kAllEffects) {
        if (!val::effect_applicable(eff, n.kind)) continue;
        if (coin(0.25)) {
          n.effects.insert(eff);
          if (coin(0.6)) {
            if (auto ev = val::effect_evidence(eff, n.kind)) n.set_field(ev->field, ev->value);
          }
        }
      }
    }
  } else {
    for (auto& n : plan.nodes)
      if (coin(0.2)) {
        n.effects.insert(iir::Effect::encrypt_at_rest);
        if (auto ev = val::effect_evidence(iir::Effect::encrypt_at_rest, n.kind))
          n.set_field(ev->field, ev->value);
      }
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Independent acyclicity oracles
// ---------------------------------------------------------------------------

/// Brute force over all node orderings: acyclic iff some permutation places
/// every Depends target before its source. Exponential; for tiny graphs.
inline bool acyclic_permutation_oracle(int node_count,
                                       const std::vector<std::pair<int, int>>& depends) {
  std::vector<int> order(static_cast<std::size_t>(node_count));
  for (int i = 0; i < node_count; ++i) order[static_cast<std::size_t>(i)] = i;
  std::vector<int> position(static_cast<std::size_t>(node_count));
  do {
    for (int i = 0; i < node_count; ++i) position[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = i;
    bool ok = true;
    for (const auto& [src, dst] : depends) {
      if (position[static_cast<std::size_t>(dst)] > position[static_cast<std::size_t>(src)]) {
        ok = false;
        break;
      }
    }
    if (ok) return true;
  } while (std::next_permutation(order.begin(), order.end()));
  return false;
}

/// DFS three-color cycle detection; a second independent oracle for larger
/// random graphs.
inline bool acyclic_dfs_oracle(int node_count, const std::vector<std::pair<int, int>>& depends) {
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(node_count));
  for (const auto& [src, dst] : depends) adj[static_cast<std::size_t>(src)].push_back(dst);
  std::vector<int> color(static_cast<std::size_t>(node_count), 0);
  std::function<bool(int)> visit = [&](int u) -> bool {
    color[static_cast<std::size_t>(u)] = 1;
    for (int v : adj[static_cast<std::size_t>(u)]) {
      if (color[static_cast<std::size_t>(v)] == 1) return false;
      if (color[static_cast<std::size_t>(v)] == 0 && !visit(v)) return false;
    }
    color[static_cast<std::size_t>(u)] = 2;
    return true;
  };
  for (int u = 0; u < node_count; ++u)
    if (color[static_cast<std::size_t>(u)] == 0 && !visit(u)) return false;
  return true;
}

/// Builds a plan whose Depends edges mirror an integer edge list.
inline iir::Plan graph_plan(int node_count, const std::vector<std::pair<int, int>>& depends) {
  iir::Plan plan;
  for (int i = 0; i < node_count; ++i) plan.nodes.push_back(mk_node("n" + std::to_string(i), "vpc"));
  for (const auto& [src, dst] : depends)
    plan.edges.push_back(
        iir::PlanEdge::depends("n" + std::to_string(src), "n" + std::to_string(dst)));
  return plan;
}

// ---------------------------------------------------------------------------
// Pipeline helpers
// ---------------------------------------------------------------------------

struct PipelineHandles {
  val::StubSandbox sandbox;
  synth::DeterministicStubProposer proposer;
  orch::RunEnvironment env;

  PipelineHandles() {
    env.registry = &fixture_registry();
    env.rules = &fixture_rules().rules;
    env.rules_digest = fixture_rules().digest;
    env.catalog = &fixture_catalog();
    env.sandbox = &sandbox;
    env.proposer = &proposer;
  }
};

inline orch::RunOutcome run_pipeline(const agents::IntentSpec& intent,
                                     const iir::ConstraintSet& constraints,
                                     const std::filesystem::path& run_dir, int budget = 8,
                                     std::function<void(iir::Plan&, hcl::HclProgram&)> hook = {}) {
  PipelineHandles handles;
  orch::RunConfig config;
  config.run_dir = run_dir;
  config.attempt_budget = budget;
  config.post_compile_hook = std::move(hook);
  orch::Orchestrator orchestrator(handles.env, config);
  return orchestrator.run(intent, constraints);
}

inline agents::IntentSpec plan_intent(const iir::Plan& plan) {
  agents::IntentSpec intent;
  intent.structured =
      nlohmann::json{{"plan", nlohmann::json::parse(iir::canonical_serialize(plan))}};
  return intent;
}

}  // namespace testsupport
