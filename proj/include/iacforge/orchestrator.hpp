#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "iacforge/agents.hpp"
#include "iacforge/blackboard.hpp"
#include "iacforge/evidence.hpp"
#include "iacforge/memory.hpp"
#include "iacforge/repair.hpp"
#include "iacforge/synthesis.hpp"
#include "iacforge/validators.hpp"

namespace iacforge::orch {

// ---------------------------------------------------------------------------
// FSM
// ---------------------------------------------------------------------------

enum class OrchestratorState {
  plan,
  harmonize,
  compile,
  review,
  prove,
  price,
  deploy,
  repair,
  done,
};

inline const char* state_name(OrchestratorState s) {
  switch (s) {
    case OrchestratorState::plan: return "plan";
    case OrchestratorState::harmonize: return "harmonize";
    case OrchestratorState::compile: return "compile";
    case OrchestratorState::review: return "review";
    case OrchestratorState::prove: return "prove";
    case OrchestratorState::price: return "price";
    case OrchestratorState::deploy: return "deploy";
    case OrchestratorState::repair: return "repair";
    case OrchestratorState::done: return "done";
  }
  return "?";
}

/// The documented transition table. Anything else is a contract violation;
/// FSM soundness is assertable from blackboard replay.
inline bool transition_allowed(OrchestratorState from, OrchestratorState to) {
  using S = OrchestratorState;
  switch (from) {
    case S::plan: return to == S::harmonize;
    case S::harmonize: return to == S::compile;
    case S::compile: return to == S::review || to == S::repair;
    case S::review: return to == S::prove || to == S::repair;
    case S::prove: return to == S::price;  // cost runs even on policy failure
    case S::price: return to == S::deploy || to == S::repair;
    case S::deploy: return to == S::done || to == S::repair;
    case S::repair: return to == S::compile || to == S::review || to == S::done;
    case S::done: return false;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Outcomes and configuration
// ---------------------------------------------------------------------------

struct CommittedEdit {
  nlohmann::json edit;
  std::string origin_code;
  Decimal j_before;
  Decimal j_after;
};

struct RunOutcome {
  bool success = false;
  hcl::HclProgram program;
  iir::Plan plan;
  std::optional<evidence::EvidenceBundle> bundle;
  std::vector<val::Counterexample> remaining_ces;  // unsatisfied core
  std::vector<CommittedEdit> repair_path;
  std::vector<Decimal> j_trajectory;  // J after each completed validation round
  int iterations = 0;                 // committed repair edits
  std::filesystem::path run_dir;
  std::string failure_reason;
};

/// Everything a run needs, wired by the caller. Pointers are non-owning and
/// must outlive the run.
struct RunEnvironment {
  const schema::SchemaRegistry* registry = nullptr;
  const std::vector<val::PolicyRule>* rules = nullptr;
  std::string rules_digest;
  const val::PriceCatalog* catalog = nullptr;
  val::SandboxAdapter* sandbox = nullptr;
  synth::Proposer* proposer = nullptr;
  memory::MotifStore* motifs = nullptr;  // optional
  agents::AgentConfig agent_config;
};

struct RunConfig {
  int attempt_budget = 8;  // K
  std::optional<repair::RoutingWeights> weights;
  std::filesystem::path run_dir;
  /// Eval-harness hook, applied once right after the first successful
  /// compile (post round-trip guard): seeds faults the constrained pipeline
  /// cannot produce by itself.
  std::function<void(iir::Plan&, hcl::HclProgram&)> post_compile_hook;
};

// ---------------------------------------------------------------------------
// Round-trip repair
// ---------------------------------------------------------------------------

/// Restores plan/program equivalence. The plan is authoritative for
/// structure; program-only attribute values that are schema-admissible fold
/// back into the plan, then divergent blocks recompile from the plan. One
/// recompile must restore equivalence or the contract is violated.
inline std::pair<iir::Plan, hcl::HclProgram> repair_roundtrip(
    const iir::Plan& plan_in, const hcl::HclProgram& program_in,
    const schema::SchemaRegistry& registry, synth::Proposer& proposer) {
  iir::Plan plan = plan_in;
  hcl::HclProgram program = program_in;

  std::optional<iir::Plan> lifted;
  try {
    lifted = hcl::lift(program, registry);
    lifted->specs = plan.specs;
  } catch (const Error&) {
    lifted.reset();  // unliftable program: recompile everything from the plan
  }
  if (lifted && iir::plan_equiv(plan, *lifted)) return {plan, program};

  std::set<std::string> touched;
  if (!lifted) {
    for (const auto& n : plan.nodes) touched.insert(n.id);
  } else {
    for (const auto& n : plan.nodes) {
      const iir::ResourceNode* other = lifted->node(n.id);
      if (!other) {
        touched.insert(n.id);  // block missing entirely: recompile it
        continue;
      }
      // Fold program-only admissible attributes into the plan.
      const schema::KindSchema* ks = registry.find(n.provider, n.kind);
      iir::ResourceNode* mine = plan.node(n.id);
      for (const auto& [name, value] : other->fields) {
        if (mine->field(name)) continue;
        const schema::FieldDecl* decl = ks ? ks->field(name) : nullptr;
        if (decl && iir::detail::value_matches_type(value, *decl))
          mine->set_field(name, value);
      }
      iir::ResourceNode a = *mine;
      iir::ResourceNode b = *other;
      if (!(a == b)) touched.insert(n.id);
    }
    // Blocks with no plan node are dropped by recompilation from the plan.
    for (const auto& n : lifted->nodes)
      if (!plan.node(n.id)) touched.insert(n.id);
  }

  repair::EditContext ctx{&registry, &proposer};
  hcl::HclProgram next = repair::detail::recompile_touched(plan, program, touched, ctx, nullptr);
  iir::Plan check = hcl::lift(next, registry);
  check.specs = plan.specs;
  if (!iir::plan_equiv(plan, check))
    throw Error(ErrorCode::contract_violation,
                "round-trip divergence persists after recompiling from the plan");
  return {plan, next};
}

// ---------------------------------------------------------------------------
// Controller
// ---------------------------------------------------------------------------

/// Composite artifact a_k plus the repair-loop bookkeeping the controller
/// policy needs: candidate edits, the in-flight attempt, and snapshots for
/// revert-on-increase.
struct ControllerState {
  OrchestratorState state = OrchestratorState::plan;
  agents::IntentSpec intent;
  iir::ConstraintSet constraints;
  iir::Plan plan;
  hcl::HclProgram program;
  val::ValidatorReport report;
  int k = 0;  // committed repair iterations
  int attempt_budget = 8;
  repair::RoutingWeights weights;
  bool hook_applied = false;

  // repair bookkeeping
  std::vector<repair::MappedEdit> candidates;
  std::size_t candidate_idx = 0;
  bool candidates_fresh = false;
  struct Attempt {
    repair::MappedEdit edit;
    Decimal j_before;
    iir::Plan plan_snapshot;
    hcl::HclProgram program_snapshot;
    val::ValidatorReport report_snapshot;
  };
  std::optional<Attempt> in_flight;

  std::vector<CommittedEdit> repair_path;
  std::vector<Decimal> j_trajectory;
  std::vector<val::Counterexample> remaining_ces;
  std::string failure_reason;
  bool success = false;
};

class Orchestrator {
 public:
  Orchestrator(RunEnvironment env, RunConfig config)
      : env_(std::move(env)), config_(std::move(config)) {
    if (!env_.registry || !env_.rules || !env_.catalog || !env_.sandbox || !env_.proposer)
      throw Error(ErrorCode::config_error, "run environment is incompletely wired");
  }

  /// Algorithm-1 run loop: plan through deploy with the round-trip guard,
  /// counterexample-guided repair with revert-on-increase, bundle on
  /// success. Deterministic with stub agents and the stub sandbox.
  RunOutcome run(const agents::IntentSpec& intent, const iir::ConstraintSet& constraints) {
    Blackboard bb(config_.run_dir, toolchain_digests());
    ControllerState st;
    st.intent = intent;
    st.constraints = constraints;
    st.attempt_budget = config_.attempt_budget;
    st.weights = config_.weights ? *config_.weights : repair::RoutingWeights::defaults(constraints);

    while (st.state != OrchestratorState::done) step(st, bb);

    RunOutcome out;
    out.success = st.success;
    out.program = st.program;
    out.plan = st.plan;
    out.repair_path = st.repair_path;
    out.j_trajectory = st.j_trajectory;
    out.iterations = st.k;
    out.run_dir = config_.run_dir;
    out.failure_reason = st.failure_reason;
    if (st.success) {
      evidence::EvidenceBundle bundle = evidence::build_bundle(bb, st.program);
      bundle.write_to(config_.run_dir / "bundle");
      bb.append_json("done", "bundle",
                     nlohmann::json{{"manifest_digest", bundle.manifest_digest()}}, "bundle/");
      out.bundle = std::move(bundle);
    } else {
      out.remaining_ces = st.remaining_ces;
    }
    return out;
  }

  /// Executes the current state's contract and advances along the
  /// transition table. Public so the FSM is steppable and replayable.
  void step(ControllerState& st, Blackboard& bb) {
    switch (st.state) {
      case OrchestratorState::plan: return step_plan(st, bb);
      case OrchestratorState::harmonize: return step_harmonize(st, bb);
      case OrchestratorState::compile: return step_compile(st, bb);
      case OrchestratorState::review: return step_review(st, bb);
      case OrchestratorState::prove: return step_prove(st, bb);
      case OrchestratorState::price: return step_price(st, bb);
      case OrchestratorState::deploy: return step_deploy(st, bb);
      case OrchestratorState::repair: return step_repair(st, bb);
      case OrchestratorState::done:
        throw Error(ErrorCode::contract_violation, "step on a terminal state");
    }
  }

 private:
  ToolchainDigests toolchain_digests() const {
    ToolchainDigests t;
    t.registry_version = env_.registry->registry_version;
    t.registry_digest = env_.registry->digest;
    t.catalog_version = env_.catalog->catalog_version;
    t.catalog_digest = env_.catalog->digest;
    t.rules_digest = env_.rules_digest;
    t.mapping_table_version = repair::kMappingTableVersion;
    t.sandbox_manifest_digest = env_.sandbox->manifest_digest();
    return t;
  }

  void advance(ControllerState& st, OrchestratorState to) const {
    if (!transition_allowed(st.state, to))
      throw Error(ErrorCode::contract_violation,
                  std::string("illegal transition ") + state_name(st.state) + " -> " +
                      state_name(to));
    st.state = to;
  }

  Decimal score(const ControllerState& st) const {
    return repair::routing_score(st.report, st.constraints, st.weights);
  }

  void step_plan(ControllerState& st, Blackboard& bb) {
    std::vector<memory::Motif> motifs;
    if (env_.motifs) {
      memory::Signature query = agents::intent_signature(st.intent, st.constraints);
      motifs = env_.motifs->retrieve(query, *env_.registry);
      bb.append_json("plan", "log",
                     nlohmann::json{{"memory_retrieval", motifs.size()},
                                    {"query", query.to_json()}});
    }
    std::vector<std::string> notes;
    auto [plan, invariants] = agents::architect_plan_with_backend(
        st.intent, st.constraints, motifs, env_.agent_config, &notes);
    for (const auto& n : notes) bb.append_json("plan", "log", nlohmann::json{{"note", n}});
    iir::check_well_formed(plan);  // contract gate before the blackboard
    st.plan = std::move(plan);
    nlohmann::json inv = nlohmann::json::array();
    for (const auto& i : invariants)
      inv.push_back({{"name", i.name}, {"kind", i.kind}, {"detail", i.detail}});
    bb.append_json("plan", "plan",
                   nlohmann::json::parse(iir::canonical_serialize(st.plan)));
    bb.append_json("plan", "log", nlohmann::json{{"invariants", inv}});
    advance(st, OrchestratorState::harmonize);
  }

  void step_harmonize(ControllerState& st, Blackboard& bb) {
    st.plan = schema::harmonize(st.plan, *env_.registry);
    bb.append_json("harmonize", "plan",
                   nlohmann::json::parse(iir::canonical_serialize(st.plan)));
    advance(st, OrchestratorState::compile);
  }

  void step_compile(ControllerState& st, Blackboard& bb) {
    if (env_.motifs) {
      memory::Signature query = memory::compute_signature(st.plan);
      auto motifs = env_.motifs->retrieve(query, *env_.registry);
      bb.append_json("compile", "log",
                     nlohmann::json{{"memory_retrieval", motifs.size()}});
    }
    try {
      auto [skeleton, symtab] = synth::compile_skeleton(st.plan, *env_.registry);
      synth::DecodeTrace trace;
      st.program = synth::decode(skeleton, *env_.proposer, *env_.registry, &trace);
      for (const auto& note : trace.notes)
        bb.append_json("compile", "log", nlohmann::json{{"note", note}});

      // Round-trip guard (the Parse/equiv check before dynamic validation).
      iir::Plan lifted = hcl::lift(st.program, *env_.registry);
      lifted.specs = st.plan.specs;
      bool equivalent = iir::plan_equiv(st.plan, lifted);
      if (!equivalent)
        std::tie(st.plan, st.program) =
            repair_roundtrip(st.plan, st.program, *env_.registry, *env_.proposer);
      bb.append_json("compile", "trace",
                     nlohmann::json{{"plan_digest", iir::plan_digest(st.plan).hex},
                                    {"lifted_digest", iir::plan_digest(lifted).hex},
                                    {"equivalent_before_repair", equivalent},
                                    {"equivalent", true}});

      if (config_.post_compile_hook && !st.hook_applied) {
        config_.post_compile_hook(st.plan, st.program);
        st.hook_applied = true;
        bb.append_json("compile", "log", nlohmann::json{{"note", "post-compile hook applied"}});
      }

      std::string text = hcl::print(st.program);
      bb.append_text("compile", "program", text, candidate_file(st, bb));
      advance(st, OrchestratorState::review);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::dead_state && e.code() != ErrorCode::cyclic_plan) throw;
      // Unsatisfiable skeleton: surface as a schema counterexample and route
      // to repair rather than dying.
      st.report = val::ValidatorReport{};
      st.report.schema_status = val::ValidatorStatus::failed;
      val::Counterexample ce;
      ce.cls = val::CeClass::schema;
      ce.locus = e.locus();
      ce.code = e.code() == ErrorCode::cyclic_plan ? "cyclic_plan" : "unsatisfiable_reference";
      ce.message = e.what();
      auto dot = e.locus().find('.');
      if (dot != std::string::npos)
        ce.witness = nlohmann::json{{"node", e.locus().substr(0, dot)},
                                    {"field", e.locus().substr(dot + 1)}};
      st.report.counterexamples.push_back(std::move(ce));
      bb.append_json("compile", "report", st.report.to_json(), report_file(st, bb));
      st.candidates_fresh = false;
      advance(st, OrchestratorState::repair);
    }
  }

  void step_review(ControllerState& st, Blackboard& bb) {
    st.report = val::ValidatorReport{};  // fresh round
    auto [ok, ces] = val::validate_schema(st.program, *env_.registry);
    st.report.schema_status = ok ? val::ValidatorStatus::passed : val::ValidatorStatus::failed;
    for (auto& ce : ces) st.report.counterexamples.push_back(std::move(ce));

    auto diagnostics = agents::review_static(st.program);
    nlohmann::json diag = nlohmann::json::array();
    for (const auto& d : diagnostics) diag.push_back(d.to_json());
    bb.append_json("review", "log", nlohmann::json{{"diagnostics", diag}});

    st.report.sort_counterexamples();
    bb.append_json("review", "report", st.report.to_json(), report_file(st, bb));
    if (ok) {
      advance(st, OrchestratorState::prove);
    } else {
      st.candidates_fresh = false;
      advance(st, OrchestratorState::repair);
    }
  }

  void step_prove(ControllerState& st, Blackboard& bb) {
    auto [ok, traces, ces] = val::eval_policies(st.program, *env_.rules, st.constraints);
    st.report.policy_status = ok ? val::ValidatorStatus::passed : val::ValidatorStatus::failed;
    st.report.traces = std::move(traces);
    for (auto& ce : ces) st.report.counterexamples.push_back(std::move(ce));
    st.report.sort_counterexamples();
    bb.append_json("prove", "report", st.report.to_json(), report_file(st, bb));
    advance(st, OrchestratorState::price);  // cost is not gated by policy
  }

  void step_price(ControllerState& st, Blackboard& bb) {
    auto [total, sheet, ces] = val::estimate_cost(st.program, *env_.catalog, st.constraints);
    st.report.v_cost = total;
    st.report.cost_sheet = std::move(sheet);
    st.report.cost_status = ces.empty() ? val::ValidatorStatus::passed : val::ValidatorStatus::failed;
    for (auto& ce : ces) st.report.counterexamples.push_back(std::move(ce));
    st.report.sort_counterexamples();
    bb.append_json("price", "report", st.report.to_json(), report_file(st, bb));
    if (st.report.v_policy() && st.report.cost_status == val::ValidatorStatus::passed) {
      advance(st, OrchestratorState::deploy);
    } else {
      st.candidates_fresh = false;
      advance(st, OrchestratorState::repair);
    }
  }

  void step_deploy(ControllerState& st, Blackboard& bb) {
    auto [ok, ces] = val::deploy_test(st.program, *env_.sandbox);
    st.report.deploy_status = ok ? val::ValidatorStatus::passed : val::ValidatorStatus::failed;
    nlohmann::json ce_json = nlohmann::json::array();
    for (const auto& ce : ces) ce_json.push_back(ce.to_json());
    bb.append_json("deploy", "log",
                   nlohmann::json{{"sandbox", env_.sandbox->describe()},
                                  {"verdict", ok ? "pass" : "fail"},
                                  {"excerpt", ce_json}});
    for (auto& ce : ces) st.report.counterexamples.push_back(std::move(ce));
    st.report.sort_counterexamples();
    bb.append_json("deploy", "report", st.report.to_json(), report_file(st, bb));
    if (ok) {
      finish_round(st, bb);  // may commit an in-flight edit; J is 0 here
      st.success = true;
      advance(st, OrchestratorState::done);
    } else {
      st.candidates_fresh = false;
      advance(st, OrchestratorState::repair);
    }
  }

  /// Commit/revert bookkeeping for the edit attempt whose post-edit report
  /// just completed. Returns true when a revert happened (the caller must
  /// then not recompute candidates: the pre-edit list continues).
  bool finish_round(ControllerState& st, Blackboard& bb) {
    Decimal j_now = score(st);
    st.j_trajectory.push_back(j_now);
    if (!st.in_flight) return false;
    ControllerState::Attempt attempt = std::move(*st.in_flight);
    st.in_flight.reset();
    if (j_now > attempt.j_before) {
      bb.append_json("repair", "edit",
                     nlohmann::json{{"committed", false},
                                    {"reverted", true},
                                    {"edit", attempt.edit.edit.to_json()},
                                    {"origin", attempt.edit.origin.code},
                                    {"j_before", attempt.j_before.to_string()},
                                    {"j_after", j_now.to_string()}});
      st.plan = std::move(attempt.plan_snapshot);
      st.program = std::move(attempt.program_snapshot);
      st.report = std::move(attempt.report_snapshot);
      st.j_trajectory.pop_back();  // the reverted round does not count
      ++st.candidate_idx;
      return true;
    }
    ++st.k;
    st.repair_path.push_back(
        {attempt.edit.edit.to_json(), attempt.edit.origin.code, attempt.j_before, j_now});
    bb.append_json("repair", "edit",
                   nlohmann::json{{"committed", true},
                                  {"edit", attempt.edit.edit.to_json()},
                                  {"origin", attempt.edit.origin.code},
                                  {"j_before", attempt.j_before.to_string()},
                                  {"j_after", j_now.to_string()}});
    st.candidates_fresh = false;  // new report, new candidates
    return false;
  }

  void step_repair(ControllerState& st, Blackboard& bb) {
    bool reverted = finish_round(st, bb);
    Decimal j_now = score(st);

    if (j_now.is_zero()) {
      // Defensive: a zero score routes to done via deploy, not here.
      st.success = true;
      advance(st, OrchestratorState::done);
      return;
    }
    if (st.k >= st.attempt_budget) {
      st.failure_reason = "attempt budget exhausted (K=" +
                          std::to_string(st.attempt_budget) + ") with J=" + j_now.to_string();
      st.remaining_ces = st.report.counterexamples;
      bb.append_json("repair", "log", nlohmann::json{{"unsatisfied_core", st.failure_reason}});
      advance(st, OrchestratorState::done);
      return;
    }
    if (!reverted && !st.candidates_fresh) {
      st.candidates = repair::map_all_edits(st.report.counterexamples, st.plan, st.program,
                                            *env_.registry, *env_.catalog);
      st.candidate_idx = 0;
      st.candidates_fresh = true;
    }
    if (st.candidate_idx >= st.candidates.size()) {
      st.failure_reason = st.candidates.empty()
                              ? "no counterexample has an applicable edit"
                              : "every candidate edit failed or increased J";
      st.remaining_ces = st.report.counterexamples;
      bb.append_json("repair", "log", nlohmann::json{{"unsatisfied_core", st.failure_reason}});
      advance(st, OrchestratorState::done);
      return;
    }

    repair::MappedEdit candidate = st.candidates[st.candidate_idx];
    ControllerState::Attempt attempt;
    attempt.edit = candidate;
    attempt.j_before = j_now;
    attempt.plan_snapshot = st.plan;
    attempt.program_snapshot = st.program;
    attempt.report_snapshot = st.report;

    try {
      repair::EditContext ctx{env_.registry, env_.proposer};
      auto [next_plan, next_program] = repair::apply_edit(st.plan, st.program, candidate.edit, ctx);
      // Per-iteration normalize + re-parse, then the equivalence guard.
      next_program = hcl::parse(hcl::print(next_program));
      iir::Plan lifted = hcl::lift(next_program, *env_.registry);
      lifted.specs = next_plan.specs;
      if (!iir::plan_equiv(next_plan, lifted))
        std::tie(next_plan, next_program) =
            repair_roundtrip(next_plan, next_program, *env_.registry, *env_.proposer);
      st.plan = std::move(next_plan);
      st.program = std::move(next_program);
    } catch (const Error& e) {
      bb.append_json("repair", "log",
                     nlohmann::json{{"attempt_failed", candidate.edit.to_json()},
                                    {"error", e.what()}});
      ++st.candidate_idx;
      return;  // stay in repair; the next step call tries the next candidate
    }

    st.in_flight = std::move(attempt);
    bb.append_json("repair", "edit",
                   nlohmann::json{{"committed", false},
                                  {"attempt", candidate.edit.to_json()},
                                  {"origin", candidate.origin.code},
                                  {"j_before", st.in_flight->j_before.to_string()}});
    std::string text = hcl::print(st.program);
    bb.append_text("repair", "program", text, candidate_file(st, bb));
    advance(st, candidate.edit.is_plan_edit() ? OrchestratorState::compile
                                              : OrchestratorState::review);
  }

  std::string candidate_file(const ControllerState& st, Blackboard& bb) {
    std::string name = "candidate_" + std::to_string(candidate_counter_++) + ".tf";
    std::ofstream out(bb.run_dir() / name, std::ios::binary);
    out << hcl::print(st.program);
    return name;
  }

  std::string report_file(const ControllerState& st, Blackboard& bb) {
    std::string name = "report_" + std::to_string(report_counter_++) + ".json";
    std::ofstream out(bb.run_dir() / name, std::ios::binary);
    out << st.report.to_json().dump(2) << "\n";
    return name;
  }

  RunEnvironment env_;
  RunConfig config_;
  int candidate_counter_ = 0;
  int report_counter_ = 0;
};

/// Memory-module surface: admits a fragment of a verified run into the
/// store. Only Success outcomes are admissible.
inline std::string store_motif(const RunOutcome& outcome,
                               const std::vector<std::string>& node_ids,
                               memory::MotifStore& store, const std::string& registry_version) {
  if (!outcome.success)
    throw Error(ErrorCode::not_a_success, "only Success runs feed the motif store");
  std::string provenance =
      outcome.bundle ? outcome.bundle->manifest.value("program_digest", "") : "";
  return store.store_fragment(outcome.plan, node_ids, provenance, registry_version);
}

}  // namespace iacforge::orch
