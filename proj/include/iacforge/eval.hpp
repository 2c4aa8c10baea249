#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "iacforge/bleu.hpp"
#include "iacforge/orchestrator.hpp"

namespace iacforge::eval {

// ---------------------------------------------------------------------------
// Task corpus
// ---------------------------------------------------------------------------

/// Post-decode fault injection for seeded corpora. The constrained pipeline
/// cannot emit schema-invalid programs on its own (that is the point of the
/// decoder), so seeded schema faults enter through this hook instead,
/// mimicking an unconstrained engineer. drop/rename mutate plan and program
/// consistently; retarget dangles the program side only.
struct Injection {
  enum class Op { drop_attribute, rename_attribute, retarget_reference };
  Op op = Op::drop_attribute;
  std::string block;       // "kind.name"
  std::string field;
  std::string new_name;    // rename_attribute
  std::string new_target;  // retarget_reference, "kind.name"

  static Injection from_json(const nlohmann::json& j) {
    Injection inj;
    std::string op = j.at("op").get<std::string>();
    if (op == "drop_attribute") {
      inj.op = Op::drop_attribute;
    } else if (op == "rename_attribute") {
      inj.op = Op::rename_attribute;
      inj.new_name = j.at("new_name").get<std::string>();
    } else if (op == "retarget_reference") {
      inj.op = Op::retarget_reference;
      inj.new_target = j.at("new_target").get<std::string>();
    } else {
      throw Error(ErrorCode::parse_error, "unknown injection op: " + op);
    }
    inj.block = j.at("block").get<std::string>();
    inj.field = j.at("field").get<std::string>();
    return inj;
  }
};

inline void apply_injection(const Injection& inj, iir::Plan& plan, hcl::HclProgram& program) {
  auto dot = inj.block.find('.');
  if (dot == std::string::npos)
    throw Error(ErrorCode::parse_error, "injection block must be kind.name: " + inj.block);
  hcl::Block* block = program.resource(inj.block.substr(0, dot), inj.block.substr(dot + 1));
  if (!block) throw Error(ErrorCode::locus_not_found, "injection block not found: " + inj.block);
  iir::ResourceNode* node = plan.node(inj.block.substr(dot + 1));

  switch (inj.op) {
    case Injection::Op::drop_attribute: {
      auto& attrs = block->attributes;
      attrs.erase(std::remove_if(attrs.begin(), attrs.end(),
                                 [&](const auto& a) { return a.first == inj.field; }),
                  attrs.end());
      if (node) node->remove_field(inj.field);
      break;
    }
    case Injection::Op::rename_attribute: {
      for (auto& [name, _] : block->attributes)
        if (name == inj.field) name = inj.new_name;
      if (node)
        for (auto& [name, _] : node->fields)
          if (name == inj.field) name = inj.new_name;
      break;
    }
    case Injection::Op::retarget_reference: {
      auto tdot = inj.new_target.find('.');
      if (tdot == std::string::npos)
        throw Error(ErrorCode::parse_error, "retarget needs kind.name: " + inj.new_target);
      hcl::HclExpr ref = hcl::HclExpr::reference(
          {inj.new_target.substr(0, tdot), inj.new_target.substr(tdot + 1), "id"});
      if (hcl::HclExpr* attr = block->attribute(inj.field)) *attr = std::move(ref);
      break;
    }
  }
}

struct TaskCase {
  std::string id;
  agents::IntentSpec intent;
  iir::ConstraintSet constraints;
  std::optional<std::string> reference_text;
  std::vector<val::StubSandbox::Fault> sandbox_faults;
  nlohmann::json sandbox_faults_json = nlohmann::json::array();
  std::vector<Injection> injections;
  std::string expect;  // "" | "success" | "unsatisfied"

  static TaskCase from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    TaskCase t;
    t.id = j.at("id").get<std::string>();
    t.intent = agents::IntentSpec::from_json(j.at("intent"));
    if (j.contains("constraints")) t.constraints = iir::constraints_from_json(j.at("constraints"));
    if (j.contains("reference")) {
      t.reference_text = j.at("reference").get<std::string>();
    } else if (j.contains("reference_file")) {
      std::ifstream in(base_dir / j.at("reference_file").get<std::string>(), std::ios::binary);
      if (!in)
        throw Error(ErrorCode::config_error,
                    "reference file missing for task " + t.id);
      std::ostringstream ss;
      ss << in.rdbuf();
      t.reference_text = ss.str();
    }
    if (j.contains("sandbox_faults")) {
      t.sandbox_faults_json = j.at("sandbox_faults");
      t.sandbox_faults =
          val::StubSandbox::from_json_text(t.sandbox_faults_json.dump()).faults();
    }
    for (const auto& ji : j.value("inject", nlohmann::json::array()))
      t.injections.push_back(Injection::from_json(ji));
    t.expect = j.value("expect", "");
    if (t.reference_text) hcl::parse(*t.reference_text);  // must parse when present
    return t;
  }

  static TaskCase load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::config_error, "cannot open task: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::parse_error, "task " + path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
  }
};

// ---------------------------------------------------------------------------
// Eval harness
// ---------------------------------------------------------------------------

struct EvalConfig {
  const schema::SchemaRegistry* registry = nullptr;
  const std::vector<val::PolicyRule>* rules = nullptr;
  std::string rules_digest;
  const val::PriceCatalog* catalog = nullptr;
  std::string external_sandbox_binary;  // non-empty selects the external adapter
  bool use_external_sandbox = false;
  int attempt_budget = 8;
  std::uint64_t seed = 0;
  bool randomized_proposer = false;
  int jobs = 1;
  std::filesystem::path out_dir;
  agents::AgentConfig agent_config;
  memory::MotifStore* motifs = nullptr;
};

struct TaskResult {
  std::string id;
  std::string outcome;  // success | unsatisfied | error
  int iterations = 0;
  std::vector<std::string> j_trajectory;
  std::optional<double> bleu_score;
  bool expected_met = true;
  std::string detail;

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json j{{"id", id},
                     {"outcome", outcome},
                     {"iterations", iterations},
                     {"j_trajectory", j_trajectory},
                     {"expected_met", expected_met}};
    if (bleu_score) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", *bleu_score);
      j["bleu"] = buf;
    }
    if (!detail.empty()) j["detail"] = detail;
    return j;
  }
};

struct EvalReport {
  std::vector<TaskResult> results;  // sorted by id
  std::string success_percent;      // 2 decimal places
  std::optional<double> aggregate_bleu;
  std::map<int, int> iteration_histogram;

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json tasks = nlohmann::json::array();
    for (const auto& r : results) tasks.push_back(r.to_json());
    nlohmann::json hist = nlohmann::json::object();
    for (const auto& [k, v] : iteration_histogram) hist[std::to_string(k)] = v;
    nlohmann::json j{{"tasks", tasks},
                     {"success_percent", success_percent},
                     {"iteration_histogram", hist}};
    if (aggregate_bleu) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", *aggregate_bleu);
      j["aggregate_bleu"] = buf;
    }
    return j;
  }
};

/// 100 * successes / total with exactly two decimals (the IaC-Eval-style
/// success rate with unit weights).
inline std::string format_percent(std::size_t successes, std::size_t total) {
  if (total == 0) return "0.00";
  Decimal pct = Decimal::from_int(100 * static_cast<std::int64_t>(successes)) /
                Decimal::from_int(static_cast<std::int64_t>(total));
  // render with exactly two fraction digits
  std::int64_t cents = (pct.scaled() + 5000) / 10000;  // round half up at 2dp
  char buf[32];
  std::snprintf(buf, sizeof buf, "%lld.%02lld", static_cast<long long>(cents / 100),
                static_cast<long long>(cents % 100));
  return buf;
}

/// Runs one task through the orchestrator. t_i = 1 iff the run succeeds and,
/// when a reference exists, the produced program passes the task's own
/// validators again, independently of the run's internal report.
inline TaskResult run_task(const TaskCase& task, const EvalConfig& config,
                           const std::filesystem::path& run_dir) {
  TaskResult result;
  result.id = task.id;

  val::StubSandbox stub(task.sandbox_faults,
                        sha256_hex(task.sandbox_faults_json.dump()));
  val::ExternalToolSandbox external(config.external_sandbox_binary);
  val::SandboxAdapter& sandbox =
      config.use_external_sandbox ? static_cast<val::SandboxAdapter&>(external)
                                  : static_cast<val::SandboxAdapter&>(stub);

  synth::DeterministicStubProposer det;
  synth::RandomizedStubProposer rnd(config.seed ^ std::hash<std::string>{}(task.id));
  synth::Proposer* proposer = config.randomized_proposer
                                  ? static_cast<synth::Proposer*>(&rnd)
                                  : static_cast<synth::Proposer*>(&det);
  agents::RemoteProposer remote(config.agent_config.remote);
  if (config.agent_config.mode == agents::AgentConfig::Mode::remote &&
      config.agent_config.remote.configured())
    proposer = &remote;

  orch::RunEnvironment env;
  env.registry = config.registry;
  env.rules = config.rules;
  env.rules_digest = config.rules_digest;
  env.catalog = config.catalog;
  env.sandbox = &sandbox;
  env.proposer = proposer;
  env.motifs = config.motifs;
  env.agent_config = config.agent_config;

  orch::RunConfig run_config;
  run_config.attempt_budget = config.attempt_budget;
  run_config.run_dir = run_dir;
  if (!task.injections.empty()) {
    run_config.post_compile_hook = [&task](iir::Plan& plan, hcl::HclProgram& program) {
      for (const auto& inj : task.injections) apply_injection(inj, plan, program);
    };
  }

  try {
    orch::Orchestrator orchestrator(env, run_config);
    orch::RunOutcome outcome = orchestrator.run(task.intent, task.constraints);
    result.iterations = outcome.iterations;
    for (const auto& j : outcome.j_trajectory) result.j_trajectory.push_back(j.to_string());
    bool solved = outcome.success;
    if (solved && task.reference_text) {
      // Re-verify with the task's own validators.
      val::StubSandbox recheck_sandbox(task.sandbox_faults, "");
      val::ValidatorReport recheck =
          val::run_all(outcome.program, *config.registry, *config.rules, *config.catalog,
                       config.use_external_sandbox
                           ? static_cast<val::SandboxAdapter&>(external)
                           : static_cast<val::SandboxAdapter&>(recheck_sandbox),
                       task.constraints);
      solved = recheck.v_schema() && recheck.v_policy() && recheck.v_deploy() &&
               recheck.cost_status != val::ValidatorStatus::failed;
      result.bleu_score = bleu(hcl::print(outcome.program), *task.reference_text);
    }
    result.outcome = solved ? "success" : "unsatisfied";
    if (!outcome.success) result.detail = outcome.failure_reason;
  } catch (const std::exception& e) {
    result.outcome = "error";
    result.detail = e.what();
  }

  if (!task.expect.empty())
    result.expected_met = (task.expect == result.outcome) ||
                          (task.expect == "unsatisfied" && result.outcome == "error");
  return result;
}

inline std::vector<std::filesystem::path> corpus_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(dir))
    throw Error(ErrorCode::config_error, "corpus directory not found: " + dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

/// Desk-scale evaluation: every task runs through the orchestrator;
/// per-task results are assembled sorted by id, so the report is identical
/// regardless of the --jobs level.
inline EvalReport run_eval(const std::filesystem::path& corpus_dir, const EvalConfig& config) {
  std::vector<TaskCase> tasks;
  for (const auto& path : corpus_files(corpus_dir)) tasks.push_back(TaskCase::load(path));
  if (tasks.empty()) throw Error(ErrorCode::config_error, "corpus has no .json tasks");

  std::vector<TaskResult> results(tasks.size());
  std::filesystem::path out_dir =
      config.out_dir.empty() ? std::filesystem::temp_directory_path() / "iacforge-eval"
                             : config.out_dir;

  int jobs = std::max(config.jobs, 1);
  std::mutex next_mutex;
  std::size_t next = 0;
  auto worker = [&] {
    while (true) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(next_mutex);
        if (next >= tasks.size()) return;
        i = next++;
      }
      results[i] = run_task(tasks[i], config, out_dir / ("task_" + tasks[i].id));
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::sort(results.begin(), results.end(),
            [](const TaskResult& a, const TaskResult& b) { return a.id < b.id; });

  EvalReport report;
  std::size_t successes = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const TaskResult& r = results[i];
    if (r.outcome == "success") ++successes;
    report.iteration_histogram[r.iterations] += 1;
  }
  // Aggregate BLEU is the unweighted mean of per-task scores over tasks
  // carrying a reference (aggregates are means over tasks).
  std::vector<double> task_bleus;
  for (const auto& r : results)
    if (r.bleu_score) task_bleus.push_back(*r.bleu_score);
  if (!task_bleus.empty()) {
    double sum = 0;
    for (double b : task_bleus) sum += b;
    report.aggregate_bleu = sum / static_cast<double>(task_bleus.size());
  }
  report.results = std::move(results);
  report.success_percent = format_percent(successes, tasks.size());
  return report;
}

}  // namespace iacforge::eval
