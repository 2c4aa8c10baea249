// iacforge command-line surface: synthesis runs, standalone validation,
// single repair rounds, bundle verification, corpus evaluation, canonical
// formatting, registry checks.
//
// Exit codes: 0 success verdict, 1 task failure, 2 configuration/usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "iacforge/eval.hpp"
#include "iacforge/evidence.hpp"
#include "iacforge/orchestrator.hpp"

namespace {

using namespace iacforge;

constexpr int kExitOk = 0;
constexpr int kExitTaskFailure = 1;
constexpr int kExitConfig = 2;

struct GlobalOptions {
  std::string registry_path = "fixtures/registry.json";
  std::string rules_path = "fixtures/rules.json";
  std::string catalog_path = "fixtures/catalog.json";
  std::string sandbox_mode = "stub";
  std::string sandbox_manifest;
  std::string tf_bin;
  std::string proposer = "stub";  // stub | random | remote
  std::string motif_store;
  int budget_k = 8;
  std::uint64_t seed = 0;
  std::string out_dir;
  int jobs = 1;
};

std::string read_file_or_die(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::config_error, std::string("cannot open ") + what + ": " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Toolkit {
  schema::SchemaRegistry registry;
  val::RuleSet rules;
  val::PriceCatalog catalog;

  explicit Toolkit(const GlobalOptions& opt)
      : registry(schema::load_registry(opt.registry_path)),
        rules(val::load_rules(opt.rules_path)),
        catalog(val::load_catalog(opt.catalog_path)) {}
};

std::filesystem::path run_dir_for(const GlobalOptions& opt, const std::string& stem) {
  if (!opt.out_dir.empty()) return std::filesystem::path(opt.out_dir);
  return std::filesystem::path("runs") / stem;
}

int cmd_synth(const GlobalOptions& opt, const std::string& task_path) {
  Toolkit kit(opt);
  eval::TaskCase task = eval::TaskCase::load(task_path);

  eval::EvalConfig config;
  config.registry = &kit.registry;
  config.rules = &kit.rules.rules;
  config.rules_digest = kit.rules.digest;
  config.catalog = &kit.catalog;
  config.use_external_sandbox = opt.sandbox_mode == "external";
  config.external_sandbox_binary = opt.tf_bin;
  config.attempt_budget = opt.budget_k;
  config.seed = opt.seed;
  config.randomized_proposer = opt.proposer == "random";
  if (opt.proposer == "remote") {
    config.agent_config.mode = agents::AgentConfig::Mode::remote;
    config.agent_config.remote = agents::RemoteConfig::from_env();
  }
  memory::MotifStore motifs;
  if (!opt.motif_store.empty() && std::filesystem::exists(opt.motif_store)) {
    motifs = memory::MotifStore::load(opt.motif_store);
    config.motifs = &motifs;
  }

  std::filesystem::path run_dir = run_dir_for(opt, task.id);
  eval::TaskResult result = eval::run_task(task, config, run_dir);
  std::cout << nlohmann::json{{"id", result.id},
                              {"outcome", result.outcome},
                              {"iterations", result.iterations},
                              {"run_dir", run_dir.string()}}
                   .dump(2)
            << "\n";
  if (result.outcome != "success") {
    if (!result.detail.empty()) std::cerr << result.detail << "\n";
    return kExitTaskFailure;
  }
  return kExitOk;
}

val::StubSandbox make_stub_sandbox(const GlobalOptions& opt) {
  if (!opt.sandbox_manifest.empty()) return val::StubSandbox::load(opt.sandbox_manifest);
  return val::StubSandbox{};
}

/// Input programs are the task under test: when they fail to parse that is
/// a task failure (exit 1), unlike configuration files (exit 2).
std::optional<hcl::HclProgram> parse_program_arg(const std::string& path) {
  try {
    return hcl::parse(read_file_or_die(path, "program"));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::parse_error) throw;
    std::cerr << e.what() << "\n";
    return std::nullopt;
  }
}

int cmd_validate(const GlobalOptions& opt, const std::string& program_path,
                 const std::string& constraints_path) {
  Toolkit kit(opt);
  auto parsed = parse_program_arg(program_path);
  if (!parsed) return kExitTaskFailure;
  hcl::HclProgram program = std::move(*parsed);
  iir::ConstraintSet constraints;
  if (!constraints_path.empty())
    constraints =
        iir::constraints_from_json(nlohmann::json::parse(read_file_or_die(constraints_path,
                                                                          "constraints")));
  val::StubSandbox stub = make_stub_sandbox(opt);
  val::ExternalToolSandbox external(opt.tf_bin);
  val::SandboxAdapter& sandbox = opt.sandbox_mode == "external"
                                     ? static_cast<val::SandboxAdapter&>(external)
                                     : static_cast<val::SandboxAdapter&>(stub);
  val::ValidatorReport report =
      val::run_all(program, kit.registry, kit.rules.rules, kit.catalog, sandbox, constraints);
  std::cout << report.to_json().dump(2) << "\n";
  bool ok = report.v_schema() && report.v_policy() && report.v_deploy() &&
            report.cost_status != val::ValidatorStatus::failed;
  return ok ? kExitOk : kExitTaskFailure;
}

int cmd_repair(const GlobalOptions& opt, const std::string& program_path,
               const std::string& plan_path, const std::string& constraints_path) {
  Toolkit kit(opt);
  auto parsed = parse_program_arg(program_path);
  if (!parsed) return kExitTaskFailure;
  hcl::HclProgram program = std::move(*parsed);
  iir::Plan plan = iir::plan_from_json_text(read_file_or_die(plan_path, "plan"));
  if (!constraints_path.empty())
    plan.specs =
        iir::constraints_from_json(nlohmann::json::parse(read_file_or_die(constraints_path,
                                                                          "constraints")));
  val::StubSandbox stub = make_stub_sandbox(opt);
  val::ExternalToolSandbox external(opt.tf_bin);
  val::SandboxAdapter& sandbox = opt.sandbox_mode == "external"
                                     ? static_cast<val::SandboxAdapter&>(external)
                                     : static_cast<val::SandboxAdapter&>(stub);
  val::ValidatorReport report =
      val::run_all(program, kit.registry, kit.rules.rules, kit.catalog, sandbox, plan.specs);
  if (report.counterexamples.empty()) {
    std::cout << "{\"repaired\": false, \"reason\": \"no counterexamples\"}\n";
    return kExitOk;
  }
  try {
    repair::Edit edit = repair::error_to_edit(report.counterexamples, plan, program,
                                              kit.registry, kit.catalog);
    synth::DeterministicStubProposer proposer;
    repair::EditContext ctx{&kit.registry, &proposer};
    auto [next_plan, next_program] = repair::apply_edit(plan, program, edit, ctx);
    std::filesystem::path out = run_dir_for(opt, "repair");
    std::filesystem::create_directories(out);
    {
      std::ofstream f(out / "repaired.tf", std::ios::binary);
      f << hcl::print(next_program);
    }
    {
      std::ofstream f(out / "repaired_plan.json", std::ios::binary);
      f << iir::canonical_serialize(iir::normalize_plan(next_plan)) << "\n";
    }
    std::cout << nlohmann::json{{"repaired", true},
                                {"edit", edit.to_json()},
                                {"out_dir", out.string()}}
                     .dump(2)
              << "\n";
    return kExitOk;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::no_applicable_edit) {
      std::cout << nlohmann::json{{"repaired", false}, {"reason", e.what()}}.dump(2) << "\n";
      return kExitTaskFailure;
    }
    throw;
  }
}

int cmd_bundle_verify(const GlobalOptions& opt, const std::string& bundle_dir,
                      std::string program_path) {
  Toolkit kit(opt);
  if (program_path.empty())
    program_path = (std::filesystem::path(bundle_dir) / evidence::kProgramFile).string();
  evidence::VerifyReport report = evidence::verify_bundle(
      bundle_dir, program_path, kit.registry, kit.rules.rules, kit.catalog);
  std::cout << report.to_json().dump(2) << "\n";
  return report.pass() ? kExitOk : kExitTaskFailure;
}

int cmd_eval(const GlobalOptions& opt, const std::string& corpus_dir) {
  Toolkit kit(opt);
  eval::EvalConfig config;
  config.registry = &kit.registry;
  config.rules = &kit.rules.rules;
  config.rules_digest = kit.rules.digest;
  config.catalog = &kit.catalog;
  config.use_external_sandbox = opt.sandbox_mode == "external";
  config.external_sandbox_binary = opt.tf_bin;
  config.attempt_budget = opt.budget_k;
  config.seed = opt.seed;
  config.randomized_proposer = opt.proposer == "random";
  config.jobs = opt.jobs;
  config.out_dir = run_dir_for(opt, "eval");
  if (opt.proposer == "remote") {
    config.agent_config.mode = agents::AgentConfig::Mode::remote;
    config.agent_config.remote = agents::RemoteConfig::from_env();
  }
  eval::EvalReport report = eval::run_eval(corpus_dir, config);
  std::cout << report.to_json().dump(2) << "\n";
  return report.success_percent == "100.00" ? kExitOk : kExitTaskFailure;
}

int cmd_fmt(const std::string& path, bool in_place) {
  auto parsed = parse_program_arg(path);
  if (!parsed) return kExitTaskFailure;
  std::string canonical = hcl::print(*parsed);
  if (in_place) {
    std::ofstream out(path, std::ios::binary);
    out << canonical;
  } else {
    std::cout << canonical;
  }
  return kExitOk;
}

int cmd_registry_check(const GlobalOptions& opt) {
  try {
    schema::SchemaRegistry registry = schema::load_registry(opt.registry_path);
    std::cout << nlohmann::json{{"registry_version", registry.registry_version},
                                {"kinds", registry.kinds.size()},
                                {"digest", registry.digest}}
                     .dump(2)
              << "\n";
    return kExitOk;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::config_error) throw;  // missing file: config error
    std::cerr << e.what() << "\n";
    return kExitTaskFailure;  // the check itself failed
  }
}

}  // namespace

namespace iacforge::cli {

int cli_main(int argc, char** argv) {
  CLI::App app{"iacforge: constrained IaC synthesis with counterexample-guided repair"};
  app.require_subcommand(1);

  GlobalOptions opt;
  app.add_option("--registry", opt.registry_path, "provider schema registry JSON");
  app.add_option("--rules", opt.rules_path, "policy rule set JSON");
  app.add_option("--catalog", opt.catalog_path, "price catalog JSON");
  app.add_option("--sandbox", opt.sandbox_mode, "deploy sandbox: stub | external")
      ->check(CLI::IsMember({"stub", "external"}));
  app.add_option("--sandbox-manifest", opt.sandbox_manifest, "stub sandbox fault manifest");
  app.add_option("--tf-bin", opt.tf_bin, "external plan/apply binary (or IACFORGE_TF_BIN)");
  app.add_option("--proposer", opt.proposer, "hole proposer: stub | random | remote")
      ->check(CLI::IsMember({"stub", "random", "remote"}));
  app.add_option("--motif-store", opt.motif_store, "motif store JSON file");
  app.add_option("--budget-k", opt.budget_k, "repair attempt budget K");
  app.add_option("--seed", opt.seed, "seed for randomized stub choices");
  app.add_option("--out-dir", opt.out_dir, "run/output directory");
  app.add_option("--jobs", opt.jobs, "parallel tasks for eval");

  std::string task_path, program_path, plan_path, constraints_path, bundle_dir, corpus_dir;
  bool fmt_in_place = false;

  CLI::App* synth = app.add_subcommand("synth", "synthesize from an intent/task file");
  synth->add_option("task", task_path, "task JSON file")->required();

  CLI::App* validate = app.add_subcommand("validate", "validate a program file");
  validate->add_option("program", program_path, ".tf program")->required();
  validate->add_option("--constraints", constraints_path, "constraints JSON");

  CLI::App* repair_cmd = app.add_subcommand("repair", "one repair round on program + plan");
  repair_cmd->add_option("program", program_path, ".tf program")->required();
  repair_cmd->add_option("--plan", plan_path, "I-IR plan JSON")->required();
  repair_cmd->add_option("--constraints", constraints_path, "constraints JSON");

  CLI::App* bundle_verify = app.add_subcommand("bundle-verify", "verify an evidence bundle");
  bundle_verify->add_option("bundle", bundle_dir, "bundle directory")->required();
  bundle_verify->add_option("--program", program_path, "program file (default: bundled)");

  CLI::App* eval_cmd = app.add_subcommand("eval", "run the evaluation harness on a corpus");
  eval_cmd->add_option("corpus", corpus_dir, "directory of task JSON files")->required();

  CLI::App* fmt = app.add_subcommand("fmt", "canonically format a program");
  fmt->add_option("program", program_path, ".tf program")->required();
  fmt->add_flag("--write", fmt_in_place, "rewrite the file in place");

  app.add_subcommand("registry-check", "load and fingerprint the registry");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (synth->parsed()) return cmd_synth(opt, task_path);
    if (validate->parsed()) return cmd_validate(opt, program_path, constraints_path);
    if (repair_cmd->parsed()) return cmd_repair(opt, program_path, plan_path, constraints_path);
    if (bundle_verify->parsed()) return cmd_bundle_verify(opt, bundle_dir, program_path);
    if (eval_cmd->parsed()) return cmd_eval(opt, corpus_dir);
    if (fmt->parsed()) return cmd_fmt(program_path, fmt_in_place);
    if (app.get_subcommand("registry-check")->parsed()) return cmd_registry_check(opt);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    switch (e.code()) {
      case ErrorCode::config_error:
      case ErrorCode::parse_error:
      case ErrorCode::duplicate_kind:
      case ErrorCode::missing_sku:
      case ErrorCode::sandbox_unavailable:
      case ErrorCode::unknown_rule_predicate: return kExitConfig;
      default: return kExitTaskFailure;
    }
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace iacforge::cli

int main(int argc, char** argv) { return iacforge::cli::cli_main(argc, argv); }
