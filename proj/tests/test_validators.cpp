#include <catch2/catch_amalgamated.hpp>

#include "policy_oracle.hpp"
#include "test_support.hpp"

using namespace iacforge;
using namespace testsupport;
using policy_oracle::oracle_verdicts;

namespace {

hcl::HclProgram compiled(const iir::Plan& plan) {
  const auto& reg = fixture_registry();
  iir::Plan h = schema::harmonize(plan, reg);
  auto [skeleton, symtab] = synth::compile_skeleton(h, reg);
  synth::DeterministicStubProposer proposer;
  return synth::decode(skeleton, proposer, reg);
}

}  // namespace

TEST_CASE("validate_schema spec cases") {
  const auto& reg = fixture_registry();
  SECTION("compiled program from a typed plan passes") {
    auto [ok, ces] = val::validate_schema(compiled(tiny_web_plan()), reg);
    CHECK(ok);
    CHECK(ces.empty());
  }
  SECTION("missing required ami") {
    auto prog = hcl::parse(R"(resource "vpc" "main" { region = "eu-west-1" }

resource "subnet" "app" {
  region = "eu-west-1"
  vpc_id = vpc.main.id
}

resource "ec2" "web" {
  region = "eu-west-1"
  instance_type = "t3.micro"
  subnet_id = subnet.app.id
})");
    auto [ok, ces] = val::validate_schema(prog, reg);
    CHECK_FALSE(ok);
    REQUIRE(ces.size() == 1);
    CHECK(ces[0].code == "missing_required");
    CHECK(ces[0].cls == val::CeClass::schema);
  }
  SECTION("dangling reference") {
    auto prog = hcl::parse(R"(resource "subnet" "app" {
  region = "eu-west-1"
  vpc_id = vpc.ghost.id
})");
    auto [ok, ces] = val::validate_schema(prog, reg);
    CHECK_FALSE(ok);
    REQUIRE(!ces.empty());
    CHECK(ces[0].code == "dangling_reference");
    CHECK(ces[0].witness.at("field") == "vpc_id");
  }
  SECTION("duplicate address") {
    auto prog = hcl::parse(R"(resource "vpc" "a" { region = "eu-west-1" }

resource "vpc" "a" { region = "eu-west-1" })");
    auto [ok, ces] = val::validate_schema(prog, reg);
    CHECK_FALSE(ok);
    CHECK(ces[0].code == "duplicate_address");
  }
  SECTION("missing region") {
    auto prog = hcl::parse(R"(resource "vpc" "a" {})");
    auto [ok, ces] = val::validate_schema(prog, reg);
    CHECK_FALSE(ok);
    REQUIRE(ces.size() == 1);
    CHECK(ces[0].code == "missing_required");
    CHECK(ces[0].witness.at("field") == "region");
  }
  SECTION("report consistency: verdict false iff schema CEs exist") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 10; ++i) {
      auto program = compiled(random_plan(rng));
      auto [ok, ces] = val::validate_schema(program, reg);
      CHECK(ok == ces.empty());
    }
  }
}

TEST_CASE("eval_policies spec cases") {
  const auto& rules = fixture_rules().rules;
  SECTION("s3 bucket with aes256 passes encrypt-at-rest with a trace") {
    iir::Plan plan;
    auto bucket = mk_node("data", "s3_bucket");
    bucket.effects.insert(iir::Effect::encrypt_at_rest);
    bucket.set_field("encryption", iir::TypedValue::make_string("aes256"));
    plan.nodes.push_back(bucket);
    auto [ok, traces, ces] = val::eval_policies(compiled(plan), rules, {});
    CHECK(ok);
    bool traced = false;
    for (const auto& t : traces)
      if (t.rule_id == "encrypt-at-rest-s3" && t.locus == "s3_bucket.data" && t.passed)
        traced = true;
    CHECK(traced);
  }
  SECTION("open ssh ingress fails restricted-ingress with a witness") {
    iir::Plan plan;
    plan.nodes.push_back(mk_node("main", "vpc"));
    auto sg = mk_node("sg", "security_group");
    sg.set_field("vpc_id", iir::TypedValue::make_ref("main"));
    std::map<std::string, iir::TypedValue> entry;
    entry["cidr"] = iir::TypedValue::make_string("0.0.0.0/0");
    entry["port"] = iir::TypedValue::make_int(22);
    entry["protocol"] = iir::TypedValue::make_string("tcp");
    sg.set_field("ingress",
                 iir::TypedValue::make_list({iir::TypedValue::make_map(std::move(entry))}));
    plan.nodes.push_back(sg);
    auto [ok, traces, ces] = val::eval_policies(compiled(plan), rules, {});
    CHECK_FALSE(ok);
    REQUIRE(!ces.empty());
    CHECK(ces[0].code == "restricted-ingress-ssh");
    CHECK(ces[0].witness.at("cidr") == "0.0.0.0/0");
    CHECK(ces[0].witness.at("port") == 22);
  }
  SECTION("empty rule set and no required effects is vacuously true") {
    auto [ok, traces, ces] = val::eval_policies(compiled(tiny_web_plan()), {}, {});
    CHECK(ok);
    CHECK(traces.empty());
    CHECK(ces.empty());
  }
  SECTION("required effect missing from an applicable node is undischarged") {
    iir::ConstraintSet constraints;
    constraints.required_effects.insert(iir::Effect::encrypt_at_rest);
    auto [ok, traces, ces] = val::eval_policies(compiled(tiny_web_plan()), rules, constraints);
    CHECK_FALSE(ok);
    bool undischarged = false;
    for (const auto& ce : ces)
      if (ce.code == "undischarged_effect" && ce.locus == "ec2.web") undischarged = true;
    CHECK(undischarged);
  }
  SECTION("residency and availability built-ins") {
    iir::ConstraintSet constraints;
    constraints.residency = std::set<std::string>{"eu-central-1"};
    constraints.availability_zones_min = 2;
    auto [ok, traces, ces] = val::eval_policies(compiled(tiny_web_plan()), {}, constraints);
    CHECK_FALSE(ok);
    int residency_ces = 0, availability_ces = 0;
    for (const auto& ce : ces) {
      if (ce.code == "residency_violation") ++residency_ces;
      if (ce.code == "availability_below_min") ++availability_ces;
    }
    CHECK(residency_ces == 3);  // every node sits in eu-west-1
    CHECK(availability_ces == 1);
  }
  SECTION("malformed rule predicate is a hard error") {
    CHECK_THROWS_AS(
        val::rules_from_json_text(R"({"rules": [{"id": "x", "predicate": {"frobnicate": {}}}]})"),
        Error);
  }
}

TEST_CASE("policy engine agrees with the brute-force oracle") {
  std::mt19937_64 rng(47);
  const auto& rules = fixture_rules().rules;
  nlohmann::json rules_json =
      nlohmann::json::parse(val::read_file(kFixtureDir + "/rules.json", "rules"));
  int compared = 0;
  for (int trial = 0; trial < 60; ++trial) {
    PlanGenOptions opt;
    opt.policy_noise = true;
    iir::Plan plan = random_plan(rng, opt);
    if (plan.nodes.size() > 6) continue;
    std::string text = hcl::print(compiled(plan));
    auto expected = oracle_verdicts(text, rules_json);
    auto [ok, traces, ces] = val::eval_policies(hcl::parse(text), rules, {});
    std::map<std::pair<std::string, std::string>, bool> got;
    for (const auto& t : traces)
      if (t.rule_id.rfind("builtin-", 0) != 0) got[{t.rule_id, t.locus}] = t.passed;
    CHECK(got == expected);
    ++compared;
  }
  CHECK(compared >= 20);
}

TEST_CASE("estimate_cost fixture arithmetic") {
  const auto& cat = fixture_catalog();
  iir::ConstraintSet b10;
  b10.budget_ceiling = Decimal::parse("10.00");
  SECTION("empty program") {
    auto [total, sheet, ces] = val::estimate_cost(hcl::HclProgram{}, cat, b10);
    CHECK(total.is_zero());
    CHECK(sheet.empty());
    CHECK(ces.empty());
  }
  SECTION("one t3.micro within budget") {
    auto [total, sheet, ces] = val::estimate_cost(compiled(tiny_web_plan()), cat, b10);
    CHECK(total == Decimal::parse("7.50"));
    REQUIRE(sheet.size() == 3);  // vpc 0 + subnet 0 + ec2 7.50
    CHECK(ces.empty());
  }
  SECTION("two t3.micro overruns by 5.00") {
    iir::Plan plan = tiny_web_plan();
    iir::ResourceNode web2 = *plan.node("web");
    web2.id = "web2";
    plan.nodes.push_back(web2);
    auto [total, sheet, ces] = val::estimate_cost(compiled(plan), cat, b10);
    CHECK(total == Decimal::parse("15.00"));
    CHECK(total.to_string() == "15");
    REQUIRE(ces.size() == 1);
    CHECK(ces[0].code == "budget_exceeded");
    CHECK(ces[0].witness.at("overrun") == "5");
    CHECK(ces[0].witness.at("estimate") == "15");
  }
  SECTION("no ceiling, no counterexample") {
    auto [total, sheet, ces] = val::estimate_cost(compiled(tiny_web_plan()), cat, {});
    CHECK(ces.empty());
  }
  SECTION("missing sku is a configuration error") {
    val::PriceCatalog empty;
    empty.catalog_version = "x";
    CHECK_THROWS_AS(val::estimate_cost(compiled(tiny_web_plan()), empty, {}), Error);
  }
  SECTION("cost determinism: identical bytes") {
    auto program = compiled(tiny_web_plan());
    auto [t1, s1, c1] = val::estimate_cost(program, cat, b10);
    auto [t2, s2, c2] = val::estimate_cost(program, cat, b10);
    nlohmann::json j1 = nlohmann::json::array(), j2 = nlohmann::json::array();
    for (const auto& li : s1) j1.push_back(li.to_json());
    for (const auto& li : s2) j2.push_back(li.to_json());
    CHECK(j1.dump() == j2.dump());
    Decimal sum;
    for (const auto& li : s1) sum += li.monthly;
    CHECK(sum == t1);  // estimate equals line-item sum exactly
  }
}

TEST_CASE("deploy_test adapters") {
  SECTION("stub with empty manifest passes") {
    val::StubSandbox sandbox;
    auto [ok, ces] = val::deploy_test(compiled(tiny_web_plan()), sandbox);
    CHECK(ok);
    CHECK(ces.empty());
  }
  SECTION("manifest fault fires on matching content") {
    iir::Plan plan = tiny_web_plan();
    plan.node("web")->set_field("instance_type", iir::TypedValue::make_string("t3.mega"));
    val::StubSandbox sandbox = val::StubSandbox::from_json_text(R"([
      {"match": {"kind": "ec2", "field": "instance_type", "value": "t3.mega"},
       "code": "unsupported_sku", "message": "t3.mega unsupported"}
    ])");
    auto [ok, ces] = val::deploy_test(compiled(plan), sandbox);
    CHECK_FALSE(ok);
    REQUIRE(ces.size() == 1);
    CHECK(ces[0].cls == val::CeClass::run);
    CHECK(ces[0].code == "unsupported_sku");
    CHECK(ces[0].locus == "ec2.web");
    // purity: identical inputs, identical outcome
    auto [ok2, ces2] = val::deploy_test(compiled(plan), sandbox);
    CHECK(ok2 == ok);
    REQUIRE(ces2.size() == 1);
    CHECK(ces2[0].code == ces[0].code);
  }
  SECTION("external sandbox without a binary is unavailable") {
    val::ExternalToolSandbox sandbox("");
    unsetenv("IACFORGE_TF_BIN");
    val::ExternalToolSandbox unset("");
    try {
      val::deploy_test(compiled(tiny_web_plan()), unset);
      FAIL("expected sandbox-unavailable");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::sandbox_unavailable);
    }
  }
  SECTION("external sandbox parses the diagnostic line table") {
    auto dir = fresh_temp_dir("extsbx");
    auto script = dir / "fake_tf.sh";
    {
      std::ofstream out(script);
      out << "#!/bin/sh\n"
             "if [ \"$1\" = plan ]; then\n"
             "  echo 'Error: unsupported_sku: ec2.web: instance type rejected' >&2\n"
             "  exit 1\n"
             "fi\nexit 0\n";
    }
    std::filesystem::permissions(script, std::filesystem::perms::owner_all);
    val::ExternalToolSandbox sandbox(script.string());
    auto [ok, ces] = val::deploy_test(compiled(tiny_web_plan()), sandbox);
    CHECK_FALSE(ok);
    REQUIRE(ces.size() == 1);
    CHECK(ces[0].code == "unsupported_sku");
    CHECK(ces[0].locus == "ec2.web");
  }
}

TEST_CASE("run_all gating and determinism") {
  const auto& reg = fixture_registry();
  const auto& rules = fixture_rules().rules;
  const auto& cat = fixture_catalog();
  val::StubSandbox sandbox;

  SECTION("fully valid program: all green") {
    iir::ConstraintSet c;
    c.budget_ceiling = Decimal::parse("10.00");
    auto report = val::run_all(compiled(tiny_web_plan()), reg, rules, cat, sandbox, c);
    CHECK(report.v_schema());
    CHECK(report.v_policy());
    CHECK(report.v_deploy());
    CHECK(report.cost_status == val::ValidatorStatus::passed);
    CHECK(report.v_cost == Decimal::parse("7.5"));
  }
  SECTION("schema failure gates policy, cost, and deploy") {
    auto prog = hcl::parse(R"(resource "ec2" "web" { region = "eu-west-1" })");
    auto report = val::run_all(prog, reg, rules, cat, sandbox, {});
    CHECK(report.schema_status == val::ValidatorStatus::failed);
    CHECK(report.policy_status == val::ValidatorStatus::gated);
    CHECK(report.cost_status == val::ValidatorStatus::gated);
    CHECK(report.deploy_status == val::ValidatorStatus::gated);
    CHECK(report.v_cost.is_zero());
  }
  SECTION("policy and cost failures coexist in deterministic order") {
    iir::Plan plan = tiny_web_plan();
    plan.node("web")->effects.insert(iir::Effect::encrypt_at_rest);  // evidence missing
    iir::ConstraintSet c;
    c.budget_ceiling = Decimal::parse("1.00");
    auto report = val::run_all(compiled(plan), reg, rules, cat, sandbox, c);
    CHECK(report.policy_status == val::ValidatorStatus::failed);
    CHECK(report.cost_status == val::ValidatorStatus::failed);
    CHECK(report.deploy_status == val::ValidatorStatus::gated);
    REQUIRE(report.counterexamples.size() >= 2);
    CHECK(report.counterexamples.front().cls == val::CeClass::policy);
    CHECK(report.counterexamples.back().cls == val::CeClass::cost);
    auto report2 = val::run_all(compiled(plan), reg, rules, cat, sandbox, c);
    CHECK(report.to_json().dump() == report2.to_json().dump());
  }
}
