#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>

#include "test_support.hpp"

using namespace testsupport;

namespace {

const std::string kCli = IACFORGE_CLI_PATH;

struct CliResult {
  int status = -1;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  auto out_file = fresh_temp_dir("cli-out") / "out.txt";
  std::string cmd = kCli + " " + args + " > " + out_file.string() + " 2>&1";
  int rc = std::system(cmd.c_str());
  CliResult r;
  r.status = WEXITSTATUS(rc);
  std::ifstream in(out_file);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string fixture_flags() {
  return "--registry " + kFixtureDir + "/registry.json --rules " + kFixtureDir +
         "/rules.json --catalog " + kFixtureDir + "/catalog.json";
}

}  // namespace

TEST_CASE("synth on a zero-fault task exits 0 and writes a bundle") {
  auto out = fresh_temp_dir("cli-synth");
  CliResult r = run_cli(fixture_flags() + " --out-dir " + out.string() + " synth " +
                        kFixtureDir + "/corpus/web-db-001.json");
  INFO(r.output);
  CHECK(r.status == 0);
  CHECK(std::filesystem::exists(out / "bundle" / "manifest.json"));
  CHECK(std::filesystem::exists(out / "run.jsonl"));
}

TEST_CASE("validate exit statuses") {
  auto dir = fresh_temp_dir("cli-validate");
  SECTION("schema-failing file exits 1 with a report") {
    auto bad = dir / "bad.tf";
    {
      std::ofstream f(bad);
      f << "resource \"ec2\" \"web\" {\n  region = \"eu-west-1\"\n}\n";
    }
    CliResult r = run_cli(fixture_flags() + " validate " + bad.string());
    CHECK(r.status == 1);
    CHECK(r.output.find("missing_required") != std::string::npos);
  }
  SECTION("valid file exits 0") {
    auto good = dir / "good.tf";
    {
      std::ofstream f(good);
      f << "resource \"vpc\" \"main\" {\n  region = \"eu-west-1\"\n}\n";
    }
    CliResult r = run_cli(fixture_flags() + " validate " + good.string());
    INFO(r.output);
    CHECK(r.status == 0);
  }
  SECTION("unparseable file exits 1") {
    auto ugly = dir / "ugly.tf";
    {
      std::ofstream f(ugly);
      f << "resource \"vpc\" {";
    }
    CliResult r = run_cli(fixture_flags() + " validate " + ugly.string());
    CHECK(r.status == 1);
  }
}

TEST_CASE("unknown flags and missing config exit 2") {
  CHECK(run_cli("--frobnicate synth x.json").status == 2);
  CHECK(run_cli("synth").status == 2);  // missing required positional
  CHECK(run_cli("--registry /nonexistent.json registry-check").status == 2);
  CHECK(run_cli(fixture_flags() + " --sandbox warp validate x.tf").status == 2);
}

TEST_CASE("fmt is canonical and idempotent") {
  auto dir = fresh_temp_dir("cli-fmt");
  auto messy = dir / "messy.tf";
  {
    std::ofstream f(messy);
    f << "resource \"vpc\" \"main\" { region = \"eu-west-1\"\n  cidr_block   =    "
         "\"10.0.0.0/16\" }";
  }
  CliResult first = run_cli("fmt " + messy.string());
  CHECK(first.status == 0);
  // write in place, then format again: zero byte changes
  CHECK(run_cli("fmt --write " + messy.string()).status == 0);
  std::string after_first;
  {
    std::ifstream in(messy);
    std::stringstream ss;
    ss << in.rdbuf();
    after_first = ss.str();
  }
  CHECK(run_cli("fmt --write " + messy.string()).status == 0);
  std::string after_second;
  {
    std::ifstream in(messy);
    std::stringstream ss;
    ss << in.rdbuf();
    after_second = ss.str();
  }
  CHECK(after_first == after_second);
  CHECK(after_first.find("cidr_block = \"10.0.0.0/16\"") != std::string::npos);
}

TEST_CASE("registry-check reports the fingerprint") {
  CliResult r = run_cli("--registry " + kFixtureDir + "/registry.json registry-check");
  CHECK(r.status == 0);
  CHECK(r.output.find("\"kinds\": 7") != std::string::npos);
  CHECK(r.output.find(fixture_registry().digest) != std::string::npos);
}

TEST_CASE("bundle-verify round trip through the CLI") {
  auto out = fresh_temp_dir("cli-bundle");
  CliResult synth = run_cli(fixture_flags() + " --out-dir " + out.string() + " synth " +
                            kFixtureDir + "/corpus/missing-ami-002.json");
  INFO(synth.output);
  REQUIRE(synth.status == 0);
  CliResult verify =
      run_cli(fixture_flags() + " bundle-verify " + (out / "bundle").string());
  INFO(verify.output);
  CHECK(verify.status == 0);
  CHECK(verify.output.find("\"verdict\": \"pass\"") != std::string::npos);

  // tamper, then expect findings and exit 1
  auto program = out / "bundle" / "program.tf";
  {
    std::fstream f(program, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(10);
    f.write("Z", 1);
  }
  CliResult tampered =
      run_cli(fixture_flags() + " bundle-verify " + (out / "bundle").string());
  CHECK(tampered.status == 1);
}

TEST_CASE("eval subcommand aggregates the corpus") {
  auto out = fresh_temp_dir("cli-eval");
  CliResult r = run_cli(fixture_flags() + " --out-dir " + out.string() + " --jobs 2 eval " +
                        kFixtureDir + "/corpus");
  INFO(r.output);
  CHECK(r.status == 0);
  CHECK(r.output.find("\"success_percent\": \"100.00\"") != std::string::npos);
}

TEST_CASE("repair subcommand applies one round") {
  auto dir = fresh_temp_dir("cli-repair");
  const auto& reg = fixture_registry();
  iir::Plan plan = schema::harmonize(tiny_web_plan(), reg);
  auto [skeleton, symtab] = iacforge::synth::compile_skeleton(plan, reg);
  iacforge::synth::DeterministicStubProposer proposer;
  auto program = iacforge::synth::decode(skeleton, proposer, reg);
  auto& attrs = program.resource("ec2", "web")->attributes;
  attrs.erase(std::remove_if(attrs.begin(), attrs.end(),
                             [](const auto& a) { return a.first == "ami"; }),
              attrs.end());
  auto plan_path = dir / "plan.json";
  auto prog_path = dir / "broken.tf";
  {
    std::ofstream f(plan_path);
    iir::Plan broken = plan;
    broken.node("web")->remove_field("ami");
    f << iacforge::iir::canonical_serialize(broken);
  }
  {
    std::ofstream f(prog_path);
    f << iacforge::hcl::print(program);
  }
  CliResult r = run_cli(fixture_flags() + " --out-dir " + dir.string() + " repair " +
                        prog_path.string() + " --plan " + plan_path.string());
  INFO(r.output);
  CHECK(r.status == 0);
  CHECK(r.output.find("AddRequiredField") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "repaired.tf"));
}
