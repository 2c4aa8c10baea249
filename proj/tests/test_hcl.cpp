#include <catch2/catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace iacforge;
using namespace testsupport;

TEST_CASE("parse minimal resource block") {
  auto prog = hcl::parse(R"(resource "vpc" "main" { cidr_block = "10.0.0.0/16" })");
  REQUIRE(prog.blocks.size() == 1);
  const hcl::Block& b = prog.blocks[0];
  CHECK(b.type == "resource");
  CHECK(b.labels == std::vector<std::string>{"vpc", "main"});
  REQUIRE(b.attributes.size() == 1);
  CHECK(b.attributes[0].first == "cidr_block");
  CHECK(b.attributes[0].second.kind == hcl::HclExpr::Kind::string);
}

TEST_CASE("parse empty input") { CHECK(hcl::parse("").blocks.empty()); }

TEST_CASE("resource block with one label is a syntax error") {
  try {
    hcl::parse(R"(resource "vpc" { })");
    FAIL("expected syntax error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::parse_error);
    CHECK(std::string(e.what()).find("second label") != std::string::npos);
  }
}

TEST_CASE("parse diagnostics carry position and expectations") {
  try {
    hcl::parse("resource \"vpc\" \"a\" {\n  x = \n}");
    FAIL("expected syntax error");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("3:1") != std::string::npos);  // the '}' token after the missing expr
    CHECK(msg.find("expected expression") != std::string::npos);
  }
  CHECK_THROWS_AS(hcl::parse("widget \"a\" {}"), Error);
  CHECK_THROWS_AS(hcl::parse(R"(resource "vpc" "a" { x = a })"), Error);  // 1-segment ref
  CHECK_THROWS_AS(hcl::parse("resource \"vpc\" \"a\" { x = \"unterminated }"), Error);
}

TEST_CASE("comments and tolerable whitespace") {
  auto prog = hcl::parse(
      "# leading comment\n"
      "resource \"vpc\" \"main\" {\n"
      "  // attribute comment\n"
      "  cidr_block = \"10.0.0.0/16\"\n"
      "}\n");
  REQUIRE(prog.blocks.size() == 1);
  CHECK(prog.blocks[0].attributes.size() == 1);
}

TEST_CASE("expressions parse into the typed AST") {
  auto prog = hcl::parse(R"(resource "s3_bucket" "b" {
  bucket = "data"
  versioning = true
  count_hint = 3
  ratio = 1.50
  zones = ["a", "b"]
  tags = { env = "prod", "spaced key" = 1 }
  link = vpc.main.id
})");
  const hcl::Block& b = prog.blocks[0];
  CHECK(b.attribute("versioning")->kind == hcl::HclExpr::Kind::boolean);
  CHECK(b.attribute("count_hint")->kind == hcl::HclExpr::Kind::number);
  CHECK_FALSE(b.attribute("count_hint")->decimal_form);
  CHECK(b.attribute("ratio")->decimal_form);
  CHECK(b.attribute("ratio")->num == Decimal::parse("1.5"));
  CHECK(b.attribute("zones")->items.size() == 2);
  CHECK(b.attribute("tags")->entries.size() == 2);
  CHECK(b.attribute("link")->ref_path ==
        std::vector<std::string>{"vpc", "main", "id"});
}

namespace {

hcl::HclExpr random_expr(std::mt19937_64& rng, int depth) {
  using hcl::HclExpr;
  int pick = static_cast<int>(rng() % (depth > 1 ? 4 : 6));
  switch (pick) {
    case 0: return HclExpr::string_lit("s" + std::to_string(rng() % 50));
    case 1: {
      bool fractional = rng() % 2 == 0;
      auto magnitude = static_cast<std::int64_t>(rng() % 900000);
      return HclExpr::number_lit(
          fractional ? Decimal::from_scaled(magnitude) : Decimal::from_int(magnitude % 1000),
          fractional);
    }
    case 2: return HclExpr::bool_lit(rng() % 2 == 0);
    case 3:
      return HclExpr::reference({"vpc", "main", rng() % 2 ? "id" : "arn"});
    case 4: {
      std::vector<HclExpr> items;
      for (std::size_t i = 0; i < rng() % 4; ++i) items.push_back(random_expr(rng, depth + 1));
      return HclExpr::list(std::move(items));
    }
    default: {
      std::vector<std::pair<std::string, HclExpr>> entries;
      for (std::size_t i = 0; i < rng() % 3; ++i)
        entries.emplace_back("k" + std::to_string(i), random_expr(rng, depth + 1));
      return HclExpr::map(std::move(entries));
    }
  }
}

hcl::HclProgram random_program(std::mt19937_64& rng) {
  hcl::HclProgram prog;
  hcl::Block vpc;
  vpc.type = "resource";
  vpc.labels = {"vpc", "main"};
  vpc.attributes.emplace_back("cidr_block", hcl::HclExpr::string_lit("10.0.0.0/16"));
  prog.blocks.push_back(vpc);
  int extra = static_cast<int>(rng() % 3) + 1;
  for (int i = 0; i < extra; ++i) {
    hcl::Block b;
    b.type = "resource";
    b.labels = {"s3_bucket", "bucket_" + std::to_string(i)};
    int attrs = static_cast<int>(rng() % 4) + 1;
    for (int a = 0; a < attrs; ++a)
      b.attributes.emplace_back("attr_" + std::to_string(a), random_expr(rng, 0));
    if (rng() % 2 == 0) {
      hcl::Block rule;
      rule.type = "ingress";
      rule.attributes.emplace_back("cidr", hcl::HclExpr::string_lit("0.0.0.0/0"));
      rule.attributes.emplace_back("port",
                                   hcl::HclExpr::number_lit(Decimal::from_int(443), false));
      rule.attributes.emplace_back("protocol", hcl::HclExpr::string_lit("tcp"));
      b.nested.push_back(rule);
    }
    prog.blocks.push_back(b);
  }
  if (rng() % 2 == 0) {
    hcl::Block var;
    var.type = "variable";
    var.labels = {"env"};
    var.attributes.emplace_back("default", hcl::HclExpr::string_lit("prod"));
    prog.blocks.push_back(var);
  }
  return prog;
}

}  // namespace

TEST_CASE("parse after print is the identity on ASTs") {
  std::mt19937_64 rng(97);
  for (int trial = 0; trial < 60; ++trial) {
    hcl::HclProgram prog = random_program(rng);
    hcl::HclProgram back = hcl::parse(hcl::print(prog));
    CHECK(back == prog);
  }
}

TEST_CASE("printing is idempotent on canonical text") {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 30; ++trial) {
    std::string once = hcl::print(random_program(rng));
    std::string twice = hcl::print(hcl::parse(once));
    CHECK(once == twice);
  }
  CHECK(hcl::print(hcl::HclProgram{}).empty());
}

TEST_CASE("nested block depth survives the round trip") {
  const char* text = R"(resource "security_group" "sg" {
  region = "eu-west-1"
  vpc_id = vpc.main.id
  ingress {
    cidr = "0.0.0.0/0"
    port = 443
    protocol = "tcp"
  }
})";
  hcl::HclProgram prog = hcl::parse(std::string("resource \"vpc\" \"main\" {}\n\n") + text);
  std::string printed = hcl::print(prog);
  hcl::HclProgram again = hcl::parse(printed);
  REQUIRE(again.blocks.size() == 2);
  REQUIRE(again.blocks[1].nested.size() == 1);
  CHECK(again.blocks[1].nested[0].type == "ingress");
  CHECK(again == prog);
}

TEST_CASE("lift recovers the plan structure") {
  const auto& reg = fixture_registry();
  SECTION("subnet referencing vpc produces a Depends edge") {
    auto prog = hcl::parse(R"(resource "vpc" "main" {
  region = "eu-west-1"
}

resource "subnet" "a" {
  region = "eu-west-1"
  vpc_id = vpc.main.id
})");
    iir::Plan plan = hcl::lift(prog, reg);
    REQUIRE(plan.nodes.size() == 2);
    bool found = false;
    for (const auto& e : plan.edges)
      if (e.type == iir::PlanEdge::Type::depends && e.src == "a" && e.dst == "main") found = true;
    CHECK(found);
    const iir::TypedValue* ref = plan.node("a")->field("vpc_id");
    REQUIRE(ref != nullptr);
    CHECK(ref->type == iir::ValueType::reference);
    CHECK(ref->ref.target == "main");
    CHECK(ref->ref.path == std::vector<std::string>{"id"});
  }
  SECTION("undeclared reference target") {
    auto prog = hcl::parse(R"(resource "subnet" "a" {
  vpc_id = vpc.ghost.id
})");
    try {
      hcl::lift(prog, reg);
      FAIL("expected unresolvable reference");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::unresolvable_reference);
    }
  }
  SECTION("unknown kind") {
    auto prog = hcl::parse(R"(resource "quantum_router" "x" {})");
    try {
      hcl::lift(prog, reg);
      FAIL("expected unknown kind");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::unknown_kind);
    }
  }
  SECTION("effects, depends_on, and rule blocks lift back") {
    auto prog = hcl::parse(R"(resource "vpc" "main" {
  region = "eu-west-1"
}

resource "security_group" "sg" {
  region = "eu-west-1"
  vpc_id = vpc.main.id
  effects = ["restricted_ingress"]
  ingress {
    cidr = "10.0.0.0/8"
    port = 443
    protocol = "tcp"
  }
}

resource "subnet" "app" {
  region = "eu-west-1"
  vpc_id = vpc.main.id
}

resource "ec2" "web" {
  region = "eu-west-1"
  ami = "ami-0a1b2c3d4e5f6a7b8"
  instance_type = "t3.micro"
  subnet_id = subnet.app.id
  depends_on = [security_group.sg]
  ingress {
    source = subnet.app
    port = 5432
    protocol = "tcp"
  }
})");
    iir::Plan plan = hcl::lift(prog, reg);
    CHECK(plan.node("sg")->effects.count(iir::Effect::restricted_ingress) == 1);
    const iir::TypedValue* open = plan.node("sg")->field(hcl::kOpenIngressField);
    REQUIRE(open != nullptr);
    REQUIRE(open->list.size() == 1);
    CHECK(open->list[0].map.at("cidr").str == "10.0.0.0/8");
    bool dep = false, conn = false;
    for (const auto& e : plan.edges) {
      if (e.type == iir::PlanEdge::Type::depends && e.src == "web" && e.dst == "sg") dep = true;
      if (e.type == iir::PlanEdge::Type::connects && e.src == "app" && e.dst == "web" &&
          e.port == 5432)
        conn = true;
    }
    CHECK(dep);
    CHECK(conn);
  }
  SECTION("variable references are not liftable") {
    auto prog = hcl::parse(R"(variable "env" {}

resource "vpc" "main" {
  cidr_block = var.env
})");
    CHECK_THROWS_AS(hcl::lift(prog, reg), Error);
  }
}

TEST_CASE("lift after compile is the identity modulo equivalence") {
  std::mt19937_64 rng(131);
  const auto& reg = fixture_registry();
  synth::DeterministicStubProposer proposer;
  for (int trial = 0; trial < 40; ++trial) {
    iir::Plan plan = schema::harmonize(random_plan(rng), reg);
    if (!iir::validate_types(plan, reg).empty()) continue;
    auto [skeleton, symtab] = synth::compile_skeleton(plan, reg);
    hcl::HclProgram program = synth::decode(skeleton, proposer, reg);
    iir::Plan lifted = hcl::lift(program, reg);
    lifted.specs = plan.specs;
    CHECK(iir::plan_equiv(lifted, plan));
  }
}
