#include <catch2/catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace iacforge;
using namespace testsupport;

TEST_CASE("load_registry on the bundled fixture") {
  const auto& reg = fixture_registry();
  CHECK(reg.kinds.size() == 7);
  CHECK(reg.registry_version == "2025.1");
  CHECK(reg.digest.size() == 64);
  CHECK(reg.find("aws", "ec2") != nullptr);
  CHECK(reg.find("aws", "quantum_router") == nullptr);
  // deterministic load -> identical digest
  auto again = schema::load_registry(kFixtureDir + "/registry.json");
  CHECK(again.digest == reg.digest);
}

TEST_CASE("load_registry edge cases") {
  SECTION("empty kinds") {
    auto reg = schema::registry_from_json_text(R"({"registry_version": "t", "kinds": []})");
    CHECK(reg.kinds.empty());
  }
  SECTION("duplicate kind for one provider") {
    const char* text = R"({
      "kinds": [
        {"provider": "aws", "kind": "ec2", "regions": ["eu-west-1"], "fields": []},
        {"provider": "aws", "kind": "ec2", "regions": ["eu-west-1"], "fields": []}
      ]})";
    try {
      schema::registry_from_json_text(text);
      FAIL("expected duplicate-kind error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::duplicate_kind);
    }
  }
  SECTION("parse error carries line and column") {
    try {
      schema::registry_from_json_text("{\n  \"kinds\": [,]\n}");
      FAIL("expected parse error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  SECTION("required field with default is rejected") {
    const char* text = R"({
      "kinds": [{"provider": "aws", "kind": "x", "regions": ["r"],
                 "fields": [{"name": "f", "type": "string", "required": true, "default": "v"}]}]})";
    CHECK_THROWS_AS(schema::registry_from_json_text(text), Error);
  }
  SECTION("empty allowed set is rejected") {
    const char* text = R"({
      "kinds": [{"provider": "aws", "kind": "x", "regions": ["r"],
                 "fields": [{"name": "f", "type": "string", "allowed": []}]}]})";
    CHECK_THROWS_AS(schema::registry_from_json_text(text), Error);
  }
  SECTION("empty regions rejected") {
    const char* text = R"({"kinds": [{"provider": "aws", "kind": "x", "regions": [], "fields": []}]})";
    CHECK_THROWS_AS(schema::registry_from_json_text(text), Error);
  }
}

TEST_CASE("harmonize expands defaults and pins versions") {
  const auto& reg = fixture_registry();
  iir::Plan plan;
  auto rds = mk_node("db", "rds");
  rds.set_field("engine", iir::TypedValue::make_string("postgres"));
  rds.set_field("instance_class", iir::TypedValue::make_string("db.t3.micro"));
  rds.set_field("subnet_id", iir::TypedValue::make_ref("app"));
  auto subnet = mk_node("app", "subnet");
  subnet.set_field("vpc_id", iir::TypedValue::make_ref("main"));
  plan.nodes = {mk_node("main", "vpc"), subnet, rds};

  iir::Plan h = schema::harmonize(plan, reg);
  const iir::ResourceNode* out = h.node("db");
  REQUIRE(out != nullptr);
  const iir::TypedValue* storage = out->field("storage_gb");
  REQUIRE(storage != nullptr);
  CHECK(storage->integer == 20);
  CHECK(out->metadata.at(schema::kVersionPinKey) == "5.40.0");
}

TEST_CASE("harmonize is a fixpoint on fully specified plans") {
  const auto& reg = fixture_registry();
  iir::Plan plan = tiny_web_plan();
  iir::Plan once = schema::harmonize(plan, reg);
  iir::Plan twice = schema::harmonize(once, reg);
  CHECK(iir::plan_equiv(once, twice));
  CHECK(iir::plan_equiv(once, plan) == false);  // defaults were added
}

TEST_CASE("harmonize rejects unavailable regions") {
  const auto& reg = fixture_registry();
  iir::Plan plan = tiny_web_plan();
  plan.node("web")->region = "us-west-2";  // fixture marks ec2 unavailable there
  try {
    schema::harmonize(plan, reg);
    FAIL("expected region-unavailable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::region_unavailable);
  }
}

TEST_CASE("harmonize concretizes abstract regions from residency") {
  const auto& reg = fixture_registry();
  iir::Plan plan;
  plan.nodes.push_back(mk_node("main", "vpc", ""));
  plan.specs.residency = std::set<std::string>{"eu-central-1"};
  iir::Plan h = schema::harmonize(plan, reg);
  CHECK(h.node("main")->region == "eu-central-1");
}

TEST_CASE("harmonize never removes user content") {
  std::mt19937_64 rng(5);
  const auto& reg = fixture_registry();
  for (int trial = 0; trial < 25; ++trial) {
    iir::Plan plan = random_plan(rng);
    iir::Plan h = schema::harmonize(plan, reg);
    for (const auto& n : plan.nodes) {
      const iir::ResourceNode* out = h.node(n.id);
      REQUIRE(out != nullptr);
      for (const auto& [name, value] : n.fields) {
        const iir::TypedValue* kept = out->field(name);
        REQUIRE(kept != nullptr);
        CHECK(*kept == value);
      }
    }
    iir::Plan normalized = iir::normalize_plan(plan);
    for (const auto& e : normalized.edges) {
      bool found = false;
      for (const auto& he : iir::normalize_plan(h).edges)
        if (he == e) found = true;
      CHECK(found);
    }
  }
}

TEST_CASE("harmonized plans report no missing_required for defaulted fields") {
  std::mt19937_64 rng(17);
  const auto& reg = fixture_registry();
  for (int trial = 0; trial < 25; ++trial) {
    iir::Plan plan = random_plan(rng);
    iir::Plan h = schema::harmonize(plan, reg);
    for (const auto& ce : iir::validate_types(h, reg)) {
      if (ce.code != "missing_required") continue;
      const schema::KindSchema* ks = reg.find("aws", h.node(ce.node_id)->kind);
      const schema::FieldDecl* decl = ks->field(ce.field);
      REQUIRE(decl != nullptr);
      CHECK(!decl->default_value.has_value());
    }
  }
}

TEST_CASE("harmonize version pin conflicts") {
  const auto& reg = fixture_registry();
  iir::Plan plan;
  plan.nodes.push_back(mk_node("main", "vpc"));

  SECTION("compatible pin re-pins to the active version") {
    plan.nodes[0].metadata[schema::kVersionPinKey] = "2024.4";  // in compatible_versions
    iir::Plan h = schema::harmonize(plan, reg);
    CHECK(h.node("main")->metadata.at(schema::kVersionPinKey) == "5.40.0");
  }
  SECTION("incompatible pin is a version conflict") {
    plan.nodes[0].metadata[schema::kVersionPinKey] = "1999.1";
    try {
      schema::harmonize(plan, reg);
      FAIL("expected version conflict");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::version_conflict);
    }
  }
}

TEST_CASE("version pins never perturb equivalence") {
  iir::Plan p = tiny_web_plan();
  iir::Plan q = p;
  for (auto& n : q.nodes) n.metadata[schema::kVersionPinKey] = "5.40.0";
  CHECK(iir::plan_equiv(p, q));
  CHECK(iir::plan_digest(p) == iir::plan_digest(q));
}
