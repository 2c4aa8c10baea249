#include <catch2/catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace iacforge;
using namespace testsupport;

namespace {

/// Drives a decoder state over the token stream of a program prefix.
synth::DecoderState state_after(const std::string& text, const schema::SchemaRegistry& reg,
                                std::map<std::string, std::vector<std::string>> addresses) {
  synth::DecoderState st(reg, std::move(addresses));
  for (const auto& tok : hcl::lex(text)) {
    if (tok.kind == hcl::TokKind::end) break;
    st.feed(tok);
  }
  return st;
}

bool admits_ident(const std::vector<synth::TokenPattern>& pats, const std::string& name) {
  hcl::Token t;
  t.kind = hcl::TokKind::ident;
  t.text = name;
  return synth::matches_any(pats, t);
}

bool admits_kind(const std::vector<synth::TokenPattern>& pats, hcl::TokKind k,
                 const std::string& text = "") {
  hcl::Token t;
  t.kind = k;
  t.text = text;
  return synth::matches_any(pats, t);
}

}  // namespace

TEST_CASE("compile_skeleton emits topological order with prefilled references") {
  const auto& reg = fixture_registry();
  iir::Plan plan = schema::harmonize(tiny_web_plan(), reg);
  auto [skeleton, symtab] = synth::compile_skeleton(plan, reg);
  REQUIRE(skeleton.program.blocks.size() == 3);
  CHECK(skeleton.program.blocks[0].labels[0] == "vpc");
  CHECK(skeleton.program.blocks[1].labels[0] == "subnet");
  CHECK(skeleton.program.blocks[2].labels[0] == "ec2");
  const hcl::HclExpr* ref = skeleton.program.blocks[2].attribute("subnet_id");
  REQUIRE(ref != nullptr);
  CHECK(ref->ref_path == std::vector<std::string>{"subnet", "app", "id"});
  CHECK(skeleton.holes.empty());  // fully specified plan
  CHECK(symtab.address("web") == "ec2.web");
  CHECK_THROWS_AS(symtab.address("nope"), Error);
}

TEST_CASE("compile_skeleton spec edge cases") {
  const auto& reg = fixture_registry();
  SECTION("empty plan") {
    auto [skeleton, symtab] = synth::compile_skeleton(iir::Plan{}, reg);
    CHECK(skeleton.program.blocks.empty());
    CHECK(skeleton.holes.empty());
    CHECK(symtab.kind_of.empty());
  }
  SECTION("undeclared edge endpoint") {
    iir::Plan plan;
    plan.nodes.push_back(mk_node("a", "vpc"));
    plan.edges.push_back(iir::PlanEdge::depends("a", "ghost"));
    CHECK_THROWS_AS(synth::compile_skeleton(plan, reg), Error);
  }
  SECTION("cyclic plan") {
    iir::Plan plan = graph_plan(2, {{0, 1}, {1, 0}});
    try {
      synth::compile_skeleton(plan, reg);
      FAIL("expected cyclic-plan error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::cyclic_plan);
    }
  }
  SECTION("required fields without plan values become holes") {
    iir::Plan plan = tiny_web_plan();
    plan.node("web")->remove_field("ami");
    iir::Plan h = schema::harmonize(plan, reg);
    auto [skeleton, symtab] = synth::compile_skeleton(h, reg);
    REQUIRE(skeleton.holes.size() == 1);
    CHECK(skeleton.holes[0].node_id == "web");
    CHECK(skeleton.holes[0].field == "ami");
    const hcl::HclExpr* hole = skeleton.program.blocks[2].attribute("ami");
    REQUIRE(hole != nullptr);
    CHECK(hole->kind == hcl::HclExpr::Kind::hole);
  }
}

TEST_CASE("admissible_tokens inside an ec2 body") {
  const auto& reg = fixture_registry();
  std::map<std::string, std::vector<std::string>> addresses{{"ec2", {"web"}}};
  SECTION("ami unemitted: attribute names include ami, exclude cidr_block") {
    auto st = state_after(R"(resource "ec2" "web" { )", reg, addresses);
    auto pats = st.admissible_tokens();
    CHECK(admits_ident(pats, "ami"));
    CHECK(admits_ident(pats, "instance_type"));
    CHECK_FALSE(admits_ident(pats, "cidr_block"));
    CHECK_FALSE(admits_kind(pats, hcl::TokKind::rbrace));  // required fields remain
  }
  SECTION("all required fields emitted admits block close") {
    auto st2 = state_after(
        "resource \"vpc\" \"main\" {}\n"
        "resource \"subnet\" \"app\" { vpc_id = vpc.main.id }\n"
        "resource \"ec2\" \"web\" { ami = \"ami-0a1b2c3d4e5f6a7b8\" instance_type = \"t3.micro\" "
        "subnet_id = subnet.app.id ",
        reg,
        {{"vpc", {"main"}}, {"subnet", {"app"}}, {"ec2", {"web"}}});
    auto pats = st2.admissible_tokens();
    CHECK(admits_kind(pats, hcl::TokKind::rbrace));
    CHECK_FALSE(admits_ident(pats, "ami"));       // already emitted
    CHECK(admits_ident(pats, "encrypted"));       // optional still admissible
    CHECK(admits_ident(pats, "ingress"));         // rule blocks stay admissible
  }
  SECTION("allowed-value mask is exactly the declared set") {
    auto st = state_after(R"(resource "ec2" "web" { instance_type = )", reg, addresses);
    auto pats = st.admissible_tokens();
    REQUIRE(pats.size() == 1);
    CHECK(pats[0].kind == hcl::TokKind::string_lit);
    REQUIRE(pats[0].texts.has_value());
    CHECK(*pats[0].texts == std::vector<std::string>{"t3.medium", "t3.mega", "t3.micro",
                                                     "t3.nano", "t3.small"});
    CHECK(admits_kind(pats, hcl::TokKind::string_lit, "t3.micro"));
    CHECK_FALSE(admits_kind(pats, hcl::TokKind::string_lit, "t9.galactic"));
    CHECK_FALSE(admits_kind(pats, hcl::TokKind::number_lit, "3"));
  }
  SECTION("reference fields admit only compatible earlier targets") {
    auto st = state_after(
        "resource \"vpc\" \"main\" {}\n"
        "resource \"subnet\" \"app\" { vpc_id = vpc.main.id }\n"
        "resource \"ec2\" \"web\" { subnet_id = ",
        reg, {{"vpc", {"main"}}, {"subnet", {"app"}}, {"ec2", {"web"}}});
    auto pats = st.admissible_tokens();
    REQUIRE(pats.size() == 1);
    CHECK(pats[0].kind == hcl::TokKind::ident);
    CHECK(*pats[0].texts == std::vector<std::string>{"subnet"});
  }
  SECTION("feeding an out-of-mask token is a dead-state error") {
    auto st = state_after(R"(resource "ec2" "web" { instance_type = )", reg, addresses);
    hcl::Token bad;
    bad.kind = hcl::TokKind::string_lit;
    bad.text = "t9.galactic";
    CHECK_THROWS_AS(st.feed(bad), Error);
  }
}

TEST_CASE("grammar automaton accepts exactly what the parser accepts") {
  std::mt19937_64 rng(211);
  const auto& reg = fixture_registry();
  synth::DeterministicStubProposer proposer;
  // Positive side: every decoded program's token stream is automaton-accepted
  // (decode itself asserts this). Negative side: random token perturbations
  // that the automaton rejects must also fail the parser.
  for (int trial = 0; trial < 40; ++trial) {
    iir::Plan plan = schema::harmonize(random_plan(rng), reg);
    if (!iir::validate_types(plan, reg).empty()) continue;
    auto [skeleton, symtab] = synth::compile_skeleton(plan, reg);
    hcl::HclProgram program = synth::decode(skeleton, proposer, reg);
    std::string text = hcl::print(program);
    auto toks = hcl::lex(text);
    if (toks.size() < 3) continue;

    synth::GrammarAutomaton g;
    std::size_t cut = rng() % (toks.size() - 1);
    bool automaton_ok = true;
    std::vector<hcl::Token> prefix;
    for (std::size_t i = 0; i < cut; ++i) {
      prefix.push_back(toks[i]);
      g.step(toks[i]);  // known-good prefix
    }
    // splice a random token and check parser/automaton agreement
    hcl::Token random_tok = toks[rng() % toks.size()];
    automaton_ok = synth::matches_any(g.admissible(), random_tok);
    prefix.push_back(random_tok);
    std::string spliced;
    for (const auto& t : prefix) {
      switch (t.kind) {
        case hcl::TokKind::ident: spliced += t.text; break;
        case hcl::TokKind::string_lit: spliced += "\"" + t.text + "\""; break;
        case hcl::TokKind::number_lit: spliced += t.text; break;
        case hcl::TokKind::bool_lit: spliced += t.text; break;
        case hcl::TokKind::lbrace: spliced += "{"; break;
        case hcl::TokKind::rbrace: spliced += "}"; break;
        case hcl::TokKind::lbracket: spliced += "["; break;
        case hcl::TokKind::rbracket: spliced += "]"; break;
        case hcl::TokKind::equals: spliced += "="; break;
        case hcl::TokKind::comma: spliced += ","; break;
        case hcl::TokKind::dot: spliced += "."; break;
        case hcl::TokKind::end: break;
      }
      spliced += " ";
    }
    bool parser_prefix_ok = true;
    try {
      hcl::parse(spliced);
    } catch (const Error& e) {
      // a failure *at the spliced token* means the prefix was rejected; a
      // failure at end-of-input means the prefix is still extendable
      std::string msg = e.what();
      parser_prefix_ok = msg.find("end of input") != std::string::npos;
    }
    if (!automaton_ok) CHECK_FALSE(parser_prefix_ok);
  }
}

TEST_CASE("decode fills holes deterministically") {
  const auto& reg = fixture_registry();
  iir::Plan plan = tiny_web_plan();
  plan.node("web")->remove_field("instance_type");
  iir::Plan h = schema::harmonize(plan, reg);
  auto [skeleton, symtab] = synth::compile_skeleton(h, reg);
  REQUIRE(skeleton.holes.size() == 1);

  synth::DeterministicStubProposer proposer;
  hcl::HclProgram once = synth::decode(skeleton, proposer, reg);
  hcl::HclProgram twice = synth::decode(skeleton, proposer, reg);
  CHECK(hcl::print(once) == hcl::print(twice));  // byte-identical
  const hcl::HclExpr* chosen = once.blocks[2].attribute("instance_type");
  REQUIRE(chosen != nullptr);
  CHECK(chosen->str == "t3.medium");  // lexicographically smallest allowed value
}

TEST_CASE("two-value allowed set: stub picks lexicographic first") {
  synth::HoleContext ctx;
  ctx.desc.decl.type = iir::ValueType::string;
  ctx.desc.decl.allowed_values = std::vector<std::string>{"t3.small", "t3.micro"};
  hcl::HclExpr chosen = synth::stub_choice(ctx);
  CHECK(chosen.str == "t3.micro");
}

TEST_CASE("hole-free skeleton decodes to itself") {
  const auto& reg = fixture_registry();
  iir::Plan plan = schema::harmonize(tiny_web_plan(), reg);
  auto [skeleton, symtab] = synth::compile_skeleton(plan, reg);
  synth::DeterministicStubProposer proposer;
  hcl::HclProgram out = synth::decode(skeleton, proposer, reg);
  CHECK(out == skeleton.program);
  CHECK(hcl::print(out) == hcl::print(skeleton.program));
}

TEST_CASE("misbehaving proposer is bounded by the retry limit") {
  const auto& reg = fixture_registry();
  iir::Plan plan = tiny_web_plan();
  plan.node("web")->remove_field("instance_type");
  iir::Plan h = schema::harmonize(plan, reg);
  auto [skeleton, symtab] = synth::compile_skeleton(h, reg);

  struct HostileProposer final : synth::Proposer {
    int calls = 0;
    hcl::HclExpr propose(const synth::HoleContext&) override {
      ++calls;
      return hcl::HclExpr::string_lit("t9.galactic");  // never admissible
    }
  } hostile;

  synth::DecodeTrace trace;
  hcl::HclProgram out = synth::decode(skeleton, hostile, reg, &trace);
  CHECK(hostile.calls == synth::kProposerRetryBound);
  CHECK(out.blocks[2].attribute("instance_type")->str == "t3.medium");  // forced stub
  bool forced_note = false;
  for (const auto& n : trace.notes)
    if (n.find("force-selected") != std::string::npos) forced_note = true;
  CHECK(forced_note);
}

TEST_CASE("unsatisfiable reference holes are dead states") {
  const auto& reg = fixture_registry();
  iir::Plan plan;
  auto web = mk_node("web", "ec2");
  web.set_field("ami", iir::TypedValue::make_string("ami-0a1b2c3d4e5f6a7b8"));
  web.set_field("instance_type", iir::TypedValue::make_string("t3.micro"));
  plan.nodes.push_back(web);  // no subnet anywhere
  auto [skeleton, symtab] = synth::compile_skeleton(plan, reg);
  synth::DeterministicStubProposer proposer;
  try {
    synth::decode(skeleton, proposer, reg);
    FAIL("expected dead state");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::dead_state);
  }
}

TEST_CASE("randomized decode fuzz: admissibility holds and output reparses") {
  std::mt19937_64 rng(307);
  const auto& reg = fixture_registry();
  std::size_t steps = 0;
  for (int trial = 0; trial < 25; ++trial) {
    iir::Plan plan = random_plan(rng);
    // poke holes: drop some required non-reference values
    for (auto& n : plan.nodes) {
      const schema::KindSchema* ks = reg.find("aws", n.kind);
      for (const auto& decl : ks->fields)
        if (decl.required && decl.type != iir::ValueType::reference && rng() % 2 == 0)
          n.remove_field(decl.name);
    }
    iir::Plan h = schema::harmonize(plan, reg);
    auto [skeleton, symtab] = synth::compile_skeleton(h, reg);
    synth::RandomizedStubProposer proposer(rng());
    synth::DecodeTrace trace;
    hcl::HclProgram program = synth::decode(skeleton, proposer, reg, &trace);
    steps += trace.steps;
    hcl::HclProgram reparsed = hcl::parse(hcl::print(program));
    CHECK(reparsed == program);
    auto [ok, ces] = val::validate_schema(program, reg);
    CHECK(ok);
  }
  CHECK(steps > 1000);  // decoding steps were actually exercised
}
