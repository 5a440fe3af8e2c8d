#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "planvl/errors.hpp"
#include "planvl/synth.hpp"
#include "test_support.hpp"

using namespace planvl;

namespace {

Instruction seed_instruction(const std::string& id, const std::string& type,
                             const std::string& text) {
  Instruction inst;
  inst.id = id;
  inst.map_id = "map-seed";
  inst.text = text;
  inst.task_type = type;
  inst.origin = Origin::seed;
  return inst;
}

TaskSpectrum two_type_spectrum() {
  TaskSpectrum s;
  s.task_types = {TaskType{"reasoning", {"s1", "s2"}, 3.0}, TaskType{"perception", {"s3"}, 1.0}};
  s.complexity_order = {"reasoning", "perception"};
  return s;
}

std::vector<Instruction> seed_pool() {
  return {seed_instruction("s1", "reasoning", "Why is the industrial belt placed along the river?"),
          seed_instruction("s2", "reasoning", "Compare the two residential districts."),
          seed_instruction("s3", "perception", "How many parks are shown?")};
}

TrainingExample raw_example() {
  TrainingExample ex;
  ex.id = "ex-1";
  ex.map_id = "map-1";
  ex.instruction = seed_instruction("inst-1", "reasoning", "Why is the park central?");
  ex.instruction.origin = Origin::synthesized;
  ex.response = "Because the plan concentrates green space.";
  ex.stage_trace = {StageTraceEntry{"cpt", "gen-1", 0}};
  ex.style = ExampleStyle::raw;
  return ex;
}

}  // namespace

TEST_SUITE("synth.parse") {
  TEST_CASE("numbered items with dot or paren markers") {
    auto items = parse_numbered_list(
        "Here are the questions:\n1. First item\n2) Second item\n  3. Third item\nThanks!");
    CHECK(items == std::vector<std::string>{"First item", "Second item", "Third item"});
  }

  TEST_CASE("multi-digit indices and blank items") {
    auto items = parse_numbered_list("9. nine\n10. ten\n11.\n12.   \n13. thirteen");
    CHECK(items == std::vector<std::string>{"nine", "ten", "thirteen"});
  }

  TEST_CASE("unnumbered output fails typed") {
    CHECK_THROWS_AS(parse_numbered_list("no list at all"), ParseError);
    CHECK_THROWS_AS(parse_numbered_list(""), ParseError);
    CHECK_THROWS_AS(parse_numbered_list("1 missing marker"), ParseError);
  }
}

TEST_SUITE("synth.context") {
  TEST_CASE("samples exactly ten pairs across the spectrum") {
    testsup::TempDir dir;
    PlanningMap map = testsup::make_map(testsup::write_test_png(dir.file("m.png"), 16, 16));
    std::mt19937_64 rng(7);
    SynthesisContext ctx =
        build_synthesis_context(map, two_type_spectrum(), seed_pool(), "diversify", "gen-1", rng);
    CHECK(ctx.map_id == map.id);
    CHECK(ctx.diversification_prompt == "diversify");
    REQUIRE(ctx.sampled_pairs.size() == kSynthesisPairCount);
    std::map<std::string, int> counts;
    for (const auto& [type, exemplar] : ctx.sampled_pairs) {
      CHECK(exemplar.task_type == type);
      ++counts[type];
    }
    // least-sampled weighting touches every type over ten draws
    CHECK(counts["reasoning"] >= 1);
    CHECK(counts["perception"] >= 1);
  }

  TEST_CASE("deterministic for a fixed rng state") {
    testsup::TempDir dir;
    PlanningMap map = testsup::make_map(testsup::write_test_png(dir.file("m.png"), 16, 16));
    auto run = [&] {
      std::mt19937_64 rng(123);
      SynthesisContext ctx =
          build_synthesis_context(map, two_type_spectrum(), seed_pool(), "d", "g", rng);
      std::vector<std::string> ids;
      for (const auto& [type, ex] : ctx.sampled_pairs) ids.push_back(type + "/" + ex.id);
      return ids;
    };
    CHECK(run() == run());
  }

  TEST_CASE("missing seed coverage for a task type is a precondition") {
    testsup::TempDir dir;
    PlanningMap map = testsup::make_map(testsup::write_test_png(dir.file("m.png"), 16, 16));
    std::mt19937_64 rng(7);
    std::vector<Instruction> pool{seed_instruction("s1", "reasoning", "Only reasoning seeds.")};
    CHECK_THROWS_AS(
        build_synthesis_context(map, two_type_spectrum(), pool, "d", "g", rng),
        PreconditionError);
    CHECK_THROWS_AS(build_synthesis_context(map, TaskSpectrum{}, pool, "d", "g", rng),
                    PreconditionError);
  }
}

TEST_SUITE("synth.generate") {
  TEST_CASE("synthesized instructions come back typed and capped") {
    testsup::TempDir dir;
    std::string img = testsup::write_test_png(dir.file("m.png"), 16, 16);
    PlanningMap map = testsup::make_map(img);
    auto mock = testsup::mock_from_entries(json::array({testsup::mock_entry(
        "urban planning expert",
        "1. What land uses border the wetland?\n2. Estimate the share of residential land.\n"
        "3. Why is the transit hub located centrally?\n4. Name the northernmost district.")}));
    auto gw = testsup::plain_gateway(mock);

    SynthOptions options;
    options.generator_model = "gen-1";
    options.embed_model = "emb-1";
    options.phi_div = "Diversify the mix.";
    options.rng_seed = 99;
    auto out = synthesize_instructions(map, two_type_spectrum(), seed_pool(), gw, options, 3);
    REQUIRE(out.size() == 3);
    std::set<std::string> ids;
    for (const auto& inst : out) {
      CHECK(inst.map_id == map.id);
      CHECK(inst.origin == Origin::synthesized);
      inst.validate();
      ids.insert(inst.id);
    }
    CHECK(ids.size() == 3);
    REQUIRE(mock->chat_log().size() == 1);
    const std::string sent = mock->chat_log()[0];
    CHECK(sent.find("Diversify the mix.") != std::string::npos);
    CHECK(sent.find("(reasoning)") != std::string::npos);
    CHECK(sent.find(testsup::image_marker(img)) != std::string::npos);
    CHECK(sent.find("3") != std::string::npos);

    CHECK(synthesize_instructions(map, two_type_spectrum(), seed_pool(), gw, options, 0).empty());
  }

  TEST_CASE("unparseable generator output propagates") {
    testsup::TempDir dir;
    PlanningMap map = testsup::make_map(testsup::write_test_png(dir.file("m.png"), 16, 16));
    auto mock = testsup::mock_from_entries(
        json::array({testsup::mock_entry("urban planning expert", "I refuse.")}));
    auto gw = testsup::plain_gateway(mock);
    SynthOptions options;
    options.generator_model = "gen-1";
    CHECK_THROWS_AS(
        synthesize_instructions(map, two_type_spectrum(), seed_pool(), gw, options, 2),
        ParseError);
  }
}

TEST_SUITE("synth.dedupe") {
  TEST_CASE("near duplicates are dropped, first occurrence wins") {
    auto mock = testsup::mock_from_entries(json::array(), 4);
    mock->set_embedding("Where is the park?", {1, 0, 0, 0});
    mock->set_embedding("Where is the park located?", {0.999, 0.0447, 0, 0});
    mock->set_embedding("How many schools are there?", {0, 1, 0, 0});
    auto gw = testsup::plain_gateway(mock);

    std::vector<Instruction> in{
        seed_instruction("i1", "t", "Where is the park?"),
        seed_instruction("i2", "t", "Where is the park located?"),
        seed_instruction("i3", "t", "How many schools are there?"),
    };
    auto kept = dedupe_instructions(in, gw, "emb-1", 0.95);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].id == "i1");
    CHECK(kept[1].id == "i3");
  }

  TEST_CASE("threshold is inclusive and exact repeats always collapse") {
    const std::vector<double> va{1, 0, 0, 0};
    const std::vector<double> vb{0.95, std::sqrt(1 - 0.95 * 0.95), 0, 0};
    auto mock = testsup::mock_from_entries(json::array(), 4);
    mock->set_embedding("a", va);
    mock->set_embedding("b", vb);
    auto gw = testsup::plain_gateway(mock);
    std::vector<Instruction> in{seed_instruction("i1", "t", "a"), seed_instruction("i2", "t", "b"),
                                seed_instruction("i3", "t", "a")};
    const double sim = cosine_similarity(va, vb);  // ~0.95
    auto kept = dedupe_instructions(in, gw, "emb-1", sim);
    REQUIRE(kept.size() == 1);  // b sits exactly at the threshold; repeat of a collapses
    CHECK(kept[0].id == "i1");

    auto loose = dedupe_instructions(in, gw, "emb-1", std::nextafter(sim, 1.0));
    REQUIRE(loose.size() == 2);
    CHECK(loose[1].id == "i2");
  }

  TEST_CASE("empty input is a precondition") {
    auto mock = testsup::mock_from_entries(json::array());
    auto gw = testsup::plain_gateway(mock);
    CHECK_THROWS_AS(dedupe_instructions({}, gw, "emb-1"), PreconditionError);
  }
}

TEST_SUITE("synth.rewrite") {
  TEST_CASE("rewrite swaps the response and appends to the trace") {
    auto mock = testsup::mock_from_entries(json::array({testsup::mock_entry(
        "Exemplar 1", "As a planner would put it: green space anchors the city core.")}));
    auto gw = testsup::plain_gateway(mock);
    TrainingExample ex = raw_example();
    TrainingExample out = rewrite_response(ex, {"The plan balances growth corridors."}, gw, "rw-1");
    CHECK(out.style == ExampleStyle::rewritten);
    CHECK(out.response == "As a planner would put it: green space anchors the city core.");
    REQUIRE(out.stage_trace.size() == 2);
    CHECK(out.stage_trace.back().stage == "rewrite");
    CHECK(out.stage_trace.back().model_id == "rw-1");
    CHECK(out.stage_trace.back().timestamp == 1);
    // original untouched
    CHECK(ex.response == "Because the plan concentrates green space.");
    REQUIRE(mock->chat_log().size() == 1);
    CHECK(mock->chat_log()[0].find("Why is the park central?") != std::string::npos);
    CHECK(mock->chat_log()[0].find("The plan balances growth corridors.") != std::string::npos);
  }

  TEST_CASE("only raw examples can be rewritten") {
    auto mock = testsup::mock_from_entries(json::array());
    auto gw = testsup::plain_gateway(mock);
    TrainingExample ex = raw_example();
    ex.style = ExampleStyle::rewritten;
    CHECK_THROWS_AS(rewrite_response(ex, {"x"}, gw, "rw-1"), PreconditionError);
    CHECK_THROWS_AS(rewrite_response(raw_example(), {}, gw, "rw-1"), PreconditionError);
  }

  TEST_CASE("empty rewriter output is a backend failure") {
    auto mock = testsup::mock_from_entries(
        json::array({testsup::mock_entry("Exemplar 1", "")}));
    auto gw = testsup::plain_gateway(mock);
    CHECK_THROWS_AS(rewrite_response(raw_example(), {"x"}, gw, "rw-1"), BackendError);
  }
}
