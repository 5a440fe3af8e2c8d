#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "planvl/cpt.hpp"
#include "planvl/errors.hpp"
#include "test_support.hpp"

using namespace planvl;

namespace {

Instruction question(const std::string& text) {
  Instruction inst;
  inst.id = "inst-1";
  inst.map_id = "map-1";
  inst.text = text;
  inst.origin = Origin::synthesized;
  return inst;
}

CriticalPoint failing_point(const std::string& claim, double score) {
  CriticalPoint p;
  p.index = 1;
  p.claim = claim;
  p.status = PointStatus::unverified;
  p.verification_score = score;
  p.status = PointStatus::verified;  // score requires a non-unverified status
  return p;
}

std::vector<double> angled(double degrees) {
  const double rad = degrees * 3.14159265358979323846 / 180.0;
  return {std::cos(rad), std::sin(rad), 0, 0};
}

}  // namespace

TEST_SUITE("cpt.parse") {
  TEST_CASE("structured points with key phrases") {
    auto points = parse_critical_points(
        "Critical Point 1: The park borders the river.\n"
        "Key Phrase 1: park\n"
        "Critical Point 2: Two schools serve the district.\n"
        "Key Phrase 2: schools\n");
    REQUIRE(points.size() == 2);
    CHECK(points[0].index == 1);
    CHECK(points[0].claim == "The park borders the river.");
    REQUIRE(points[0].key_phrase.has_value());
    CHECK(*points[0].key_phrase == "park");
    CHECK(points[0].status == PointStatus::unverified);
    CHECK(points[1].index == 2);
    CHECK_FALSE(points[1].verification_score.has_value());
    for (const auto& p : points) p.validate();
  }

  TEST_CASE("non-contiguous numbering is re-indexed with a warning") {
    std::vector<std::string> warnings;
    auto points = parse_critical_points(
        "Critical Point 2: First listed claim.\nCritical Point 5: Second listed claim.\n",
        &warnings);
    REQUIRE(points.size() == 2);
    CHECK(points[0].index == 1);
    CHECK(points[1].index == 2);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("re-indexed") != std::string::npos);
  }

  TEST_CASE("tolerates list numbers, casing, and full-width colons") {
    auto points = parse_critical_points(
        "1. critical point 1: lowered label\n"
        "2) CRITICAL POINT 2\xEF\xBC\x9A full-width colon claim\n");
    REQUIRE(points.size() == 2);
    CHECK(points[0].claim == "lowered label");
    CHECK(points[1].claim == "full-width colon claim");
  }

  TEST_CASE("unusable output is a parse error") {
    CHECK_THROWS_AS(parse_critical_points("Just prose, no structure."), ParseError);
    CHECK_THROWS_AS(parse_critical_points(""), ParseError);
    CHECK_THROWS_AS(parse_critical_points("Critical Point 1:\nCritical Point 2:   "), ParseError);
    try {
      parse_critical_points("nope");
    } catch (const ParseError& e) {
      CHECK(e.raw_text() == "nope");
    }
  }
}

TEST_SUITE("cpt.verify") {
  TEST_CASE("query embeds the claim and the instruction") {
    CriticalPoint p;
    p.index = 1;
    p.claim = "The depot is north of the canal.";
    const std::string q = formulate_verification_query(p, question("Where is the depot?"));
    CHECK(q.find("The depot is north of the canal.") != std::string::npos);
    CHECK(q.find("Where is the depot?") != std::string::npos);

    CriticalPoint empty;
    empty.index = 1;
    CHECK_THROWS_AS(formulate_verification_query(empty, question("q")), PreconditionError);
  }

  TEST_CASE("verdict and confidence parsing") {
    CHECK(parse_verification_reply("VERDICT: YES") == 1.0);
    CHECK(parse_verification_reply("VERDICT: NO") == 0.0);
    CHECK(parse_verification_reply("VERDICT: NO\nCONFIDENCE: 0.2") == 0.2);
    CHECK(parse_verification_reply("verdict: yes\nconfidence: 0.85") == 0.85);
    CHECK(parse_verification_reply("VERDICT: YES\nCONFIDENCE: 7") == 1.0);  // out of range
    CHECK(parse_verification_reply("The VERDICT: NO, see legend.\nCONFIDENCE: 0.40") == 0.40);
    CHECK_THROWS_AS(parse_verification_reply("I think it is fine."), ParseError);
    CHECK_THROWS_AS(parse_verification_reply(""), ParseError);
    CHECK_THROWS_AS(parse_verification_reply("CONFIDENCE: 0.9"), ParseError);
  }

  TEST_CASE("verify_point retries once on garbage") {
    testsup::TempDir dir;
    std::string img = testsup::write_test_png(dir.file("m.png"), 16, 16);
    PlanningMap map = testsup::make_map(img);
    json entry = testsup::mock_entry("verifying a single factual claim", "");
    entry.erase("response");
    entry["responses"] = json::array({"shrug", "VERDICT: YES\nCONFIDENCE: 0.8"});
    auto mock = testsup::mock_from_entries(json::array({entry}));
    auto gw = testsup::plain_gateway(mock);
    CriticalPoint p;
    p.index = 1;
    p.claim = "claim";
    const std::string q = formulate_verification_query(p, question("q"));
    CHECK(verify_point(q, map, gw, "ver-1") == 0.8);
    CHECK(mock->chat_log().size() == 2);
    CHECK(mock->chat_log()[1].find(testsup::image_marker(img)) != std::string::npos);
  }
}

TEST_SUITE("cpt.correct") {
  TEST_CASE("correcting a passing point is a precondition error") {
    testsup::TempDir dir;
    PlanningMap map = testsup::make_map(testsup::write_test_png(dir.file("m.png"), 16, 16));
    auto mock = testsup::mock_from_entries(json::array());
    auto gw = testsup::plain_gateway(mock);
    CptModels models{"gen", "ver", "cor", "emb"};
    CHECK_THROWS_AS(
        correct_point(failing_point("ok claim", 0.9), map, "query", gw, models, CptConfig{}),
        PreconditionError);
  }

  TEST_CASE("single round swaps the claim into the re-verification query") {
    testsup::TempDir dir;
    PlanningMap map = testsup::make_map(testsup::write_test_png(dir.file("m.png"), 16, 16));
    auto mock = testsup::mock_from_entries(json::array({
        testsup::mock_entry("failed verification", "The depot is south of the canal."),
        testsup::mock_entry("south of the canal", "VERDICT: YES\nCONFIDENCE: 0.9"),
    }));
    auto gw = testsup::plain_gateway(mock);
    CptModels models{"gen", "ver", "cor", "emb"};
    CriticalPoint p = failing_point("The depot is north of the canal.", 0.2);
    const std::string query =
        formulate_verification_query(p, question("Where is the depot?"));
    CriticalPoint out = correct_point(p, map, query, gw, models, CptConfig{});
    CHECK(out.claim == "The depot is south of the canal.");
    CHECK(out.status == PointStatus::corrected);
    CHECK(out.verification_score == 0.9);
    CHECK(out.verification_query.value().find("south of the canal") != std::string::npos);
    CHECK(out.verification_query.value().find("north of the canal") == std::string::npos);
    CHECK_FALSE(out.has_flag("below_threshold"));
    CHECK_FALSE(out.has_flag("no_change"));
  }

  TEST_CASE("an unchanged claim is flagged and a still-failing one marked below threshold") {
    testsup::TempDir dir;
    PlanningMap map = testsup::make_map(testsup::write_test_png(dir.file("m.png"), 16, 16));
    auto mock = testsup::mock_from_entries(json::array({
        testsup::mock_entry("failed verification", "The depot is north of the canal."),
        testsup::mock_entry("verifying a single factual claim", "VERDICT: NO\nCONFIDENCE: 0.1"),
    }));
    auto gw = testsup::plain_gateway(mock);
    CptModels models{"gen", "ver", "cor", "emb"};
    CriticalPoint p = failing_point("The depot is north of the canal.", 0.2);
    const std::string query = formulate_verification_query(p, question("Where is the depot?"));
    CriticalPoint out = correct_point(p, map, query, gw, models, CptConfig{});
    CHECK(out.has_flag("no_change"));
    CHECK(out.has_flag("below_threshold"));
    CHECK(out.status == PointStatus::corrected);
    CHECK(out.verification_score == 0.1);
  }

  TEST_CASE("extra rounds run until the threshold is met") {
    testsup::TempDir dir;
    PlanningMap map = testsup::make_map(testsup::write_test_png(dir.file("m.png"), 16, 16));
    json correct_entry = testsup::mock_entry("failed verification", "");
    correct_entry.erase("response");
    correct_entry["responses"] =
        json::array({"The depot is east of the canal.", "The depot is south of the canal."});
    auto mock = testsup::mock_from_entries(json::array({
        correct_entry,
        testsup::mock_entry("east of the canal", "VERDICT: NO\nCONFIDENCE: 0.3"),
        testsup::mock_entry("south of the canal", "VERDICT: YES\nCONFIDENCE: 0.8"),
    }));
    auto gw = testsup::plain_gateway(mock);
    CptModels models{"gen", "ver", "cor", "emb"};
    CptConfig config;
    config.max_correction_rounds = 2;
    CriticalPoint p = failing_point("The depot is north of the canal.", 0.2);
    const std::string query = formulate_verification_query(p, question("Where is the depot?"));
    CriticalPoint out = correct_point(p, map, query, gw, models, config);
    CHECK(out.claim == "The depot is south of the canal.");
    CHECK(out.verification_score == 0.8);
    CHECK_FALSE(out.has_flag("below_threshold"));
  }
}

TEST_SUITE("cpt.merge") {
  TEST_CASE("later duplicates collapse into earlier survivors") {
    auto mock = testsup::mock_from_entries(json::array(), 4);
    mock->set_embedding("alpha claim", {1, 0, 0, 0});
    mock->set_embedding("alpha claim again", {1, 0, 0, 0});
    mock->set_embedding("beta claim", {0, 1, 0, 0});
    auto gw = testsup::plain_gateway(mock);
    std::vector<CriticalPoint> points{failing_point("alpha claim", 0.9),
                                      failing_point("alpha claim again", 0.9),
                                      failing_point("beta claim", 0.9)};
    points[1].index = 2;
    points[2].index = 3;
    auto merged = merge_redundant_points(points, gw, "emb-1", 0.9);
    REQUIRE(merged.size() == 3);
    CHECK(merged[0].status == PointStatus::verified);
    CHECK(merged[1].status == PointStatus::merged_away);
    CHECK(merged[2].status == PointStatus::verified);
    auto survivors = surviving_points(merged);
    REQUIRE(survivors.size() == 2);
    CHECK(survivors[0].claim == "alpha claim");
    CHECK(survivors[1].claim == "beta claim");

    // idempotent: a second merge pass changes nothing
    auto again = merge_redundant_points(merged, gw, "emb-1", 0.9);
    REQUIRE(again.size() == merged.size());
    for (std::size_t i = 0; i < again.size(); ++i) CHECK(again[i].status == merged[i].status);
  }

  TEST_CASE("merged points drop out of later comparisons") {
    // A~B and B~C are close, A~C is not: C must survive because B is gone.
    auto mock = testsup::mock_from_entries(json::array(), 4);
    mock->set_embedding("a", angled(0));
    mock->set_embedding("b", angled(20));
    mock->set_embedding("c", angled(40));
    auto gw = testsup::plain_gateway(mock);
    std::vector<CriticalPoint> points{failing_point("a", 0.9), failing_point("b", 0.9),
                                      failing_point("c", 0.9)};
    points[1].index = 2;
    points[2].index = 3;
    auto merged = merge_redundant_points(points, gw, "emb-1", 0.9);
    CHECK(merged[0].status == PointStatus::verified);
    CHECK(merged[1].status == PointStatus::merged_away);
    CHECK(merged[2].status == PointStatus::verified);
  }

  TEST_CASE("empty input is a precondition") {
    auto mock = testsup::mock_from_entries(json::array());
    auto gw = testsup::plain_gateway(mock);
    CHECK_THROWS_AS(merge_redundant_points({}, gw, "emb-1"), PreconditionError);
  }
}

TEST_SUITE("cpt.run") {
  TEST_CASE("failing points are corrected at the threshold and merged output is reconstructed") {
    testsup::TempDir dir;
    std::string img = testsup::write_test_png(dir.file("m.png"), 16, 16);
    PlanningMap map = testsup::make_map(img);

    // Entry order matters: requests for later phases embed earlier text, so
    // phase-unique markers must be matched before bare claim substrings.
    auto mock = testsup::mock_from_entries(json::array({
        testsup::mock_entry(
            "atomic factual claims",
            "Critical Point 1: The residential zone occupies the northern sector.\n"
            "Key Phrase 1: residential zone\n"
            "Critical Point 2: The highway runs along the western edge.\n"
            "Key Phrase 2: highway\n"
            "Critical Point 3: A greenbelt buffers the industrial park.\n"
            "Key Phrase 3: greenbelt\n"
            "Critical Point 4: The reservoir sits in the city center.\n"
            "Key Phrase 4: reservoir\n"),
        testsup::mock_entry("Compose a fluent",
                            "The residential zone occupies the northern sector, and the highway "
                            "runs along the eastern edge. A greenbelt buffers the industrial "
                            "park, while the reservoir sits in the southern district."),
        testsup::mock_entry("Failed claim: \"The highway runs along the western edge.\"",
                            "The highway runs along the eastern edge."),
        testsup::mock_entry("Failed claim: \"The reservoir sits in the city center.\"",
                            "The reservoir sits in the southern district."),
        testsup::mock_entry("northern sector", "VERDICT: YES\nCONFIDENCE: 0.9"),
        testsup::mock_entry("western edge", "VERDICT: NO\nCONFIDENCE: 0.2"),
        testsup::mock_entry("greenbelt buffers", "VERDICT: YES\nCONFIDENCE: 0.9"),
        testsup::mock_entry("city center", "VERDICT: NO\nCONFIDENCE: 0.2"),
        testsup::mock_entry("eastern edge", "VERDICT: YES\nCONFIDENCE: 0.85"),
        testsup::mock_entry("southern district", "VERDICT: YES\nCONFIDENCE: 0.75"),
    }));
    mock->set_embedding("The residential zone occupies the northern sector.", {1, 0, 0, 0, 0, 0, 0, 0});
    mock->set_embedding("The highway runs along the eastern edge.", {0, 1, 0, 0, 0, 0, 0, 0});
    mock->set_embedding("A greenbelt buffers the industrial park.", {0, 0, 1, 0, 0, 0, 0, 0});
    mock->set_embedding("The reservoir sits in the southern district.", {0, 0, 0, 1, 0, 0, 0, 0});
    auto gw = testsup::plain_gateway(mock);

    CptConfig config;  // tau = 0.5
    CptModels models{"gen", "ver", "cor", "emb"};
    CptResult result = run_cpt(map, question("Describe the layout of the planned town."),
                               config, gw, models);

    REQUIRE(result.points.size() == 4);
    CHECK(result.points[0].status == PointStatus::verified);
    CHECK(result.points[1].status == PointStatus::corrected);
    CHECK(result.points[2].status == PointStatus::verified);
    CHECK(result.points[3].status == PointStatus::corrected);
    CHECK(result.points[0].verification_score == 0.9);
    CHECK(result.points[1].verification_score == 0.85);
    CHECK(result.points[3].verification_score == 0.75);
    CHECK(result.points[1].claim == "The highway runs along the eastern edge.");
    CHECK(result.points[3].claim == "The reservoir sits in the southern district.");
    CHECK(result.warnings.empty());
    CHECK(result.response.find("reservoir") != std::string::npos);
    for (const auto& p : result.points) p.validate();
  }

  TEST_CASE("reconstruction retries when a key phrase is missing") {
    testsup::TempDir dir;
    PlanningMap map = testsup::make_map(testsup::write_test_png(dir.file("m.png"), 16, 16));
    json reconstruct = testsup::mock_entry("Compose a fluent", "");
    reconstruct.erase("response");
    reconstruct["responses"] =
        json::array({"An answer that forgets the element.", "The reservoir anchors the plan."});
    auto mock = testsup::mock_from_entries(json::array({
        testsup::mock_entry("atomic factual claims",
                            "Critical Point 1: The reservoir anchors the plan.\n"
                            "Key Phrase 1: reservoir\n"),
        testsup::mock_entry("verifying a single factual claim", "VERDICT: YES\nCONFIDENCE: 0.9"),
        reconstruct,
    }));
    auto gw = testsup::plain_gateway(mock);
    CptResult result =
        run_cpt(map, question("What anchors the plan?"), CptConfig{}, gw, CptModels{"g", "v", "c", "e"});
    CHECK(result.response == "The reservoir anchors the plan.");
    CHECK(result.warnings.empty());

    // and when the retry still misses, the gap is recorded
    json stubborn = testsup::mock_entry("Compose a fluent", "Nothing relevant either time.");
    auto mock2 = testsup::mock_from_entries(json::array({
        testsup::mock_entry("atomic factual claims",
                            "Critical Point 1: The reservoir anchors the plan.\n"
                            "Key Phrase 1: reservoir\n"),
        testsup::mock_entry("verifying a single factual claim", "VERDICT: YES\nCONFIDENCE: 0.9"),
        stubborn,
    }));
    auto gw2 = testsup::plain_gateway(mock2);
    CptResult r2 =
        run_cpt(map, question("What anchors the plan?"), CptConfig{}, gw2, CptModels{"g", "v", "c", "e"});
    REQUIRE(r2.warnings.size() == 1);
    CHECK(r2.warnings[0].find("reservoir") != std::string::npos);
  }

  TEST_CASE("stage failures carry the failing stage name") {
    testsup::TempDir dir;
    PlanningMap map = testsup::make_map(testsup::write_test_png(dir.file("m.png"), 16, 16));
    auto mock = testsup::mock_from_entries(
        json::array({testsup::mock_entry("atomic factual claims", "No structure here.")}));
    auto gw = testsup::plain_gateway(mock);
    try {
      run_cpt(map, question("q"), CptConfig{}, gw, CptModels{"g", "v", "c", "e"});
      FAIL("expected StageError");
    } catch (const StageError& e) {
      CHECK(e.stage() == "cpt.extract");
    }

    auto mock2 = testsup::mock_from_entries(json::array({
        testsup::mock_entry("atomic factual claims",
                            "Critical Point 1: A claim.\nKey Phrase 1: claim\n"),
        testsup::mock_entry("verifying a single factual claim", "mumble"),
    }));
    auto gw2 = testsup::plain_gateway(mock2);
    try {
      run_cpt(map, question("q"), CptConfig{}, gw2, CptModels{"g", "v", "c", "e"});
      FAIL("expected StageError");
    } catch (const StageError& e) {
      CHECK(e.stage() == "cpt.verify");
    }
  }

  TEST_CASE("config bounds are validated") {
    CptConfig bad;
    bad.tau = 1.5;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = CptConfig{};
    bad.max_correction_rounds = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = CptConfig{};
    bad.merge_similarity_threshold = -0.1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    CHECK_NOTHROW(CptConfig{}.validate());
  }
}
