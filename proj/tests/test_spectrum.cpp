#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "planvl/errors.hpp"
#include "planvl/spectrum.hpp"
#include "test_support.hpp"

using namespace planvl;

namespace {

Instruction make_instruction(const std::string& id, const std::string& text) {
  Instruction inst;
  inst.id = id;
  inst.map_id = "map-1";
  inst.text = text;
  inst.task_type = "seed";
  inst.intents = {"seed"};
  inst.complexity = 1;
  return inst;
}

IntentTagging tagging(const std::string& id, std::vector<std::string> intents) {
  IntentTagging t;
  t.instruction_id = id;
  t.intents = std::move(intents);
  return t;
}

}  // namespace

TEST_SUITE("spectrum.intents") {
  TEST_CASE("normalize_intent lowercases and joins runs of separators") {
    CHECK(normalize_intent("Spatial Analysis") == "spatial_analysis");
    CHECK(normalize_intent("  Multi--Step  Reasoning! ") == "multi_step_reasoning");
    CHECK(normalize_intent("ALREADY_SNAKE") == "already_snake");
    CHECK(normalize_intent("counting") == "counting");
    CHECK(normalize_intent("--- ") == "");
    CHECK(normalize_intent("3D layout") == "3d_layout");
  }

  TEST_CASE("parse_intent_list tolerates surrounding prose and dedupes") {
    auto intents = parse_intent_list(
        "Sure! The labels are:\n[\"Spatial Analysis\", \"counting\", \"spatial analysis\"]\nDone.");
    CHECK(intents == std::vector<std::string>{"spatial_analysis", "counting"});
  }

  TEST_CASE("parse_intent_list rejects malformed output") {
    CHECK_THROWS_AS(parse_intent_list("no array here"), ParseError);
    CHECK_THROWS_AS(parse_intent_list("[\"unterminated\""), ParseError);
    CHECK_THROWS_AS(parse_intent_list("[\"ok\", 3]"), ParseError);
    CHECK_THROWS_AS(parse_intent_list("[]"), ParseError);
    CHECK_THROWS_AS(parse_intent_list("[\"---\"]"), ParseError);
    CHECK_THROWS_AS(parse_intent_list("[not json]"), ParseError);
  }

  TEST_CASE("tag_intents sends the instruction text and parses the reply") {
    auto mock = testsup::mock_from_entries(json::array(
        {testsup::mock_entry("Where is the industrial zone", "[\"location_identification\"]")}));
    auto gw = testsup::plain_gateway(mock);
    Instruction inst = make_instruction("inst-1", "Where is the industrial zone?");
    IntentTagging t = tag_intents(inst, gw, "tagger-1");
    CHECK(t.instruction_id == "inst-1");
    CHECK(t.intents == std::vector<std::string>{"location_identification"});
    REQUIRE(mock->chat_log().size() == 1);
    CHECK(mock->chat_log()[0].find("intent tagger") != std::string::npos);
  }

  TEST_CASE("tag_intents retries once on unparseable output") {
    json entry = testsup::mock_entry("industrial", "");
    entry.erase("response");
    entry["responses"] = json::array({"I cannot answer that.", "[\"spatial_analysis\"]"});
    auto mock = testsup::mock_from_entries(json::array({entry}));
    auto gw = testsup::plain_gateway(mock);
    IntentTagging t = tag_intents(make_instruction("inst-1", "industrial layout?"), gw, "tagger-1");
    CHECK(t.intents == std::vector<std::string>{"spatial_analysis"});
    CHECK(mock->chat_log().size() == 2);
  }

  TEST_CASE("tag_intents gives up after the retry") {
    json entry = testsup::mock_entry("industrial", "");
    entry.erase("response");
    entry["responses"] = json::array({"nope", "still nope"});
    auto mock = testsup::mock_from_entries(json::array({entry}));
    auto gw = testsup::plain_gateway(mock);
    CHECK_THROWS_AS(tag_intents(make_instruction("inst-1", "industrial layout?"), gw, "tagger-1"),
                    ParseError);
  }

  TEST_CASE("tagging validation rejects duplicates and empties") {
    CHECK_THROWS_AS(tagging("inst-1", {"a", "a"}).validate(), ValidationError);
    CHECK_THROWS_AS(tagging("inst-1", {}).validate(), ValidationError);
    CHECK_THROWS_AS(tagging("", {"a"}).validate(), ValidationError);
    IntentTagging t = tagging("inst-1", {"a", "b"});
    CHECK(IntentTagging::from_json(t.to_json()) == t);
  }
}

TEST_SUITE("spectrum.kmeans") {
  TEST_CASE("k equal to one yields the global mean") {
    std::vector<std::vector<double>> points{{0, 0}, {2, 0}, {0, 2}, {2, 2}};
    KMeansResult r = kmeans(points, 1, 7);
    CHECK(r.assignment == std::vector<int>{0, 0, 0, 0});
    REQUIRE(r.centroids.size() == 1);
    CHECK(r.centroids[0][0] == doctest::Approx(1.0));
    CHECK(r.centroids[0][1] == doctest::Approx(1.0));
  }

  TEST_CASE("well separated blobs are recovered") {
    std::vector<std::vector<double>> points{
        {0.0, 0.1}, {0.1, 0.0}, {0.05, 0.05}, {9.9, 10.0}, {10.0, 9.9}, {10.1, 10.1}};
    KMeansResult r = kmeans(points, 2, 42);
    CHECK(r.assignment[0] == r.assignment[1]);
    CHECK(r.assignment[1] == r.assignment[2]);
    CHECK(r.assignment[3] == r.assignment[4]);
    CHECK(r.assignment[4] == r.assignment[5]);
    CHECK(r.assignment[0] != r.assignment[3]);
  }

  TEST_CASE("deterministic for a fixed seed and a valid partition always") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 30; ++trial) {
      const int k = 2 + static_cast<int>(rng() % 3);
      const std::size_t n = static_cast<std::size_t>(k) + rng() % 12;
      std::vector<std::vector<double>> points(n, std::vector<double>(2));
      for (auto& p : points)
        for (auto& v : p) v = static_cast<double>(rng() % 1000) / 100.0;
      const std::uint64_t seed = rng();
      KMeansResult a = kmeans(points, k, seed);
      KMeansResult b = kmeans(points, k, seed);
      CHECK(a.assignment == b.assignment);
      CHECK(a.centroids == b.centroids);

      std::vector<int> counts(k, 0);
      for (int c : a.assignment) {
        REQUIRE(c >= 0);
        REQUIRE(c < k);
        ++counts[c];
      }
      for (int c = 0; c < k; ++c) CHECK(counts[c] >= 1);  // no empty clusters
    }
  }

  TEST_CASE("argument validation") {
    std::vector<std::vector<double>> points{{0}, {1}};
    CHECK_THROWS_AS(kmeans(points, 0, 1), PreconditionError);
    CHECK_THROWS_AS(kmeans(points, 3, 1), PreconditionError);
    std::vector<std::vector<double>> ragged{{0, 1}, {1}};
    CHECK_THROWS_AS(kmeans(ragged, 1, 1), PreconditionError);
  }
}

TEST_SUITE("spectrum.build") {
  TEST_CASE("two obvious groups split into labeled task types") {
    std::vector<IntentTagging> taggings{
        tagging("i1", {"counting"}),
        tagging("i2", {"counting"}),
        tagging("i3", {"counting"}),
        tagging("i4", {"policy_reasoning", "spatial_analysis", "comparison"}),
        tagging("i5", {"policy_reasoning", "spatial_analysis"}),
        tagging("i6", {"policy_reasoning", "spatial_analysis", "tradeoff"}),
    };
    TaskSpectrum s = build_spectrum(taggings, 2, 11);
    REQUIRE(s.task_types.size() == 2);
    // complexity order puts the multi-intent cluster first
    CHECK(s.complexity_order[0] == s.task_types[0].label);
    CHECK(s.task_types[0].mean_intent_count > s.task_types[1].mean_intent_count);
    std::set<std::string> heavy(s.task_types[0].member_ids.begin(),
                                s.task_types[0].member_ids.end());
    CHECK(heavy == std::set<std::string>{"i4", "i5", "i6"});
    CHECK(s.task_types[0].label == "policy_reasoning");
    CHECK(s.task_types[1].label == "counting");
    CHECK(s.task_types[1].mean_intent_count == doctest::Approx(1.0));

    // serialization is idempotent (means settle at 6 decimals)
    TaskSpectrum round = TaskSpectrum::from_json(s.to_json());
    CHECK(round.to_json() == s.to_json());
    CHECK(round.complexity_order == s.complexity_order);
  }

  TEST_CASE("identical dominant intents get disambiguated labels") {
    // "zoning" dominates every possible cluster, so both labels collide.
    std::vector<IntentTagging> taggings{
        tagging("i1", {"zoning", "zz1"}),
        tagging("i2", {"zoning", "zz2"}),
        tagging("i3", {"zoning", "zz3"}),
        tagging("i4", {"zoning", "zz4"}),
    };
    TaskSpectrum s = build_spectrum(taggings, 2, 3);
    std::set<std::string> labels{s.task_types[0].label, s.task_types[1].label};
    CHECK(labels == std::set<std::string>{"zoning", "zoning_2"});
  }

  TEST_CASE("k larger than the distinct instruction count is rejected") {
    std::vector<IntentTagging> taggings{tagging("i1", {"a"}), tagging("i1", {"b"})};
    CHECK_THROWS_AS(build_spectrum(taggings, 2, 1), PreconditionError);
    CHECK_THROWS_AS(build_spectrum({}, 1, 1), PreconditionError);
  }

  TEST_CASE("spectrum validation invariants") {
    TaskSpectrum s;
    s.task_types = {TaskType{"a", {"i1"}, 2.0}, TaskType{"b", {"i2"}, 1.0}};
    s.complexity_order = {"a", "b"};
    CHECK_NOTHROW(s.validate());

    TaskSpectrum swapped = s;
    swapped.complexity_order = {"b", "a"};
    CHECK_THROWS_AS(swapped.validate(), ValidationError);

    TaskSpectrum dup = s;
    dup.task_types[1].label = "a";
    CHECK_THROWS_AS(dup.validate(), ValidationError);

    TaskSpectrum shared = s;
    shared.task_types[1].member_ids = {"i1"};
    CHECK_THROWS_AS(shared.validate(), ValidationError);

    TaskSpectrum unknown = s;
    unknown.complexity_order = {"a", "zzz"};
    CHECK_THROWS_AS(unknown.validate(), ValidationError);
  }
}
