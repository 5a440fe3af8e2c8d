#include <string>
#include <vector>

#include "doctest.h"
#include "planvl/errors.hpp"
#include "planvl/hash.hpp"
#include "planvl/json.hpp"
#include "planvl/store.hpp"
#include "planvl/types.hpp"
#include "test_support.hpp"

using namespace planvl;

TEST_SUITE("core.hash") {
  TEST_CASE("sha256 of known vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }

  TEST_CASE("sha256_file matches in-memory hash") {
    testsup::TempDir dir;
    write_file_atomic(dir.file("x.bin"), "abc");
    CHECK(sha256_file_hex(dir.file("x.bin")) == sha256_hex("abc"));
    CHECK_THROWS_AS(sha256_file_hex(dir.file("missing.bin")), IoError);
  }

  TEST_CASE("derive_id shape and determinism") {
    std::string a = derive_id("map", "payload");
    CHECK(a == derive_id("map", "payload"));
    CHECK(a.rfind("map-", 0) == 0);
    CHECK(a.size() == 4 + 12);
    CHECK(a != derive_id("map", "payload2"));
    CHECK(derive_id("inst", "payload") != a);
  }

  TEST_CASE("mix_seed separates keys and seeds") {
    CHECK(mix_seed(1, "a") == mix_seed(1, "a"));
    CHECK(mix_seed(1, "a") != mix_seed(2, "a"));
    CHECK(mix_seed(1, "a") != mix_seed(1, "b"));
  }
}

TEST_SUITE("core.round6") {
  TEST_CASE("rounds to six decimals") {
    CHECK(round6(0.1234564999) == doctest::Approx(0.123456).epsilon(1e-12));
    CHECK(round6(0.1234565001) == doctest::Approx(0.123457).epsilon(1e-12));
    CHECK(round6(-1.0000004) == doctest::Approx(-1.0).epsilon(1e-12));
  }
}

TEST_SUITE("core.types") {
  TEST_CASE("planning map round-trips") {
    PlanningMap map;
    map.id = "map-abc";
    map.source_doc = "plan.pdf";
    map.page = 3;
    map.image_path = "/tmp/x.png";
    map.width_px = 1200;
    map.height_px = 1400;
    map.content_hash = sha256_hex("img");
    map.validate();
    CHECK(PlanningMap::from_json(map.to_json()) == map);
  }

  TEST_CASE("planning map rejects bad hash and dimensions") {
    PlanningMap map;
    map.id = "map-abc";
    map.width_px = 10;
    map.height_px = 10;
    map.content_hash = "XYZ";
    CHECK_THROWS_AS(map.validate(), ValidationError);
    map.content_hash = sha256_hex("x");
    map.width_px = 0;
    CHECK_THROWS_AS(map.validate(), ValidationError);
  }

  TEST_CASE("instruction complexity equals intent count") {
    Instruction inst;
    inst.id = "inst-1";
    inst.text = "Describe the land-use zoning.";
    inst.intents = {"land_use", "zoning"};
    inst.complexity = 2;
    inst.validate();
    CHECK(Instruction::from_json(inst.to_json()) == inst);
    inst.complexity = 3;
    CHECK_THROWS_AS(inst.validate(), ValidationError);
  }

  TEST_CASE("critical point score presence is tied to status") {
    CriticalPoint p;
    p.index = 1;
    p.claim = "The river crosses the northern district.";
    p.status = PointStatus::unverified;
    p.validate();
    p.verification_score = 0.8;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p.status = PointStatus::verified;
    p.validate();
    p.verification_score = 1.5;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p.verification_score.reset();
    CHECK_THROWS_AS(p.validate(), ValidationError);
  }

  TEST_CASE("point status strings round-trip") {
    for (auto s : {PointStatus::unverified, PointStatus::verified, PointStatus::corrected,
                   PointStatus::merged_away}) {
      CHECK(point_status_from_string(to_string(s)) == s);
    }
    CHECK_THROWS_AS(point_status_from_string("bogus"), ValidationError);
  }

  TEST_CASE("corrected points require a cpt trace entry") {
    TrainingExample ex;
    ex.id = "ex-1";
    ex.map_id = "map-1";
    ex.instruction.id = "inst-1";
    ex.instruction.text = "q";
    ex.response = "a";
    CriticalPoint p;
    p.index = 1;
    p.claim = "claim";
    p.status = PointStatus::corrected;
    p.verification_score = 0.9;
    ex.critical_points.push_back(p);
    ex.stage_trace.push_back({"synth", "m", 0});
    CHECK_THROWS_AS(ex.validate(), ValidationError);
    ex.stage_trace.push_back({"cpt", "m", 1});
    ex.validate();
    CHECK(TrainingExample::from_json(ex.to_json()) == ex);
  }

  TEST_CASE("judge result score must recompute from verdicts") {
    JudgeResult r;
    r.item_id = "item-1";
    r.verdicts = {{1, 1, ""}, {2, 0, ""}, {3, 1, ""}};
    r.score = r.recompute_score();
    CHECK(r.score == doctest::Approx(2.0 / 3.0));
    r.validate();
    r.score = 0.5;
    CHECK_THROWS_AS(r.validate(), ValidationError);
    r.score = r.recompute_score();
    r.verdicts[1].criterion_index = 5;
    CHECK_THROWS_AS(r.validate(), ValidationError);
  }

  TEST_CASE("manifest keeps pipeline order") {
    RunManifest m;
    m.run_id = "run-1";
    m.config_hash = sha256_hex("cfg");
    for (const auto& name : kPipelineStageOrder) {
      ManifestStage s;
      s.name = name;
      m.stages.push_back(s);
    }
    m.validate();
    CHECK(RunManifest::from_json(m.to_json()) == m);
    std::swap(m.stages[0], m.stages[1]);
    CHECK_THROWS_AS(m.validate(), ValidationError);
  }

  TEST_CASE("category label sets are fixed") {
    CHECK(kDetailedCategories.size() == 8);
    CHECK(kMainCategories.size() == 4);
    CHECK(kDetailedCategories.front() == "Element");
    CHECK(kMainCategories.front() == "Perception");
  }
}

TEST_SUITE("core.store") {
  TEST_CASE("jsonl round-trips records") {
    testsup::TempDir dir;
    std::vector<Instruction> insts;
    for (int i = 0; i < 3; ++i) {
      Instruction inst;
      inst.id = "inst-" + std::to_string(i);
      inst.text = "text " + std::to_string(i);
      insts.push_back(inst);
    }
    std::string path = dir.file("inst.jsonl");
    CHECK(save_jsonl(insts, path) == 3);
    auto loaded = load_jsonl<Instruction>(path);
    CHECK(loaded == insts);
  }

  TEST_CASE("jsonl load reports the offending line") {
    testsup::TempDir dir;
    std::string path = dir.file("bad.jsonl");
    Instruction inst;
    inst.id = "inst-1";
    inst.text = "ok";
    write_file_atomic(path, inst.to_json().dump() + "\nnot json\n");
    try {
      load_jsonl<Instruction>(path);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
  }

  TEST_CASE("jsonl load reports validation failures with line numbers") {
    testsup::TempDir dir;
    std::string path = dir.file("bad2.jsonl");
    json row = json{{"id", ""}, {"map_id", ""}, {"text", "x"},
                    {"intents", json::array()}, {"task_type", ""},
                    {"complexity", 0}, {"origin", "seed"}};
    write_file_atomic(path, row.dump() + "\n");
    try {
      load_jsonl<Instruction>(path);
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find(":1") != std::string::npos);
    }
  }

  TEST_CASE("atomic write replaces content") {
    testsup::TempDir dir;
    std::string path = dir.file("a.txt");
    write_file_atomic(path, "one");
    write_file_atomic(path, "two");
    CHECK(read_file(path) == "two");
    CHECK_THROWS_AS(read_file(dir.file("nope.txt")), IoError);
  }

  TEST_CASE("sft export emits image-anchored conversations") {
    testsup::TempDir dir;
    std::string img = testsup::write_test_png(dir.file("m.png"), 8, 8);

    TrainingExample ex;
    ex.id = "ex-1";
    ex.map_id = "map-1";
    ex.instruction.id = "inst-1";
    ex.instruction.text = "What does the legend show?";
    ex.response = "Step 1: read the legend.";
    ex.stage_trace.push_back({"cpt", "m", 0});
    ex.style = ExampleStyle::rewritten;
    ex.followups.push_back({"And the scale?", "1:5000."});

    std::unordered_map<std::string, std::string> images{{"map-1", img}};
    std::string out = dir.file("sft.jsonl");
    CHECK(export_sft({ex}, images, out) == 1);

    std::string text = read_file(out);
    json rec = json::parse(text.substr(0, text.find('\n')));
    CHECK(rec["id"] == "ex-1");
    CHECK(rec["images"][0] == img);
    auto& conv = rec["conversations"];
    CHECK(conv.size() == 4);
    CHECK(conv[0]["role"] == "user");
    CHECK(std::string(conv[0]["content"]).rfind("<image>\n", 0) == 0);
    CHECK(conv[1]["role"] == "assistant");
    CHECK(conv[1]["content"] == "Step 1: read the legend.");
    CHECK(conv[2]["content"] == "And the scale?");
    CHECK(conv[3]["content"] == "1:5000.");
  }

  TEST_CASE("sft export rejects raw style unless allowed") {
    testsup::TempDir dir;
    std::string img = testsup::write_test_png(dir.file("m.png"), 8, 8);
    TrainingExample ex;
    ex.id = "ex-1";
    ex.map_id = "map-1";
    ex.instruction.id = "inst-1";
    ex.instruction.text = "q";
    ex.response = "a";
    ex.stage_trace.push_back({"cpt", "m", 0});
    ex.style = ExampleStyle::raw;
    std::unordered_map<std::string, std::string> images{{"map-1", img}};
    CHECK_THROWS_AS(export_sft({ex}, images, dir.file("sft.jsonl")), PreconditionError);
    CHECK(export_sft({ex}, images, dir.file("sft.jsonl"), /*allow_raw=*/true) == 1);
  }

  TEST_CASE("sft export requires resolvable images") {
    testsup::TempDir dir;
    TrainingExample ex;
    ex.id = "ex-1";
    ex.map_id = "map-1";
    ex.instruction.id = "inst-1";
    ex.instruction.text = "q";
    ex.response = "a";
    ex.stage_trace.push_back({"cpt", "m", 0});
    ex.style = ExampleStyle::rewritten;
    std::unordered_map<std::string, std::string> images;  // map-1 unmapped
    CHECK_THROWS_AS(export_sft({ex}, images, dir.file("s.jsonl")), IoError);
    images["map-1"] = dir.file("missing.png");
    CHECK_THROWS_AS(export_sft({ex}, images, dir.file("s.jsonl")), IoError);
  }
}
