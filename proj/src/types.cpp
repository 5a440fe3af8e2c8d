#include "planvl/types.hpp"

#include <algorithm>
#include <cmath>

#include "planvl/errors.hpp"

namespace planvl {

double round6(double v) { return std::round(v * 1e6) / 1e6; }

namespace {

const json& require(const json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end()) {
    throw ValidationError(std::string("missing field '") + field + "'");
  }
  return *it;
}

std::string get_string(const json& j, const char* field) {
  const json& v = require(j, field);
  if (!v.is_string()) {
    throw ValidationError(std::string("field '") + field + "' must be a string");
  }
  return v.get<std::string>();
}

std::int64_t get_int(const json& j, const char* field) {
  const json& v = require(j, field);
  if (!v.is_number_integer()) {
    throw ValidationError(std::string("field '") + field + "' must be an integer");
  }
  return v.get<std::int64_t>();
}

double get_double(const json& j, const char* field) {
  const json& v = require(j, field);
  if (!v.is_number()) {
    throw ValidationError(std::string("field '") + field + "' must be a number");
  }
  return v.get<double>();
}

std::vector<std::string> get_string_array(const json& j, const char* field) {
  const json& v = require(j, field);
  if (!v.is_array()) {
    throw ValidationError(std::string("field '") + field + "' must be an array");
  }
  std::vector<std::string> out;
  out.reserve(v.size());
  for (const auto& e : v) {
    if (!e.is_string()) {
      throw ValidationError(std::string("field '") + field + "' must contain strings");
    }
    out.push_back(e.get<std::string>());
  }
  return out;
}

bool contains_label(const std::vector<std::string>& set, const std::string& label) {
  return std::find(set.begin(), set.end(), label) != set.end();
}

}  // namespace

// ---- PlanningMap ----

void PlanningMap::validate() const {
  if (id.empty()) throw ValidationError("PlanningMap: id must be nonempty");
  if (page < 0) throw ValidationError("PlanningMap '" + id + "': page must be >= 0");
  if (width_px < 1 || height_px < 1) {
    throw ValidationError("PlanningMap '" + id + "': width_px and height_px must be >= 1");
  }
  if (content_hash.empty()) {
    throw ValidationError("PlanningMap '" + id + "': content_hash must be nonempty");
  }
  for (char c : content_hash) {
    const bool hex = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
    if (!hex) throw ValidationError("PlanningMap '" + id + "': content_hash must be lowercase hex");
  }
}

json PlanningMap::to_json() const {
  return json{{"id", id},
              {"source_doc", source_doc},
              {"page", page},
              {"image_path", image_path},
              {"width_px", width_px},
              {"height_px", height_px},
              {"content_hash", content_hash}};
}

PlanningMap PlanningMap::from_json(const json& j) {
  PlanningMap m;
  m.id = get_string(j, "id");
  m.source_doc = get_string(j, "source_doc");
  m.page = get_int(j, "page");
  m.image_path = get_string(j, "image_path");
  m.width_px = get_int(j, "width_px");
  m.height_px = get_int(j, "height_px");
  m.content_hash = get_string(j, "content_hash");
  return m;
}

// ---- Instruction ----

std::string to_string(Origin o) { return o == Origin::seed ? "seed" : "synthesized"; }

Origin origin_from_string(const std::string& s) {
  if (s == "seed") return Origin::seed;
  if (s == "synthesized") return Origin::synthesized;
  throw ValidationError("unknown origin '" + s + "'");
}

void Instruction::validate() const {
  if (id.empty()) throw ValidationError("Instruction: id must be nonempty");
  if (text.empty()) throw ValidationError("Instruction '" + id + "': text must be nonempty");
  if (complexity < 0) throw ValidationError("Instruction '" + id + "': complexity must be >= 0");
  const auto expected = static_cast<std::int64_t>(intents.size());
  if (complexity != expected) {
    throw ValidationError("Instruction '" + id + "': complexity must equal intent count (" +
                          std::to_string(expected) + ")");
  }
}

json Instruction::to_json() const {
  return json{{"id", id},
              {"map_id", map_id},
              {"text", text},
              {"intents", intents},
              {"task_type", task_type},
              {"complexity", complexity},
              {"origin", to_string(origin)}};
}

Instruction Instruction::from_json(const json& j) {
  Instruction i;
  i.id = get_string(j, "id");
  i.map_id = get_string(j, "map_id");
  i.text = get_string(j, "text");
  i.intents = get_string_array(j, "intents");
  i.task_type = get_string(j, "task_type");
  i.complexity = get_int(j, "complexity");
  i.origin = origin_from_string(get_string(j, "origin"));
  return i;
}

// ---- CriticalPoint ----

std::string to_string(PointStatus s) {
  switch (s) {
    case PointStatus::unverified: return "unverified";
    case PointStatus::verified: return "verified";
    case PointStatus::corrected: return "corrected";
    case PointStatus::merged_away: return "merged_away";
  }
  throw ValidationError("unknown point status");
}

PointStatus point_status_from_string(const std::string& s) {
  if (s == "unverified") return PointStatus::unverified;
  if (s == "verified") return PointStatus::verified;
  if (s == "corrected") return PointStatus::corrected;
  if (s == "merged_away") return PointStatus::merged_away;
  throw ValidationError("unknown point status '" + s + "'");
}

bool CriticalPoint::has_flag(const std::string& f) const {
  return std::find(flags.begin(), flags.end(), f) != flags.end();
}

void CriticalPoint::validate() const {
  if (index < 1) throw ValidationError("CriticalPoint: index must be >= 1");
  if (claim.empty()) throw ValidationError("CriticalPoint " + std::to_string(index) + ": claim must be nonempty");
  const bool scored = verification_score.has_value();
  if (scored != (status != PointStatus::unverified)) {
    throw ValidationError("CriticalPoint " + std::to_string(index) +
                          ": verification_score present iff status != unverified");
  }
  if (scored && (*verification_score < 0.0 || *verification_score > 1.0)) {
    throw ValidationError("CriticalPoint " + std::to_string(index) + ": verification_score must be in [0,1]");
  }
}

json CriticalPoint::to_json() const {
  json j{{"index", index}, {"claim", claim}, {"status", to_string(status)}};
  if (verification_score) j["verification_score"] = round6(*verification_score);
  if (verification_query) j["verification_query"] = *verification_query;
  if (key_phrase) j["key_phrase"] = *key_phrase;
  if (!flags.empty()) j["flags"] = flags;
  return j;
}

CriticalPoint CriticalPoint::from_json(const json& j) {
  CriticalPoint p;
  p.index = get_int(j, "index");
  p.claim = get_string(j, "claim");
  p.status = point_status_from_string(get_string(j, "status"));
  if (j.contains("verification_score")) p.verification_score = get_double(j, "verification_score");
  if (j.contains("verification_query")) p.verification_query = get_string(j, "verification_query");
  if (j.contains("key_phrase")) p.key_phrase = get_string(j, "key_phrase");
  if (j.contains("flags")) p.flags = get_string_array(j, "flags");
  return p;
}

// ---- StageTraceEntry / DialogueRound ----

json StageTraceEntry::to_json() const {
  return json{{"stage", stage}, {"model_id", model_id}, {"timestamp", timestamp}};
}

StageTraceEntry StageTraceEntry::from_json(const json& j) {
  StageTraceEntry e;
  e.stage = get_string(j, "stage");
  e.model_id = get_string(j, "model_id");
  e.timestamp = get_int(j, "timestamp");
  return e;
}

json DialogueRound::to_json() const {
  return json{{"question", question}, {"response", response}};
}

DialogueRound DialogueRound::from_json(const json& j) {
  DialogueRound r;
  r.question = get_string(j, "question");
  r.response = get_string(j, "response");
  return r;
}

// ---- TrainingExample ----

std::string to_string(ExampleStyle s) { return s == ExampleStyle::raw ? "raw" : "rewritten"; }

ExampleStyle example_style_from_string(const std::string& s) {
  if (s == "raw") return ExampleStyle::raw;
  if (s == "rewritten") return ExampleStyle::rewritten;
  throw ValidationError("unknown example style '" + s + "'");
}

void TrainingExample::validate() const {
  if (id.empty()) throw ValidationError("TrainingExample: id must be nonempty");
  if (response.empty()) throw ValidationError("TrainingExample '" + id + "': response must be nonempty");
  if (stage_trace.empty()) throw ValidationError("TrainingExample '" + id + "': stage_trace must be nonempty");
  instruction.validate();
  bool any_corrected = false;
  for (const auto& p : critical_points) {
    p.validate();
    any_corrected = any_corrected || p.status == PointStatus::corrected;
  }
  if (any_corrected) {
    const bool has_cpt_stage = std::any_of(stage_trace.begin(), stage_trace.end(), [](const StageTraceEntry& e) {
      return e.stage.find("cpt") != std::string::npos;
    });
    if (!has_cpt_stage) {
      throw ValidationError("TrainingExample '" + id + "': corrected points require a cpt stage_trace entry");
    }
  }
  for (const auto& r : followups) {
    if (r.question.empty() || r.response.empty()) {
      throw ValidationError("TrainingExample '" + id + "': followup rounds must have nonempty question and response");
    }
  }
}

json TrainingExample::to_json() const {
  json points = json::array();
  for (const auto& p : critical_points) points.push_back(p.to_json());
  json trace = json::array();
  for (const auto& e : stage_trace) trace.push_back(e.to_json());
  json j{{"id", id},
         {"map_id", map_id},
         {"instruction", instruction.to_json()},
         {"response", response},
         {"critical_points", points},
         {"stage_trace", trace},
         {"style", to_string(style)}};
  if (!followups.empty()) {
    json rounds = json::array();
    for (const auto& r : followups) rounds.push_back(r.to_json());
    j["followups"] = rounds;
  }
  return j;
}

TrainingExample TrainingExample::from_json(const json& j) {
  TrainingExample e;
  e.id = get_string(j, "id");
  e.map_id = get_string(j, "map_id");
  e.instruction = Instruction::from_json(require(j, "instruction"));
  e.response = get_string(j, "response");
  for (const auto& p : require(j, "critical_points")) e.critical_points.push_back(CriticalPoint::from_json(p));
  for (const auto& t : require(j, "stage_trace")) e.stage_trace.push_back(StageTraceEntry::from_json(t));
  e.style = example_style_from_string(get_string(j, "style"));
  if (j.contains("followups")) {
    for (const auto& r : j["followups"]) e.followups.push_back(DialogueRound::from_json(r));
  }
  return e;
}

// ---- EvalItem ----

const std::vector<std::string> kDetailedCategories = {"Element", "Eval",    "Class", "Assoc",
                                                      "Spatial", "Prof",    "Desc",  "Dec"};
const std::vector<std::string> kMainCategories = {"Perception", "Reasoning", "Association", "Implementation"};

void EvalItem::validate() const {
  if (id.empty()) throw ValidationError("EvalItem: id must be nonempty");
  if (question.empty()) throw ValidationError("EvalItem '" + id + "': question must be nonempty");
  if (criteria.empty()) throw ValidationError("EvalItem '" + id + "': criteria must be nonempty (n >= 1)");
  for (const auto& c : criteria) {
    if (c.empty()) throw ValidationError("EvalItem '" + id + "': criteria entries must be nonempty");
  }
  if (!contains_label(kDetailedCategories, detailed_category)) {
    throw ValidationError("EvalItem '" + id + "': unknown detailed_category '" + detailed_category + "'");
  }
  if (!contains_label(kMainCategories, main_category)) {
    throw ValidationError("EvalItem '" + id + "': unknown main_category '" + main_category + "'");
  }
}

json EvalItem::to_json() const {
  return json{{"id", id},
              {"question", question},
              {"image_path", image_path},
              {"criteria", criteria},
              {"detailed_category", detailed_category},
              {"main_category", main_category}};
}

EvalItem EvalItem::from_json(const json& j) {
  EvalItem it;
  it.id = get_string(j, "id");
  it.question = get_string(j, "question");
  it.image_path = get_string(j, "image_path");
  it.criteria = get_string_array(j, "criteria");
  it.detailed_category = get_string(j, "detailed_category");
  it.main_category = get_string(j, "main_category");
  return it;
}

// ---- JudgeResult ----

json JudgeVerdict::to_json() const {
  return json{{"criterion_index", criterion_index}, {"satisfied", satisfied}, {"rationale", rationale}};
}

JudgeVerdict JudgeVerdict::from_json(const json& j) {
  JudgeVerdict v;
  v.criterion_index = get_int(j, "criterion_index");
  v.satisfied = static_cast<int>(get_int(j, "satisfied"));
  v.rationale = get_string(j, "rationale");
  return v;
}

double JudgeResult::recompute_score() const {
  if (verdicts.empty()) return 0.0;
  std::int64_t sum = 0;
  for (const auto& v : verdicts) sum += v.satisfied;
  return static_cast<double>(sum) / static_cast<double>(verdicts.size());
}

void JudgeResult::validate() const {
  if (item_id.empty()) throw ValidationError("JudgeResult: item_id must be nonempty");
  if (verdicts.empty()) throw ValidationError("JudgeResult '" + item_id + "': verdicts must be nonempty");
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    const auto& v = verdicts[i];
    if (v.satisfied != 0 && v.satisfied != 1) {
      throw ValidationError("JudgeResult '" + item_id + "': satisfied must be 0 or 1");
    }
    if (v.criterion_index != static_cast<std::int64_t>(i + 1)) {
      throw ValidationError("JudgeResult '" + item_id + "': verdict indices must be 1..n in order");
    }
  }
  if (score < 0.0 || score > 1.0) {
    throw ValidationError("JudgeResult '" + item_id + "': score must be in [0,1]");
  }
  if (std::abs(score - recompute_score()) > 1e-9) {
    throw ValidationError("JudgeResult '" + item_id + "': score not recomputable from verdicts");
  }
}

json JudgeResult::to_json() const {
  json vs = json::array();
  for (const auto& v : verdicts) vs.push_back(v.to_json());
  json j{{"item_id", item_id},
         {"verdicts", vs},
         {"raw_judge_text", raw_judge_text},
         {"score", round6(score)}};
  if (score_mismatch) j["score_mismatch"] = true;
  return j;
}

JudgeResult JudgeResult::from_json(const json& j) {
  JudgeResult r;
  r.item_id = get_string(j, "item_id");
  for (const auto& v : require(j, "verdicts")) r.verdicts.push_back(JudgeVerdict::from_json(v));
  r.raw_judge_text = get_string(j, "raw_judge_text");
  const double stored = get_double(j, "score");
  // The exact score is recomputable from verdicts; the stored value is the
  // 6-decimal rendering and only cross-checked here.
  r.score = r.recompute_score();
  if (std::abs(stored - round6(r.score)) > 1e-6) {
    throw ValidationError("JudgeResult '" + r.item_id + "': stored score disagrees with verdicts");
  }
  if (j.contains("score_mismatch")) r.score_mismatch = j["score_mismatch"].get<bool>();
  return r;
}

// ---- RunManifest ----

std::string to_string(StageStatus s) {
  switch (s) {
    case StageStatus::pending: return "pending";
    case StageStatus::completed: return "completed";
    case StageStatus::failed: return "failed";
  }
  throw ValidationError("unknown stage status");
}

StageStatus stage_status_from_string(const std::string& s) {
  if (s == "pending") return StageStatus::pending;
  if (s == "completed") return StageStatus::completed;
  if (s == "failed") return StageStatus::failed;
  throw ValidationError("unknown stage status '" + s + "'");
}

json ManifestStage::to_json() const {
  return json{{"name", name},
              {"status", to_string(status)},
              {"input_path", input_path},
              {"output_path", output_path},
              {"output_hash", output_hash}};
}

ManifestStage ManifestStage::from_json(const json& j) {
  ManifestStage s;
  s.name = get_string(j, "name");
  s.status = stage_status_from_string(get_string(j, "status"));
  s.input_path = get_string(j, "input_path");
  s.output_path = get_string(j, "output_path");
  s.output_hash = get_string(j, "output_hash");
  return s;
}

const std::vector<std::string> kPipelineStageOrder = {"ingest", "spectrum", "synth",
                                                      "cpt",    "rewrite",  "export"};

ManifestStage* RunManifest::find_stage(const std::string& name) {
  for (auto& s : stages) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

const ManifestStage* RunManifest::find_stage(const std::string& name) const {
  for (const auto& s : stages) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

void RunManifest::validate() const {
  if (run_id.empty()) throw ValidationError("RunManifest: run_id must be nonempty");
  // Stage list must be a subsequence of the fixed pipeline order.
  std::size_t cursor = 0;
  for (const auto& s : stages) {
    auto it = std::find(kPipelineStageOrder.begin() + static_cast<std::ptrdiff_t>(cursor),
                        kPipelineStageOrder.end(), s.name);
    if (it == kPipelineStageOrder.end()) {
      throw ValidationError("RunManifest: stage '" + s.name + "' out of pipeline order");
    }
    cursor = static_cast<std::size_t>(it - kPipelineStageOrder.begin()) + 1;
  }
}

json RunManifest::to_json() const {
  json ss = json::array();
  for (const auto& s : stages) ss.push_back(s.to_json());
  return json{{"run_id", run_id}, {"config_hash", config_hash}, {"seed", seed}, {"stages", ss}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  m.run_id = get_string(j, "run_id");
  m.config_hash = get_string(j, "config_hash");
  m.seed = require(j, "seed").get<std::uint64_t>();
  for (const auto& s : require(j, "stages")) m.stages.push_back(ManifestStage::from_json(s));
  return m;
}

}  // namespace planvl
