#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "planvl/json.hpp"

namespace planvl {

// One filtered map image with provenance and dimensions.
struct PlanningMap {
  std::string id;
  std::string source_doc;
  std::int64_t page = 0;
  std::string image_path;
  std::int64_t width_px = 0;
  std::int64_t height_px = 0;
  std::string content_hash;

  void validate() const;
  json to_json() const;
  static PlanningMap from_json(const json& j);

  friend bool operator==(const PlanningMap&, const PlanningMap&) = default;
};

enum class Origin { seed, synthesized };

std::string to_string(Origin o);
Origin origin_from_string(const std::string& s);

// A question over a map, with intent tags and complexity.
struct Instruction {
  std::string id;
  std::string map_id;
  std::string text;
  std::vector<std::string> intents;
  std::string task_type;
  std::int64_t complexity = 0;
  Origin origin = Origin::seed;

  void validate() const;
  json to_json() const;
  static Instruction from_json(const json& j);

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

enum class PointStatus { unverified, verified, corrected, merged_away };

std::string to_string(PointStatus s);
PointStatus point_status_from_string(const std::string& s);

// One atomic verifiable claim about a map.
//
// Verification scores live in [0,1]; a score is present exactly when the
// point has left the unverified state. `key_phrase` is the extractor-emitted
// anchor used by the response containment check; `flags` records audit marks
// such as "below_threshold" or "no_change".
struct CriticalPoint {
  std::int64_t index = 1;
  std::string claim;
  PointStatus status = PointStatus::unverified;
  std::optional<double> verification_score;
  std::optional<std::string> verification_query;
  std::optional<std::string> key_phrase;
  std::vector<std::string> flags;

  bool has_flag(const std::string& f) const;

  void validate() const;
  json to_json() const;
  static CriticalPoint from_json(const json& j);

  friend bool operator==(const CriticalPoint&, const CriticalPoint&) = default;
};

// Stage trace timestamps are logical step indices, not wall-clock times,
// so reruns with identical inputs reproduce byte-identical records.
struct StageTraceEntry {
  std::string stage;
  std::string model_id;
  std::int64_t timestamp = 0;

  json to_json() const;
  static StageTraceEntry from_json(const json& j);

  friend bool operator==(const StageTraceEntry&, const StageTraceEntry&) = default;
};

enum class ExampleStyle { raw, rewritten };

std::string to_string(ExampleStyle s);
ExampleStyle example_style_from_string(const std::string& s);

// A follow-up QA round in a multi-turn training dialogue.
struct DialogueRound {
  std::string question;
  std::string response;

  json to_json() const;
  static DialogueRound from_json(const json& j);

  friend bool operator==(const DialogueRound&, const DialogueRound&) = default;
};

// Map + instruction + verified response with full stage trace.
struct TrainingExample {
  std::string id;
  std::string map_id;
  Instruction instruction;
  std::string response;
  std::vector<CriticalPoint> critical_points;
  std::vector<StageTraceEntry> stage_trace;
  ExampleStyle style = ExampleStyle::raw;
  std::vector<DialogueRound> followups;

  void validate() const;
  json to_json() const;
  static TrainingExample from_json(const json& j);

  friend bool operator==(const TrainingExample&, const TrainingExample&) = default;
};

// Closed label sets for benchmark categories.
extern const std::vector<std::string> kDetailedCategories;  // Element..Dec
extern const std::vector<std::string> kMainCategories;      // Perception..Implementation

// Benchmark question with expert-defined scoring criteria.
struct EvalItem {
  std::string id;
  std::string question;
  std::string image_path;
  std::vector<std::string> criteria;
  std::string detailed_category;
  std::string main_category;

  void validate() const;
  json to_json() const;
  static EvalItem from_json(const json& j);

  friend bool operator==(const EvalItem&, const EvalItem&) = default;
};

struct JudgeVerdict {
  std::int64_t criterion_index = 1;
  int satisfied = 0;  // 0 or 1
  std::string rationale;

  json to_json() const;
  static JudgeVerdict from_json(const json& j);

  friend bool operator==(const JudgeVerdict&, const JudgeVerdict&) = default;
};

// Per-criterion verdicts plus the normalized score S = sum(satisfied)/n.
struct JudgeResult {
  std::string item_id;
  std::vector<JudgeVerdict> verdicts;
  std::string raw_judge_text;
  double score = 0.0;
  bool score_mismatch = false;  // judge's stated total disagreed with verdicts

  // Recomputes S from verdicts.
  double recompute_score() const;

  void validate() const;
  json to_json() const;
  static JudgeResult from_json(const json& j);

  friend bool operator==(const JudgeResult&, const JudgeResult&) = default;
};

enum class StageStatus { pending, completed, failed };

std::string to_string(StageStatus s);
StageStatus stage_status_from_string(const std::string& s);

struct ManifestStage {
  std::string name;
  StageStatus status = StageStatus::pending;
  std::string input_path;
  std::string output_path;
  std::string output_hash;

  json to_json() const;
  static ManifestStage from_json(const json& j);

  friend bool operator==(const ManifestStage&, const ManifestStage&) = default;
};

// The fixed execution order of data stages.
extern const std::vector<std::string> kPipelineStageOrder;

struct RunManifest {
  std::string run_id;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<ManifestStage> stages;

  ManifestStage* find_stage(const std::string& name);
  const ManifestStage* find_stage(const std::string& name) const;

  void validate() const;
  json to_json() const;
  static RunManifest from_json(const json& j);

  friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

}  // namespace planvl
