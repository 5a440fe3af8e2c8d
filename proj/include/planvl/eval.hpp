#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "planvl/gateway.hpp"
#include "planvl/types.hpp"

namespace planvl {

// "1. first criterion\n2. second criterion"
std::string criteria_text(const std::vector<std::string>& criteria);

std::string build_eval_prompt(const EvalItem& item, const std::string& answer);

struct ParsedJudgeOutput {
  std::vector<JudgeVerdict> verdicts;                  // sorted by criterion_index
  std::optional<std::pair<int, int>> stated_score;     // "Final Score: X/Y"
};

// Tolerates "Point k:"/"Scoring Point k:" labels, leading list numbers,
// full-width brackets, and out-of-order lines. Gaps, duplicates, and verdict
// values outside {0,1} are errors.
ParsedJudgeOutput parse_judge_output(const std::string& raw_text, int n);

JudgeResult score_answer(const EvalItem& item, const std::string& answer, Gateway& gateway,
                         const std::string& judge_model, bool judge_multimodal = true);

// One row of any model's per-item scores; unlike JudgeResult scores these may
// exceed 1 (pre-normalized inputs such as published aggregate tables).
struct ScoredResult {
  std::string item_id;
  double score = 0.0;

  void validate() const;
  json to_json() const;
  static ScoredResult from_json(const json& j);
  bool operator==(const ScoredResult&) const = default;
};

struct CategoryMean {
  std::string label;
  double mean = 0.0;
  int count = 0;

  bool operator==(const CategoryMean&) const = default;
};

struct NormalizedView {
  double reference_overall = 0.0;
  double ratio_overall = 0.0;   // overall / reference overall
  double delta_overall = 0.0;   // overall - reference overall
  std::vector<CategoryMean> detailed_ratios;
  std::vector<CategoryMean> main_ratios;
};

struct EvalReport {
  std::vector<ScoredResult> per_item;
  std::vector<CategoryMean> detailed;  // categories with zero items are absent
  std::vector<CategoryMean> main;
  double overall = 0.0;
  std::optional<NormalizedView> normalized;

  json to_json() const;
};

EvalReport aggregate_report(const std::vector<ScoredResult>& results,
                            const std::vector<EvalItem>& items,
                            const std::optional<std::vector<ScoredResult>>& reference = {});

std::vector<ScoredResult> scored_from_judge_results(const std::vector<JudgeResult>& results);

// Table with detailed-category, main-category, and overall columns.
std::string render_markdown(const EvalReport& report, const std::string& model_label);

}  // namespace planvl
