#pragma once

#include <string>
#include <vector>

#include "planvl/gateway.hpp"
#include "planvl/types.hpp"

namespace planvl {

struct CptConfig {
  double tau = 0.5;                        // verification threshold
  int max_correction_rounds = 1;
  double merge_similarity_threshold = 0.9;

  void validate() const;
};

struct CptModels {
  std::string generator;
  std::string verifier;
  std::string corrector;
  std::string embedder;
};

// Parses "Critical Point k: <claim>" lines plus optional "Key Phrase k:"
// companions. Non-contiguous indices are re-indexed 1..n (warning appended).
std::vector<CriticalPoint> parse_critical_points(const std::string& raw,
                                                 std::vector<std::string>* warnings = nullptr);

std::vector<CriticalPoint> extract_critical_points(const PlanningMap& map,
                                                   const Instruction& instruction,
                                                   Gateway& gateway, const std::string& model_id);

// Pure template instantiation; no model call.
std::string formulate_verification_query(const CriticalPoint& point,
                                         const Instruction& instruction);

// "VERDICT: YES|NO" (+ optional "CONFIDENCE: x"); confidence wins when
// present and in [0,1], else YES -> 1.0, NO -> 0.0.
double parse_verification_reply(const std::string& raw);

double verify_point(const std::string& query, const PlanningMap& map, Gateway& gateway,
                    const std::string& model_id);

CriticalPoint correct_point(const CriticalPoint& point, const PlanningMap& map,
                            const std::string& query, Gateway& gateway, const CptModels& models,
                            const CptConfig& config);

// Returns the full list: survivors keep their status, collapsed points get
// merged_away. Relative order is preserved.
std::vector<CriticalPoint> merge_redundant_points(const std::vector<CriticalPoint>& points,
                                                  Gateway& gateway, const std::string& embed_model,
                                                  double threshold = 0.9);

std::vector<CriticalPoint> surviving_points(const std::vector<CriticalPoint>& points);

struct CptResult {
  std::string response;
  std::vector<CriticalPoint> points;
  std::vector<std::string> warnings;
};

CptResult run_cpt(const PlanningMap& map, const Instruction& instruction, const CptConfig& config,
                  Gateway& gateway, const CptModels& models);

}  // namespace planvl
