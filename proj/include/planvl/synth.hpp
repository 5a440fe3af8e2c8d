#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "planvl/gateway.hpp"
#include "planvl/spectrum.hpp"
#include "planvl/types.hpp"

namespace planvl {

inline constexpr std::size_t kSynthesisPairCount = 10;

struct SynthesisContext {
  std::string map_id;
  std::vector<std::pair<std::string, Instruction>> sampled_pairs;  // (task type, exemplar)
  std::string diversification_prompt;
  std::string model_id;

  void validate() const;
};

struct SynthOptions {
  std::string generator_model;
  std::string embed_model;
  std::string phi_div;          // diversification text (defaults applied by caller)
  double temperature = 0.7;
  std::uint64_t rng_seed = 0;   // pre-mixed per map by the caller
};

// Samples 10 (task type, exemplar) pairs: types weighted toward the least
// sampled so far (with replacement), exemplars uniform within the type.
SynthesisContext build_synthesis_context(const PlanningMap& map, const TaskSpectrum& spectrum,
                                         const std::vector<Instruction>& seed_pool,
                                         const std::string& phi_div, const std::string& model_id,
                                         std::mt19937_64& rng);

// "1. text" / "2) text" items in order of appearance.
std::vector<std::string> parse_numbered_list(const std::string& raw);

std::vector<Instruction> synthesize_instructions(const PlanningMap& map,
                                                 const TaskSpectrum& spectrum,
                                                 const std::vector<Instruction>& seed_pool,
                                                 Gateway& gateway, const SynthOptions& options,
                                                 std::size_t count);

std::vector<Instruction> dedupe_instructions(const std::vector<Instruction>& instructions,
                                             Gateway& gateway, const std::string& embed_model,
                                             double sim_threshold = 0.95);

TrainingExample rewrite_response(const TrainingExample& example,
                                 const std::vector<std::string>& planner_exemplars,
                                 Gateway& gateway, const std::string& model_id);

}  // namespace planvl
