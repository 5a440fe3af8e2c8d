#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "planvl/gateway.hpp"
#include "planvl/types.hpp"

namespace planvl {

struct IntentTagging {
  std::string instruction_id;
  std::vector<std::string> intents;  // lowercase snake_case, deduplicated

  void validate() const;
  json to_json() const;
  static IntentTagging from_json(const json& j);
  bool operator==(const IntentTagging&) const = default;
};

// "Spatial Analysis" -> "spatial_analysis"; empty after normalization is dropped upstream.
std::string normalize_intent(std::string_view raw);

// Extracts a JSON array of strings from tagger output (tolerates surrounding prose).
std::vector<std::string> parse_intent_list(const std::string& raw);

IntentTagging tag_intents(const Instruction& instruction, Gateway& gateway,
                          const std::string& model_id);

struct TaskType {
  std::string label;
  std::vector<std::string> member_ids;
  double mean_intent_count = 0.0;

  bool operator==(const TaskType&) const = default;
};

struct TaskSpectrum {
  std::vector<TaskType> task_types;
  std::vector<std::string> complexity_order;  // labels, descending mean_intent_count

  void validate() const;
  json to_json() const;
  static TaskSpectrum from_json(const json& j);
  bool operator==(const TaskSpectrum&) const = default;
};

struct KMeansResult {
  std::vector<int> assignment;                  // point index -> cluster
  std::vector<std::vector<double>> centroids;
  int iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding; fully deterministic for a given
// seed (no std:: distributions, whose outputs vary across standard libraries).
KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed,
                    int max_iterations = 100);

TaskSpectrum build_spectrum(const std::vector<IntentTagging>& taggings, int k, std::uint64_t seed);

}  // namespace planvl
