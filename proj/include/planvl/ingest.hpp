#pragma once

#include <string>
#include <vector>

#include "planvl/gateway.hpp"
#include "planvl/types.hpp"

namespace planvl {

struct FilterVerdict {
  std::string map_id;
  std::string analysis;
  int verdict = 0;  // 0 or 1
  std::string raw_text;
  bool conflicting = false;  // multiple boxed tokens disagreed; last one won

  void validate() const;
  json to_json() const;
  static FilterVerdict from_json(const json& j);
  bool operator==(const FilterVerdict&) const = default;
};

struct ExtractOptions {
  std::size_t min_image_bytes = 128;
};

struct ExtractResult {
  std::vector<PlanningMap> maps;
  int skipped_unsupported = 0;
  std::vector<std::string> warnings;
};

// Directory mode: every *.png/*.jpg/*.jpeg under `document_path` (sorted by
// filename) becomes a map, files referenced in place. PDF mode: embedded
// rasters are decoded and written under `image_out_dir`.
ExtractResult extract_images(const std::string& document_path, const std::string& image_out_dir,
                             const ExtractOptions& options = {});

bool filter_by_resolution(const PlanningMap& map, int min_w = 1000, int min_h = 1000);

// Parses a filter-judge reply: last \boxed{0|1} token wins; the text before
// "Determination" is the analysis.
FilterVerdict parse_filter_verdict(const std::string& map_id, const std::string& raw_text);

FilterVerdict judge_planning_map(const PlanningMap& map, Gateway& gateway,
                                 const std::string& model_id);

enum class DistanceMetric { cosine, euclidean };

// Greedy k-center (farthest-point) selection. First pick is the point
// farthest from the centroid; every later pick maximizes the minimum
// distance to the chosen set. Ties break toward the lowest index.
std::vector<std::size_t> select_diverse_subset(const std::vector<std::vector<double>>& vectors,
                                               std::size_t k,
                                               DistanceMetric metric = DistanceMetric::cosine);
std::vector<std::size_t> select_diverse_subset(const std::vector<EmbeddingVector>& embeddings,
                                               std::size_t k,
                                               DistanceMetric metric = DistanceMetric::cosine);

}  // namespace planvl
