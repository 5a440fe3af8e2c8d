#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "planvl/gateway.hpp"
#include "planvl/types.hpp"

namespace planvl {

// An id-tagged embedding as stored in embedding JSONL files.
struct EmbeddingRecord {
  std::string id;
  EmbeddingVector vector;

  void validate() const;
  json to_json() const;
  static EmbeddingRecord from_json(const json& j);
  bool operator==(const EmbeddingRecord&) const = default;
};

struct LeakageFinding {
  std::string train_id;
  std::string eval_id;
  double cosine = 0.0;
  bool flagged = false;
  std::optional<std::string> manual_verdict;  // "leak" | "distinct"

  json to_json() const;
  static LeakageFinding from_json(const json& j);
};

struct LeakageSummary {
  std::size_t total_pairs = 0;
  std::size_t flagged = 0;
  double flagged_pct = 0.0;
};

struct LeakageReport {
  std::vector<LeakageFinding> findings;  // all cross-pairs, descending cosine
  LeakageSummary summary;
  double threshold = 0.9;

  json to_json(std::size_t max_findings = 0) const;  // 0 = all
};

LeakageReport leakage_scan(const std::vector<EmbeddingRecord>& train,
                           const std::vector<EmbeddingRecord>& eval_set, double threshold = 0.9);

// Applies reviewer verdicts {"<train_id>|<eval_id>": "leak"|"distinct"}.
void apply_manual_review(LeakageReport& report, const json& review);

// Cosine of the two sample-mean vectors.
double mean_cosine(const std::vector<std::vector<double>>& X,
                   const std::vector<std::vector<double>>& Y);

struct MmdResult {
  double value = 0.0;      // max(raw, 0)
  double raw = 0.0;        // unbiased estimate (can be negative)
  double bandwidth = 0.0;  // RBF sigma actually used
  std::size_t nx = 0;
  std::size_t ny = 0;
};

// Unbiased MMD^2 with k(a,b) = exp(-|a-b|^2 / (2 sigma^2)); sigma defaults to
// the median pairwise distance over X ∪ Y.
MmdResult mmd_rbf(const std::vector<std::vector<double>>& X,
                  const std::vector<std::vector<double>>& Y,
                  std::optional<double> bandwidth = {});

// Sliced W1 with the dimensional correction 1/c_d, c_d = E|<theta, u>|, so
// values are comparable to assignment-based W1 on the raw space.
double sliced_wasserstein(const std::vector<std::vector<double>>& X,
                          const std::vector<std::vector<double>>& Y, int projections = 128,
                          std::uint64_t seed = 0);

struct DistributionReport {
  double mean_cosine = 0.0;
  double mmd = 0.0;
  double mmd_raw = 0.0;
  double wasserstein = 0.0;
  std::size_t nx = 0;
  std::size_t ny = 0;
  double kernel_bandwidth = 0.0;
  int projections = 0;

  json to_json() const;
};

DistributionReport distribution_report(const std::vector<std::vector<double>>& X,
                                       const std::vector<std::vector<double>>& Y,
                                       int projections = 128, std::uint64_t seed = 0);

// Top-2 PCA via power iteration with deflation; sign canonicalized so the
// first nonzero loading of each axis is positive.
std::vector<std::array<double, 2>> project_2d(const std::vector<std::vector<double>>& X,
                                              std::string* warning = nullptr);

struct KdeGrid {
  std::vector<double> xs;              // grid-cell center coordinates
  std::vector<double> ys;
  std::vector<std::vector<double>> values;  // values[iy][ix]
  double bandwidth_x = 0.0;
  double bandwidth_y = 0.0;
};

KdeGrid kde_grid(const std::vector<std::array<double, 2>>& points, int grid_resolution,
                 std::optional<double> bandwidth = {});

std::string kde_grid_csv(const KdeGrid& grid);
std::string points_csv(const std::vector<std::array<double, 2>>& points,
                       const std::vector<std::string>& ids);

}  // namespace planvl
