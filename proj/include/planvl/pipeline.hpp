#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "planvl/gateway.hpp"
#include "planvl/types.hpp"

namespace planvl {

// Run-wide configuration: backends, per-role model ids, stage parameters.
// String values support ${ENV_VAR} interpolation at load time.
struct PipelineConfig {
  std::string backend = "mock";  // "mock" | "http"
  std::string mock_transcript;
  std::string base_url;
  std::string api_key_env;

  std::map<std::string, std::string> models;  // role -> model id

  int min_width = 1000;
  int min_height = 1000;
  int select_k = 0;  // 0 = keep all filtered maps
  int spectrum_k = 8;
  int per_map = 10;
  double tau = 0.5;
  double dedupe_threshold = 0.95;
  double merge_threshold = 0.9;
  int max_correction_rounds = 1;
  double synth_temperature = 0.7;

  std::uint64_t seed = 0;
  std::string cache_dir;
  std::string run_dir;
  std::string input_path;
  std::string seed_instructions;
  std::string planner_exemplars;  // text file; exemplars separated by blank lines
  std::string phi_div_template;   // optional template file
  int workers = 1;
  bool allow_raw_export = false;

  static PipelineConfig from_json(const json& j);
  static PipelineConfig from_file(const std::string& path);
  json to_json() const;

  // Collects every problem and reports them all at once.
  void validate() const;
  std::string config_hash() const;
};

// The required model roles.
extern const std::vector<std::string> kModelRoles;

std::shared_ptr<Backend> make_backend(const PipelineConfig& config);
Gateway make_gateway(const PipelineConfig& config, std::shared_ptr<Backend> backend);

struct PipelineResult {
  RunManifest manifest;
  std::size_t backend_calls = 0;
  std::size_t cache_hits = 0;
};

// Executes the requested stages in pipeline order, persisting outputs and
// the manifest under config.run_dir. Completed stages whose outputs are
// intact are skipped on rerun unless force is set.
PipelineResult run_pipeline(const PipelineConfig& config, std::vector<std::string> stages = {},
                            bool force = false);

// Manifest persistence.
void save_manifest(const RunManifest& manifest, const std::string& path);
RunManifest load_manifest(const std::string& path);

}  // namespace planvl
