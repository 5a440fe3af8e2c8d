#include "planvl/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <unordered_map>
#include <utility>

#include "planvl/cpt.hpp"
#include "planvl/errors.hpp"
#include "planvl/hash.hpp"
#include "planvl/ingest.hpp"
#include "planvl/prompts.hpp"
#include "planvl/spectrum.hpp"
#include "planvl/store.hpp"
#include "planvl/synth.hpp"

namespace fs = std::filesystem;

namespace planvl {

const std::vector<std::string> kModelRoles = {"filter_judge", "tagger",    "generator",
                                              "verifier",     "corrector", "rewriter",
                                              "eval_judge",   "embedder"};

namespace {

std::string interpolate_env(const std::string& raw, std::vector<std::string>& missing) {
  std::string out;
  std::size_t i = 0;
  while (i < raw.size()) {
    if (raw[i] == '$' && i + 1 < raw.size() && raw[i + 1] == '{') {
      std::size_t close = raw.find('}', i + 2);
      if (close == std::string::npos) {
        out += raw.substr(i);
        break;
      }
      std::string name = raw.substr(i + 2, close - i - 2);
      const char* value = name.empty() ? nullptr : std::getenv(name.c_str());
      if (value == nullptr) {
        missing.push_back(name.empty() ? "${}" : name);
      } else {
        out += value;
      }
      i = close + 1;
    } else {
      out += raw[i];
      ++i;
    }
  }
  return out;
}

std::string get_string(const json& j, const std::string& key, const std::string& fallback,
                       std::vector<std::string>& missing) {
  if (!j.contains(key)) {
    return fallback;
  }
  if (!j.at(key).is_string()) {
    throw ValidationError("config field '" + key + "' must be a string");
  }
  return interpolate_env(j.at(key).get<std::string>(), missing);
}

double get_number(const json& j, const std::string& key, double fallback) {
  if (!j.contains(key)) {
    return fallback;
  }
  if (!j.at(key).is_number()) {
    throw ValidationError("config field '" + key + "' must be a number");
  }
  return j.at(key).get<double>();
}

// File layout under run_dir.
struct RunPaths {
  std::string corpus;
  std::string verdicts;
  std::string images_dir;
  std::string spectrum;
  std::string seed_tagged;
  std::string instructions;
  std::string examples_raw;
  std::string examples;
  std::string sft;
  std::string quarantine_dir;
  std::string manifest;

  explicit RunPaths(const std::string& run_dir)
      : corpus(run_dir + "/corpus.jsonl"),
        verdicts(run_dir + "/verdicts.jsonl"),
        images_dir(run_dir + "/images"),
        spectrum(run_dir + "/spectrum.json"),
        seed_tagged(run_dir + "/seed_tagged.jsonl"),
        instructions(run_dir + "/instructions.jsonl"),
        examples_raw(run_dir + "/examples_raw.jsonl"),
        examples(run_dir + "/examples.jsonl"),
        sft(run_dir + "/sft.jsonl"),
        quarantine_dir(run_dir + "/quarantine"),
        manifest(run_dir + "/manifest.json") {}
};

// Which stage produces a given artifact (for resume-time error messages).
const std::map<std::string, std::string>& artifact_producers() {
  static const std::map<std::string, std::string> producers = {
      {"corpus.jsonl", "ingest"},     {"verdicts.jsonl", "ingest"},
      {"spectrum.json", "spectrum"},  {"seed_tagged.jsonl", "spectrum"},
      {"instructions.jsonl", "synth"}, {"examples_raw.jsonl", "cpt"},
      {"examples.jsonl", "rewrite"},  {"sft.jsonl", "export"},
  };
  return producers;
}

void require_artifact(const std::string& stage, const std::string& path) {
  if (fs::exists(path)) {
    return;
  }
  std::string name = fs::path(path).filename().string();
  auto it = artifact_producers().find(name);
  std::string hint = it == artifact_producers().end()
                         ? ""
                         : " (produced by stage '" + it->second + "'; run it first)";
  throw StageError(stage, "missing input " + path + hint);
}

void write_quarantine(const std::string& dir, const std::string& stage,
                      const std::vector<json>& rows) {
  std::string out;
  for (const auto& row : rows) {
    out += row.dump();
    out += '\n';
  }
  write_file_atomic(dir + "/" + stage + ".jsonl", out);
}

std::string model_for(const PipelineConfig& config, const std::string& role) {
  auto it = config.models.find(role);
  if (it == config.models.end() || it->second.empty()) {
    throw PreconditionError("no model configured for role '" + role + "'");
  }
  return it->second;
}

std::vector<std::string> split_exemplars(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  std::size_t pos = 0;
  auto flush = [&] {
    while (!current.empty() && (current.back() == '\n' || current.back() == '\r')) {
      current.pop_back();
    }
    if (!current.empty()) {
      out.push_back(current);
    }
    current.clear();
  };
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string line =
        eol == std::string::npos ? text.substr(pos) : text.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    bool blank = line.find_first_not_of(" \t") == std::string::npos;
    if (blank) {
      flush();
    } else {
      current += line;
      current += '\n';
    }
    if (eol == std::string::npos) {
      break;
    }
    pos = eol + 1;
  }
  flush();
  return out;
}

// ---- stage bodies -------------------------------------------------------

struct StageIo {
  std::string input;
  std::string output;  // primary output (hashed into the manifest)
  std::vector<std::string> outputs;
};

StageIo run_stage_ingest(const PipelineConfig& config, const RunPaths& paths, Gateway& gateway) {
  if (config.input_path.empty()) {
    throw StageError("ingest", "config.input_path is empty");
  }
  ExtractOptions options;
  ExtractResult extracted = extract_images(config.input_path, paths.images_dir, options);

  std::vector<PlanningMap> sized;
  for (const auto& map : extracted.maps) {
    if (filter_by_resolution(map, config.min_width, config.min_height)) {
      sized.push_back(map);
    }
  }

  std::string judge_model = model_for(config, "filter_judge");
  std::vector<FilterVerdict> verdicts;
  std::vector<PlanningMap> kept;
  std::vector<json> quarantined;
  for (const auto& map : sized) {
    try {
      FilterVerdict verdict = judge_planning_map(map, gateway, judge_model);
      verdicts.push_back(verdict);
      if (verdict.verdict == 1) {
        kept.push_back(map);
      }
    } catch (const ParseError& e) {
      quarantined.push_back(json{{"id", map.id}, {"stage", "ingest"}, {"error", e.what()}});
    }
  }

  if (config.select_k > 0 && static_cast<std::size_t>(config.select_k) < kept.size()) {
    std::string embed_model = model_for(config, "embedder");
    std::vector<std::string> payloads;
    payloads.reserve(kept.size());
    for (const auto& map : kept) {
      payloads.push_back(map.image_path);
    }
    std::vector<EmbeddingVector> embeddings =
        gateway.embed(payloads, PayloadKind::image, embed_model);
    std::vector<std::size_t> picked =
        select_diverse_subset(embeddings, static_cast<std::size_t>(config.select_k));
    std::sort(picked.begin(), picked.end());
    std::vector<PlanningMap> subset;
    subset.reserve(picked.size());
    for (std::size_t idx : picked) {
      subset.push_back(kept[idx]);
    }
    kept = std::move(subset);
  }

  save_jsonl(kept, paths.corpus);
  save_jsonl(verdicts, paths.verdicts);
  write_quarantine(paths.quarantine_dir, "ingest", quarantined);
  return {config.input_path, paths.corpus, {paths.corpus, paths.verdicts}};
}

StageIo run_stage_spectrum(const PipelineConfig& config, const RunPaths& paths, Gateway& gateway) {
  if (config.seed_instructions.empty()) {
    throw StageError("spectrum", "config.seed_instructions is empty");
  }
  if (!fs::exists(config.seed_instructions)) {
    throw StageError("spectrum", "missing seed instruction file: " + config.seed_instructions);
  }
  std::vector<Instruction> seeds = load_jsonl<Instruction>(config.seed_instructions);

  std::string tagger = model_for(config, "tagger");
  std::vector<IntentTagging> taggings;
  std::vector<json> quarantined;
  std::unordered_map<std::string, const IntentTagging*> tagging_by_id;
  for (const auto& inst : seeds) {
    try {
      taggings.push_back(tag_intents(inst, gateway, tagger));
    } catch (const ParseError& e) {
      quarantined.push_back(json{{"id", inst.id}, {"stage", "spectrum"}, {"error", e.what()}});
    }
  }
  for (const auto& t : taggings) {
    tagging_by_id[t.instruction_id] = &t;
  }

  TaskSpectrum spectrum = build_spectrum(taggings, config.spectrum_k, config.seed);

  std::unordered_map<std::string, std::string> type_by_id;
  for (const auto& type : spectrum.task_types) {
    for (const auto& id : type.member_ids) {
      type_by_id[id] = type.label;
    }
  }

  std::vector<Instruction> tagged;
  for (auto inst : seeds) {
    auto tag_it = tagging_by_id.find(inst.id);
    auto type_it = type_by_id.find(inst.id);
    if (tag_it == tagging_by_id.end() || type_it == type_by_id.end()) {
      continue;  // quarantined above
    }
    inst.intents = tag_it->second->intents;
    inst.task_type = type_it->second;
    inst.complexity = static_cast<std::int64_t>(inst.intents.size());
    tagged.push_back(std::move(inst));
  }

  write_file_atomic(paths.spectrum, spectrum.to_json().dump(2) + "\n");
  save_jsonl(tagged, paths.seed_tagged);
  write_quarantine(paths.quarantine_dir, "spectrum", quarantined);
  return {config.seed_instructions, paths.spectrum, {paths.spectrum, paths.seed_tagged}};
}

StageIo run_stage_synth(const PipelineConfig& config, const RunPaths& paths, Gateway& gateway) {
  require_artifact("synth", paths.corpus);
  require_artifact("synth", paths.spectrum);
  require_artifact("synth", paths.seed_tagged);
  std::vector<PlanningMap> corpus = load_jsonl<PlanningMap>(paths.corpus);
  TaskSpectrum spectrum = TaskSpectrum::from_json(json::parse(read_file(paths.spectrum)));
  spectrum.validate();
  std::vector<Instruction> seed_pool = load_jsonl<Instruction>(paths.seed_tagged);

  std::string phi_div = config.phi_div_template.empty()
                            ? std::string(prompts::kDiversificationDefault)
                            : prompts::load_template_or(config.phi_div_template, "");

  SynthOptions options;
  options.generator_model = model_for(config, "generator");
  options.embed_model = model_for(config, "embedder");
  options.phi_div = phi_div;
  options.temperature = config.synth_temperature;

  std::vector<Instruction> all;
  std::vector<json> quarantined;
  for (const auto& map : corpus) {
    options.rng_seed = mix_seed(config.seed, "synth." + map.id);
    try {
      std::vector<Instruction> generated = synthesize_instructions(
          map, spectrum, seed_pool, gateway, options, static_cast<std::size_t>(config.per_map));
      if (!generated.empty()) {
        generated = dedupe_instructions(generated, gateway, options.embed_model,
                                        config.dedupe_threshold);
      }
      all.insert(all.end(), generated.begin(), generated.end());
    } catch (const ParseError& e) {
      quarantined.push_back(json{{"id", map.id}, {"stage", "synth"}, {"error", e.what()}});
    }
  }

  save_jsonl(all, paths.instructions);
  write_quarantine(paths.quarantine_dir, "synth", quarantined);
  return {paths.corpus, paths.instructions, {paths.instructions}};
}

StageIo run_stage_cpt(const PipelineConfig& config, const RunPaths& paths, Gateway& gateway) {
  require_artifact("cpt", paths.instructions);
  require_artifact("cpt", paths.corpus);
  std::vector<Instruction> instructions = load_jsonl<Instruction>(paths.instructions);
  std::vector<PlanningMap> corpus = load_jsonl<PlanningMap>(paths.corpus);
  std::unordered_map<std::string, const PlanningMap*> map_by_id;
  for (const auto& map : corpus) {
    map_by_id[map.id] = &map;
  }

  CptConfig cpt_config;
  cpt_config.tau = config.tau;
  cpt_config.max_correction_rounds = config.max_correction_rounds;
  cpt_config.merge_similarity_threshold = config.merge_threshold;
  CptModels models;
  models.generator = model_for(config, "generator");
  models.verifier = model_for(config, "verifier");
  models.corrector = model_for(config, "corrector");
  models.embedder = model_for(config, "embedder");

  std::string audit_dir = config.run_dir + "/audit/cpt";
  fs::create_directories(audit_dir);

  std::vector<TrainingExample> examples;
  std::vector<json> quarantined;
  for (const auto& inst : instructions) {
    auto it = map_by_id.find(inst.map_id);
    if (it == map_by_id.end()) {
      throw StageError("cpt", "instruction " + inst.id + " references unknown map " + inst.map_id);
    }
    json calls = json::array();
    gateway.set_chat_observer([&calls](const ModelRequest& request, const ModelResponse& resp) {
      calls.push_back(json{{"model", request.model_id},
                           {"request", MockBackend::request_match_text(request)},
                           {"response", resp.text}});
    });
    try {
      CptResult result = run_cpt(*it->second, inst, cpt_config, gateway, models);
      TrainingExample example;
      example.id = derive_id("ex", inst.id);
      example.map_id = inst.map_id;
      example.instruction = inst;
      example.response = result.response;
      example.critical_points = result.points;
      example.stage_trace.push_back({"cpt", models.generator, 0});
      example.style = ExampleStyle::raw;
      example.validate();
      json points = json::array();
      for (const auto& p : result.points) {
        points.push_back(p.to_json());
      }
      json audit{{"instruction_id", inst.id},
                 {"map_id", inst.map_id},
                 {"calls", calls},
                 {"points", points},
                 {"warnings", result.warnings},
                 {"response", result.response}};
      write_file_atomic(audit_dir + "/" + inst.id + ".json", audit.dump(2) + "\n");
      examples.push_back(std::move(example));
    } catch (const StageError& e) {
      json audit{{"instruction_id", inst.id},
                 {"map_id", inst.map_id},
                 {"calls", calls},
                 {"error", e.what()}};
      write_file_atomic(audit_dir + "/" + inst.id + ".json", audit.dump(2) + "\n");
      quarantined.push_back(json{{"id", inst.id}, {"stage", "cpt"}, {"error", e.what()}});
    }
  }
  gateway.set_chat_observer(nullptr);

  save_jsonl(examples, paths.examples_raw);
  write_quarantine(paths.quarantine_dir, "cpt", quarantined);
  return {paths.instructions, paths.examples_raw, {paths.examples_raw}};
}

StageIo run_stage_rewrite(const PipelineConfig& config, const RunPaths& paths, Gateway& gateway) {
  require_artifact("rewrite", paths.examples_raw);
  if (config.planner_exemplars.empty()) {
    throw StageError("rewrite", "config.planner_exemplars is empty");
  }
  if (!fs::exists(config.planner_exemplars)) {
    throw StageError("rewrite", "missing planner exemplar file: " + config.planner_exemplars);
  }
  std::vector<std::string> exemplars = split_exemplars(read_file(config.planner_exemplars));
  if (exemplars.empty()) {
    throw StageError("rewrite", "planner exemplar file has no exemplars: " +
                                    config.planner_exemplars);
  }

  std::vector<TrainingExample> raw = load_jsonl<TrainingExample>(paths.examples_raw);
  std::string rewriter = model_for(config, "rewriter");
  std::vector<TrainingExample> rewritten;
  rewritten.reserve(raw.size());
  for (const auto& example : raw) {
    rewritten.push_back(rewrite_response(example, exemplars, gateway, rewriter));
  }

  save_jsonl(rewritten, paths.examples);
  return {paths.examples_raw, paths.examples, {paths.examples}};
}

StageIo run_stage_export(const PipelineConfig& config, const RunPaths& paths) {
  require_artifact("export", paths.examples);
  require_artifact("export", paths.corpus);
  std::vector<TrainingExample> examples = load_jsonl<TrainingExample>(paths.examples);
  std::vector<PlanningMap> corpus = load_jsonl<PlanningMap>(paths.corpus);
  std::unordered_map<std::string, std::string> image_by_map;
  for (const auto& map : corpus) {
    image_by_map[map.id] = map.image_path;
  }
  export_sft(examples, image_by_map, paths.sft, config.allow_raw_export);
  return {paths.examples, paths.sft, {paths.sft}};
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j) {
  if (!j.is_object()) {
    throw ValidationError("pipeline config must be a JSON object");
  }
  std::vector<std::string> missing_env;
  PipelineConfig c;
  c.backend = get_string(j, "backend", c.backend, missing_env);
  c.mock_transcript = get_string(j, "mock_transcript", "", missing_env);
  c.base_url = get_string(j, "base_url", "", missing_env);
  c.api_key_env = get_string(j, "api_key_env", "", missing_env);
  if (j.contains("models")) {
    if (!j.at("models").is_object()) {
      throw ValidationError("config field 'models' must be an object");
    }
    for (const auto& [role, value] : j.at("models").items()) {
      if (!value.is_string()) {
        throw ValidationError("model for role '" + role + "' must be a string");
      }
      c.models[role] = interpolate_env(value.get<std::string>(), missing_env);
    }
  }
  c.min_width = static_cast<int>(get_number(j, "min_width", c.min_width));
  c.min_height = static_cast<int>(get_number(j, "min_height", c.min_height));
  c.select_k = static_cast<int>(get_number(j, "select_k", c.select_k));
  c.spectrum_k = static_cast<int>(get_number(j, "spectrum_k", c.spectrum_k));
  c.per_map = static_cast<int>(get_number(j, "per_map", c.per_map));
  c.tau = get_number(j, "tau", c.tau);
  c.dedupe_threshold = get_number(j, "dedupe_threshold", c.dedupe_threshold);
  c.merge_threshold = get_number(j, "merge_threshold", c.merge_threshold);
  c.max_correction_rounds =
      static_cast<int>(get_number(j, "max_correction_rounds", c.max_correction_rounds));
  c.synth_temperature = get_number(j, "synth_temperature", c.synth_temperature);
  c.seed = static_cast<std::uint64_t>(get_number(j, "seed", 0));
  c.cache_dir = get_string(j, "cache_dir", "", missing_env);
  c.run_dir = get_string(j, "run_dir", "", missing_env);
  c.input_path = get_string(j, "input_path", "", missing_env);
  c.seed_instructions = get_string(j, "seed_instructions", "", missing_env);
  c.planner_exemplars = get_string(j, "planner_exemplars", "", missing_env);
  c.phi_div_template = get_string(j, "phi_div_template", "", missing_env);
  c.workers = static_cast<int>(get_number(j, "workers", c.workers));
  if (j.contains("allow_raw_export")) {
    if (!j.at("allow_raw_export").is_boolean()) {
      throw ValidationError("config field 'allow_raw_export' must be a boolean");
    }
    c.allow_raw_export = j.at("allow_raw_export").get<bool>();
  }
  if (!missing_env.empty()) {
    std::string joined;
    for (const auto& name : missing_env) {
      if (!joined.empty()) {
        joined += ", ";
      }
      joined += name;
    }
    throw ValidationError("undefined environment variables in config: " + joined);
  }
  return c;
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
  std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config " + path + ": malformed JSON: " + e.what(), text, 0);
  }
  return from_json(j);
}

json PipelineConfig::to_json() const {
  json m = json::object();
  for (const auto& [role, id] : models) {
    m[role] = id;
  }
  return json{{"backend", backend},
              {"mock_transcript", mock_transcript},
              {"base_url", base_url},
              {"api_key_env", api_key_env},
              {"models", m},
              {"min_width", min_width},
              {"min_height", min_height},
              {"select_k", select_k},
              {"spectrum_k", spectrum_k},
              {"per_map", per_map},
              {"tau", tau},
              {"dedupe_threshold", dedupe_threshold},
              {"merge_threshold", merge_threshold},
              {"max_correction_rounds", max_correction_rounds},
              {"synth_temperature", synth_temperature},
              {"seed", seed},
              {"cache_dir", cache_dir},
              {"run_dir", run_dir},
              {"input_path", input_path},
              {"seed_instructions", seed_instructions},
              {"planner_exemplars", planner_exemplars},
              {"phi_div_template", phi_div_template},
              {"workers", workers},
              {"allow_raw_export", allow_raw_export}};
}

void PipelineConfig::validate() const {
  std::vector<std::string> errors;
  if (backend != "mock" && backend != "http") {
    errors.push_back("backend must be 'mock' or 'http', got '" + backend + "'");
  }
  if (backend == "mock" && mock_transcript.empty()) {
    errors.push_back("mock backend requires mock_transcript");
  }
  if (backend == "http" && base_url.empty()) {
    errors.push_back("http backend requires base_url");
  }
  for (const auto& role : kModelRoles) {
    auto it = models.find(role);
    if (it == models.end() || it->second.empty()) {
      errors.push_back("models." + role + " is not configured");
    }
  }
  if (min_width < 1) {
    errors.push_back("min_width must be >= 1");
  }
  if (min_height < 1) {
    errors.push_back("min_height must be >= 1");
  }
  if (select_k < 0) {
    errors.push_back("select_k must be >= 0");
  }
  if (spectrum_k < 1) {
    errors.push_back("spectrum_k must be >= 1");
  }
  if (per_map < 0) {
    errors.push_back("per_map must be >= 0");
  }
  if (!(tau >= 0.0 && tau <= 1.0)) {
    errors.push_back("tau must be in [0, 1]");
  }
  if (!(dedupe_threshold > 0.0 && dedupe_threshold <= 1.0)) {
    errors.push_back("dedupe_threshold must be in (0, 1]");
  }
  if (!(merge_threshold > 0.0 && merge_threshold <= 1.0)) {
    errors.push_back("merge_threshold must be in (0, 1]");
  }
  if (max_correction_rounds < 1) {
    errors.push_back("max_correction_rounds must be >= 1");
  }
  if (synth_temperature < 0.0) {
    errors.push_back("synth_temperature must be >= 0");
  }
  if (run_dir.empty()) {
    errors.push_back("run_dir is required");
  }
  if (workers < 1) {
    errors.push_back("workers must be >= 1");
  }
  if (!errors.empty()) {
    std::string joined;
    for (const auto& e : errors) {
      if (!joined.empty()) {
        joined += "; ";
      }
      joined += e;
    }
    throw ValidationError("invalid pipeline config: " + joined);
  }
}

std::string PipelineConfig::config_hash() const {
  // Canonical form: sorted keys, minimal whitespace.
  nlohmann::json canonical = nlohmann::json::parse(to_json().dump());
  return sha256_hex(canonical.dump());
}

std::shared_ptr<Backend> make_backend(const PipelineConfig& config) {
  if (config.backend == "mock") {
    return MockBackend::from_file(config.mock_transcript);
  }
  if (config.backend == "http") {
    HttpBackend::Options options;
    options.base_url = config.base_url;
    if (!config.api_key_env.empty()) {
      const char* key = std::getenv(config.api_key_env.c_str());
      if (key == nullptr) {
        throw ValidationError("environment variable " + config.api_key_env + " is not set");
      }
      options.api_key = key;
    }
    return std::make_shared<HttpBackend>(options);
  }
  throw PreconditionError("unknown backend '" + config.backend + "'");
}

Gateway make_gateway(const PipelineConfig& config, std::shared_ptr<Backend> backend) {
  GatewayOptions options;
  options.cache_enabled = !config.cache_dir.empty();
  options.cache_dir = config.cache_dir;
  options.workers = config.workers;
  return Gateway(std::move(backend), options);
}

void save_manifest(const RunManifest& manifest, const std::string& path) {
  manifest.validate();
  write_file_atomic(path, manifest.to_json().dump(2) + "\n");
}

RunManifest load_manifest(const std::string& path) {
  std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest " + path + ": malformed JSON: " + e.what(), text, 0);
  }
  RunManifest manifest = RunManifest::from_json(j);
  manifest.validate();
  return manifest;
}

PipelineResult run_pipeline(const PipelineConfig& config, std::vector<std::string> stages,
                            bool force) {
  config.validate();
  if (stages.empty()) {
    stages = kPipelineStageOrder;
  }
  std::set<std::string> requested;
  for (const auto& s : stages) {
    if (std::find(kPipelineStageOrder.begin(), kPipelineStageOrder.end(), s) ==
        kPipelineStageOrder.end()) {
      throw PreconditionError("unknown pipeline stage '" + s + "'");
    }
    requested.insert(s);
  }

  RunPaths paths(config.run_dir);
  fs::create_directories(config.run_dir);
  fs::create_directories(paths.quarantine_dir);

  std::string hash = config.config_hash();
  RunManifest manifest;
  if (fs::exists(paths.manifest)) {
    RunManifest prior = load_manifest(paths.manifest);
    if (prior.config_hash == hash) {
      manifest = prior;
    }
  }
  if (manifest.run_id.empty()) {
    manifest.run_id = derive_id("run", hash + ":" + std::to_string(config.seed));
    manifest.config_hash = hash;
    manifest.seed = config.seed;
    manifest.stages.clear();
    for (const auto& name : kPipelineStageOrder) {
      ManifestStage stage;
      stage.name = name;
      manifest.stages.push_back(stage);
    }
  }

  std::shared_ptr<Backend> backend = make_backend(config);
  Gateway gateway = make_gateway(config, backend);

  for (const auto& name : kPipelineStageOrder) {
    if (requested.find(name) == requested.end()) {
      continue;
    }
    ManifestStage* entry = manifest.find_stage(name);
    if (entry == nullptr) {
      ManifestStage stage;
      stage.name = name;
      manifest.stages.push_back(stage);
      entry = manifest.find_stage(name);
    }
    if (!force && entry->status == StageStatus::completed && !entry->output_path.empty() &&
        fs::exists(entry->output_path) &&
        sha256_file_hex(entry->output_path) == entry->output_hash) {
      continue;  // intact from a previous run
    }
    try {
      StageIo io;
      if (name == "ingest") {
        io = run_stage_ingest(config, paths, gateway);
      } else if (name == "spectrum") {
        io = run_stage_spectrum(config, paths, gateway);
      } else if (name == "synth") {
        io = run_stage_synth(config, paths, gateway);
      } else if (name == "cpt") {
        io = run_stage_cpt(config, paths, gateway);
      } else if (name == "rewrite") {
        io = run_stage_rewrite(config, paths, gateway);
      } else {
        io = run_stage_export(config, paths);
      }
      entry->status = StageStatus::completed;
      entry->input_path = io.input;
      entry->output_path = io.output;
      entry->output_hash = sha256_file_hex(io.output);
    } catch (...) {
      entry->status = StageStatus::failed;
      save_manifest(manifest, paths.manifest);
      throw;
    }
    save_manifest(manifest, paths.manifest);
  }

  PipelineResult result;
  result.manifest = manifest;
  result.backend_calls = gateway.backend_calls();
  result.cache_hits = gateway.cache_hits();
  return result;
}

}  // namespace planvl
