#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "planvl/analysis.hpp"
#include "planvl/errors.hpp"
#include "planvl/eval.hpp"
#include "planvl/pipeline.hpp"
#include "planvl/store.hpp"
#include "planvl/types.hpp"

namespace fs = std::filesystem;
using namespace planvl;

namespace {

// Options shared by pipeline-stage subcommands.
struct CommonOpts {
  std::string config_path;
  std::string mock;
  std::string run_dir;
  std::string cache_dir;
  std::int64_t seed = 0;

  CLI::Option* run_dir_opt = nullptr;
  CLI::Option* cache_dir_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* cmd, CommonOpts& opts, const std::string& seed_flag = "--seed") {
  cmd->add_option("--config", opts.config_path, "pipeline config JSON");
  cmd->add_option("--mock", opts.mock, "mock backend transcript (forces offline operation)");
  opts.run_dir_opt = cmd->add_option("--run-dir", opts.run_dir, "run directory");
  opts.cache_dir_opt = cmd->add_option("--cache-dir", opts.cache_dir, "response cache directory");
  opts.seed_opt = cmd->add_option(seed_flag, opts.seed, "run seed");
}

PipelineConfig resolve_config(const CommonOpts& opts) {
  PipelineConfig config;
  if (!opts.config_path.empty()) {
    config = PipelineConfig::from_file(opts.config_path);
  }
  if (!opts.mock.empty()) {
    config.backend = "mock";
    config.mock_transcript = opts.mock;
  }
  if (config.backend == "mock") {
    for (const auto& role : kModelRoles) {
      auto it = config.models.find(role);
      if (it == config.models.end() || it->second.empty()) {
        config.models[role] = "mock-" + role;
      }
    }
  }
  if (opts.run_dir_opt != nullptr && opts.run_dir_opt->count() > 0) {
    config.run_dir = opts.run_dir;
  }
  if (config.run_dir.empty()) {
    config.run_dir = "planvl_run";
  }
  if (opts.cache_dir_opt != nullptr && opts.cache_dir_opt->count() > 0) {
    config.cache_dir = opts.cache_dir;
  }
  if (opts.seed_opt != nullptr && opts.seed_opt->count() > 0) {
    if (opts.seed < 0) {
      throw ValidationError("--seed must be non-negative");
    }
    config.seed = static_cast<std::uint64_t>(opts.seed);
  }
  return config;
}

// Copies an externally supplied stage input into the run-dir layout.
void stage_in(const std::string& src, const std::string& dst) {
  if (src.empty()) {
    return;
  }
  if (!fs::exists(src)) {
    throw ValidationError("input file does not exist: " + src);
  }
  fs::create_directories(fs::path(dst).parent_path());
  if (fs::exists(dst) && fs::equivalent(src, dst)) {
    return;
  }
  fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
}

void stage_out(const std::string& primary, const std::string& out) {
  if (out.empty()) {
    return;
  }
  if (fs::exists(out) && fs::equivalent(primary, out)) {
    return;
  }
  if (!fs::path(out).parent_path().empty()) {
    fs::create_directories(fs::path(out).parent_path());
  }
  fs::copy_file(primary, out, fs::copy_options::overwrite_existing);
}

void print_run_summary(const PipelineResult& result) {
  for (const auto& stage : result.manifest.stages) {
    std::cout << stage.name << ": " << to_string(stage.status);
    if (!stage.output_path.empty()) {
      std::cout << " -> " << stage.output_path;
    }
    std::cout << "\n";
  }
  std::cout << "backend calls: " << result.backend_calls
            << ", cache hits: " << result.cache_hits << "\n";
}

PipelineResult run_single_stage(const PipelineConfig& config, const std::string& stage) {
  config.validate();
  PipelineResult result = run_pipeline(config, {stage}, /*force=*/true);
  print_run_summary(result);
  return result;
}

std::string replace_extension(const std::string& path, const std::string& ext) {
  fs::path p(path);
  p.replace_extension(ext);
  return p.string();
}

Gateway eval_gateway(const CommonOpts& opts, PipelineConfig& config) {
  config = resolve_config(opts);
  if (config.backend == "http" && config.base_url.empty()) {
    throw ValidationError("eval over http requires base_url in the config");
  }
  return make_gateway(config, make_backend(config));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"planvl: verification-hardened visual-instruction dataset pipeline"};
  app.require_subcommand(1);

  int exit_code = 0;

  // ---- run ---------------------------------------------------------------
  auto* cmd_run = app.add_subcommand("run", "execute the pipeline (resumable)");
  CommonOpts run_opts;
  std::vector<std::string> run_stages;
  add_common(cmd_run, run_opts);
  cmd_run->add_option("--stages", run_stages, "subset of stages to run")->delimiter(',');
  cmd_run->callback([&] {
    for (const auto& s : run_stages) {
      if (std::find(kPipelineStageOrder.begin(), kPipelineStageOrder.end(), s) ==
          kPipelineStageOrder.end()) {
        throw ValidationError("unknown stage '" + s + "'");
      }
    }
    PipelineConfig config = resolve_config(run_opts);
    config.validate();
    print_run_summary(run_pipeline(config, run_stages));
  });

  // ---- ingest ------------------------------------------------------------
  auto* cmd_ingest = app.add_subcommand("ingest", "extract, filter, and select planning maps");
  CommonOpts ingest_opts;
  std::string ingest_input, ingest_out;
  int ingest_min_res = 0, ingest_select_k = -1;
  add_common(cmd_ingest, ingest_opts);
  cmd_ingest->add_option("--input", ingest_input, "source PDF or image directory");
  cmd_ingest->add_option("--min-res", ingest_min_res, "minimum width and height in px");
  cmd_ingest->add_option("--select-k", ingest_select_k, "diverse subset size (0 keeps all)");
  cmd_ingest->add_option("--out", ingest_out, "copy corpus.jsonl to this path");
  cmd_ingest->callback([&] {
    PipelineConfig config = resolve_config(ingest_opts);
    if (!ingest_input.empty()) {
      config.input_path = ingest_input;
    }
    if (ingest_min_res > 0) {
      config.min_width = ingest_min_res;
      config.min_height = ingest_min_res;
    }
    if (ingest_select_k >= 0) {
      config.select_k = ingest_select_k;
    }
    run_single_stage(config, "ingest");
    stage_out(config.run_dir + "/corpus.jsonl", ingest_out);
  });

  // ---- spectrum ----------------------------------------------------------
  auto* cmd_spectrum = app.add_subcommand("spectrum", "tag intents and cluster task types");
  CommonOpts spectrum_opts;
  std::string spectrum_seeds, spectrum_out;
  int spectrum_k = 0;
  add_common(cmd_spectrum, spectrum_opts);
  cmd_spectrum->add_option("--seed-instructions", spectrum_seeds, "seed instruction JSONL");
  cmd_spectrum->add_option("--k", spectrum_k, "number of task-type clusters");
  cmd_spectrum->add_option("--out", spectrum_out, "copy spectrum.json to this path");
  cmd_spectrum->callback([&] {
    PipelineConfig config = resolve_config(spectrum_opts);
    if (!spectrum_seeds.empty()) {
      config.seed_instructions = spectrum_seeds;
    }
    if (spectrum_k > 0) {
      config.spectrum_k = spectrum_k;
    }
    run_single_stage(config, "spectrum");
    stage_out(config.run_dir + "/spectrum.json", spectrum_out);
  });

  // ---- synth -------------------------------------------------------------
  auto* cmd_synth = app.add_subcommand("synth", "synthesize instructions per map");
  CommonOpts synth_opts;
  std::string synth_corpus, synth_spectrum, synth_seed_pool, synth_out;
  int synth_per_map = -1;
  add_common(cmd_synth, synth_opts, "--rng-seed");  // --seed names the exemplar pool here
  cmd_synth->add_option("--corpus", synth_corpus, "corpus.jsonl from ingest");
  cmd_synth->add_option("--spectrum", synth_spectrum, "spectrum.json from spectrum");
  cmd_synth->add_option("--seed", synth_seed_pool, "spectrum-tagged seed instruction JSONL");
  cmd_synth->add_option("--per-map", synth_per_map, "instructions to request per map");
  cmd_synth->add_option("--out", synth_out, "copy instructions.jsonl to this path");
  cmd_synth->callback([&] {
    PipelineConfig config = resolve_config(synth_opts);
    stage_in(synth_corpus, config.run_dir + "/corpus.jsonl");
    stage_in(synth_spectrum, config.run_dir + "/spectrum.json");
    stage_in(synth_seed_pool, config.run_dir + "/seed_tagged.jsonl");
    if (synth_per_map >= 0) {
      config.per_map = synth_per_map;
    }
    run_single_stage(config, "synth");
    stage_out(config.run_dir + "/instructions.jsonl", synth_out);
  });

  // ---- cpt ---------------------------------------------------------------
  auto* cmd_cpt = app.add_subcommand("cpt", "verify, correct, merge, and reconstruct responses");
  CommonOpts cpt_opts;
  std::string cpt_instructions, cpt_corpus, cpt_out;
  double cpt_tau = -1.0;
  add_common(cmd_cpt, cpt_opts);
  cmd_cpt->add_option("--instructions", cpt_instructions, "instructions.jsonl from synth");
  cmd_cpt->add_option("--corpus", cpt_corpus, "corpus.jsonl from ingest");
  cmd_cpt->add_option("--tau", cpt_tau, "verification threshold");
  cmd_cpt->add_option("--out", cpt_out, "copy examples_raw.jsonl to this path");
  cmd_cpt->callback([&] {
    PipelineConfig config = resolve_config(cpt_opts);
    stage_in(cpt_instructions, config.run_dir + "/instructions.jsonl");
    stage_in(cpt_corpus, config.run_dir + "/corpus.jsonl");
    if (cpt_tau >= 0.0) {
      config.tau = cpt_tau;
    }
    run_single_stage(config, "cpt");
    stage_out(config.run_dir + "/examples_raw.jsonl", cpt_out);
  });

  // ---- rewrite -----------------------------------------------------------
  auto* cmd_rewrite = app.add_subcommand("rewrite", "rewrite raw responses in planner style");
  CommonOpts rewrite_opts;
  std::string rewrite_examples, rewrite_exemplars, rewrite_out;
  add_common(cmd_rewrite, rewrite_opts);
  cmd_rewrite->add_option("--examples", rewrite_examples, "examples_raw.jsonl from cpt");
  cmd_rewrite->add_option("--exemplars", rewrite_exemplars,
                          "planner exemplar text file (blank-line separated)");
  cmd_rewrite->add_option("--out", rewrite_out, "copy examples.jsonl to this path");
  cmd_rewrite->callback([&] {
    PipelineConfig config = resolve_config(rewrite_opts);
    stage_in(rewrite_examples, config.run_dir + "/examples_raw.jsonl");
    if (!rewrite_exemplars.empty()) {
      config.planner_exemplars = rewrite_exemplars;
    }
    run_single_stage(config, "rewrite");
    stage_out(config.run_dir + "/examples.jsonl", rewrite_out);
  });

  // ---- export ------------------------------------------------------------
  auto* cmd_export = app.add_subcommand("export", "emit SFT conversation records");
  CommonOpts export_opts;
  std::string export_examples, export_corpus, export_out;
  bool export_allow_raw = false;
  add_common(cmd_export, export_opts);
  cmd_export->add_option("--examples", export_examples, "examples.jsonl from rewrite");
  cmd_export->add_option("--corpus", export_corpus, "corpus.jsonl from ingest");
  cmd_export->add_flag("--allow-raw", export_allow_raw, "permit raw-style examples");
  cmd_export->add_option("--out", export_out, "copy sft.jsonl to this path");
  cmd_export->callback([&] {
    PipelineConfig config = resolve_config(export_opts);
    stage_in(export_examples, config.run_dir + "/examples.jsonl");
    stage_in(export_corpus, config.run_dir + "/corpus.jsonl");
    if (export_allow_raw) {
      config.allow_raw_export = true;
    }
    run_single_stage(config, "export");
    stage_out(config.run_dir + "/sft.jsonl", export_out);
  });

  // ---- eval --------------------------------------------------------------
  auto* cmd_eval = app.add_subcommand("eval", "judge answers against benchmark criteria");
  CommonOpts eval_opts;
  std::string eval_bench, eval_answers, eval_judge, eval_reference, eval_report;
  std::string eval_markdown, eval_label = "model";
  bool eval_multimodal = false;
  add_common(cmd_eval, eval_opts);
  cmd_eval->add_option("--bench", eval_bench, "benchmark items JSONL")->required();
  cmd_eval->add_option("--answers", eval_answers, "answers JSONL ({item_id, answer})")->required();
  cmd_eval->add_option("--judge", eval_judge, "judge model id");
  cmd_eval->add_option("--reference", eval_reference, "reference per-item scores JSONL");
  cmd_eval->add_option("--report", eval_report, "output report JSON")->required();
  cmd_eval->add_option("--markdown", eval_markdown, "output markdown table path");
  cmd_eval->add_option("--label", eval_label, "model label for the markdown table");
  cmd_eval->add_flag("--multimodal", eval_multimodal, "attach the item image to the judge call");
  cmd_eval->callback([&] {
    PipelineConfig config;
    Gateway gateway = eval_gateway(eval_opts, config);
    std::string judge_model = eval_judge;
    if (judge_model.empty()) {
      auto it = config.models.find("eval_judge");
      if (it == config.models.end() || it->second.empty()) {
        throw ValidationError("no judge model: pass --judge or configure models.eval_judge");
      }
      judge_model = it->second;
    }

    std::vector<EvalItem> items = load_jsonl<EvalItem>(eval_bench);
    std::unordered_map<std::string, const EvalItem*> item_by_id;
    for (const auto& item : items) {
      item_by_id[item.id] = &item;
    }

    std::string answers_text = read_file(eval_answers);
    std::vector<std::pair<std::string, std::string>> answers;
    {
      std::size_t pos = 0;
      long line_no = 0;
      while (pos < answers_text.size()) {
        std::size_t eol = answers_text.find('\n', pos);
        std::string line = eol == std::string::npos ? answers_text.substr(pos)
                                                    : answers_text.substr(pos, eol - pos);
        pos = eol == std::string::npos ? answers_text.size() : eol + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
          continue;
        }
        json j;
        try {
          j = json::parse(line);
        } catch (const nlohmann::json::exception& e) {
          throw ParseError(eval_answers + ":" + std::to_string(line_no) + ": malformed JSON: " +
                               e.what(),
                           line, line_no);
        }
        if (!j.contains("item_id") || !j.contains("answer")) {
          throw ValidationError(eval_answers + ":" + std::to_string(line_no) +
                                ": answer rows need item_id and answer");
        }
        answers.emplace_back(j["item_id"].get<std::string>(), j["answer"].get<std::string>());
      }
    }

    std::vector<JudgeResult> judged;
    judged.reserve(answers.size());
    for (const auto& [item_id, answer] : answers) {
      auto it = item_by_id.find(item_id);
      if (it == item_by_id.end()) {
        throw StageError("eval", "answer references unknown item " + item_id);
      }
      judged.push_back(score_answer(*it->second, answer, gateway, judge_model, eval_multimodal));
    }

    std::optional<std::vector<ScoredResult>> reference;
    if (!eval_reference.empty()) {
      reference = load_jsonl<ScoredResult>(eval_reference);
    }
    EvalReport report = aggregate_report(scored_from_judge_results(judged), items, reference);

    if (!fs::path(eval_report).parent_path().empty()) {
      fs::create_directories(fs::path(eval_report).parent_path());
    }
    write_file_atomic(eval_report, report.to_json().dump(2) + "\n");
    save_jsonl(judged, replace_extension(eval_report, ".judge.jsonl"));
    std::string md_path =
        eval_markdown.empty() ? replace_extension(eval_report, ".md") : eval_markdown;
    write_file_atomic(md_path, render_markdown(report, eval_label));
    std::cout << "scored " << judged.size() << " answers; overall " << report.overall << "\n";
  });

  // ---- analyze -----------------------------------------------------------
  auto* cmd_analyze = app.add_subcommand("analyze", "embedding-space diagnostics");
  cmd_analyze->require_subcommand(1);

  auto* cmd_leak = cmd_analyze->add_subcommand("leakage", "cross-set cosine leakage scan");
  std::string leak_a, leak_b, leak_out, leak_review;
  double leak_threshold = 0.9;
  std::size_t leak_max = 0;
  cmd_leak->add_option("--a", leak_a, "training-set embeddings JSONL")->required();
  cmd_leak->add_option("--b", leak_b, "evaluation-set embeddings JSONL")->required();
  cmd_leak->add_option("--threshold", leak_threshold, "cosine flag threshold");
  cmd_leak->add_option("--max-findings", leak_max, "cap findings in the report (0 = all)");
  cmd_leak->add_option("--review", leak_review, "manual review verdicts JSON");
  cmd_leak->add_option("--out", leak_out, "output report JSON")->required();
  cmd_leak->callback([&] {
    auto train = load_jsonl<EmbeddingRecord>(leak_a);
    auto eval_set = load_jsonl<EmbeddingRecord>(leak_b);
    LeakageReport report = leakage_scan(train, eval_set, leak_threshold);
    if (!leak_review.empty()) {
      apply_manual_review(report, json::parse(read_file(leak_review)));
    }
    write_file_atomic(leak_out, report.to_json(leak_max).dump(2) + "\n");
    std::cout << "flagged " << report.summary.flagged << " of " << report.summary.total_pairs
              << " pairs\n";
  });

  auto* cmd_dist = cmd_analyze->add_subcommand("distribution", "MMD / sliced-Wasserstein report");
  std::string dist_a, dist_b, dist_out;
  int dist_projections = 128;
  std::int64_t dist_seed = 0;
  cmd_dist->add_option("--a", dist_a, "first embedding set JSONL")->required();
  cmd_dist->add_option("--b", dist_b, "second embedding set JSONL")->required();
  cmd_dist->add_option("--projections", dist_projections, "sliced-Wasserstein directions");
  cmd_dist->add_option("--seed", dist_seed, "projection RNG seed");
  cmd_dist->add_option("--out", dist_out, "output report JSON")->required();
  cmd_dist->callback([&] {
    auto a = load_jsonl<EmbeddingRecord>(dist_a);
    auto b = load_jsonl<EmbeddingRecord>(dist_b);
    std::vector<std::vector<double>> X, Y;
    for (const auto& r : a) X.push_back(r.vector.values);
    for (const auto& r : b) Y.push_back(r.vector.values);
    DistributionReport report =
        distribution_report(X, Y, dist_projections, static_cast<std::uint64_t>(dist_seed));
    write_file_atomic(dist_out, report.to_json().dump(2) + "\n");
    std::cout << "mmd " << report.mmd << ", sliced W1 " << report.wasserstein << "\n";
  });

  auto* cmd_proj = cmd_analyze->add_subcommand("project", "2-D projection + density grid CSVs");
  std::string proj_a, proj_b, proj_out, proj_grid;
  int proj_resolution = 64;
  cmd_proj->add_option("--a", proj_a, "first embedding set JSONL")->required();
  cmd_proj->add_option("--b", proj_b, "second embedding set JSONL (optional)");
  cmd_proj->add_option("--out", proj_out, "scatter CSV (id,x,y)")->required();
  cmd_proj->add_option("--grid", proj_grid, "density grid CSV");
  cmd_proj->add_option("--resolution", proj_resolution, "grid resolution per axis");
  cmd_proj->callback([&] {
    auto a = load_jsonl<EmbeddingRecord>(proj_a);
    std::vector<std::vector<double>> X;
    std::vector<std::string> ids;
    for (const auto& r : a) {
      X.push_back(r.vector.values);
      ids.push_back(proj_b.empty() ? r.id : "a:" + r.id);
    }
    if (!proj_b.empty()) {
      for (const auto& r : load_jsonl<EmbeddingRecord>(proj_b)) {
        X.push_back(r.vector.values);
        ids.push_back("b:" + r.id);
      }
    }
    std::string warning;
    auto points = project_2d(X, &warning);
    if (!warning.empty()) {
      std::cerr << "warning: " << warning << "\n";
    }
    write_file_atomic(proj_out, points_csv(points, ids));
    if (!proj_grid.empty()) {
      write_file_atomic(proj_grid, kde_grid_csv(kde_grid(points, proj_resolution)));
    }
    std::cout << "projected " << points.size() << " points\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ValidationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const planvl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return exit_code;
}
