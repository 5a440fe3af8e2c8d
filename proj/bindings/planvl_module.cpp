// Python bindings: structured data crosses as JSON strings (the thin
// python/planvl package wraps these in dict-based helpers); numeric
// vectors convert natively.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "planvl/analysis.hpp"
#include "planvl/cpt.hpp"
#include "planvl/errors.hpp"
#include "planvl/eval.hpp"
#include "planvl/hash.hpp"
#include "planvl/ingest.hpp"
#include "planvl/pipeline.hpp"
#include "planvl/spectrum.hpp"
#include "planvl/types.hpp"

namespace py = pybind11;
using namespace planvl;

namespace {

using Matrix = std::vector<std::vector<double>>;

json parse_arg(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string(what) + ": malformed JSON: " + e.what(), text);
  }
}

template <typename T>
std::vector<T> parse_records(const std::string& text, const char* what) {
  const json arr = parse_arg(text, what);
  if (!arr.is_array()) throw ValidationError(std::string(what) + " must be a JSON array");
  std::vector<T> out;
  out.reserve(arr.size());
  for (const auto& row : arr) out.push_back(T::from_json(row));
  return out;
}

DistanceMetric metric_from_string(const std::string& name) {
  if (name == "cosine") return DistanceMetric::cosine;
  if (name == "euclidean") return DistanceMetric::euclidean;
  throw ValidationError("unknown distance metric '" + name + "' (expected cosine or euclidean)");
}

}  // namespace

PYBIND11_MODULE(_planvl, m) {
  m.doc() = "Core bindings for the planvl toolkit (JSON-string interface).";
  m.attr("__version__") = "0.1.0";

  // Subclass translators are registered after the base so they are
  // consulted first.
  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ValidationError>(m, "ValidationError", base);
  py::register_exception<PreconditionError>(m, "PreconditionError", base);
  py::register_exception<IoError>(m, "IoError", base);
  py::register_exception<ParseError>(m, "ParseError", base);
  py::register_exception<TransportError>(m, "TransportError", base);
  py::register_exception<BackendError>(m, "BackendError", base);
  py::register_exception<StageError>(m, "StageError", base);

  // ---- pipeline -----------------------------------------------------------
  m.def(
      "run_pipeline_json",
      [](const std::string& config_json, const std::vector<std::string>& stages, bool force) {
        PipelineConfig config = PipelineConfig::from_json(parse_arg(config_json, "config"));
        PipelineResult result;
        {
          py::gil_scoped_release release;
          result = run_pipeline(config, stages, force);
        }
        json out{{"run_id", result.manifest.run_id},
                 {"backend_calls", result.backend_calls},
                 {"cache_hits", result.cache_hits},
                 {"manifest", result.manifest.to_json()}};
        return out.dump();
      },
      py::arg("config_json"), py::arg("stages") = std::vector<std::string>{},
      py::arg("force") = false,
      "Run pipeline stages from a config JSON string; returns a result JSON string.");

  m.def(
      "validate_config_json",
      [](const std::string& config_json) {
        PipelineConfig::from_json(parse_arg(config_json, "config")).validate();
      },
      py::arg("config_json"), "Raise ValidationError if the config is not runnable.");

  m.def(
      "config_hash",
      [](const std::string& config_json) {
        return PipelineConfig::from_json(parse_arg(config_json, "config")).config_hash();
      },
      py::arg("config_json"));

  m.attr("stage_order") = kPipelineStageOrder;
  m.attr("model_roles") = kModelRoles;

  // ---- parsers --------------------------------------------------------------
  m.def(
      "parse_filter_verdict_json",
      [](const std::string& map_id, const std::string& raw) {
        return parse_filter_verdict(map_id, raw).to_json().dump();
      },
      py::arg("map_id"), py::arg("raw"));

  m.def(
      "parse_critical_points_json",
      [](const std::string& raw) {
        std::vector<std::string> warnings;
        json points = json::array();
        for (const auto& p : parse_critical_points(raw, &warnings)) points.push_back(p.to_json());
        return json{{"points", points}, {"warnings", warnings}}.dump();
      },
      py::arg("raw"));

  m.def(
      "parse_judge_output_json",
      [](const std::string& raw, int n) {
        ParsedJudgeOutput parsed = parse_judge_output(raw, n);
        json verdicts = json::array();
        for (const auto& v : parsed.verdicts) verdicts.push_back(v.to_json());
        json stated;
        if (parsed.stated_score) {
          stated = json::array({parsed.stated_score->first, parsed.stated_score->second});
        }
        return json{{"verdicts", verdicts}, {"stated_score", stated}}.dump();
      },
      py::arg("raw"), py::arg("n"));

  // ---- evaluation -----------------------------------------------------------
  m.def(
      "aggregate_report_json",
      [](const std::string& results_json, const std::string& items_json,
         const std::string& reference_json) {
        const auto results = parse_records<ScoredResult>(results_json, "results");
        const auto items = parse_records<EvalItem>(items_json, "items");
        std::optional<std::vector<ScoredResult>> reference;
        if (!reference_json.empty()) {
          reference = parse_records<ScoredResult>(reference_json, "reference");
        }
        return aggregate_report(results, items, reference).to_json().dump();
      },
      py::arg("results_json"), py::arg("items_json"), py::arg("reference_json") = std::string(),
      "Aggregate per-item scores into category/overall means; optional reference normalizes.");

  m.def(
      "render_report_markdown",
      [](const std::string& results_json, const std::string& items_json,
         const std::string& model_label, const std::string& reference_json) {
        const auto results = parse_records<ScoredResult>(results_json, "results");
        const auto items = parse_records<EvalItem>(items_json, "items");
        std::optional<std::vector<ScoredResult>> reference;
        if (!reference_json.empty()) {
          reference = parse_records<ScoredResult>(reference_json, "reference");
        }
        return render_markdown(aggregate_report(results, items, reference), model_label);
      },
      py::arg("results_json"), py::arg("items_json"), py::arg("model_label"),
      py::arg("reference_json") = std::string());

  // ---- spectrum ---------------------------------------------------------------
  m.def(
      "build_spectrum_json",
      [](const std::string& taggings_json, int k, std::uint64_t seed) {
        const auto taggings = parse_records<IntentTagging>(taggings_json, "taggings");
        return build_spectrum(taggings, k, seed).to_json().dump();
      },
      py::arg("taggings_json"), py::arg("k"), py::arg("seed") = 0);

  // ---- selection and distribution metrics --------------------------------------
  m.def(
      "select_diverse_subset",
      [](const Matrix& vectors, std::size_t k, const std::string& metric) {
        return select_diverse_subset(vectors, k, metric_from_string(metric));
      },
      py::arg("vectors"), py::arg("k"), py::arg("metric") = "cosine",
      "Greedy max-min (farthest-point) pick order over row vectors.");

  m.def(
      "mean_cosine", [](const Matrix& x, const Matrix& y) { return mean_cosine(x, y); },
      py::arg("x"), py::arg("y"));

  m.def(
      "mmd_rbf_json",
      [](const Matrix& x, const Matrix& y, std::optional<double> bandwidth) {
        MmdResult r = mmd_rbf(x, y, bandwidth);
        return json{{"value", r.value},
                    {"raw", r.raw},
                    {"bandwidth", r.bandwidth},
                    {"nx", r.nx},
                    {"ny", r.ny}}
            .dump();
      },
      py::arg("x"), py::arg("y"), py::arg("bandwidth") = std::nullopt);

  m.def(
      "sliced_wasserstein",
      [](const Matrix& x, const Matrix& y, int projections, std::uint64_t seed) {
        return sliced_wasserstein(x, y, projections, seed);
      },
      py::arg("x"), py::arg("y"), py::arg("projections") = 128, py::arg("seed") = 0);

  m.def(
      "distribution_report_json",
      [](const Matrix& x, const Matrix& y, int projections, std::uint64_t seed) {
        return distribution_report(x, y, projections, seed).to_json().dump();
      },
      py::arg("x"), py::arg("y"), py::arg("projections") = 128, py::arg("seed") = 0);

  // ---- leakage -------------------------------------------------------------------
  m.def(
      "leakage_scan_json",
      [](const std::string& train_json, const std::string& eval_json, double threshold,
         std::size_t max_findings) {
        const auto train = parse_records<EmbeddingRecord>(train_json, "train");
        const auto eval_set = parse_records<EmbeddingRecord>(eval_json, "eval");
        LeakageReport report;
        {
          py::gil_scoped_release release;
          report = leakage_scan(train, eval_set, threshold);
        }
        return report.to_json(max_findings).dump();
      },
      py::arg("train_json"), py::arg("eval_json"), py::arg("threshold") = 0.9,
      py::arg("max_findings") = 0,
      "Cosine scan of train x eval embedding records; records are {id, dim, values} JSON rows.");

  // ---- utilities -------------------------------------------------------------------
  m.def(
      "sha256_hex", [](const std::string& bytes) { return sha256_hex(bytes); }, py::arg("bytes"));
  m.def(
      "derive_id",
      [](const std::string& prefix, const std::string& content) {
        return derive_id(prefix, content);
      },
      py::arg("prefix"), py::arg("content"));
}
