#include "planvl/synth.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "planvl/hash.hpp"
#include "planvl/prompts.hpp"

namespace planvl {

void SynthesisContext::validate() const {
  if (map_id.empty()) throw ValidationError("SynthesisContext: map_id must be nonempty");
  if (sampled_pairs.size() != kSynthesisPairCount) {
    throw ValidationError("SynthesisContext: exactly " + std::to_string(kSynthesisPairCount) +
                          " sampled pairs required, got " + std::to_string(sampled_pairs.size()));
  }
  for (const auto& [type, exemplar] : sampled_pairs) {
    if (exemplar.task_type != type) {
      throw ValidationError("SynthesisContext: exemplar '" + exemplar.id +
                            "' does not belong to task type '" + type + "'");
    }
    if (exemplar.origin != Origin::seed) {
      throw ValidationError("SynthesisContext: exemplar '" + exemplar.id + "' is not seed data");
    }
  }
}

namespace {

double rng_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) / 9007199254740992.0;
}

std::size_t weighted_pick(std::mt19937_64& rng, const std::vector<double>& weights) {
  double total = 0.0;
  for (const double w : weights) total += w;
  const double target = rng_unit(rng) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (acc >= target) return i;
  }
  return weights.size() - 1;
}

std::string trim_copy(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

SynthesisContext build_synthesis_context(const PlanningMap& map, const TaskSpectrum& spectrum,
                                         const std::vector<Instruction>& seed_pool,
                                         const std::string& phi_div, const std::string& model_id,
                                         std::mt19937_64& rng) {
  if (spectrum.task_types.empty()) {
    throw PreconditionError("build_synthesis_context: empty spectrum");
  }
  std::map<std::string, std::vector<const Instruction*>> by_type;
  for (const auto& inst : seed_pool) by_type[inst.task_type].push_back(&inst);

  SynthesisContext ctx;
  ctx.map_id = map.id;
  ctx.diversification_prompt = phi_div;
  ctx.model_id = model_id;

  std::vector<std::size_t> sampled_counts(spectrum.task_types.size(), 0);
  for (std::size_t j = 0; j < kSynthesisPairCount; ++j) {
    std::vector<double> weights(spectrum.task_types.size());
    for (std::size_t t = 0; t < weights.size(); ++t) {
      weights[t] = 1.0 / static_cast<double>(1 + sampled_counts[t]);
    }
    const std::size_t t = weighted_pick(rng, weights);
    ++sampled_counts[t];
    const std::string& type = spectrum.task_types[t].label;
    auto it = by_type.find(type);
    if (it == by_type.end() || it->second.empty()) {
      throw PreconditionError("build_synthesis_context: no seed exemplar for task type '" + type +
                              "'");
    }
    const std::size_t e =
        static_cast<std::size_t>(rng_unit(rng) * static_cast<double>(it->second.size())) %
        it->second.size();
    ctx.sampled_pairs.emplace_back(type, *it->second[e]);
  }
  ctx.validate();
  return ctx;
}

std::vector<std::string> parse_numbered_list(const std::string& raw) {
  std::vector<std::string> items;
  std::size_t line_start = 0;
  while (line_start <= raw.size()) {
    std::size_t line_end = raw.find('\n', line_start);
    if (line_end == std::string::npos) line_end = raw.size();
    std::string_view line(raw.data() + line_start, line_end - line_start);
    // "<digits>." or "<digits>)" then the item text
    std::size_t p = 0;
    while (p < line.size() && std::isspace(static_cast<unsigned char>(line[p]))) ++p;
    std::size_t digits = p;
    while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits]))) ++digits;
    if (digits > p && digits < line.size() && (line[digits] == '.' || line[digits] == ')')) {
      const std::string text = trim_copy(line.substr(digits + 1));
      if (!text.empty()) items.push_back(text);
    }
    if (line_end == raw.size()) break;
    line_start = line_end + 1;
  }
  if (items.empty()) {
    throw ParseError("numbered list: no parseable items", raw);
  }
  return items;
}

std::vector<Instruction> synthesize_instructions(const PlanningMap& map,
                                                 const TaskSpectrum& spectrum,
                                                 const std::vector<Instruction>& seed_pool,
                                                 Gateway& gateway, const SynthOptions& options,
                                                 std::size_t count) {
  if (count == 0) return {};
  std::mt19937_64 rng(options.rng_seed);
  const SynthesisContext ctx = build_synthesis_context(
      map, spectrum, seed_pool, options.phi_div, options.generator_model, rng);

  std::string demonstrations;
  for (std::size_t j = 0; j < ctx.sampled_pairs.size(); ++j) {
    demonstrations += std::to_string(j + 1) + ". (" + ctx.sampled_pairs[j].first + ") " +
                      ctx.sampled_pairs[j].second.text + "\n";
  }
  const std::string prompt = prompts::substitute(
      prompts::kSynthesisTemplate, {{"demonstrations", demonstrations},
                                    {"diversification", ctx.diversification_prompt},
                                    {"count", std::to_string(count)}});
  ModelRequest req;
  req.model_id = options.generator_model;
  req.temperature = options.temperature;
  req.messages.push_back(
      Message{"user", {MessagePart::text(prompt), MessagePart::image(map.image_path)}});
  const ModelResponse resp = gateway.chat_complete(req);
  const std::vector<std::string> texts = parse_numbered_list(resp.text);

  std::vector<Instruction> out;
  for (const auto& text : texts) {
    if (out.size() >= count) break;
    Instruction inst;
    inst.id = derive_id("inst", map.id + ":" + text);
    inst.map_id = map.id;
    inst.text = text;
    inst.origin = Origin::synthesized;
    inst.validate();
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<Instruction> dedupe_instructions(const std::vector<Instruction>& instructions,
                                             Gateway& gateway, const std::string& embed_model,
                                             double sim_threshold) {
  if (instructions.empty()) {
    throw PreconditionError("dedupe_instructions: empty instruction list");
  }
  std::vector<std::string> texts;
  texts.reserve(instructions.size());
  for (const auto& inst : instructions) texts.push_back(inst.text);
  const std::vector<EmbeddingVector> vecs = gateway.embed(texts, PayloadKind::text, embed_model);

  std::vector<Instruction> kept;
  std::vector<const EmbeddingVector*> kept_vecs;
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    bool duplicate = false;
    for (const auto* kv : kept_vecs) {
      if (cosine_similarity(vecs[i].values, kv->values) >= sim_threshold) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) {
      kept.push_back(instructions[i]);
      kept_vecs.push_back(&vecs[i]);
    }
  }
  return kept;
}

TrainingExample rewrite_response(const TrainingExample& example,
                                 const std::vector<std::string>& planner_exemplars,
                                 Gateway& gateway, const std::string& model_id) {
  if (example.style != ExampleStyle::raw) {
    throw PreconditionError("rewrite_response: example '" + example.id + "' is not raw-style");
  }
  if (planner_exemplars.empty()) {
    throw PreconditionError("rewrite_response: at least one planner exemplar required");
  }
  std::string exemplars;
  for (std::size_t i = 0; i < planner_exemplars.size(); ++i) {
    exemplars += "Exemplar " + std::to_string(i + 1) + ":\n" + planner_exemplars[i] + "\n";
  }
  const std::string prompt = prompts::substitute(
      prompts::kRewriteTemplate, {{"exemplars", exemplars},
                                  {"instruction", example.instruction.text},
                                  {"response", example.response}});
  const ModelResponse resp =
      gateway.chat_complete(ModelRequest::user_text(model_id, prompt));
  if (resp.text.empty()) {
    throw BackendError("rewrite_response: rewriter returned empty output for '" + example.id +
                       "'");
  }
  TrainingExample out = example;
  out.response = resp.text;
  out.style = ExampleStyle::rewritten;
  std::int64_t next_ts = 0;
  for (const auto& e : example.stage_trace) next_ts = std::max(next_ts, e.timestamp + 1);
  out.stage_trace.push_back(StageTraceEntry{"rewrite", model_id, next_ts});
  out.validate();
  return out;
}

}  // namespace planvl
