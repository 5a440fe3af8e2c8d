#include "planvl/cpt.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <map>

#include "planvl/prompts.hpp"

namespace planvl {

void CptConfig::validate() const {
  if (tau < 0.0 || tau > 1.0) throw ValidationError("CptConfig: tau must be in [0,1]");
  if (max_correction_rounds < 1) {
    throw ValidationError("CptConfig: max_correction_rounds must be >= 1");
  }
  if (merge_similarity_threshold < 0.0 || merge_similarity_threshold > 1.0) {
    throw ValidationError("CptConfig: merge_similarity_threshold must be in [0,1]");
  }
}

namespace {

std::string trim_copy(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool starts_with_icase(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) !=
        std::tolower(static_cast<unsigned char>(prefix[i]))) {
      return false;
    }
  }
  return true;
}

// Parses "<label> <k>: <rest>"; returns false when the line is not of that shape.
bool parse_labeled_line(std::string_view line, std::string_view label, int* k,
                        std::string* rest) {
  // tolerate a leading list number like "1." or "1)"
  std::size_t p = 0;
  while (p < line.size() && std::isspace(static_cast<unsigned char>(line[p]))) ++p;
  std::size_t digits = p;
  while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits]))) ++digits;
  if (digits > p && digits < line.size() && (line[digits] == '.' || line[digits] == ')')) {
    p = digits + 1;
    while (p < line.size() && std::isspace(static_cast<unsigned char>(line[p]))) ++p;
  }
  if (!starts_with_icase(line.substr(p), label)) return false;
  p += label.size();
  while (p < line.size() && std::isspace(static_cast<unsigned char>(line[p]))) ++p;
  std::size_t num_end = p;
  while (num_end < line.size() && std::isdigit(static_cast<unsigned char>(line[num_end]))) {
    ++num_end;
  }
  if (num_end == p) return false;
  long idx = 0;
  for (std::size_t i = p; i < num_end; ++i) idx = idx * 10 + (line[i] - '0');
  p = num_end;
  while (p < line.size() && std::isspace(static_cast<unsigned char>(line[p]))) ++p;
  // ':' or full-width '：' (UTF-8 EF BC 9A)
  if (p < line.size() && line[p] == ':') {
    ++p;
  } else if (p + 2 < line.size() && static_cast<unsigned char>(line[p]) == 0xEF &&
             static_cast<unsigned char>(line[p + 1]) == 0xBC &&
             static_cast<unsigned char>(line[p + 2]) == 0x9A) {
    p += 3;
  } else {
    return false;
  }
  *k = static_cast<int>(idx);
  *rest = trim_copy(line.substr(p));
  return true;
}

template <typename Fn>
void for_each_line(const std::string& raw, Fn&& fn) {
  std::size_t start = 0;
  while (start <= raw.size()) {
    std::size_t end = raw.find('\n', start);
    if (end == std::string::npos) end = raw.size();
    fn(std::string_view(raw.data() + start, end - start));
    if (end == raw.size()) break;
    start = end + 1;
  }
}

std::string longest_token(const std::string& claim) {
  std::string best, cur;
  auto flush = [&] {
    if (cur.size() > best.size()) best = cur;
    cur.clear();
  };
  for (const char c : claim) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else {
      cur += c;
    }
  }
  flush();
  return best;
}

}  // namespace

std::vector<CriticalPoint> parse_critical_points(const std::string& raw,
                                                 std::vector<std::string>* warnings) {
  struct RawPoint {
    int original_index;
    std::string claim;
  };
  std::vector<RawPoint> raw_points;
  std::map<int, std::string> phrases;
  for_each_line(raw, [&](std::string_view line) {
    int k = 0;
    std::string rest;
    if (parse_labeled_line(line, "critical point", &k, &rest)) {
      if (!rest.empty()) raw_points.push_back({k, rest});
    } else if (parse_labeled_line(line, "key phrase", &k, &rest)) {
      if (!rest.empty()) phrases[k] = rest;
    }
  });
  if (raw_points.empty()) {
    throw ParseError("critical points: no 'Critical Point k:' lines found", raw);
  }
  std::vector<CriticalPoint> points;
  bool contiguous = true;
  for (std::size_t i = 0; i < raw_points.size(); ++i) {
    if (raw_points[i].original_index != static_cast<int>(i) + 1) contiguous = false;
    CriticalPoint p;
    p.index = static_cast<int>(i) + 1;
    p.claim = raw_points[i].claim;
    p.status = PointStatus::unverified;
    auto it = phrases.find(raw_points[i].original_index);
    if (it != phrases.end()) p.key_phrase = it->second;
    points.push_back(std::move(p));
  }
  if (!contiguous && warnings) {
    warnings->push_back("critical points: non-contiguous numbering, re-indexed 1.." +
                        std::to_string(points.size()));
  }
  return points;
}

std::vector<CriticalPoint> extract_critical_points(const PlanningMap& map,
                                                   const Instruction& instruction,
                                                   Gateway& gateway,
                                                   const std::string& model_id) {
  const std::string prompt =
      prompts::substitute(prompts::kCptExtractTemplate, {{"instruction", instruction.text}});
  ModelRequest req;
  req.model_id = model_id;
  req.messages.push_back(
      Message{"user", {MessagePart::text(prompt), MessagePart::image(map.image_path)}});
  const ModelResponse resp = gateway.chat_complete(req);
  return parse_critical_points(resp.text);
}

std::string formulate_verification_query(const CriticalPoint& point,
                                         const Instruction& instruction) {
  if (point.claim.empty()) {
    throw PreconditionError("formulate_verification_query: empty claim");
  }
  return prompts::substitute(prompts::kCptVerifyTemplate,
                             {{"instruction", instruction.text}, {"claim", point.claim}});
}

double parse_verification_reply(const std::string& raw) {
  std::optional<bool> verdict;
  std::optional<double> confidence;
  for_each_line(raw, [&](std::string_view line) {
    const std::string low = lower_ascii(line);
    const std::size_t vpos = low.find("verdict");
    if (vpos != std::string::npos) {
      const std::string tail = low.substr(vpos + 7);
      const std::size_t yes = tail.find("yes");
      const std::size_t no = tail.find("no");
      if (yes != std::string::npos && (no == std::string::npos || yes < no)) {
        verdict = true;
      } else if (no != std::string::npos) {
        verdict = false;
      }
    }
    const std::size_t cpos = low.find("confidence");
    if (cpos != std::string::npos) {
      std::size_t p = cpos + 10;
      while (p < low.size() &&
             !(std::isdigit(static_cast<unsigned char>(low[p])) || low[p] == '.')) {
        ++p;
      }
      if (p < low.size()) {
        char* end = nullptr;
        const double v = std::strtod(low.c_str() + p, &end);
        if (end != low.c_str() + p && v >= 0.0 && v <= 1.0) confidence = v;
      }
    }
  });
  if (!verdict) {
    throw ParseError("verification reply: no VERDICT: YES|NO token", raw);
  }
  if (confidence) return *confidence;
  return *verdict ? 1.0 : 0.0;
}

double verify_point(const std::string& query, const PlanningMap& map, Gateway& gateway,
                    const std::string& model_id) {
  ModelRequest req;
  req.model_id = model_id;
  req.messages.push_back(
      Message{"user", {MessagePart::text(query), MessagePart::image(map.image_path)}});
  try {
    return parse_verification_reply(gateway.chat_complete(req).text);
  } catch (const ParseError&) {
    return parse_verification_reply(gateway.chat_complete(req).text);  // one retry
  }
}

CriticalPoint correct_point(const CriticalPoint& point, const PlanningMap& map,
                            const std::string& query, Gateway& gateway, const CptModels& models,
                            const CptConfig& config) {
  if (!point.verification_score || *point.verification_score >= config.tau) {
    throw PreconditionError("correct_point: point " + std::to_string(point.index) +
                            " did not fail verification");
  }
  CriticalPoint cur = point;
  std::string cur_query = query;
  for (int round = 0; round < config.max_correction_rounds; ++round) {
    const std::string prompt = prompts::substitute(
        prompts::kCptCorrectTemplate, {{"claim", cur.claim}, {"query", cur_query}});
    ModelRequest req;
    req.model_id = models.corrector;
    req.messages.push_back(
        Message{"user", {MessagePart::text(prompt), MessagePart::image(map.image_path)}});
    const std::string corrected = trim_copy(gateway.chat_complete(req).text);
    if (corrected.empty()) {
      throw BackendError("correct_point: corrector returned empty output for point " +
                         std::to_string(point.index));
    }
    if (corrected == cur.claim && !cur.has_flag("no_change")) {
      cur.flags.push_back("no_change");
    }
    // the verification query embeds the claim verbatim; swap in the new one
    std::string re_query = cur_query;
    const std::size_t at = re_query.find(cur.claim);
    if (at != std::string::npos) {
      re_query.replace(at, cur.claim.size(), corrected);
    }
    const double v = verify_point(re_query, map, gateway, models.verifier);
    cur.claim = corrected;
    cur.verification_query = re_query;
    cur.verification_score = v;
    cur.status = PointStatus::corrected;
    cur_query = re_query;
    if (v >= config.tau) break;
  }
  if (*cur.verification_score < config.tau && !cur.has_flag("below_threshold")) {
    cur.flags.push_back("below_threshold");
  }
  return cur;
}

std::vector<CriticalPoint> merge_redundant_points(const std::vector<CriticalPoint>& points,
                                                  Gateway& gateway,
                                                  const std::string& embed_model,
                                                  double threshold) {
  if (points.empty()) throw PreconditionError("merge_redundant_points: empty point list");
  std::vector<std::string> claims;
  claims.reserve(points.size());
  for (const auto& p : points) claims.push_back(p.claim);
  const std::vector<EmbeddingVector> vecs = gateway.embed(claims, PayloadKind::text, embed_model);

  std::vector<CriticalPoint> out = points;
  for (std::size_t j = 1; j < out.size(); ++j) {
    if (out[j].status == PointStatus::merged_away) continue;
    for (std::size_t i = 0; i < j; ++i) {
      if (out[i].status == PointStatus::merged_away) continue;
      if (cosine_similarity(vecs[i].values, vecs[j].values) >= threshold) {
        out[j].status = PointStatus::merged_away;
        break;
      }
    }
  }
  return out;
}

std::vector<CriticalPoint> surviving_points(const std::vector<CriticalPoint>& points) {
  std::vector<CriticalPoint> out;
  for (const auto& p : points) {
    if (p.status != PointStatus::merged_away) out.push_back(p);
  }
  return out;
}

namespace {

bool contains_icase(const std::string& haystack, const std::string& needle) {
  if (needle.empty()) return true;
  return lower_ascii(haystack).find(lower_ascii(needle)) != std::string::npos;
}

std::string containment_phrase(const CriticalPoint& p) {
  if (p.key_phrase && !p.key_phrase->empty()) return *p.key_phrase;
  return longest_token(p.claim);
}

}  // namespace

CptResult run_cpt(const PlanningMap& map, const Instruction& instruction, const CptConfig& config,
                  Gateway& gateway, const CptModels& models) {
  config.validate();
  CptResult result;

  std::vector<CriticalPoint> points;
  try {
    points = extract_critical_points(map, instruction, gateway, models.generator);
  } catch (const Error& e) {
    throw StageError("cpt.extract", e.what());
  }

  for (auto& point : points) {
    const std::string query = formulate_verification_query(point, instruction);
    double v = 0.0;
    try {
      v = verify_point(query, map, gateway, models.verifier);
    } catch (const Error& e) {
      throw StageError("cpt.verify",
                       "point " + std::to_string(point.index) + ": " + e.what());
    }
    if (v >= config.tau) {
      point.status = PointStatus::verified;
      point.verification_score = v;
      point.verification_query = query;
    } else {
      point.verification_score = v;
      point.verification_query = query;
      try {
        point = correct_point(point, map, query, gateway, models, config);
      } catch (const Error& e) {
        throw StageError("cpt.correct",
                         "point " + std::to_string(point.index) + ": " + e.what());
      }
    }
  }

  try {
    points = merge_redundant_points(points, gateway, models.embedder,
                                    config.merge_similarity_threshold);
  } catch (const Error& e) {
    throw StageError("cpt.merge", e.what());
  }

  const std::vector<CriticalPoint> survivors = surviving_points(points);
  std::string points_text;
  for (const auto& p : survivors) {
    points_text += "- " + p.claim;
    if (p.key_phrase) points_text += " (key phrase: " + *p.key_phrase + ")";
    points_text += "\n";
  }
  std::string prompt = prompts::substitute(
      prompts::kCptReconstructTemplate,
      {{"instruction", instruction.text}, {"points", points_text}});
  try {
    std::string response = gateway.chat_complete(
        ModelRequest::user_text(models.generator, prompt)).text;
    auto missing_phrases = [&survivors](const std::string& text) {
      std::vector<std::string> missing;
      for (const auto& p : survivors) {
        const std::string phrase = containment_phrase(p);
        if (!contains_icase(text, phrase)) missing.push_back(phrase);
      }
      return missing;
    };
    std::vector<std::string> missing = missing_phrases(response);
    if (!missing.empty()) {
      response = gateway.chat_complete(
          ModelRequest::user_text(models.generator,
                                  prompt + prompts::kCptReconstructRetryNote)).text;
      missing = missing_phrases(response);
      for (const auto& phrase : missing) {
        result.warnings.push_back("reconstruction still missing key phrase '" + phrase + "'");
      }
    }
    if (response.empty()) {
      throw BackendError("reconstruction returned empty response");
    }
    result.response = std::move(response);
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError("cpt.reconstruct", e.what());
  }

  result.points = std::move(points);
  return result;
}

}  // namespace planvl
