#include "planvl/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "planvl/prompts.hpp"

namespace planvl {

std::string criteria_text(const std::vector<std::string>& criteria) {
  std::string out;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (i) out += '\n';
    out += std::to_string(i + 1) + ". " + criteria[i];
  }
  return out;
}

std::string build_eval_prompt(const EvalItem& item, const std::string& answer) {
  return prompts::substitute(prompts::kEvaluationTemplate,
                             {{"question", item.question},
                              {"critical_points_text", criteria_text(item.criteria)},
                              {"summary", answer}});
}

namespace {

std::string trim_copy(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
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

// Opening '[' or full-width '［' (EF BC BB); closing ']' or '］' (EF BC BD).
// Returns the position just past the bracket, or npos.
std::size_t match_bracket(std::string_view s, std::size_t pos, bool open) {
  if (pos >= s.size()) return std::string_view::npos;
  const char plain = open ? '[' : ']';
  if (s[pos] == plain) return pos + 1;
  const unsigned char third = open ? 0xBB : 0xBD;
  if (pos + 2 < s.size() && static_cast<unsigned char>(s[pos]) == 0xEF &&
      static_cast<unsigned char>(s[pos + 1]) == 0xBC &&
      static_cast<unsigned char>(s[pos + 2]) == third) {
    return pos + 3;
  }
  return std::string_view::npos;
}

struct LineVerdict {
  int index = 0;
  int value = 0;
  std::string rationale;
};

// One judge output line -> (criterion index, 0/1, rationale), if the line
// carries a point label and a bracketed verdict.
std::optional<LineVerdict> parse_verdict_line(std::string_view line) {
  std::size_t p = 0;
  while (p < line.size() && std::isspace(static_cast<unsigned char>(line[p]))) ++p;

  // optional leading list number "k."
  std::optional<int> list_number;
  std::size_t digits = p;
  while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits]))) ++digits;
  if (digits > p && digits < line.size() && (line[digits] == '.' || line[digits] == ')')) {
    int v = 0;
    for (std::size_t i = p; i < digits; ++i) v = v * 10 + (line[i] - '0');
    list_number = v;
    p = digits + 1;
    while (p < line.size() && std::isspace(static_cast<unsigned char>(line[p]))) ++p;
  }

  // optional "Scoring Point k:" / "Point k:" label — authoritative index
  std::optional<int> label_number;
  std::string_view tail = line.substr(p);
  for (const std::string_view label : {"scoring point", "point"}) {
    if (!starts_with_icase(tail, label)) continue;
    std::size_t q = label.size();
    while (q < tail.size() && std::isspace(static_cast<unsigned char>(tail[q]))) ++q;
    std::size_t num_end = q;
    while (num_end < tail.size() && std::isdigit(static_cast<unsigned char>(tail[num_end]))) {
      ++num_end;
    }
    if (num_end == q) continue;
    int v = 0;
    for (std::size_t i = q; i < num_end; ++i) v = v * 10 + (tail[i] - '0');
    std::size_t after = num_end;
    while (after < tail.size() && std::isspace(static_cast<unsigned char>(tail[after]))) ++after;
    const bool colon =
        after < tail.size() &&
        (tail[after] == ':' || (after + 2 < tail.size() &&
                                static_cast<unsigned char>(tail[after]) == 0xEF &&
                                static_cast<unsigned char>(tail[after + 1]) == 0xBC &&
                                static_cast<unsigned char>(tail[after + 2]) == 0x9A));
    if (!colon) continue;
    label_number = v;
    break;
  }

  if (!list_number && !label_number) return std::nullopt;

  // the bracketed verdict: single token between brackets
  std::size_t scan = p;
  while (scan < line.size()) {
    const std::size_t after_open = match_bracket(line, scan, /*open=*/true);
    if (after_open == std::string_view::npos) {
      ++scan;
      continue;
    }
    std::size_t q = after_open;
    while (q < line.size() && line[q] == ' ') ++q;
    std::size_t tok_end = q;
    while (tok_end < line.size() && std::isdigit(static_cast<unsigned char>(line[tok_end]))) {
      ++tok_end;
    }
    std::size_t r = tok_end;
    while (r < line.size() && line[r] == ' ') ++r;
    const std::size_t after_close = match_bracket(line, r, /*open=*/false);
    if (tok_end > q && after_close != std::string_view::npos) {
      int value = 0;
      for (std::size_t i = q; i < tok_end; ++i) value = value * 10 + (line[i] - '0');
      if (value != 0 && value != 1) {
        throw ParseError("judge output: verdict value " + std::to_string(value) +
                         " outside {0,1}", std::string(line));
      }
      LineVerdict verdict;
      verdict.index = label_number.value_or(list_number.value_or(0));
      verdict.value = value;
      std::string rationale = trim_copy(line.substr(after_close));
      // strip a leading dash variant ( -, – (E2 80 93), — (E2 80 94) ) or colon
      while (!rationale.empty()) {
        if (rationale[0] == '-' || rationale[0] == ':') {
          rationale.erase(0, 1);
        } else if (rationale.size() >= 3 && static_cast<unsigned char>(rationale[0]) == 0xE2 &&
                   static_cast<unsigned char>(rationale[1]) == 0x80 &&
                   (static_cast<unsigned char>(rationale[2]) == 0x93 ||
                    static_cast<unsigned char>(rationale[2]) == 0x94)) {
          rationale.erase(0, 3);
        } else {
          break;
        }
        rationale = trim_copy(rationale);
      }
      verdict.rationale = rationale;
      return verdict;
    }
    scan = after_open;
  }
  return std::nullopt;
}

std::optional<std::pair<int, int>> parse_final_score(const std::string& raw) {
  std::size_t pos = raw.rfind("Final Score");
  if (pos == std::string::npos) return std::nullopt;
  pos += 11;
  while (pos < raw.size() && !std::isdigit(static_cast<unsigned char>(raw[pos]))) {
    if (raw[pos] == '\n') return std::nullopt;
    ++pos;
  }
  if (pos >= raw.size()) return std::nullopt;
  int x = 0;
  while (pos < raw.size() && std::isdigit(static_cast<unsigned char>(raw[pos]))) {
    x = x * 10 + (raw[pos] - '0');
    ++pos;
  }
  while (pos < raw.size() && raw[pos] == ' ') ++pos;
  if (pos >= raw.size() || raw[pos] != '/') return std::nullopt;
  ++pos;
  while (pos < raw.size() && raw[pos] == ' ') ++pos;
  if (pos >= raw.size() || !std::isdigit(static_cast<unsigned char>(raw[pos]))) {
    return std::nullopt;
  }
  int y = 0;
  while (pos < raw.size() && std::isdigit(static_cast<unsigned char>(raw[pos]))) {
    y = y * 10 + (raw[pos] - '0');
    ++pos;
  }
  return std::make_pair(x, y);
}

}  // namespace

ParsedJudgeOutput parse_judge_output(const std::string& raw_text, int n) {
  if (n < 1) throw PreconditionError("parse_judge_output: n must be >= 1");
  std::map<int, LineVerdict> by_index;
  std::vector<int> duplicates;
  std::size_t start = 0;
  while (start <= raw_text.size()) {
    std::size_t end = raw_text.find('\n', start);
    if (end == std::string::npos) end = raw_text.size();
    const std::string_view line(raw_text.data() + start, end - start);
    if (const auto v = parse_verdict_line(line)) {
      if (v->index >= 1 && v->index <= n) {
        if (by_index.count(v->index)) {
          duplicates.push_back(v->index);
        } else {
          by_index[v->index] = *v;
        }
      }
    }
    if (end == raw_text.size()) break;
    start = end + 1;
  }
  if (!duplicates.empty()) {
    std::string list;
    for (const int d : duplicates) list += (list.empty() ? "" : ", ") + std::to_string(d);
    throw ParseError("judge output: duplicate verdicts for indices " + list, raw_text);
  }
  std::vector<int> missing;
  for (int i = 1; i <= n; ++i) {
    if (!by_index.count(i)) missing.push_back(i);
  }
  if (!missing.empty()) {
    std::string list;
    for (const int m : missing) list += (list.empty() ? "" : ", ") + std::to_string(m);
    throw ParseError("judge output: missing verdicts for indices " + list, raw_text);
  }
  ParsedJudgeOutput out;
  for (int i = 1; i <= n; ++i) {
    const LineVerdict& v = by_index[i];
    out.verdicts.push_back(JudgeVerdict{v.index, v.value, v.rationale});
  }
  out.stated_score = parse_final_score(raw_text);
  return out;
}

JudgeResult score_answer(const EvalItem& item, const std::string& answer, Gateway& gateway,
                         const std::string& judge_model, bool judge_multimodal) {
  item.validate();
  if (answer.empty()) throw PreconditionError("score_answer: answer must be nonempty");
  const std::string prompt = build_eval_prompt(item, answer);
  ModelRequest req;
  req.model_id = judge_model;
  Message msg;
  msg.role = "user";
  msg.parts.push_back(MessagePart::text(prompt));
  if (judge_multimodal) msg.parts.push_back(MessagePart::image(item.image_path));
  req.messages.push_back(std::move(msg));

  const int n = static_cast<int>(item.criteria.size());
  std::string raw = gateway.chat_complete(req).text;
  ParsedJudgeOutput parsed;
  try {
    parsed = parse_judge_output(raw, n);
  } catch (const ParseError&) {
    raw = gateway.chat_complete(req).text;  // one retry
    parsed = parse_judge_output(raw, n);
  }

  JudgeResult result;
  result.item_id = item.id;
  result.verdicts = parsed.verdicts;
  result.raw_judge_text = raw;
  result.score = result.recompute_score();
  if (parsed.stated_score) {
    int satisfied = 0;
    for (const auto& v : result.verdicts) satisfied += v.satisfied;
    result.score_mismatch =
        parsed.stated_score->first != satisfied || parsed.stated_score->second != n;
  }
  result.validate();
  return result;
}

void ScoredResult::validate() const {
  if (item_id.empty()) throw ValidationError("ScoredResult: item_id must be nonempty");
  if (!(score >= 0.0) || !std::isfinite(score)) {
    throw ValidationError("ScoredResult: score must be finite and >= 0");
  }
}

json ScoredResult::to_json() const {
  return json{{"item_id", item_id}, {"score", round6(score)}};
}

ScoredResult ScoredResult::from_json(const json& j) {
  ScoredResult r;
  r.item_id = j.at("item_id").get<std::string>();
  r.score = j.at("score").get<double>();
  r.validate();
  return r;
}

std::vector<ScoredResult> scored_from_judge_results(const std::vector<JudgeResult>& results) {
  std::vector<ScoredResult> out;
  out.reserve(results.size());
  for (const auto& r : results) out.push_back(ScoredResult{r.item_id, r.score});
  return out;
}

namespace {

std::vector<CategoryMean> category_means(
    const std::vector<ScoredResult>& results,
    const std::map<std::string, const EvalItem*>& item_by_id,
    const std::vector<std::string>& labels, bool main_axis) {
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& r : results) {
    const EvalItem* item = item_by_id.at(r.item_id);
    const std::string& label = main_axis ? item->main_category : item->detailed_category;
    acc[label].first += r.score;
    acc[label].second += 1;
  }
  std::vector<CategoryMean> out;
  for (const auto& label : labels) {
    const auto it = acc.find(label);
    if (it == acc.end()) continue;  // zero-item categories stay absent
    out.push_back(CategoryMean{label, it->second.first / it->second.second, it->second.second});
  }
  return out;
}

double overall_mean(const std::vector<ScoredResult>& results) {
  double sum = 0.0;
  for (const auto& r : results) sum += r.score;
  return sum / static_cast<double>(results.size());
}

}  // namespace

EvalReport aggregate_report(const std::vector<ScoredResult>& results,
                            const std::vector<EvalItem>& items,
                            const std::optional<std::vector<ScoredResult>>& reference) {
  if (results.empty()) throw PreconditionError("aggregate_report: no results");
  std::map<std::string, const EvalItem*> item_by_id;
  for (const auto& item : items) item_by_id[item.id] = &item;
  for (const auto& r : results) {
    if (!item_by_id.count(r.item_id)) {
      throw PreconditionError("aggregate_report: result for unknown item '" + r.item_id + "'");
    }
  }

  EvalReport report;
  report.per_item = results;
  report.detailed = category_means(results, item_by_id, kDetailedCategories, false);
  report.main = category_means(results, item_by_id, kMainCategories, true);
  report.overall = overall_mean(results);

  if (reference) {
    std::set<std::string> result_ids, ref_ids;
    for (const auto& r : results) result_ids.insert(r.item_id);
    for (const auto& r : *reference) {
      if (!item_by_id.count(r.item_id)) {
        throw PreconditionError("aggregate_report: reference result for unknown item '" +
                                r.item_id + "'");
      }
      ref_ids.insert(r.item_id);
    }
    if (result_ids != ref_ids) {
      throw PreconditionError("aggregate_report: reference must cover the same item set");
    }
    NormalizedView norm;
    norm.reference_overall = overall_mean(*reference);
    if (norm.reference_overall == 0.0) {
      throw PreconditionError("aggregate_report: reference overall is zero, cannot normalize");
    }
    norm.ratio_overall = report.overall / norm.reference_overall;
    norm.delta_overall = report.overall - norm.reference_overall;
    const auto ref_detailed = category_means(*reference, item_by_id, kDetailedCategories, false);
    const auto ref_main = category_means(*reference, item_by_id, kMainCategories, true);
    auto ratios = [](const std::vector<CategoryMean>& ours,
                     const std::vector<CategoryMean>& theirs) {
      std::vector<CategoryMean> out;
      for (const auto& m : ours) {
        for (const auto& r : theirs) {
          if (r.label == m.label && r.mean != 0.0) {
            out.push_back(CategoryMean{m.label, m.mean / r.mean, m.count});
          }
        }
      }
      return out;
    };
    norm.detailed_ratios = ratios(report.detailed, ref_detailed);
    norm.main_ratios = ratios(report.main, ref_main);
    report.normalized = norm;
  }
  return report;
}

json EvalReport::to_json() const {
  json per = json::array();
  for (const auto& r : per_item) per.push_back(r.to_json());
  auto means = [](const std::vector<CategoryMean>& ms) {
    json out = json::object();
    for (const auto& m : ms) {
      out[m.label] = json{{"mean", round6(m.mean)}, {"count", m.count}};
    }
    return out;
  };
  json j{{"per_item", per},
         {"detailed", means(detailed)},
         {"main", means(main)},
         {"overall", round6(overall)}};
  if (normalized) {
    j["normalized"] = json{{"reference_overall", round6(normalized->reference_overall)},
                           {"ratio_overall", round6(normalized->ratio_overall)},
                           {"delta_overall", round6(normalized->delta_overall)},
                           {"detailed_ratios", means(normalized->detailed_ratios)},
                           {"main_ratios", means(normalized->main_ratios)}};
  }
  return j;
}

std::string render_markdown(const EvalReport& report, const std::string& model_label) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  auto find_mean = [](const std::vector<CategoryMean>& ms, const std::string& label)
      -> std::optional<double> {
    for (const auto& m : ms) {
      if (m.label == label) return m.mean;
    }
    return std::nullopt;
  };
  os << "| Model |";
  for (const auto& c : kDetailedCategories) os << " " << c << " |";
  for (const auto& c : kMainCategories) os << " " << c << " |";
  os << " Overall |\n|---|";
  for (std::size_t i = 0; i < kDetailedCategories.size() + kMainCategories.size() + 1; ++i) {
    os << "---|";
  }
  os << "\n| " << model_label << " |";
  for (const auto& c : kDetailedCategories) {
    const auto m = find_mean(report.detailed, c);
    if (m) {
      os << " " << *m << " |";
    } else {
      os << " - |";
    }
  }
  for (const auto& c : kMainCategories) {
    const auto m = find_mean(report.main, c);
    if (m) {
      os << " " << *m << " |";
    } else {
      os << " - |";
    }
  }
  os << " " << report.overall;
  if (report.normalized) {
    const double delta = report.normalized->delta_overall;
    os << " (" << (delta >= 0 ? "+" : "") << delta << ")";
  }
  os << " |\n";
  return os.str();
}

}  // namespace planvl
