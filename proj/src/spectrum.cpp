#include "planvl/spectrum.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "planvl/hash.hpp"
#include "planvl/prompts.hpp"

namespace planvl {

void IntentTagging::validate() const {
  if (instruction_id.empty()) throw ValidationError("IntentTagging: instruction_id must be nonempty");
  if (intents.empty()) throw ValidationError("IntentTagging: intents must be nonempty");
  std::set<std::string> seen;
  for (const auto& intent : intents) {
    if (intent.empty()) throw ValidationError("IntentTagging: empty intent label");
    if (!seen.insert(intent).second) {
      throw ValidationError("IntentTagging: duplicate intent '" + intent + "'");
    }
  }
}

json IntentTagging::to_json() const {
  return json{{"instruction_id", instruction_id}, {"intents", intents}};
}

IntentTagging IntentTagging::from_json(const json& j) {
  IntentTagging t;
  t.instruction_id = j.at("instruction_id").get<std::string>();
  t.intents = j.at("intents").get<std::vector<std::string>>();
  t.validate();
  return t;
}

std::string normalize_intent(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_sep = false;
  for (const char ch : raw) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      if (pending_sep && !out.empty()) out += '_';
      pending_sep = false;
      out += static_cast<char>(std::tolower(c));
    } else {
      pending_sep = true;
    }
  }
  return out;
}

std::vector<std::string> parse_intent_list(const std::string& raw) {
  const std::size_t open = raw.find('[');
  if (open == std::string::npos) {
    throw ParseError("intent list: no JSON array found", raw);
  }
  const std::size_t close = raw.rfind(']');
  if (close == std::string::npos || close < open) {
    throw ParseError("intent list: unterminated JSON array", raw);
  }
  json arr;
  try {
    arr = json::parse(raw.substr(open, close - open + 1));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("intent list: malformed JSON array: ") + e.what(), raw);
  }
  if (!arr.is_array()) throw ParseError("intent list: not a JSON array", raw);
  std::vector<std::string> intents;
  std::set<std::string> seen;
  for (const auto& item : arr) {
    if (!item.is_string()) throw ParseError("intent list: array items must be strings", raw);
    const std::string norm = normalize_intent(item.get<std::string>());
    if (norm.empty()) continue;
    if (seen.insert(norm).second) intents.push_back(norm);
  }
  if (intents.empty()) throw ParseError("intent list: no usable labels", raw);
  return intents;
}

IntentTagging tag_intents(const Instruction& instruction, Gateway& gateway,
                          const std::string& model_id) {
  if (instruction.text.empty()) {
    throw PreconditionError("tag_intents: instruction text must be nonempty");
  }
  const std::string prompt =
      prompts::substitute(prompts::kIntentTagger, {{"instruction", instruction.text}});
  const ModelRequest req = ModelRequest::user_text(model_id, prompt);
  std::string raw = gateway.chat_complete(req).text;
  IntentTagging tagging;
  tagging.instruction_id = instruction.id;
  try {
    tagging.intents = parse_intent_list(raw);
  } catch (const ParseError&) {
    raw = gateway.chat_complete(req).text;  // one retry
    tagging.intents = parse_intent_list(raw);
  }
  tagging.validate();
  return tagging;
}

void TaskSpectrum::validate() const {
  if (task_types.empty()) throw ValidationError("TaskSpectrum: task_types must be nonempty");
  std::set<std::string> labels;
  std::set<std::string> members;
  for (const auto& t : task_types) {
    if (t.label.empty()) throw ValidationError("TaskSpectrum: empty task-type label");
    if (!labels.insert(t.label).second) {
      throw ValidationError("TaskSpectrum: duplicate label '" + t.label + "'");
    }
    for (const auto& id : t.member_ids) {
      if (!members.insert(id).second) {
        throw ValidationError("TaskSpectrum: instruction '" + id + "' in two task types");
      }
    }
  }
  if (complexity_order.size() != task_types.size()) {
    throw ValidationError("TaskSpectrum: complexity_order must be a permutation of labels");
  }
  for (const auto& label : complexity_order) {
    if (!labels.count(label)) {
      throw ValidationError("TaskSpectrum: complexity_order has unknown label '" + label + "'");
    }
  }
  for (std::size_t i = 1; i < complexity_order.size(); ++i) {
    auto mean_of = [this](const std::string& label) {
      for (const auto& t : task_types) {
        if (t.label == label) return t.mean_intent_count;
      }
      return 0.0;
    };
    if (mean_of(complexity_order[i - 1]) < mean_of(complexity_order[i]) - 1e-12) {
      throw ValidationError("TaskSpectrum: complexity_order not descending by mean intent count");
    }
  }
}

json TaskSpectrum::to_json() const {
  json types = json::array();
  for (const auto& t : task_types) {
    types.push_back(json{{"label", t.label},
                         {"member_ids", t.member_ids},
                         {"mean_intent_count", round6(t.mean_intent_count)}});
  }
  return json{{"task_types", types}, {"complexity_order", complexity_order}};
}

TaskSpectrum TaskSpectrum::from_json(const json& j) {
  TaskSpectrum s;
  for (const auto& t : j.at("task_types")) {
    TaskType type;
    type.label = t.at("label").get<std::string>();
    type.member_ids = t.at("member_ids").get<std::vector<std::string>>();
    type.mean_intent_count = t.at("mean_intent_count").get<double>();
    s.task_types.push_back(std::move(type));
  }
  s.complexity_order = j.at("complexity_order").get<std::vector<std::string>>();
  s.validate();
  return s;
}

namespace {

double rng_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) / 9007199254740992.0;  // [0,1)
}

std::size_t rng_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(rng_unit(rng) * static_cast<double>(n)) % n;
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed,
                    int max_iterations) {
  if (k < 1) throw PreconditionError("kmeans: k must be >= 1");
  if (points.size() < static_cast<std::size_t>(k)) {
    throw PreconditionError("kmeans: fewer points than clusters");
  }
  const std::size_t n = points.size();
  const std::size_t dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) throw PreconditionError("kmeans: dimension mismatch");
  }
  std::mt19937_64 rng(seed);

  // k-means++ seeding
  std::vector<std::vector<double>> centroids;
  centroids.push_back(points[rng_index(rng, n)]);
  std::vector<double> d2(n);
  while (centroids.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = sq_dist(points[i], centroids[0]);
      for (std::size_t c = 1; c < centroids.size(); ++c) {
        best = std::min(best, sq_dist(points[i], centroids[c]));
      }
      d2[i] = best;
      total += best;
    }
    std::size_t pick;
    if (total <= 0.0) {
      pick = rng_index(rng, n);  // all mass on existing centroids
    } else {
      const double target = rng_unit(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    }
    centroids.push_back(points[pick]);
  }

  std::vector<int> assignment(n, -1);
  int iter = 0;
  for (; iter < max_iterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best_c = 0;
      double best_d = sq_dist(points[i], centroids[0]);
      for (int c = 1; c < k; ++c) {
        const double d = sq_dist(points[i], centroids[c]);
        if (d < best_d) {
          best_d = d;
          best_c = c;
        }
      }
      if (assignment[i] != best_c) {
        assignment[i] = best_c;
        changed = true;
      }
    }
    // recompute centroids; empty clusters grab the point farthest from its centroid
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<int> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assignment[i]];
      for (std::size_t d = 0; d < dim; ++d) sums[assignment[i]][d] += points[i][d];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        std::size_t far_i = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (counts[assignment[i]] <= 1) continue;  // don't orphan another cluster
          const double d = sq_dist(points[i], centroids[assignment[i]]);
          if (d > far_d) {
            far_d = d;
            far_i = i;
          }
        }
        --counts[assignment[far_i]];
        for (std::size_t d = 0; d < dim; ++d) sums[assignment[far_i]][d] -= points[far_i][d];
        assignment[far_i] = c;
        counts[c] = 1;
        sums[c] = points[far_i];
        changed = true;
      }
      for (std::size_t d = 0; d < dim; ++d) {
        centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
      }
    }
    if (!changed) break;
  }
  return KMeansResult{std::move(assignment), std::move(centroids), iter + 1};
}

TaskSpectrum build_spectrum(const std::vector<IntentTagging>& taggings, int k,
                            std::uint64_t seed) {
  std::set<std::string> distinct_ids;
  for (const auto& t : taggings) distinct_ids.insert(t.instruction_id);
  if (k < 1) throw PreconditionError("build_spectrum: k must be >= 1");
  if (distinct_ids.size() < static_cast<std::size_t>(k)) {
    throw PreconditionError("build_spectrum: k exceeds the number of distinct instructions");
  }

  // global intent vocabulary, sorted for a stable coordinate system
  std::set<std::string> vocab_set;
  for (const auto& t : taggings) {
    for (const auto& intent : t.intents) vocab_set.insert(intent);
  }
  if (vocab_set.empty()) throw PreconditionError("build_spectrum: empty intent vocabulary");
  std::vector<std::string> vocab(vocab_set.begin(), vocab_set.end());
  std::map<std::string, std::size_t> vocab_index;
  for (std::size_t i = 0; i < vocab.size(); ++i) vocab_index[vocab[i]] = i;

  std::vector<std::vector<double>> vectors;
  vectors.reserve(taggings.size());
  for (const auto& t : taggings) {
    std::vector<double> v(vocab.size(), 0.0);
    for (const auto& intent : t.intents) v[vocab_index[intent]] = 1.0;
    vectors.push_back(std::move(v));
  }

  const KMeansResult km = kmeans(vectors, k, mix_seed(seed, "spectrum.kmeans"));

  // label each cluster by its most frequent intent (ties: lexicographic)
  TaskSpectrum spectrum;
  std::set<std::string> used_labels;
  for (int c = 0; c < k; ++c) {
    TaskType type;
    std::map<std::string, int> freq;
    double intent_sum = 0.0;
    for (std::size_t i = 0; i < taggings.size(); ++i) {
      if (km.assignment[i] != c) continue;
      type.member_ids.push_back(taggings[i].instruction_id);
      intent_sum += static_cast<double>(taggings[i].intents.size());
      for (const auto& intent : taggings[i].intents) ++freq[intent];
    }
    std::string label;
    int best = 0;
    for (const auto& [intent, count] : freq) {
      if (count > best) {
        best = count;
        label = intent;
      }
    }
    std::string unique = label;
    for (int suffix = 2; used_labels.count(unique); ++suffix) {
      unique = label + "_" + std::to_string(suffix);
    }
    used_labels.insert(unique);
    type.label = unique;
    type.mean_intent_count = intent_sum / static_cast<double>(type.member_ids.size());
    spectrum.task_types.push_back(std::move(type));
  }

  std::stable_sort(spectrum.task_types.begin(), spectrum.task_types.end(),
                   [](const TaskType& a, const TaskType& b) {
                     if (a.mean_intent_count != b.mean_intent_count) {
                       return a.mean_intent_count > b.mean_intent_count;
                     }
                     return a.label < b.label;
                   });
  for (const auto& t : spectrum.task_types) spectrum.complexity_order.push_back(t.label);
  spectrum.validate();
  return spectrum;
}

}  // namespace planvl
