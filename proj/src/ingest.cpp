#include "planvl/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>

#include "planvl/hash.hpp"
#include "planvl/imaging.hpp"
#include "planvl/prompts.hpp"
#include "planvl/store.hpp"

namespace planvl {

namespace fs = std::filesystem;

void FilterVerdict::validate() const {
  if (map_id.empty()) throw ValidationError("FilterVerdict: map_id must be nonempty");
  if (verdict != 0 && verdict != 1) throw ValidationError("FilterVerdict: verdict must be 0 or 1");
}

json FilterVerdict::to_json() const {
  return json{{"map_id", map_id},
              {"analysis", analysis},
              {"verdict", verdict},
              {"raw_text", raw_text},
              {"conflicting", conflicting}};
}

FilterVerdict FilterVerdict::from_json(const json& j) {
  FilterVerdict v;
  v.map_id = j.at("map_id").get<std::string>();
  v.analysis = j.value("analysis", std::string{});
  v.verdict = j.at("verdict").get<int>();
  v.raw_text = j.value("raw_text", std::string{});
  v.conflicting = j.value("conflicting", false);
  v.validate();
  return v;
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

PlanningMap map_from_file(const std::string& source_doc, int page, const std::string& image_path,
                          const std::string& bytes) {
  const ImageInfo info = read_image_info_bytes(bytes, image_path);
  PlanningMap m;
  m.content_hash = sha256_hex(bytes);
  m.id = derive_id("map", m.content_hash + ":" + image_path);
  m.source_doc = source_doc;
  m.page = page;
  m.image_path = image_path;
  m.width_px = info.width;
  m.height_px = info.height;
  m.validate();
  return m;
}

}  // namespace

ExtractResult extract_images(const std::string& document_path, const std::string& image_out_dir,
                             const ExtractOptions& options) {
  if (!fs::exists(document_path)) {
    throw IoError("input does not exist: " + document_path);
  }
  ExtractResult result;
  if (fs::is_directory(document_path)) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(document_path)) {
      if (!entry.is_regular_file()) continue;
      std::string ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(),
                     [](unsigned char c) { return std::tolower(c); });
      if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") {
        files.push_back(entry.path().string());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
      const std::string bytes = read_file(path);
      if (bytes.size() < options.min_image_bytes) {
        result.warnings.push_back(path + ": below byte-size floor, skipped");
        continue;
      }
      try {
        result.maps.push_back(map_from_file(document_path, 0, path, bytes));
      } catch (const ParseError& e) {
        ++result.skipped_unsupported;
        result.warnings.push_back(e.what());
      }
    }
    return result;
  }

  // PDF mode
  PdfExtraction pdf = extract_pdf_images(document_path);
  result.skipped_unsupported = pdf.skipped_unsupported;
  result.warnings = std::move(pdf.warnings);
  fs::create_directories(image_out_dir);
  int counter = 0;
  for (const auto& img : pdf.images) {
    if (img.bytes.size() < options.min_image_bytes) {
      result.warnings.push_back(document_path + " image " + std::to_string(counter) +
                                ": below byte-size floor, skipped");
      ++counter;
      continue;
    }
    const std::string ext = img.format == "jpeg" ? ".jpg" : ".png";
    const std::string out_path =
        (fs::path(image_out_dir) /
         (fs::path(document_path).stem().string() + "_p" + std::to_string(img.page) + "_" +
          std::to_string(counter) + ext))
            .string();
    write_file_atomic(out_path, img.bytes);
    result.maps.push_back(map_from_file(document_path, img.page, out_path, img.bytes));
    ++counter;
  }
  return result;
}

bool filter_by_resolution(const PlanningMap& map, int min_w, int min_h) {
  if (map.width_px < 1 || map.height_px < 1) {
    throw PreconditionError("filter_by_resolution: dimensions not populated for map " + map.id);
  }
  return map.width_px >= min_w && map.height_px >= min_h;
}

FilterVerdict parse_filter_verdict(const std::string& map_id, const std::string& raw_text) {
  // collect every \boxed{d} with d in {0,1}
  std::vector<int> tokens;
  const std::string needle = "\\boxed{";
  std::size_t pos = 0;
  while ((pos = raw_text.find(needle, pos)) != std::string::npos) {
    const std::size_t digit = pos + needle.size();
    if (digit + 1 < raw_text.size() && (raw_text[digit] == '0' || raw_text[digit] == '1') &&
        raw_text[digit + 1] == '}') {
      tokens.push_back(raw_text[digit] - '0');
    }
    pos = digit;
  }
  if (tokens.empty()) {
    throw ParseError("filter verdict: no \\boxed{0|1} token found", raw_text);
  }
  FilterVerdict v;
  v.map_id = map_id;
  v.raw_text = raw_text;
  v.verdict = tokens.back();
  v.conflicting =
      std::any_of(tokens.begin(), tokens.end(), [&](int t) { return t != tokens.back(); });

  std::string pre = raw_text;
  const std::size_t det = raw_text.find("Determination");
  if (det != std::string::npos) pre = raw_text.substr(0, det);
  const std::size_t label = pre.find("Analysis:");
  if (label != std::string::npos) pre = pre.substr(label + 9);
  v.analysis = trim(pre);
  return v;
}

FilterVerdict judge_planning_map(const PlanningMap& map, Gateway& gateway,
                                 const std::string& model_id) {
  ModelRequest req;
  req.model_id = model_id;
  req.messages.push_back(
      Message{"user", {MessagePart::text(prompts::kFilterImage), MessagePart::image(map.image_path)}});
  const ModelResponse resp = gateway.chat_complete(req);
  return parse_filter_verdict(map.id, resp.text);
}

namespace {

double point_distance(const std::vector<double>& a, const std::vector<double>& b,
                      DistanceMetric metric) {
  if (metric == DistanceMetric::cosine) return 1.0 - cosine_similarity(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

std::vector<std::size_t> select_diverse_subset(const std::vector<std::vector<double>>& vectors,
                                               std::size_t k, DistanceMetric metric) {
  if (k == 0) throw PreconditionError("select_diverse_subset: k must be >= 1");
  if (k > vectors.size()) {
    throw PreconditionError("select_diverse_subset: k exceeds the number of vectors");
  }
  const std::size_t dim = vectors.front().size();
  for (const auto& v : vectors) {
    if (v.size() != dim) throw PreconditionError("select_diverse_subset: dimension mismatch");
  }

  std::vector<double> centroid(dim, 0.0);
  for (const auto& v : vectors) {
    for (std::size_t d = 0; d < dim; ++d) centroid[d] += v[d];
  }
  for (auto& c : centroid) c /= static_cast<double>(vectors.size());

  std::vector<std::size_t> chosen;
  chosen.reserve(k);
  std::size_t first = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    const double d = point_distance(vectors[i], centroid, metric);
    if (d > best) {
      best = d;
      first = i;
    }
  }
  chosen.push_back(first);

  // min distance from every point to the chosen set, updated incrementally
  std::vector<double> min_dist(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    min_dist[i] = point_distance(vectors[i], vectors[first], metric);
  }
  std::vector<bool> taken(vectors.size(), false);
  taken[first] = true;

  while (chosen.size() < k) {
    std::size_t pick = vectors.size();
    double pick_dist = -1.0;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      if (taken[i]) continue;
      if (min_dist[i] > pick_dist) {
        pick_dist = min_dist[i];
        pick = i;
      }
    }
    chosen.push_back(pick);
    taken[pick] = true;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      if (taken[i]) continue;
      min_dist[i] = std::min(min_dist[i], point_distance(vectors[i], vectors[pick], metric));
    }
  }
  return chosen;
}

std::vector<std::size_t> select_diverse_subset(const std::vector<EmbeddingVector>& embeddings,
                                               std::size_t k, DistanceMetric metric) {
  std::vector<std::vector<double>> vecs;
  vecs.reserve(embeddings.size());
  for (const auto& e : embeddings) vecs.push_back(e.values);
  return select_diverse_subset(vecs, k, metric);
}

}  // namespace planvl
