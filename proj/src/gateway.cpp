#include "planvl/gateway.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <random>
#include <thread>

#include "planvl/hash.hpp"
#include "planvl/store.hpp"

namespace planvl {

namespace fs = std::filesystem;

ModelRequest ModelRequest::user_text(std::string model_id, std::string text) {
  ModelRequest req;
  req.model_id = std::move(model_id);
  req.messages.push_back(Message{"user", {MessagePart::text(std::move(text))}});
  return req;
}

void ModelRequest::validate() const {
  if (messages.empty()) {
    throw PreconditionError("ModelRequest: at least one message required");
  }
  if (temperature < 0.0) {
    throw PreconditionError("ModelRequest: temperature must be >= 0");
  }
  for (const auto& m : messages) {
    for (const auto& p : m.parts) {
      if (p.kind == PartKind::image_path && !fs::exists(p.value)) {
        throw PreconditionError("ModelRequest: image file does not exist: " + p.value);
      }
    }
  }
}

std::string to_string(PayloadKind k) { return k == PayloadKind::text ? "text" : "image"; }

void EmbeddingVector::validate() const {
  if (dim != static_cast<int>(values.size())) {
    throw ValidationError("EmbeddingVector: dim must equal length(values)");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw ValidationError("EmbeddingVector: values must be finite");
  }
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw PreconditionError("cosine_similarity: dimension mismatch");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// ---- MockBackend ----

MockBackend::MockBackend(int embedding_dim) : embedding_dim_(embedding_dim) {}

std::shared_ptr<MockBackend> MockBackend::from_file(const std::string& transcript_path) {
  json j;
  try {
    j = json::parse(read_file(transcript_path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("mock transcript " + transcript_path + ": " + e.what());
  }
  return from_json(j);
}

std::shared_ptr<MockBackend> MockBackend::from_json(const json& transcript) {
  const int dim = transcript.value("dim", 8);
  auto mock = std::make_shared<MockBackend>(dim);
  if (transcript.contains("entries")) {
    for (const auto& e : transcript["entries"]) {
      Entry entry;
      entry.match = e.value("match", std::string{});
      entry.response = e.value("response", std::string{});
      if (e.contains("responses")) {
        for (const auto& r : e["responses"]) entry.responses.push_back(r.get<std::string>());
      }
      entry.fail_times = e.value("fail_times", 0);
      entry.max_uses = e.value("max_uses", 0);
      mock->add_entry(std::move(entry));
    }
  }
  if (transcript.contains("embeddings")) {
    for (const auto& [text, vec] : transcript["embeddings"].items()) {
      mock->set_embedding(text, vec.get<std::vector<double>>());
    }
  }
  return mock;
}

void MockBackend::add_entry(Entry entry) {
  std::lock_guard lock(mutex_);
  entries_.push_back(std::move(entry));
}

void MockBackend::set_embedding(const std::string& text, std::vector<double> values) {
  std::lock_guard lock(mutex_);
  embedding_overrides_[text] = std::move(values);
}

std::string MockBackend::request_match_text(const ModelRequest& request) {
  std::string out;
  for (const auto& m : request.messages) {
    for (const auto& p : m.parts) {
      if (!out.empty()) out += '\n';
      switch (p.kind) {
        case PartKind::text: out += p.value; break;
        case PartKind::image_path: out += "[image:" + sha256_file_hex(p.value).substr(0, 12) + "]"; break;
        case PartKind::image_bytes: out += "[image:" + sha256_hex(p.value).substr(0, 12) + "]"; break;
      }
    }
  }
  return out;
}

ModelResponse MockBackend::complete(const ModelRequest& request) {
  const std::string text = request_match_text(request);
  std::lock_guard lock(mutex_);
  chat_log_.push_back(text);
  for (auto& entry : entries_) {
    if (!entry.match.empty() && text.find(entry.match) == std::string::npos) continue;
    if (entry.max_uses > 0 && entry.uses >= entry.max_uses) continue;
    if (entry.fail_times > 0) {
      --entry.fail_times;
      throw TransportError("mock: injected transport failure for pattern '" + entry.match + "'");
    }
    std::string reply;
    if (!entry.responses.empty()) {
      reply = entry.responses.front();
      entry.responses.pop_front();
    } else {
      reply = entry.response;
    }
    ++entry.uses;
    ModelResponse resp;
    resp.text = reply;
    resp.model_id = request.model_id;
    resp.usage.prompt_tokens = static_cast<std::int64_t>(text.size() / 4);
    resp.usage.completion_tokens = static_cast<std::int64_t>(reply.size() / 4);
    return resp;
  }
  throw BackendError("mock: no transcript entry matches request: " + text.substr(0, 200));
}

std::vector<double> MockBackend::embedding_for_bytes(const std::string& bytes) const {
  // Derive a unit vector from the content hash; mt19937_64 is fully
  // specified, so this is stable across platforms.
  std::mt19937_64 rng(mix_seed(0x9e3779b97f4a7c15ull, sha256_hex(bytes)));
  std::vector<double> v(static_cast<std::size_t>(embedding_dim_));
  double norm = 0.0;
  for (auto& x : v) {
    const auto raw = rng();
    x = (static_cast<double>(raw >> 11) / 9007199254740992.0) * 2.0 - 1.0;
    norm += x * x;
  }
  norm = std::sqrt(norm);
  if (norm == 0.0) norm = 1.0;
  for (auto& x : v) x /= norm;
  return v;
}

std::vector<std::vector<double>> MockBackend::embed(const std::vector<std::string>& payloads,
                                                    PayloadKind kind, const std::string&) {
  std::vector<std::vector<double>> out;
  out.reserve(payloads.size());
  std::lock_guard lock(mutex_);
  for (const auto& p : payloads) {
    embed_log_.push_back(p);
    if (kind == PayloadKind::text) {
      auto it = embedding_overrides_.find(p);
      if (it != embedding_overrides_.end()) {
        out.push_back(it->second);
        continue;
      }
      out.push_back(embedding_for_bytes(p));
    } else {
      out.push_back(embedding_for_bytes(read_file(p)));
    }
  }
  return out;
}

std::vector<std::string> MockBackend::chat_log() const {
  std::lock_guard lock(mutex_);
  return chat_log_;
}

std::vector<std::string> MockBackend::embed_log() const {
  std::lock_guard lock(mutex_);
  return embed_log_;
}

std::size_t MockBackend::count_chat_calls_containing(const std::string& needle) const {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (const auto& c : chat_log_) {
    if (c.find(needle) != std::string::npos) ++n;
  }
  return n;
}

// ---- Gateway ----

namespace {

// Canonical forms use key-sorted JSON so formatting never leaks into keys.
nlohmann::json canonical_chat_request(const ModelRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : request.messages) {
    nlohmann::json parts = nlohmann::json::array();
    for (const auto& p : m.parts) {
      switch (p.kind) {
        case PartKind::text: parts.push_back({{"text", p.value}}); break;
        case PartKind::image_path: parts.push_back({{"image_sha256", sha256_file_hex(p.value)}}); break;
        case PartKind::image_bytes: parts.push_back({{"image_sha256", sha256_hex(p.value)}}); break;
      }
    }
    messages.push_back({{"role", m.role}, {"parts", parts}});
  }
  nlohmann::json c{{"kind", "chat"},
                   {"model", request.model_id},
                   {"messages", messages},
                   {"temperature", request.temperature},
                   {"max_tokens", request.max_tokens}};
  if (request.seed) c["seed"] = *request.seed;
  return c;
}

}  // namespace

Gateway::Gateway(std::shared_ptr<Backend> backend, GatewayOptions options)
    : backend_(std::move(backend)), options_(std::move(options)) {
  if (options_.cache_enabled && options_.cache_dir.empty()) {
    throw PreconditionError("Gateway: cache_enabled requires cache_dir");
  }
}

std::string Gateway::chat_cache_key(const ModelRequest& request) {
  return sha256_hex(canonical_chat_request(request).dump());
}

std::string Gateway::embed_cache_key(const std::string& payload, PayloadKind kind,
                                     const std::string& model_id) {
  nlohmann::json c{{"kind", "embed"},
                   {"model", model_id},
                   {"source", to_string(kind)},
                   {"content", kind == PayloadKind::text ? sha256_hex(payload) : sha256_file_hex(payload)}};
  return sha256_hex(c.dump());
}

std::optional<json> Gateway::cache_lookup(const std::string& key) const {
  if (!options_.cache_enabled) return std::nullopt;
  const fs::path file = fs::path(options_.cache_dir) / key.substr(0, 2) / (key + ".json");
  if (!fs::exists(file)) return std::nullopt;
  try {
    return json::parse(read_file(file.string()));
  } catch (const std::exception&) {
    return std::nullopt;  // corrupt entry treated as a miss
  }
}

void Gateway::cache_store(const std::string& key, const json& value) const {
  if (!options_.cache_enabled) return;
  const fs::path file = fs::path(options_.cache_dir) / key.substr(0, 2) / (key + ".json");
  write_file_atomic(file.string(), value.dump());
}

ModelResponse Gateway::complete_with_retries(const ModelRequest& request) {
  int attempt = 0;
  double delay_ms = options_.backoff_initial_ms;
  while (true) {
    ++attempt;
    try {
      {
        std::lock_guard lock(mutex_);
        ++backend_calls_;
      }
      ModelResponse resp = backend_->complete(request);
      resp.attempts = attempt;
      resp.cached = false;
      return resp;
    } catch (const TransportError& e) {
      if (attempt >= options_.max_attempts) {
        throw TransportError(std::string(e.what()) + " (after " + std::to_string(attempt) + " attempts)");
      }
      if (options_.backoff_sleep && delay_ms > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long>(delay_ms)));
      }
      delay_ms *= options_.backoff_factor;
    }
  }
}

ModelResponse Gateway::chat_complete(const ModelRequest& request) {
  request.validate();
  const std::string key = chat_cache_key(request);
  if (auto hit = cache_lookup(key)) {
    {
      std::lock_guard lock(mutex_);
      ++cache_hits_;
    }
    ModelResponse resp;
    resp.text = (*hit)["text"].get<std::string>();
    resp.model_id = (*hit)["model_id"].get<std::string>();
    resp.usage.prompt_tokens = (*hit)["usage"]["prompt_tokens"].get<std::int64_t>();
    resp.usage.completion_tokens = (*hit)["usage"]["completion_tokens"].get<std::int64_t>();
    resp.cached = true;
    if (chat_observer_) {
      chat_observer_(request, resp);
    }
    return resp;
  }
  ModelResponse resp = complete_with_retries(request);
  cache_store(key, json{{"text", resp.text},
                        {"model_id", resp.model_id},
                        {"usage", json{{"prompt_tokens", resp.usage.prompt_tokens},
                                       {"completion_tokens", resp.usage.completion_tokens}}}});
  if (chat_observer_) {
    chat_observer_(request, resp);
  }
  return resp;
}

std::vector<EmbeddingVector> Gateway::embed(const std::vector<std::string>& payloads,
                                            PayloadKind kind, const std::string& model_id) {
  if (payloads.empty()) {
    throw PreconditionError("embed: payload list must be nonempty");
  }
  if (kind == PayloadKind::image) {
    for (const auto& p : payloads) {
      if (!fs::exists(p)) throw PreconditionError("embed: image file does not exist: " + p);
    }
  }
  std::vector<std::optional<std::vector<double>>> resolved(payloads.size());
  std::vector<std::size_t> missing;
  std::vector<std::string> keys(payloads.size());
  for (std::size_t i = 0; i < payloads.size(); ++i) {
    keys[i] = embed_cache_key(payloads[i], kind, model_id);
    if (auto hit = cache_lookup(keys[i])) {
      std::lock_guard lock(mutex_);
      ++cache_hits_;
      resolved[i] = (*hit)["values"].get<std::vector<double>>();
    } else {
      missing.push_back(i);
    }
  }
  if (!missing.empty()) {
    std::vector<std::string> batch;
    batch.reserve(missing.size());
    for (auto i : missing) batch.push_back(payloads[i]);
    {
      std::lock_guard lock(mutex_);
      ++backend_calls_;
    }
    auto vectors = backend_->embed(batch, kind, model_id);
    if (vectors.size() != batch.size()) {
      throw BackendError("embed: backend returned " + std::to_string(vectors.size()) + " vectors for " +
                         std::to_string(batch.size()) + " payloads");
    }
    for (std::size_t b = 0; b < missing.size(); ++b) {
      resolved[missing[b]] = std::move(vectors[b]);
      cache_store(keys[missing[b]], json{{"values", *resolved[missing[b]]}});
    }
  }
  std::vector<EmbeddingVector> out;
  out.reserve(payloads.size());
  int dim = -1;
  for (std::size_t i = 0; i < payloads.size(); ++i) {
    EmbeddingVector v;
    v.values = std::move(*resolved[i]);
    v.dim = static_cast<int>(v.values.size());
    v.source = kind;
    v.model_id = model_id;
    v.validate();
    if (dim == -1) {
      dim = v.dim;
    } else if (v.dim != dim) {
      throw BackendError("embed: inconsistent dimensions across batch (" + std::to_string(dim) + " vs " +
                         std::to_string(v.dim) + ")");
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::size_t Gateway::backend_calls() const {
  std::lock_guard lock(mutex_);
  return backend_calls_;
}

std::size_t Gateway::cache_hits() const {
  std::lock_guard lock(mutex_);
  return cache_hits_;
}

void parallel_for(std::size_t n, int width, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t threads = std::min<std::size_t>(n, width > 1 ? static_cast<std::size_t>(width) : 1);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&]() {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace planvl
