#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "planvl/errors.hpp"
#include "planvl/json.hpp"

namespace planvl {

enum class PartKind { text, image_path, image_bytes };

struct MessagePart {
  PartKind kind = PartKind::text;
  std::string value;  // text, a file path, or raw image bytes

  static MessagePart text(std::string t) { return {PartKind::text, std::move(t)}; }
  static MessagePart image(std::string path) { return {PartKind::image_path, std::move(path)}; }
};

struct Message {
  std::string role;  // "system" | "user" | "assistant"
  std::vector<MessagePart> parts;
};

struct ModelRequest {
  std::string model_id;
  std::vector<Message> messages;
  double temperature = 0.0;
  int max_tokens = 2048;
  std::optional<std::int64_t> seed;

  static ModelRequest user_text(std::string model_id, std::string text);

  void validate() const;
};

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct ModelResponse {
  std::string text;
  std::string model_id;
  Usage usage;
  bool cached = false;
  int attempts = 1;
};

enum class PayloadKind { text, image };

std::string to_string(PayloadKind k);

struct EmbeddingVector {
  std::vector<double> values;
  int dim = 0;
  PayloadKind source = PayloadKind::text;
  std::string model_id;

  void validate() const;
  bool operator==(const EmbeddingVector&) const = default;
};

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// Backend abstraction: one chat/vision completion endpoint plus one
// embedding endpoint.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string name() const = 0;
  virtual ModelResponse complete(const ModelRequest& request) = 0;
  // payloads are texts or image file paths depending on kind; one vector per
  // payload, order preserved.
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& payloads,
                                                 PayloadKind kind, const std::string& model_id) = 0;
};

// Deterministic scripted backend for offline runs and tests.
//
// A transcript is an ordered list of (substring pattern -> response) entries;
// the first eligible entry whose pattern occurs in the request text wins.
// Entries can inject failures ("fail_times"), carry a consumable response
// sequence ("responses"), or cap reuse ("max_uses"). Embeddings come from an
// exact-text override table or, by default, a unit vector derived from the
// payload's content hash, so identical payloads always embed identically.
class MockBackend : public Backend {
 public:
  struct Entry {
    std::string match;                 // substring; empty matches everything
    std::string response;             // reusable reply
    std::deque<std::string> responses;  // consumed one per hit, takes precedence
    int fail_times = 0;               // inject this many transport failures first
    int max_uses = 0;                 // 0 = unlimited
    int uses = 0;
  };

  explicit MockBackend(int embedding_dim = 8);
  static std::shared_ptr<MockBackend> from_file(const std::string& transcript_path);
  static std::shared_ptr<MockBackend> from_json(const json& transcript);

  void add_entry(Entry entry);
  void set_embedding(const std::string& text, std::vector<double> values);

  std::string name() const override { return "mock"; }
  ModelResponse complete(const ModelRequest& request) override;
  std::vector<std::vector<double>> embed(const std::vector<std::string>& payloads, PayloadKind kind,
                                         const std::string& model_id) override;

  // Flattened text a chat request is matched against (also what gets logged):
  // all text parts joined by newlines plus an [image:<hash12>] marker per
  // image part.
  static std::string request_match_text(const ModelRequest& request);

  std::vector<std::string> chat_log() const;
  std::vector<std::string> embed_log() const;
  std::size_t count_chat_calls_containing(const std::string& needle) const;

 private:
  std::vector<double> embedding_for_bytes(const std::string& bytes) const;

  mutable std::mutex mutex_;
  int embedding_dim_;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::vector<double>> embedding_overrides_;
  std::vector<std::string> chat_log_;
  std::vector<std::string> embed_log_;
};

// OpenAI-compatible HTTP backend (chat-completions + embeddings JSON).
class HttpBackend : public Backend {
 public:
  struct Options {
    std::string base_url;        // e.g. "http://localhost:8000"
    std::string api_key;         // sent as Authorization: Bearer when nonempty
    std::string chat_path = "/v1/chat/completions";
    std::string embed_path = "/v1/embeddings";
    int timeout_seconds = 120;
  };

  explicit HttpBackend(Options options);
  ~HttpBackend() override;

  std::string name() const override { return "http"; }
  ModelResponse complete(const ModelRequest& request) override;
  std::vector<std::vector<double>> embed(const std::vector<std::string>& payloads, PayloadKind kind,
                                         const std::string& model_id) override;

  // The exact wire JSON for a chat request; exposed for wire-format tests.
  static json chat_request_body(const ModelRequest& request);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct GatewayOptions {
  bool cache_enabled = false;
  std::string cache_dir;
  int max_attempts = 5;
  int backoff_initial_ms = 200;
  double backoff_factor = 2.0;
  bool backoff_sleep = true;  // tests turn the actual sleeping off
  int workers = 4;
};

// Uniform client: validates requests, serves the content-addressed response
// cache, and retries transport failures with exponential backoff.
class Gateway {
 public:
  Gateway(std::shared_ptr<Backend> backend, GatewayOptions options);

  // Fires on every completed chat call, cached or fresh (audit trails).
  using ChatObserver = std::function<void(const ModelRequest&, const ModelResponse&)>;
  void set_chat_observer(ChatObserver observer) { chat_observer_ = std::move(observer); }

  ModelResponse chat_complete(const ModelRequest& request);
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& payloads, PayloadKind kind,
                                     const std::string& model_id);

  // Cache key: pure function of canonicalized request content. Image parts
  // enter by content hash, so the key tracks pixel bytes, not paths.
  static std::string chat_cache_key(const ModelRequest& request);
  static std::string embed_cache_key(const std::string& payload, PayloadKind kind,
                                     const std::string& model_id);

  std::size_t backend_calls() const;
  std::size_t cache_hits() const;
  int workers() const { return options_.workers; }
  Backend& backend() { return *backend_; }

 private:
  std::optional<json> cache_lookup(const std::string& key) const;
  void cache_store(const std::string& key, const json& value) const;
  ModelResponse complete_with_retries(const ModelRequest& request);

  std::shared_ptr<Backend> backend_;
  GatewayOptions options_;
  ChatObserver chat_observer_;
  mutable std::mutex mutex_;
  std::size_t backend_calls_ = 0;
  std::size_t cache_hits_ = 0;
};

// Runs fn(0..n-1) on up to `width` threads; results ordering is the caller's
// concern (write by index). The first exception wins and is rethrown.
void parallel_for(std::size_t n, int width, const std::function<void(std::size_t)>& fn);

}  // namespace planvl
