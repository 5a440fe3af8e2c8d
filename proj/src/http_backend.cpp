#include "planvl/gateway.hpp"

// httplib pulls in OpenSSL when CPPHTTPLIB_OPENSSL_SUPPORT is set; we only
// need plain HTTP for gateway-compatible local endpoints.
#include <httplib.h>

#include <string_view>

#include "planvl/store.hpp"

namespace planvl {

namespace {

std::string base64_encode(std::string_view bytes) {
  static constexpr char table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 3 <= bytes.size()) {
    const unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                       (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                       static_cast<unsigned char>(bytes[i + 2]);
    out += table[(v >> 18) & 63];
    out += table[(v >> 12) & 63];
    out += table[(v >> 6) & 63];
    out += table[v & 63];
    i += 3;
  }
  const std::size_t rem = bytes.size() - i;
  if (rem == 1) {
    const unsigned v = static_cast<unsigned char>(bytes[i]) << 16;
    out += table[(v >> 18) & 63];
    out += table[(v >> 12) & 63];
    out += "==";
  } else if (rem == 2) {
    const unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                       (static_cast<unsigned char>(bytes[i + 1]) << 8);
    out += table[(v >> 18) & 63];
    out += table[(v >> 12) & 63];
    out += table[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::string sniff_mime(std::string_view bytes) {
  if (bytes.size() >= 8 && static_cast<unsigned char>(bytes[0]) == 0x89 && bytes.substr(1, 3) == "PNG") {
    return "image/png";
  }
  if (bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
      static_cast<unsigned char>(bytes[1]) == 0xD8) {
    return "image/jpeg";
  }
  return "application/octet-stream";
}

json image_part_json(const std::string& bytes) {
  return json{{"type", "image_url"},
              {"image_url", json{{"url", "data:" + sniff_mime(bytes) + ";base64," + base64_encode(bytes)}}}};
}

}  // namespace

struct HttpBackend::Impl {
  Options options;

  httplib::Result post(const std::string& path, const std::string& body) {
    httplib::Client client(options.base_url);
    client.set_connection_timeout(options.timeout_seconds, 0);
    client.set_read_timeout(options.timeout_seconds, 0);
    client.set_write_timeout(options.timeout_seconds, 0);
    httplib::Headers headers;
    if (!options.api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + options.api_key);
    }
    return client.Post(path, headers, body, "application/json");
  }
};

HttpBackend::HttpBackend(Options options) : impl_(std::make_unique<Impl>()) {
  if (options.base_url.empty()) {
    throw PreconditionError("HttpBackend: base_url must be set");
  }
  impl_->options = std::move(options);
}

HttpBackend::~HttpBackend() = default;

json HttpBackend::chat_request_body(const ModelRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    // Plain string content when the message is a single text part; the parts
    // array form otherwise.
    if (m.parts.size() == 1 && m.parts[0].kind == PartKind::text) {
      messages.push_back(json{{"role", m.role}, {"content", m.parts[0].value}});
      continue;
    }
    json parts = json::array();
    for (const auto& p : m.parts) {
      switch (p.kind) {
        case PartKind::text:
          parts.push_back(json{{"type", "text"}, {"text", p.value}});
          break;
        case PartKind::image_path:
          parts.push_back(image_part_json(read_file(p.value)));
          break;
        case PartKind::image_bytes:
          parts.push_back(image_part_json(p.value));
          break;
      }
    }
    messages.push_back(json{{"role", m.role}, {"content", parts}});
  }
  json body{{"model", request.model_id},
            {"messages", messages},
            {"temperature", request.temperature},
            {"max_tokens", request.max_tokens}};
  if (request.seed) body["seed"] = *request.seed;
  return body;
}

namespace {

// Shared response triage: retryable vs terminal.
void raise_for_status(const httplib::Result& res, const std::string& what) {
  if (!res) {
    throw TransportError(what + ": connection failed (" + httplib::to_string(res.error()) + ")");
  }
  if (res->status == 429) {
    throw RateLimitError(what + ": rate limited (429)");
  }
  if (res->status >= 500) {
    throw TransportError(what + ": server error (" + std::to_string(res->status) + ")");
  }
  if (res->status < 200 || res->status >= 300) {
    throw BackendError(what + ": http " + std::to_string(res->status) + ": " + res->body.substr(0, 300));
  }
}

json parse_body(const httplib::Result& res, const std::string& what) {
  try {
    return json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(what + ": malformed response JSON: " + std::string(e.what()));
  }
}

}  // namespace

ModelResponse HttpBackend::complete(const ModelRequest& request) {
  const json body = chat_request_body(request);
  auto res = impl_->post(impl_->options.chat_path, body.dump());
  raise_for_status(res, "chat");
  const json reply = parse_body(res, "chat");
  if (!reply.contains("choices") || !reply["choices"].is_array() || reply["choices"].empty()) {
    throw BackendError("chat: response has no choices");
  }
  const auto& msg = reply["choices"][0];
  if (!msg.contains("message") || !msg["message"].contains("content")) {
    throw BackendError("chat: response choice has no message content");
  }
  ModelResponse out;
  out.text = msg["message"]["content"].is_null() ? std::string{} : msg["message"]["content"].get<std::string>();
  out.model_id = reply.value("model", request.model_id);
  if (reply.contains("usage")) {
    out.usage.prompt_tokens = reply["usage"].value("prompt_tokens", std::int64_t{0});
    out.usage.completion_tokens = reply["usage"].value("completion_tokens", std::int64_t{0});
  }
  return out;
}

std::vector<std::vector<double>> HttpBackend::embed(const std::vector<std::string>& payloads,
                                                    PayloadKind kind, const std::string& model_id) {
  json input = json::array();
  for (const auto& p : payloads) {
    if (kind == PayloadKind::text) {
      input.push_back(p);
    } else {
      const std::string bytes = read_file(p);
      input.push_back("data:" + sniff_mime(bytes) + ";base64," + base64_encode(bytes));
    }
  }
  const json body{{"model", model_id}, {"input", input}};
  auto res = impl_->post(impl_->options.embed_path, body.dump());
  raise_for_status(res, "embed");
  const json reply = parse_body(res, "embed");
  if (!reply.contains("data") || !reply["data"].is_array()) {
    throw BackendError("embed: response has no data array");
  }
  std::vector<std::vector<double>> out(payloads.size());
  std::vector<bool> seen(payloads.size(), false);
  for (const auto& item : reply["data"]) {
    const auto index = item.value("index", -1);
    if (index < 0 || index >= static_cast<int>(payloads.size())) {
      throw BackendError("embed: response index out of range");
    }
    out[static_cast<std::size_t>(index)] = item["embedding"].get<std::vector<double>>();
    seen[static_cast<std::size_t>(index)] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw BackendError("embed: response missing vector for input " + std::to_string(i));
  }
  return out;
}

}  // namespace planvl
