#include "planvl/store.hpp"

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace planvl {

namespace fs = std::filesystem;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open file: " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  const fs::path tmp = target.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot open file for writing: " + tmp.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      throw IoError("write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("rename failed for " + target.string() + ": " + ec.message());
  }
}

json sft_record(const TrainingExample& example, const std::string& image_path) {
  json turns = json::array();
  turns.push_back(json{{"role", "user"}, {"content", "<image>\n" + example.instruction.text}});
  turns.push_back(json{{"role", "assistant"}, {"content", example.response}});
  for (const auto& round : example.followups) {
    turns.push_back(json{{"role", "user"}, {"content", round.question}});
    turns.push_back(json{{"role", "assistant"}, {"content", round.response}});
  }
  return json{{"id", example.id}, {"images", json::array({image_path})}, {"conversations", turns}};
}

std::size_t export_sft(const std::vector<TrainingExample>& examples,
                       const std::unordered_map<std::string, std::string>& image_path_by_map,
                       const std::string& path, bool allow_raw) {
  for (const auto& e : examples) {
    e.validate();
    if (e.style == ExampleStyle::raw && !allow_raw) {
      throw PreconditionError("export_sft: example '" + e.id +
                              "' has style raw; pass allow_raw to export unrewritten responses");
    }
  }
  std::string out;
  for (const auto& e : examples) {
    auto it = image_path_by_map.find(e.map_id);
    if (it == image_path_by_map.end() || !fs::exists(it->second)) {
      throw IoError("export_sft: missing image file for map_id '" + e.map_id + "'");
    }
    out += sft_record(e, it->second).dump();
    out += '\n';
  }
  write_file_atomic(path, out);
  return examples.size();
}

}  // namespace planvl
