#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "planvl/errors.hpp"
#include "planvl/json.hpp"
#include "planvl/types.hpp"

namespace planvl {

// Reads a whole file into a string. Throws IoError.
std::string read_file(const std::string& path);

// Writes bytes atomically (temp file in the same directory, then rename).
void write_file_atomic(const std::string& path, const std::string& bytes);

// One JSON object per line, UTF-8, stable field order. Records are
// invariant-checked before anything is written. Returns the count written.
template <typename T>
std::size_t save_jsonl(const std::vector<T>& records, const std::string& path) {
  for (const auto& r : records) {
    r.validate();
  }
  std::string out;
  for (const auto& r : records) {
    out += r.to_json().dump();
    out += '\n';
  }
  write_file_atomic(path, out);
  return records.size();
}

// Parses and invariant-checks every line; failures report the line number.
template <typename T>
std::vector<T> load_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open dataset file: " + path);
  }
  std::vector<T> records;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    json j;
    try {
      j = json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what(), line, line_no);
    }
    try {
      T record = T::from_json(j);
      record.validate();
      records.push_back(std::move(record));
    } catch (const ValidationError& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

// Emits SFT conversation records: one user turn holding an image reference
// plus the instruction text, one assistant turn holding the response, then
// the follow-up rounds in order. Raw-style examples are rejected unless
// allow_raw is set. Every example's map must resolve to an existing image
// file. Returns the number of conversations written.
std::size_t export_sft(const std::vector<TrainingExample>& examples,
                       const std::unordered_map<std::string, std::string>& image_path_by_map,
                       const std::string& path, bool allow_raw = false);

// The conversation record for one example (the export_sft line format).
json sft_record(const TrainingExample& example, const std::string& image_path);

}  // namespace planvl
