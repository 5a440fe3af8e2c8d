#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace planvl {

// SHA-256 hex digest of a byte string.
std::string sha256_hex(std::string_view bytes);

// SHA-256 hex digest of a file's contents. Throws IoError if unreadable.
std::string sha256_file_hex(const std::string& path);

// Deterministic id: "<prefix>-" + first 12 hex chars of sha256(content).
std::string derive_id(std::string_view prefix, std::string_view content);

// Folds a run seed and a string key into a 64-bit stream seed.
std::uint64_t mix_seed(std::uint64_t run_seed, std::string_view key);

}  // namespace planvl
