#include "planvl/hash.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <vector>

#include "planvl/errors.hpp"

namespace planvl {

namespace {

std::string to_hex(const unsigned char* data, std::size_t len) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (std::size_t i = 0; i < len; ++i) {
    out.push_back(digits[data[i] >> 4]);
    out.push_back(digits[data[i] & 0x0f]);
  }
  return out;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int digest_len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &digest_len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256: digest computation failed");
  }
  return to_hex(digest.data(), digest_len);
}

std::string sha256_file_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open file for hashing: " + path);
  }
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) {
    throw Error("sha256: context allocation failed");
  }
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = in.gcount();
    if (got > 0) {
      EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(got));
    }
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int digest_len = 0;
  EVP_DigestFinal_ex(ctx, digest.data(), &digest_len);
  EVP_MD_CTX_free(ctx);
  return to_hex(digest.data(), digest_len);
}

std::string derive_id(std::string_view prefix, std::string_view content) {
  return std::string(prefix) + "-" + sha256_hex(content).substr(0, 12);
}

std::uint64_t mix_seed(std::uint64_t run_seed, std::string_view key) {
  char seed_bytes[8];
  for (int i = 0; i < 8; ++i) {
    seed_bytes[i] = static_cast<char>((run_seed >> (i * 8)) & 0xff);
  }
  const std::string digest = sha256_hex(std::string(seed_bytes, 8) + std::string(key));
  std::uint64_t out = 0;
  for (int i = 0; i < 16; ++i) {
    const char c = digest[static_cast<std::size_t>(i)];
    const int v = (c >= 'a') ? (c - 'a' + 10) : (c - '0');
    out = (out << 4) | static_cast<std::uint64_t>(v);
  }
  return out;
}

}  // namespace planvl
