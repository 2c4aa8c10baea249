#pragma once

#include <openssl/evp.h>

#include <array>
#include <string>
#include <string_view>

#include "iacforge/errors.hpp"

namespace iacforge {

/// Project-wide pinned digest algorithm. The tag is what bundle manifests
/// and blackboard entries carry next to every hex digest.
inline constexpr const char* kDigestAlgorithm = "sha256";

inline std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::io_error, "sha256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

}  // namespace iacforge
