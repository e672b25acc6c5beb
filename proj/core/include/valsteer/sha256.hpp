#pragma once
// SHA-256 (FIPS 180-4), used for content hashes in run manifests.

#include <cstdint>
#include <string>
#include <vector>

namespace valsteer {

// Lowercase hex digest of the input bytes.
std::string sha256_hex(const void* data, std::size_t len);
inline std::string sha256_hex(const std::string& s) { return sha256_hex(s.data(), s.size()); }

}  // namespace valsteer
