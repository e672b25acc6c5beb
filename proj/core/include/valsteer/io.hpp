#pragma once
// File and serialization helpers: whole-file reads, JSONL, base64 for
// the binary float32 encoding of the direction bank.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "valsteer/vecmath.hpp"

namespace valsteer {

using json = nlohmann::json;

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

// One JSON document per non-empty line. Parse errors carry the 1-based
// line number.
std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

// Little-endian float32 blob <-> vector, independent of host byte order.
std::vector<std::uint8_t> floats_to_le_bytes(const Vec& v);
Vec floats_from_le_bytes(const std::vector<std::uint8_t>& bytes);

}  // namespace valsteer
