#pragma once
// Direction bank file (.vdb): every estimated direction (and probe, when
// the estimator was probe-based) keyed by value id, with model shape
// recorded so a bank cannot silently drive the wrong backend.
//
// Vectors are float32, serialized either as decimal text arrays or as
// base64 little-endian binary blobs; both round-trip bit-exactly.

#include <filesystem>
#include <map>
#include <string>

#include "valsteer/direction.hpp"

namespace valsteer {

enum class BankEncoding { text, binary };

struct BankEntry {
    ValueDirection direction;
    std::map<int, ProbeModel> probes;  // empty unless method == probe
};

struct DirectionBank {
    int model_layers = 0;
    int model_hidden = 0;
    std::map<std::string, BankEntry> entries;

    bool contains(const std::string& value_id) const { return entries.count(value_id) != 0; }
    const BankEntry& at(const std::string& value_id) const;
};

std::string bank_to_json_text(const DirectionBank& bank, BankEncoding encoding);
DirectionBank bank_from_json_text(const std::string& text, const std::string& origin);

void save_bank(const std::filesystem::path& path, const DirectionBank& bank,
               BankEncoding encoding = BankEncoding::text);
DirectionBank load_bank(const std::filesystem::path& path);

}  // namespace valsteer
