#pragma once
// Value taxonomy and context-controlled contrastive datasets.
//
// The taxonomy is a flat pool of named values grouped into five
// categories. Contrastive data pairs a value-affirming and a
// value-rejecting rendering of the same scenario; the pairing is what
// lets direction estimators cancel shared context.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "valsteer/error.hpp"

namespace valsteer {

enum class ValueCategory { schwartz, cultural, moral_theory, ai_safety, non_weird };

const char* to_string(ValueCategory c);
ValueCategory value_category_from_string(const std::string& s);

struct ValueSpec {
    std::string id;            // lowercase snake identifier, unique in taxonomy
    std::string display_name;
    ValueCategory category;
    std::string description;   // used for relevance scoring and coverage checks
};

class ValueTaxonomy {
public:
    ValueTaxonomy() = default;
    ValueTaxonomy(std::string version, std::vector<ValueSpec> values,
                  std::map<ValueCategory, int> expected_counts);

    const std::string& version() const { return version_; }
    const std::vector<ValueSpec>& values() const { return values_; }
    std::size_t size() const { return values_.size(); }

    bool contains(const std::string& id) const { return by_id_.count(id) != 0; }
    const ValueSpec& at(const std::string& id) const;

    std::map<ValueCategory, int> category_counts() const;

private:
    std::string version_;
    std::vector<ValueSpec> values_;
    std::map<std::string, std::size_t> by_id_;
};

struct ContrastivePair {
    std::string value_id;
    std::string scenario_id;
    std::string positive;
    std::string negative;
};

struct ContrastiveDataset {
    std::string value_id;
    std::vector<ContrastivePair> pairs;
    std::uint64_t split_seed = 0;
};

// Parse and validate a taxonomy manifest (JSON document with `version`,
// `expected_counts`, `values`). Violations name the offending entry.
ValueTaxonomy load_taxonomy(const std::filesystem::path& path);
ValueTaxonomy taxonomy_from_json_text(const std::string& text, const std::string& origin);

std::string taxonomy_to_json_text(const ValueTaxonomy& taxonomy);

// Load a JSONL corpus of {value_id, scenario_id, positive, negative}
// records, grouped by value. Every value_id must resolve in the taxonomy.
std::map<std::string, ContrastiveDataset> load_contrastive_dataset(
    const std::filesystem::path& path, const ValueTaxonomy& taxonomy);

void save_contrastive_dataset(const std::filesystem::path& path,
                              const std::map<std::string, ContrastiveDataset>& datasets);

// Deterministic whole-pair split. `fraction` is the train share in (0,1);
// both halves come back non-empty or this throws.
std::pair<ContrastiveDataset, ContrastiveDataset> split_pairs(const ContrastiveDataset& ds,
                                                              double fraction,
                                                              std::uint64_t seed);

}  // namespace valsteer
