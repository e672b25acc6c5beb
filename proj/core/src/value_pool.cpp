#include "valsteer/value_pool.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "valsteer/io.hpp"

namespace valsteer {

const char* to_string(ValueCategory c) {
    switch (c) {
        case ValueCategory::schwartz: return "schwartz";
        case ValueCategory::cultural: return "cultural";
        case ValueCategory::moral_theory: return "moral_theory";
        case ValueCategory::ai_safety: return "ai_safety";
        case ValueCategory::non_weird: return "non_weird";
    }
    return "?";
}

ValueCategory value_category_from_string(const std::string& s) {
    if (s == "schwartz") return ValueCategory::schwartz;
    if (s == "cultural") return ValueCategory::cultural;
    if (s == "moral_theory") return ValueCategory::moral_theory;
    if (s == "ai_safety") return ValueCategory::ai_safety;
    if (s == "non_weird") return ValueCategory::non_weird;
    throw ValidationError("unknown value category \"" + s + "\"");
}

namespace {

bool is_snake_id(const std::string& id) {
    if (id.empty()) return false;
    for (char c : id) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
        if (!ok) return false;
    }
    return id.front() != '_';
}

}  // namespace

ValueTaxonomy::ValueTaxonomy(std::string version, std::vector<ValueSpec> values,
                             std::map<ValueCategory, int> expected_counts)
    : version_(std::move(version)), values_(std::move(values)) {
    for (std::size_t i = 0; i < values_.size(); ++i) {
        const ValueSpec& v = values_[i];
        if (!is_snake_id(v.id))
            throw ValidationError("value id \"" + v.id + "\" is not a snake_case identifier");
        if (v.description.empty())
            throw ValidationError("value \"" + v.id + "\" has an empty description");
        if (!by_id_.emplace(v.id, i).second)
            throw ValidationError("duplicate value id \"" + v.id + "\"");
    }
    if (!expected_counts.empty()) {
        auto actual = category_counts();
        for (const auto& [cat, want] : expected_counts) {
            int have = actual.count(cat) ? actual.at(cat) : 0;
            if (have != want)
                throw ValidationError(std::string("category \"") + to_string(cat) +
                                      "\" has " + std::to_string(have) + " values, manifest declares " +
                                      std::to_string(want));
        }
        for (const auto& [cat, have] : actual) {
            if (!expected_counts.count(cat))
                throw ValidationError(std::string("category \"") + to_string(cat) +
                                      "\" present but not declared in expected_counts");
        }
    }
}

const ValueSpec& ValueTaxonomy::at(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw ValidationError("unknown value id \"" + id + "\"");
    return values_[it->second];
}

std::map<ValueCategory, int> ValueTaxonomy::category_counts() const {
    std::map<ValueCategory, int> counts;
    for (const ValueSpec& v : values_) ++counts[v.category];
    return counts;
}

ValueTaxonomy taxonomy_from_json_text(const std::string& text, const std::string& origin) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(origin + ": manifest parse failure: " + e.what());
    }
    if (!doc.is_object() || !doc.contains("version") || !doc.contains("values"))
        throw ValidationError(origin + ": manifest needs top-level version and values");

    std::map<ValueCategory, int> expected;
    if (doc.contains("expected_counts")) {
        for (const auto& [key, val] : doc.at("expected_counts").items())
            expected[value_category_from_string(key)] = val.get<int>();
    }

    std::vector<ValueSpec> values;
    for (const json& jv : doc.at("values")) {
        ValueSpec v;
        try {
            v.id = jv.at("id").get<std::string>();
            v.display_name = jv.at("display_name").get<std::string>();
            v.category = value_category_from_string(jv.at("category").get<std::string>());
            v.description = jv.at("description").get<std::string>();
        } catch (const json::exception& e) {
            throw ValidationError(origin + ": bad value entry: " + e.what());
        }
        values.push_back(std::move(v));
    }
    return ValueTaxonomy(doc.at("version").get<std::string>(), std::move(values), expected);
}

ValueTaxonomy load_taxonomy(const std::filesystem::path& path) {
    return taxonomy_from_json_text(read_file(path), path.string());
}

std::string taxonomy_to_json_text(const ValueTaxonomy& taxonomy) {
    json counts = json::object();
    for (const auto& [cat, n] : taxonomy.category_counts()) counts[to_string(cat)] = n;
    json values = json::array();
    for (const ValueSpec& v : taxonomy.values())
        values.push_back({{"id", v.id},
                          {"display_name", v.display_name},
                          {"category", to_string(v.category)},
                          {"description", v.description}});
    json doc = {{"version", taxonomy.version()}, {"expected_counts", counts}, {"values", values}};
    return doc.dump(2) + "\n";
}

std::map<std::string, ContrastiveDataset> load_contrastive_dataset(
    const std::filesystem::path& path, const ValueTaxonomy& taxonomy) {
    std::map<std::string, ContrastiveDataset> out;
    std::set<std::pair<std::string, std::string>> seen;
    std::size_t lineno = 0;
    for (const json& rec : read_jsonl(path)) {
        ++lineno;
        auto where = [&] { return path.string() + " record " + std::to_string(lineno); };
        ContrastivePair p;
        try {
            p.value_id = rec.at("value_id").get<std::string>();
            p.scenario_id = rec.at("scenario_id").get<std::string>();
            p.positive = rec.at("positive").get<std::string>();
            p.negative = rec.at("negative").get<std::string>();
        } catch (const json::exception& e) {
            throw ValidationError(where() + ": " + e.what());
        }
        if (!taxonomy.contains(p.value_id))
            throw ValidationError(where() + ": value_id \"" + p.value_id + "\" not in taxonomy");
        if (p.positive.empty() || p.negative.empty())
            throw ValidationError(where() + ": empty positive/negative text");
        if (p.positive == p.negative)
            throw ValidationError(where() + ": positive and negative texts are identical");
        if (!seen.emplace(p.value_id, p.scenario_id).second)
            throw ValidationError(where() + ": duplicate (value_id, scenario_id) = (" +
                                  p.value_id + ", " + p.scenario_id + ")");
        ContrastiveDataset& ds = out[p.value_id];
        ds.value_id = p.value_id;
        ds.pairs.push_back(std::move(p));
    }
    return out;
}

void save_contrastive_dataset(const std::filesystem::path& path,
                              const std::map<std::string, ContrastiveDataset>& datasets) {
    std::vector<json> records;
    for (const auto& [id, ds] : datasets)
        for (const ContrastivePair& p : ds.pairs)
            records.push_back({{"value_id", p.value_id},
                               {"scenario_id", p.scenario_id},
                               {"positive", p.positive},
                               {"negative", p.negative}});
    write_jsonl(path, records);
}

std::pair<ContrastiveDataset, ContrastiveDataset> split_pairs(const ContrastiveDataset& ds,
                                                              double fraction,
                                                              std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ValidationError("split fraction must lie in (0,1)");
    const std::size_t n = ds.pairs.size();
    if (n < 2)
        throw ValidationError("dataset \"" + ds.value_id +
                              "\" too small to split (" + std::to_string(n) + " pairs)");

    // Hand-rolled Fisher-Yates: std::shuffle and uniform_int_distribution
    // are implementation-defined, a fixed seed must mean a fixed split on
    // every platform.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) {
        std::size_t j = std::size_t(rng() % (i + 1));
        std::swap(order[i], order[j]);
    }

    std::size_t n_train = std::size_t(std::llround(fraction * double(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

    ContrastiveDataset train{ds.value_id, {}, seed};
    ContrastiveDataset val{ds.value_id, {}, seed};
    for (std::size_t i = 0; i < n; ++i)
        (i < n_train ? train : val).pairs.push_back(ds.pairs[order[i]]);
    return {std::move(train), std::move(val)};
}

}  // namespace valsteer
