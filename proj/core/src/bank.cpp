#include "valsteer/bank.hpp"

#include <cmath>

#include "valsteer/error.hpp"
#include "valsteer/io.hpp"

namespace valsteer {

namespace {

constexpr const char* kFormatTag = "vdb-1";

json encode_vec(const Vec& v, BankEncoding encoding) {
    if (encoding == BankEncoding::binary) return base64_encode(floats_to_le_bytes(v));
    // Round-trip safety: float32 -> double is exact, and the JSON writer
    // emits shortest-round-trip decimals for doubles.
    json arr = json::array();
    for (float f : v) arr.push_back(double(f));
    return arr;
}

Vec decode_vec(const json& j, const std::string& origin) {
    if (j.is_string()) return floats_from_le_bytes(base64_decode(j.get<std::string>()));
    if (!j.is_array()) throw ValidationError(origin + ": vector must be array or base64 string");
    Vec out;
    out.reserve(j.size());
    for (const json& x : j) out.push_back(float(x.get<double>()));
    return out;
}

}  // namespace

const BankEntry& DirectionBank::at(const std::string& value_id) const {
    auto it = entries.find(value_id);
    if (it == entries.end())
        throw ValidationError("direction bank has no entry for value \"" + value_id + "\"");
    return it->second;
}

std::string bank_to_json_text(const DirectionBank& bank, BankEncoding encoding) {
    json jentries = json::array();
    for (const auto& [value_id, entry] : bank.entries) {
        const ValueDirection& d = entry.direction;
        json layers = json::object();
        for (const auto& [l, v] : d.layers) layers[std::to_string(l)] = encode_vec(v, encoding);
        json je = {{"value_id", value_id},
                   {"method", to_string(d.method)},
                   {"normalized", d.normalized},
                   {"layers", layers},
                   {"metadata",
                    {{"train_pairs", d.metadata.train_pairs}, {"seed", d.metadata.seed}}}};
        if (!entry.probes.empty()) {
            json probes = json::object();
            for (const auto& [l, p] : entry.probes) {
                json jp = {{"w", encode_vec(p.w, encoding)},
                           {"bias", double(p.bias)},
                           {"seed", p.seed}};
                if (!std::isnan(p.val_accuracy)) jp["val_accuracy"] = p.val_accuracy;
                probes[std::to_string(l)] = std::move(jp);
            }
            je["probes"] = std::move(probes);
        }
        jentries.push_back(std::move(je));
    }
    json doc = {{"format", kFormatTag},
                {"encoding", encoding == BankEncoding::binary ? "binary" : "text"},
                {"model", {{"layers", bank.model_layers}, {"hidden", bank.model_hidden}}},
                {"entries", jentries}};
    return doc.dump(2) + "\n";
}

DirectionBank bank_from_json_text(const std::string& text, const std::string& origin) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(origin + ": bank parse failure: " + e.what());
    }
    if (!doc.is_object() || doc.value("format", "") != kFormatTag)
        throw ValidationError(origin + ": not a " + std::string(kFormatTag) + " direction bank");

    DirectionBank bank;
    bank.model_layers = doc.at("model").at("layers").get<int>();
    bank.model_hidden = doc.at("model").at("hidden").get<int>();
    for (const json& je : doc.at("entries")) {
        BankEntry entry;
        ValueDirection& d = entry.direction;
        d.value_id = je.at("value_id").get<std::string>();
        d.method = estimator_method_from_string(je.at("method").get<std::string>());
        d.normalized = je.at("normalized").get<bool>();
        for (const auto& [key, jv] : je.at("layers").items()) {
            const int layer = std::stoi(key);
            Vec v = decode_vec(jv, origin);
            if (int(v.size()) != bank.model_hidden)
                throw ValidationError(origin + ": value \"" + d.value_id + "\" layer " + key +
                                      " has length " + std::to_string(v.size()) +
                                      ", bank declares hidden size " +
                                      std::to_string(bank.model_hidden));
            if (layer < 0 || layer >= bank.model_layers)
                throw ValidationError(origin + ": value \"" + d.value_id + "\" layer " + key +
                                      " outside [0, " + std::to_string(bank.model_layers) + ")");
            d.layers[layer] = std::move(v);
        }
        if (je.contains("metadata")) {
            d.metadata.train_pairs = je.at("metadata").value("train_pairs", 0);
            d.metadata.seed = je.at("metadata").value("seed", std::uint64_t(0));
        }
        if (je.contains("probes")) {
            for (const auto& [key, jp] : je.at("probes").items()) {
                ProbeModel p;
                p.w = decode_vec(jp.at("w"), origin);
                p.bias = float(jp.at("bias").get<double>());
                p.seed = jp.value("seed", std::uint64_t(0));
                if (jp.contains("val_accuracy")) p.val_accuracy = jp.at("val_accuracy").get<double>();
                entry.probes[std::stoi(key)] = std::move(p);
            }
        }
        bank.entries[d.value_id] = std::move(entry);
    }
    return bank;
}

void save_bank(const std::filesystem::path& path, const DirectionBank& bank,
               BankEncoding encoding) {
    write_file(path, bank_to_json_text(bank, encoding));
}

DirectionBank load_bank(const std::filesystem::path& path) {
    return bank_from_json_text(read_file(path), path.string());
}

}  // namespace valsteer
