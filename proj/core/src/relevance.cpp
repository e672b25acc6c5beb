#include "valsteer/relevance.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace valsteer {

namespace {

std::set<std::string> token_set(const std::string& text) {
    std::set<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(char(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            out.insert(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.insert(cur);
    return out;
}

std::string replace_all(std::string text, const std::string& needle, const std::string& value) {
    std::size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        text.replace(pos, needle.size(), value);
        pos += value.size();
    }
    return text;
}

}  // namespace

double LexicalOverlapScorer::score(const std::string& input_text,
                                   const std::string& value_description) {
    const auto a = token_set(input_text);
    const auto b = token_set(value_description);
    if (a.empty() || b.empty()) return 0.0;
    std::size_t inter = 0;
    for (const std::string& t : a) inter += b.count(t);
    const std::size_t uni = a.size() + b.size() - inter;
    return double(inter) / double(uni);
}

EntailmentScorer::EntailmentScorer(const Endpoint& endpoint, std::string hypothesis_template)
    : client_(std::make_unique<LineClient>(endpoint)), template_(std::move(hypothesis_template)) {}

std::string EntailmentScorer::render_hypothesis(const std::string& value_description) const {
    return replace_all(replace_all(template_, "{description}", value_description),
                       "{display_name}", value_description);
}

double EntailmentScorer::score(const std::string& input_text,
                               const std::string& value_description) {
    nlohmann::json reply = client_->request(
        {{"premise", input_text}, {"hypothesis", render_hypothesis(value_description)}});
    if (!reply.contains("entailment") || !reply.at("entailment").is_number())
        throw ProtocolError("scorer response lacks numeric \"entailment\" field");
    const double p = reply.at("entailment").get<double>();
    return std::clamp(p, 0.0, 1.0);
}

GateResult gate_top_k(const std::string& input_text, const std::string& input_id,
                      const ValueTaxonomy& taxonomy, RelevanceScorer& scorer, int k) {
    if (k < 1) throw ValidationError("k must be >= 1");
    if (taxonomy.size() == 0) throw ValidationError("taxonomy is empty");

    GateResult result;
    result.input_id = input_id;
    result.k = k;
    for (const ValueSpec& v : taxonomy.values()) {
        double s;
        try {
            s = scorer.score(input_text, v.description);
        } catch (const std::exception& e) {
            throw Error("scoring value \"" + v.id + "\" failed: " + e.what());
        }
        result.scores[v.id] = s;
    }

    std::vector<std::pair<std::string, double>> ranked(result.scores.begin(), result.scores.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    ranked.resize(std::min<std::size_t>(std::size_t(k), ranked.size()));
    result.ranked = std::move(ranked);
    return result;
}

void force_include(GateResult& gate, const std::string& value_id) {
    for (const auto& [id, _] : gate.ranked)
        if (id == value_id) return;
    auto it = gate.scores.find(value_id);
    if (it == gate.scores.end())
        throw ValidationError("force_include: \"" + value_id + "\" was never scored");
    if (int(gate.ranked.size()) >= gate.k && !gate.ranked.empty()) gate.ranked.pop_back();
    gate.ranked.emplace_back(value_id, it->second);
    std::sort(gate.ranked.begin(), gate.ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
}

SelectionStats selection_statistics(const std::vector<GateResult>& results,
                                    const ValueTaxonomy& taxonomy) {
    if (results.empty()) throw ValidationError("selection_statistics: no gate results");
    const int k = results.front().k;
    for (const GateResult& r : results)
        if (r.k != k)
            throw ValidationError("selection_statistics: mixed k values (" + std::to_string(k) +
                                  " vs " + std::to_string(r.k) + ")");

    SelectionStats stats;
    stats.k = k;
    stats.num_results = results.size();
    const double n = double(results.size());
    for (const ValueSpec& v : taxonomy.values()) {
        ValueSelectionStats s;
        double score_sum = 0.0;
        for (const GateResult& r : results) {
            if (!r.ranked.empty() && r.ranked.front().first == v.id) s.top1_pct += 1.0;
            for (const auto& [id, _] : r.ranked)
                if (id == v.id) {
                    s.topk_pct += 1.0;
                    break;
                }
            auto it = r.scores.find(v.id);
            if (it != r.scores.end()) score_sum += it->second;
        }
        s.top1_pct = 100.0 * s.top1_pct / n;
        s.topk_pct = 100.0 * s.topk_pct / n;
        s.avg_score = score_sum / n;
        stats.per_value[v.id] = s;
    }
    return stats;
}

}  // namespace valsteer
