#pragma once
// Value relevance gating: score every value in the taxonomy against an
// input, keep the Top-k, and summarize selection behaviour over a corpus.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "valsteer/line_client.hpp"
#include "valsteer/value_pool.hpp"

namespace valsteer {

inline constexpr int kDefaultTopK = 6;

class RelevanceScorer {
public:
    virtual ~RelevanceScorer() = default;
    // Relevance of `value_description` to `input_text`, in [0,1].
    // Must be deterministic for fixed inputs and never refuse.
    virtual double score(const std::string& input_text, const std::string& value_description) = 0;
    // Whether one instance may be shared across threads.
    virtual bool share_safe() const = 0;
};

// Offline stand-in: Jaccard overlap of lowercase alphanumeric token sets.
class LexicalOverlapScorer final : public RelevanceScorer {
public:
    double score(const std::string& input_text, const std::string& value_description) override;
    bool share_safe() const override { return true; }
};

// Entailment scorer backed by a line-protocol service. Each call sends
// {premise, hypothesis} and expects {entailment}. The hypothesis comes
// from a template with a {description} (or {display_name}) placeholder.
class EntailmentScorer final : public RelevanceScorer {
public:
    static constexpr const char* kDefaultHypothesisTemplate =
        "This situation involves the value of {description}.";

    EntailmentScorer(const Endpoint& endpoint,
                     std::string hypothesis_template = kDefaultHypothesisTemplate);

    double score(const std::string& input_text, const std::string& value_description) override;
    bool share_safe() const override { return false; }  // one socket, one caller

    std::string render_hypothesis(const std::string& value_description) const;

private:
    std::unique_ptr<LineClient> client_;
    std::string template_;
};

struct GateResult {
    std::string input_id;
    int k = kDefaultTopK;
    // Top-min(k,|V|) values, score non-increasing, ties by ascending id.
    std::vector<std::pair<std::string, double>> ranked;
    // The exhaustive scoring pass behind the ranking (every taxonomy value).
    std::map<std::string, double> scores;
};

GateResult gate_top_k(const std::string& input_text, const std::string& input_id,
                      const ValueTaxonomy& taxonomy, RelevanceScorer& scorer,
                      int k = kDefaultTopK);

// Guarantee `value_id` appears in the ranking, evicting the weakest other
// entry when the ranking is full. Ordering invariants are restored.
void force_include(GateResult& gate, const std::string& value_id);

struct ValueSelectionStats {
    double top1_pct = 0.0;   // share of inputs ranking the value first
    double topk_pct = 0.0;   // share of inputs whose Top-k contains it
    double avg_score = 0.0;  // mean raw score over all inputs
};

struct SelectionStats {
    int k = 0;
    std::size_t num_results = 0;
    std::map<std::string, ValueSelectionStats> per_value;
};

SelectionStats selection_statistics(const std::vector<GateResult>& results,
                                    const ValueTaxonomy& taxonomy);

}  // namespace valsteer
