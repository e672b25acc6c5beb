#pragma once
// Value-conditioned comment generation and the three composition modes:
// one summary over all gated values, one response tied to a requested
// value, or an answer-option distribution aggregated from per-value
// choices.

#include <optional>
#include <string>
#include <vector>

#include "valsteer/bank.hpp"
#include "valsteer/model_backend.hpp"
#include "valsteer/relevance.hpp"
#include "valsteer/steering.hpp"
#include "valsteer/value_pool.hpp"

namespace valsteer {

struct ValueComment {
    std::string value_id;
    std::string text;
    double relevance = 0.0;  // gate score
    struct Provenance {
        EstimatorMethod method = EstimatorMethod::mean_diff;
        std::vector<int> layers;
        std::vector<float> coefficients;
    } provenance;
};

struct CommentSet {
    std::string input_id;
    std::vector<ValueComment> comments;  // gate rank order, one per gated value
};

struct ChoiceDistribution {
    std::vector<std::string> options;
    std::vector<double> probs;

    // probs sum to 1 (1e-9), all non-negative, >= 2 options.
    void validate() const;
};

struct CommentConfig {
    // Placeholders: {value} (display name), {situation}.
    std::string prompt_template = "Please comment on whether {value} supports, opposes, or "
                                  "applies to the following situation:\n{situation}\nAnswer:";
    std::vector<int> layers;  // empty -> each direction's own layers
    TokenPolicy token_policy = TokenPolicy::generated_only;
    int max_tokens = 48;
    std::uint64_t seed = 0;
};

// One steered generation per gated value, in gate rank order.
CommentSet generate_value_comments(ModelBackend& backend, const GateResult& gate,
                                   const std::string& input_text, const ValueTaxonomy& taxonomy,
                                   const DirectionBank& bank, const MagnitudePolicy& policy,
                                   const CommentConfig& config);

struct ComposeConfig {
    // Placeholders: {situation}, {comments} (overton), {value} and
    // {comment} (steerable).
    std::string prompt_template;
    int max_tokens = 64;
    std::uint64_t seed = 0;
};

std::string default_overton_template();
std::string default_steerable_template();

// Prompt the backbone with every comment inlined, labelled by value
// display name. Throws ContextOverflowError (listing comment lengths)
// rather than truncating.
std::string compose_overton(const CommentSet& comments, const std::string& input_text,
                            const ValueTaxonomy& taxonomy, ModelBackend& backbone,
                            const ComposeConfig& config);

// Prompt the backbone with only the target value's comment as reference.
std::string compose_steerable(const CommentSet& comments, const std::string& target_value,
                              const std::string& input_text, const ValueTaxonomy& taxonomy,
                              ModelBackend& backbone, const ComposeConfig& config);

// First option label appearing as a standalone token; nullopt when none
// does. Total: never throws on text content.
std::optional<std::string> extract_choice(const std::string& text,
                                          const std::vector<std::string>& options);

enum class ChoiceWeighting { uniform, relevance };
// What to do with comments whose text parses to no option.
enum class UnparsedPolicy { drop, impute_uniform };

ChoiceWeighting choice_weighting_from_string(const std::string& s);

// Aggregate per-comment choices into a distribution over options.
ChoiceDistribution compose_distributional(const std::vector<CommentSet>& comment_sets,
                                          const std::vector<std::string>& options,
                                          ChoiceWeighting weighting,
                                          UnparsedPolicy unparsed = UnparsedPolicy::drop);

}  // namespace valsteer
