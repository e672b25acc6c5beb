#include "valsteer/pluralism.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "valsteer/error.hpp"

namespace valsteer {

namespace {

std::string replace_all(std::string text, const std::string& needle, const std::string& value) {
    std::size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        text.replace(pos, needle.size(), value);
        pos += value.size();
    }
    return text;
}

// Context-budget guard shared by the compose modes. Reports per-comment
// token counts so oversized inputs are actionable.
void check_budget(ModelBackend& backbone, const std::string& prompt, int max_tokens,
                  const CommentSet& comments) {
    const int need = int(backbone.tokenize(prompt).size()) + max_tokens;
    if (need <= backbone.max_context()) return;
    std::string detail;
    for (const ValueComment& c : comments.comments) {
        if (!detail.empty()) detail += ", ";
        detail += c.value_id + "=" + std::to_string(backbone.tokenize(c.text).size());
    }
    throw ContextOverflowError("compose prompt needs " + std::to_string(need) +
                               " tokens, backbone context is " +
                               std::to_string(backbone.max_context()) +
                               "; comment token counts: " + detail);
}

}  // namespace

void ChoiceDistribution::validate() const {
    if (options.size() < 2) throw ValidationError("choice distribution needs >= 2 options");
    if (probs.size() != options.size())
        throw ValidationError("choice distribution has " + std::to_string(probs.size()) +
                              " probabilities for " + std::to_string(options.size()) + " options");
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) throw ValidationError("choice distribution has a negative probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw ValidationError("choice probabilities sum to " + std::to_string(sum));
}

CommentSet generate_value_comments(ModelBackend& backend, const GateResult& gate,
                                   const std::string& input_text, const ValueTaxonomy& taxonomy,
                                   const DirectionBank& bank, const MagnitudePolicy& policy,
                                   const CommentConfig& config) {
    CommentSet set;
    set.input_id = gate.input_id;
    for (const auto& [value_id, score] : gate.ranked) {
        if (!bank.contains(value_id))
            throw ValidationError("no direction in bank for gated value \"" + value_id + "\"");
        const BankEntry& entry = bank.at(value_id);

        std::vector<int> layers = config.layers;
        if (layers.empty()) layers = entry.direction.layer_indices();

        const std::string prompt =
            replace_all(replace_all(config.prompt_template, "{value}",
                                    taxonomy.at(value_id).display_name),
                        "{situation}", input_text);

        const ActivationRecord* context = nullptr;
        ActivationRecord captured;
        if (policy.kind == MagnitudePolicy::Kind::calibrated) {
            captured = backend.capture(prompt, layers, PositionPolicy::last_token);
            context = &captured;
        }
        SteeringPlan plan = build_plan(entry, policy, layers, context, config.token_policy);

        ValueComment comment;
        comment.value_id = value_id;
        comment.relevance = score;
        comment.text = backend.generate(prompt, config.max_tokens, &plan, config.seed);
        comment.provenance.method = entry.direction.method;
        comment.provenance.layers = layers;
        for (const PlanEntry& pe : plan.entries)
            comment.provenance.coefficients.push_back(pe.coefficient);
        if (comment.text.empty())
            throw Error("backend produced an empty comment for \"" + value_id + "\"");
        set.comments.push_back(std::move(comment));
    }
    return set;
}

std::string default_overton_template() {
    return "Situation: {situation}\n"
           "Different value perspectives on this situation:\n"
           "{comments}\n"
           "Summarize one response that reflects all of these perspectives.\nResponse:";
}

std::string default_steerable_template() {
    return "Situation: {situation}\n"
           "Reference comment from the {value} perspective: {comment}\n"
           "Respond to the situation using the reference comment as guidance.\nResponse:";
}

std::string compose_overton(const CommentSet& comments, const std::string& input_text,
                            const ValueTaxonomy& taxonomy, ModelBackend& backbone,
                            const ComposeConfig& config) {
    if (comments.comments.empty()) throw ValidationError("compose_overton: no comments");
    std::string inlined;
    for (const ValueComment& c : comments.comments) {
        inlined += "[" + taxonomy.at(c.value_id).display_name + "] ";
        inlined += c.text;
        inlined += '\n';
    }
    if (!inlined.empty() && inlined.back() == '\n') inlined.pop_back();

    const std::string tmpl =
        config.prompt_template.empty() ? default_overton_template() : config.prompt_template;
    const std::string prompt =
        replace_all(replace_all(tmpl, "{situation}", input_text), "{comments}", inlined);
    check_budget(backbone, prompt, config.max_tokens, comments);
    return backbone.generate(prompt, config.max_tokens, nullptr, config.seed);
}

std::string compose_steerable(const CommentSet& comments, const std::string& target_value,
                              const std::string& input_text, const ValueTaxonomy& taxonomy,
                              ModelBackend& backbone, const ComposeConfig& config) {
    const ValueComment* target = nullptr;
    for (const ValueComment& c : comments.comments)
        if (c.value_id == target_value) {
            target = &c;
            break;
        }
    if (!target)
        throw ValidationError("target value \"" + target_value +
                              "\" is not among the gated comments; re-gate with forced "
                              "inclusion to steer toward it");

    const std::string tmpl =
        config.prompt_template.empty() ? default_steerable_template() : config.prompt_template;
    std::string prompt = replace_all(tmpl, "{situation}", input_text);
    prompt = replace_all(prompt, "{value}", taxonomy.at(target_value).display_name);
    prompt = replace_all(prompt, "{comment}", target->text);
    check_budget(backbone, prompt, config.max_tokens, comments);
    return backbone.generate(prompt, config.max_tokens, nullptr, config.seed);
}

std::optional<std::string> extract_choice(const std::string& text,
                                          const std::vector<std::string>& options) {
    if (options.empty()) throw ValidationError("extract_choice: no options");
    auto alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };

    std::size_t best_pos = std::string::npos;
    std::string best;
    for (const std::string& opt : options) {
        if (opt.empty()) throw ValidationError("extract_choice: empty option label");
        std::size_t pos = 0;
        while ((pos = text.find(opt, pos)) != std::string::npos) {
            const bool left_ok = pos == 0 || !alnum(text[pos - 1]);
            const std::size_t end = pos + opt.size();
            const bool right_ok = end >= text.size() || !alnum(text[end]);
            if (left_ok && right_ok) {
                if (pos < best_pos) {
                    best_pos = pos;
                    best = opt;
                }
                break;
            }
            ++pos;
        }
    }
    if (best_pos == std::string::npos) return std::nullopt;
    return best;
}

ChoiceWeighting choice_weighting_from_string(const std::string& s) {
    if (s == "uniform") return ChoiceWeighting::uniform;
    if (s == "relevance") return ChoiceWeighting::relevance;
    throw ValidationError("unknown weighting \"" + s + "\"");
}

ChoiceDistribution compose_distributional(const std::vector<CommentSet>& comment_sets,
                                          const std::vector<std::string>& options,
                                          ChoiceWeighting weighting, UnparsedPolicy unparsed) {
    if (options.size() < 2) throw ValidationError("distributional mode needs >= 2 options");

    std::vector<double> mass(options.size(), 0.0);
    double total = 0.0;
    std::size_t parsed = 0, considered = 0;
    for (const CommentSet& set : comment_sets) {
        for (const ValueComment& c : set.comments) {
            ++considered;
            const auto choice = extract_choice(c.text, options);
            const double w = weighting == ChoiceWeighting::relevance
                                 ? std::max(c.relevance, 0.0)
                                 : 1.0;
            if (!choice) {
                if (unparsed == UnparsedPolicy::impute_uniform) {
                    for (double& m : mass) m += w / double(options.size());
                    total += w;
                }
                continue;
            }
            ++parsed;
            const auto it = std::find(options.begin(), options.end(), *choice);
            mass[std::size_t(it - options.begin())] += w;
            total += w;
        }
    }
    if (parsed == 0 && unparsed == UnparsedPolicy::drop)
        throw ValidationError("no comment produced a parseable choice (" +
                              std::to_string(considered) + " comments examined)");
    if (total <= 0.0)
        throw ValidationError("all parsed choices carry zero weight; cannot normalize");

    ChoiceDistribution dist;
    dist.options = options;
    dist.probs.resize(options.size());
    for (std::size_t i = 0; i < mass.size(); ++i) dist.probs[i] = mass[i] / total;
    dist.validate();
    return dist;
}

}  // namespace valsteer
