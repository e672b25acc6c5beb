#include "valsteer/external_backend.hpp"

#include "valsteer/error.hpp"

namespace valsteer {

ExternalBackend::ExternalBackend(const Endpoint& endpoint, const Info& info)
    : client_(std::make_unique<LineClient>(endpoint)), info_(info) {
    if (info_.layers <= 0 || info_.hidden <= 0 || info_.max_context <= 0)
        throw ValidationError("external backend needs positive layers/hidden/max_context");
}

std::vector<int> ExternalBackend::tokenize(std::string_view text) const {
    if (text.empty()) throw ValidationError("cannot tokenize an empty string");
    std::vector<int> out;
    bool in_word = false;
    for (char c : text) {
        const bool ws = (c == ' ' || c == '\n' || c == '\t' || c == '\r');
        if (!ws && !in_word) out.push_back(int(out.size()));
        in_word = !ws;
    }
    return out;
}

nlohmann::json ExternalBackend::encode_request(const std::string& prompt, int max_tokens,
                                               const SteeringPlan* plan, std::uint64_t seed) {
    nlohmann::json edits = nlohmann::json::array();
    if (plan) {
        for (const PlanEntry& e : plan->entries)
            edits.push_back({{"layer", e.layer},
                             {"vector", e.direction},
                             {"coefficient", e.coefficient}});
    }
    return {{"prompt", prompt},
            {"max_tokens", max_tokens},
            {"seed", seed},
            {"layer_edits", edits},
            {"token_policy", to_string(plan ? plan->token_policy : TokenPolicy::generated_only)}};
}

std::string ExternalBackend::generate(const std::string& prompt, int max_tokens,
                                      const SteeringPlan* plan, std::uint64_t seed) {
    if (plan) plan->validate(info_.hidden);
    nlohmann::json reply = client_->request(encode_request(prompt, max_tokens, plan, seed));
    if (!reply.contains("text") || !reply.at("text").is_string())
        throw ProtocolError("backend response lacks string \"text\" field");
    return reply.at("text").get<std::string>();
}

ActivationRecord ExternalBackend::capture(const std::string&, const std::vector<int>&,
                                          PositionPolicy) {
    throw Error("external backend does not expose activation capture; estimate directions "
                "against the service directly or use the reference model");
}

}  // namespace valsteer
