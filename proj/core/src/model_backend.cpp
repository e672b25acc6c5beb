#include "valsteer/model_backend.hpp"

#include <algorithm>
#include <cmath>

#include "valsteer/error.hpp"

namespace valsteer {

const char* to_string(TokenPolicy p) {
    return p == TokenPolicy::generated_only ? "generated_only" : "all_positions";
}

TokenPolicy token_policy_from_string(const std::string& s) {
    if (s == "generated_only") return TokenPolicy::generated_only;
    if (s == "all_positions") return TokenPolicy::all_positions;
    throw ValidationError("unknown token policy \"" + s + "\"");
}

const char* to_string(PositionPolicy p) {
    return p == PositionPolicy::last_token ? "last_token" : "mean_over_tokens";
}

PositionPolicy position_policy_from_string(const std::string& s) {
    if (s == "last_token") return PositionPolicy::last_token;
    if (s == "mean_over_tokens") return PositionPolicy::mean_over_tokens;
    throw ValidationError("unknown position policy \"" + s + "\"");
}

void SteeringPlan::validate(int hidden_size) const {
    std::vector<int> seen;
    for (const PlanEntry& e : entries) {
        if (std::find(seen.begin(), seen.end(), e.layer) != seen.end())
            throw ValidationError("steering plan repeats layer " + std::to_string(e.layer));
        seen.push_back(e.layer);
        if (!std::isfinite(e.coefficient))
            throw ValidationError("non-finite steering coefficient at layer " +
                                  std::to_string(e.layer));
        if (int(e.direction.size()) != hidden_size)
            throw ValidationError("direction at layer " + std::to_string(e.layer) + " has length " +
                                  std::to_string(e.direction.size()) + ", model hidden size is " +
                                  std::to_string(hidden_size));
        if (!all_finite(e.direction))
            throw ValidationError("non-finite direction at layer " + std::to_string(e.layer));
    }
}

std::vector<ActivationRecord> capture_activations(ModelBackend& backend,
                                                  const std::vector<std::string>& texts,
                                                  const std::vector<int>& layers,
                                                  PositionPolicy policy) {
    if (texts.empty()) throw ValidationError("capture_activations: no texts");
    std::vector<ActivationRecord> out;
    out.reserve(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
        ActivationRecord rec = backend.capture(texts[i], layers, policy);
        rec.text_id = std::to_string(i);
        out.push_back(std::move(rec));
    }
    return out;
}

std::string generate_with_hooks(ModelBackend& backend, const std::string& prompt,
                                const SteeringPlan* plan, int max_tokens, std::uint64_t seed) {
    if (plan) plan->validate(backend.hidden_size());
    return backend.generate(prompt, max_tokens, plan, seed);
}

std::vector<int> default_steering_layers(int num_layers) {
    if (num_layers <= 0) throw ValidationError("model has no layers");
    std::vector<int> out;
    if (num_layers > 10) {
        for (int l = 10; l <= std::min(25, num_layers - 1); ++l) out.push_back(l);
        return out;
    }
    // Mid band: 3/8ths to 5/8ths of the stack.
    int lo = int(std::lround(double(num_layers) * 3.0 / 8.0));
    int hi = int(std::lround(double(num_layers) * 5.0 / 8.0));
    lo = std::clamp(lo, 0, num_layers - 1);
    hi = std::clamp(hi, lo, num_layers - 1);
    for (int l = lo; l <= hi; ++l) out.push_back(l);
    return out;
}

}  // namespace valsteer
