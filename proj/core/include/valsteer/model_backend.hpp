#pragma once
// Decoder-model abstraction: tokenization, steered/unsteered generation,
// and per-layer hidden-state capture.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "valsteer/steering_plan.hpp"
#include "valsteer/vecmath.hpp"

namespace valsteer {

enum class PositionPolicy { last_token, mean_over_tokens };

const char* to_string(PositionPolicy p);
PositionPolicy position_policy_from_string(const std::string& s);

struct ActivationRecord {
    std::string text_id;
    std::map<int, Vec> layers;  // layer index -> vector of length hidden_size
    PositionPolicy position_policy = PositionPolicy::last_token;
};

class ModelBackend {
public:
    virtual ~ModelBackend() = default;

    virtual int num_layers() const = 0;
    virtual int hidden_size() const = 0;
    // Longest prompt+generation the model accepts, in tokens.
    virtual int max_context() const = 0;

    virtual std::vector<int> tokenize(std::string_view text) const = 0;

    // Deterministic for fixed (seed, prompt, plan). plan == nullptr (or a
    // plan whose coefficients are all zero) generates unsteered.
    virtual std::string generate(const std::string& prompt, int max_tokens,
                                 const SteeringPlan* plan, std::uint64_t seed) = 0;

    // Forward pass over `text`, recording the block output at each
    // requested layer, reduced per the position policy.
    virtual ActivationRecord capture(const std::string& text, const std::vector<int>& layers,
                                     PositionPolicy policy) = 0;
};

// Spec-level free functions over the interface.

std::vector<ActivationRecord> capture_activations(ModelBackend& backend,
                                                  const std::vector<std::string>& texts,
                                                  const std::vector<int>& layers,
                                                  PositionPolicy policy);

std::string generate_with_hooks(ModelBackend& backend, const std::string& prompt,
                                const SteeringPlan* plan, int max_tokens, std::uint64_t seed);

// Default steering layer set: the 10..25 band clamped to [0, L); when the
// model is too shallow for that band the middle slice of its stack is
// used instead (8 layers -> {3,4,5}).
std::vector<int> default_steering_layers(int num_layers);

}  // namespace valsteer
