#pragma once
// The executable description of an activation edit: which layers get
// which direction at what coefficient, and from which token position on.

#include <string>
#include <vector>

#include "valsteer/vecmath.hpp"

namespace valsteer {

// generated_only: edits start at the final prompt position (the state the
// first sampled token is predicted from) and cover every generated
// position. all_positions: prompt positions are edited too.
enum class TokenPolicy { generated_only, all_positions };

const char* to_string(TokenPolicy p);
TokenPolicy token_policy_from_string(const std::string& s);

struct PlanEntry {
    int layer = 0;
    Vec direction;
    float coefficient = 0.0f;
};

struct SteeringPlan {
    std::vector<PlanEntry> entries;  // unique layers
    TokenPolicy token_policy = TokenPolicy::generated_only;

    // Throws unless layers are unique, coefficients finite, and every
    // direction has length `hidden_size`.
    void validate(int hidden_size) const;
};

}  // namespace valsteer
