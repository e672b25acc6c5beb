#pragma once
// Steering magnitude policies: fixed coefficients, per-value tables, and
// probe-calibrated minimal perturbation.

#include <map>
#include <optional>
#include <string>

#include "valsteer/bank.hpp"
#include "valsteer/model_backend.hpp"
#include "valsteer/steering_plan.hpp"

namespace valsteer {

inline constexpr double kDefaultAlpha = 0.5;
inline constexpr double kDefaultP0 = 0.9;

struct MagnitudePolicy {
    enum class Kind { fixed, per_value, calibrated };
    Kind kind = Kind::fixed;

    double alpha = kDefaultAlpha;                  // fixed; also per_value fallback
    std::map<std::string, double> per_value_table;

    struct Calibration {
        double p0 = kDefaultP0;      // probe-confidence target, strictly in (0,1)
        // <= 0 means auto: 20x the norm of the layer's context activation.
        double epsilon_max = 0.0;
    } calibration;

    static MagnitudePolicy fixed(double alpha = kDefaultAlpha);
    static MagnitudePolicy per_value(std::map<std::string, double> table,
                                     double fallback = kDefaultAlpha);
    static MagnitudePolicy calibrated(double p0 = kDefaultP0, double epsilon_max = 0.0);
};

const char* to_string(MagnitudePolicy::Kind k);

// Identity passthrough for a fixed coefficient; rejects non-finite input.
double fixed_magnitude(double alpha);

// Minimal-|epsilon| coefficient such that sigma(w.(h + eps*v) + b) >= p0.
// Returns 0 when the constraint already holds at h. Closed form along the
// probe response; throws CalibrationError (with the achieved probability)
// when no |eps| <= epsilon_max satisfies the constraint.
double calibrated_magnitude(std::span<const float> h, std::span<const float> v,
                            const ProbeModel& probe, double p0, double epsilon_max);

// Same contract solved by monotone bisection on the 1-D probe response;
// the non-negative ray is searched first, the negative ray only when the
// response decreases in epsilon. Used as the independent route for
// verifying the closed form and kept for callers that prefer it.
double calibrated_magnitude_bisection(std::span<const float> h, std::span<const float> v,
                                      const ProbeModel& probe, double p0, double epsilon_max);

// One plan entry per requested layer, coefficients per policy. Calibrated
// policies need the context activation (the prompt's final-position
// states) and per-layer probes in the bank entry.
SteeringPlan build_plan(const BankEntry& entry, const MagnitudePolicy& policy,
                        const std::vector<int>& layers,
                        const ActivationRecord* context_activation,
                        TokenPolicy token_policy = TokenPolicy::generated_only);

}  // namespace valsteer
