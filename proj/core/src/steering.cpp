#include "valsteer/steering.hpp"

#include <algorithm>
#include <cmath>

#include "valsteer/error.hpp"

namespace valsteer {

MagnitudePolicy MagnitudePolicy::fixed(double alpha) {
    MagnitudePolicy p;
    p.kind = Kind::fixed;
    p.alpha = alpha;
    return p;
}

MagnitudePolicy MagnitudePolicy::per_value(std::map<std::string, double> table, double fallback) {
    MagnitudePolicy p;
    p.kind = Kind::per_value;
    p.per_value_table = std::move(table);
    p.alpha = fallback;
    return p;
}

MagnitudePolicy MagnitudePolicy::calibrated(double p0, double epsilon_max) {
    MagnitudePolicy p;
    p.kind = Kind::calibrated;
    p.calibration.p0 = p0;
    p.calibration.epsilon_max = epsilon_max;
    return p;
}

const char* to_string(MagnitudePolicy::Kind k) {
    switch (k) {
        case MagnitudePolicy::Kind::fixed: return "fixed";
        case MagnitudePolicy::Kind::per_value: return "per_value";
        case MagnitudePolicy::Kind::calibrated: return "calibrated";
    }
    return "?";
}

double fixed_magnitude(double alpha) {
    if (!std::isfinite(alpha)) throw ValidationError("steering coefficient must be finite");
    return alpha;
}

namespace {

void check_calibration_inputs(std::span<const float> h, std::span<const float> v,
                              const ProbeModel& probe, double p0, double epsilon_max) {
    if (h.size() != v.size() || probe.w.size() != h.size())
        throw ValidationError("calibration: activation, direction, and probe dimensions differ");
    if (!(p0 > 0.0 && p0 < 1.0)) throw ValidationError("P0 must lie strictly in (0,1)");
    if (!(epsilon_max > 0.0)) throw ValidationError("epsilon_max must be positive");
    const double vn = norm(v);
    if (std::abs(vn - 1.0) > 1e-6)
        throw ValidationError("calibration expects a unit direction, got norm " +
                              std::to_string(vn));
}

}  // namespace

double calibrated_magnitude(std::span<const float> h, std::span<const float> v,
                            const ProbeModel& probe, double p0, double epsilon_max) {
    check_calibration_inputs(h, v, probe, p0, epsilon_max);
    const double z0 = probe.logitof(h);
    if (logistic(z0) >= p0) return 0.0;

    // The probe response along the ray is affine: z(eps) = z0 + eps*(w.v).
    const double slope = dot(probe.w, v);
    if (slope == 0.0)
        throw CalibrationError("probe response is flat along the direction; constraint "
                               "unreachable (achieved probability " +
                                   std::to_string(logistic(z0)) + ")",
                               logistic(z0));
    const double eps = (logit(p0) - z0) / slope;
    if (std::abs(eps) > epsilon_max) {
        const double reach = logistic(z0 + (eps > 0 ? epsilon_max : -epsilon_max) * slope);
        throw CalibrationError("constraint unsatisfiable within |eps| <= " +
                                   std::to_string(epsilon_max) + " (achieved probability " +
                                   std::to_string(reach) + ")",
                               reach);
    }
    return eps;
}

double calibrated_magnitude_bisection(std::span<const float> h, std::span<const float> v,
                                      const ProbeModel& probe, double p0, double epsilon_max) {
    check_calibration_inputs(h, v, probe, p0, epsilon_max);

    Vec shifted(h.begin(), h.end());
    auto prob_at = [&](double eps) {
        for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] = h[i] + float(eps * v[i]);
        return probe.probability(shifted);
    };

    if (prob_at(0.0) >= p0) return 0.0;

    // Non-negative ray first; fall back to the negative ray when movement
    // along +v lowers the probe response.
    for (double sign : {1.0, -1.0}) {
        if (prob_at(sign * epsilon_max) < p0) continue;
        double lo = 0.0, hi = epsilon_max;  // constraint fails at lo, holds at hi
        for (int iter = 0; iter < 200 && (hi - lo) > 1e-12 * std::max(1.0, hi); ++iter) {
            const double mid = 0.5 * (lo + hi);
            (prob_at(sign * mid) >= p0 ? hi : lo) = mid;
        }
        return sign * hi;
    }
    const double best = std::max(prob_at(epsilon_max), prob_at(-epsilon_max));
    throw CalibrationError("constraint unsatisfiable within |eps| <= " +
                               std::to_string(epsilon_max) + " (achieved probability " +
                               std::to_string(best) + ")",
                           best);
}

SteeringPlan build_plan(const BankEntry& entry, const MagnitudePolicy& policy,
                        const std::vector<int>& layers,
                        const ActivationRecord* context_activation, TokenPolicy token_policy) {
    if (layers.empty()) throw ValidationError("build_plan: empty layer set");
    const ValueDirection& dir = entry.direction;

    SteeringPlan plan;
    plan.token_policy = token_policy;
    for (int layer : layers) {
        auto it = dir.layers.find(layer);
        if (it == dir.layers.end())
            throw ValidationError("direction for \"" + dir.value_id + "\" has no layer " +
                                  std::to_string(layer));
        PlanEntry pe;
        pe.layer = layer;
        pe.direction = it->second;

        switch (policy.kind) {
            case MagnitudePolicy::Kind::fixed:
                pe.coefficient = float(fixed_magnitude(policy.alpha));
                break;
            case MagnitudePolicy::Kind::per_value: {
                auto t = policy.per_value_table.find(dir.value_id);
                pe.coefficient = float(fixed_magnitude(
                    t != policy.per_value_table.end() ? t->second : policy.alpha));
                break;
            }
            case MagnitudePolicy::Kind::calibrated: {
                if (!context_activation)
                    throw ValidationError("calibrated policy needs a context activation");
                auto probe_it = entry.probes.find(layer);
                if (probe_it == entry.probes.end())
                    throw ValidationError("calibrated policy needs a probe for layer " +
                                          std::to_string(layer) + " of \"" + dir.value_id + "\"");
                auto act_it = context_activation->layers.find(layer);
                if (act_it == context_activation->layers.end())
                    throw ValidationError("context activation lacks layer " +
                                          std::to_string(layer));
                // Unit-direction contract; calibrated plans come from
                // probe directions, which are unit by construction.
                const Vec unit = dir.normalized ? pe.direction : normalized(pe.direction);
                pe.direction = unit;
                // Auto bound: 20x the context activation norm, floored so
                // near-zero activations still leave room to search.
                double eps_max = policy.calibration.epsilon_max;
                if (eps_max <= 0.0) eps_max = 20.0 * std::max(norm(act_it->second), 1.0);
                pe.coefficient = float(calibrated_magnitude(act_it->second, unit,
                                                            probe_it->second,
                                                            policy.calibration.p0, eps_max));
                break;
            }
        }
        plan.entries.push_back(std::move(pe));
    }
    return plan;
}

}  // namespace valsteer
