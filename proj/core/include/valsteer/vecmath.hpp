#pragma once
// Small dense-vector helpers. Activations and directions are float32
// (that is what the bank file stores); accumulation happens in double.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "valsteer/error.hpp"

namespace valsteer {

using Vec = std::vector<float>;

inline double dot(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size())
        throw ValidationError("dot: dimension mismatch (" + std::to_string(a.size()) +
                              " vs " + std::to_string(b.size()) + ")");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
    return s;
}

inline double norm(std::span<const float> a) {
    double s = 0.0;
    for (float x : a) s += double(x) * double(x);
    return std::sqrt(s);
}

inline Vec normalized(std::span<const float> a) {
    double n = norm(a);
    if (n == 0.0) throw ValidationError("normalized: zero vector");
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = float(double(a[i]) / n);
    return out;
}

inline void axpy(float alpha, std::span<const float> x, std::span<float> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// Elementwise mean of a list of equal-length vectors.
inline Vec mean_of(const std::vector<Vec>& xs) {
    if (xs.empty()) throw ValidationError("mean_of: empty list");
    const std::size_t d = xs.front().size();
    std::vector<double> acc(d, 0.0);
    for (const Vec& x : xs) {
        if (x.size() != d) throw ValidationError("mean_of: dimension mismatch");
        for (std::size_t i = 0; i < d; ++i) acc[i] += x[i];
    }
    Vec out(d);
    for (std::size_t i = 0; i < d; ++i) out[i] = float(acc[i] / double(xs.size()));
    return out;
}

inline double cosine(std::span<const float> a, std::span<const float> b) {
    double na = norm(a), nb = norm(b);
    if (na == 0.0 || nb == 0.0) throw ValidationError("cosine: zero vector");
    return dot(a, b) / (na * nb);
}

inline bool all_finite(std::span<const float> a) {
    for (float x : a)
        if (!std::isfinite(x)) return false;
    return true;
}

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace valsteer
