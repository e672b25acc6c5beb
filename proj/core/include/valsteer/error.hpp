#pragma once
// Error types shared across the library. Everything user-facing derives
// from Error so callers can catch one base.

#include <stdexcept>
#include <string>

namespace valsteer {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad manifest, corpus line, config field, or argument.
struct ValidationError : Error {
    using Error::Error;
};

// File or socket trouble.
struct IoError : Error {
    using Error::Error;
};

// Magnitude calibration could not satisfy the probe-confidence constraint.
struct CalibrationError : Error {
    CalibrationError(const std::string& msg, double achieved)
        : Error(msg), achieved_probability(achieved) {}
    double achieved_probability;
};

// Estimator input carries no separating signal (e.g. all pair differences zero).
struct DegenerateDataError : Error {
    using Error::Error;
};

// Automatic layer selection found no layer above the accuracy threshold.
struct NoLayerQualifiesError : Error {
    NoLayerQualifiesError(const std::string& msg, double best)
        : Error(msg), best_accuracy(best) {}
    double best_accuracy;
};

// Prompt would not fit the backend context window. Raised instead of
// silently truncating.
struct ContextOverflowError : Error {
    using Error::Error;
};

// Malformed exchange with an external scoring or generation service.
struct ProtocolError : Error {
    using Error::Error;
};

}  // namespace valsteer
