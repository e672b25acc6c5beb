#pragma once
// Metric suite: value coverage, steer accuracy, Jensen-Shannon distance,
// bootstrap confidence intervals, and fluency statistics.

#include <cstdint>
#include <string>
#include <vector>

#include "valsteer/pluralism.hpp"
#include "valsteer/relevance.hpp"
#include "valsteer/value_pool.hpp"

namespace valsteer {

inline constexpr double kDefaultCoverageTau = 0.5;
inline constexpr int kDefaultBootstrapIterations = 1000;

// sqrt of the Jensen-Shannon divergence in base-2 logs, so the result
// lies in [0,1]. Zero-probability bins get additive smoothing 1e-12
// followed by renormalization.
double js_distance(const ChoiceDistribution& p, const ChoiceDistribution& q);

struct CoverageEntry {
    std::string input_id;
    int covered = 0;
    int gold = 0;
    std::vector<double> scores;  // per gold value, scorer output
    double coverage_pct = 0.0;   // 100 * covered / gold
};

struct CoverageReport {
    std::vector<CoverageEntry> entries;
    double coverage_pct = 0.0;  // mean of per-input coverage
};

// A gold value counts covered when scorer(response, description) > tau.
CoverageEntry overton_coverage(const std::string& response,
                               const std::vector<ValueSpec>& gold_values,
                               RelevanceScorer& scorer, double tau = kDefaultCoverageTau);

CoverageReport overton_coverage_report(
    const std::vector<std::pair<std::string, std::vector<ValueSpec>>>& responses_with_gold,
    RelevanceScorer& scorer, double tau = kDefaultCoverageTau);

// Percentage of responses whose score against the target value's
// description exceeds tau.
double steerable_accuracy(const std::vector<std::pair<std::string, ValueSpec>>& responses,
                          RelevanceScorer& scorer, double tau = kDefaultCoverageTau);

struct CiReport {
    std::string metric;
    double point = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    int iterations = 0;
    std::uint64_t seed = 0;
};

// Percentile bootstrap of the mean: resample with replacement
// `iterations` times (index stream: mt19937_64(seed), idx = next() % n),
// take lo/hi nearest-rank percentiles of the resampled means.
CiReport bootstrap_ci(const std::vector<double>& samples, int iterations, std::uint64_t seed,
                      double lo_pct = 2.5, double hi_pct = 97.5);

struct FluencyReport {
    double avg_length = 0.0;     // mean whitespace-token count
    double repetition_pct = 0.0; // texts with any 4-gram repeated >= 3 times
    double gibberish_pct = 0.0;  // texts with < 60% well-formed word tokens
};

FluencyReport fluency_metrics(const std::vector<std::string>& texts);

}  // namespace valsteer
