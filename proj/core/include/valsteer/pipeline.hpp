#pragma once
// End-to-end orchestration: configuration, the gate -> comments ->
// compose -> eval pipeline, and run manifests with content hashes so any
// run can be reproduced and audited.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "valsteer/direction.hpp"
#include "valsteer/evaluation.hpp"
#include "valsteer/io.hpp"
#include "valsteer/pluralism.hpp"
#include "valsteer/steering.hpp"

namespace valsteer {

struct RunConfig {
    // Mandatory: every artifact embeds the seed; there is no wall-clock
    // default anywhere.
    std::uint64_t seed = 0;
    bool seed_set = false;

    std::filesystem::path taxonomy;
    std::filesystem::path inputs;              // {input_id, text[, target_value]} JSONL
    std::filesystem::path contrastive_corpus;  // needed when no bank is given
    std::filesystem::path bank;                // optional pre-built direction bank
    std::filesystem::path gold;                // optional; enables the eval stage
    std::filesystem::path output_dir;

    std::string mode;           // overton | steerable | distributional
    std::string scorer = "stub";  // stub | nli
    int k = kDefaultTopK;

    EstimatorMethod method = EstimatorMethod::mean_diff;
    EstimationConfig estimation;  // layers double as the steering layer set

    MagnitudePolicy magnitude;
    TokenPolicy token_policy = TokenPolicy::generated_only;

    struct Backend {
        std::string kind = "reference";  // reference | external
        std::uint64_t model_seed = 1;
        // External backends have to declare their shape.
        int layers = 0;
        int hidden = 0;
        int max_context = 0;
    } backend;

    int comment_max_tokens = 48;
    int compose_max_tokens = 64;

    // Distributional mode.
    std::vector<std::string> options;
    ChoiceWeighting weighting = ChoiceWeighting::uniform;
    UnparsedPolicy unparsed = UnparsedPolicy::drop;

    // Steerable mode fallback when inputs carry no per-input target.
    std::string target_value;

    double tau = kDefaultCoverageTau;
    int ci_iterations = 0;  // 0 disables confidence intervals

    json echo;  // raw config document, reproduced in the manifest
};

// Read a config document, resolving relative paths against its directory.
RunConfig load_run_config(const std::filesystem::path& path);

// Every violation at once, never first-failure. Empty means valid,
// including existence of all referenced files.
std::vector<std::string> validate_config(const RunConfig& config);

struct PipelineError : Error {
    PipelineError(std::string stage_name, const std::string& msg)
        : Error("stage " + stage_name + ": " + msg), stage(std::move(stage_name)) {}
    std::string stage;
};

struct RunManifest {
    json doc;
    std::filesystem::path path;
};

// Execute estimate? -> gate -> compose -> eval for the configured mode.
// Structural violations abort up front; a missing stage input aborts at
// that stage with earlier artifacts (and a failed manifest) preserved on
// disk. Reruns with the same config and seed produce byte-identical
// artifacts.
RunManifest run_pipeline(const RunConfig& config);

// Shared by the pipeline eval stage and the standalone eval subcommand.
json evaluate_files(const std::string& mode, const std::filesystem::path& pred,
                    const std::filesystem::path& gold, const ValueTaxonomy& taxonomy,
                    RelevanceScorer& scorer, double tau, int ci_iterations, std::uint64_t seed);

}  // namespace valsteer
