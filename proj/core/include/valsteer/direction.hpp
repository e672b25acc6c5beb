#pragma once
// Per-value, per-layer steering direction estimation from contrastive
// activations: paired-difference PCA, mean difference, and linear probes
// with automatic layer selection.

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "valsteer/model_backend.hpp"
#include "valsteer/value_pool.hpp"
#include "valsteer/vecmath.hpp"

namespace valsteer {

enum class EstimatorMethod { pca, mean_diff, probe };

const char* to_string(EstimatorMethod m);
EstimatorMethod estimator_method_from_string(const std::string& s);

struct ValueDirection {
    std::string value_id;
    EstimatorMethod method = EstimatorMethod::mean_diff;
    bool normalized = false;
    std::map<int, Vec> layers;  // layer index -> direction of length d
    struct Metadata {
        int train_pairs = 0;
        std::uint64_t seed = 0;
    } metadata;

    std::vector<int> layer_indices() const;
};

// One logistic probe sigma(w.h + b) for one layer.
struct ProbeModel {
    Vec w;
    float bias = 0.0f;
    std::uint64_t seed = 0;
    // Held-out accuracy; NaN when no validation split was supplied.
    double val_accuracy = std::numeric_limits<double>::quiet_NaN();

    double logitof(std::span<const float> h) const { return dot(w, h) + bias; }
    double probability(std::span<const float> h) const { return logistic(logitof(h)); }
};

// mean(pos) - mean(neg), un-normalized. Normalization is a separate flag
// on ValueDirection.
Vec estimate_mean_difference(const std::vector<Vec>& pos, const std::vector<Vec>& neg);

// First principal component of the mean-centered per-pair differences
// (pos - neg), unit norm, sign-oriented so the positive-class mean
// projects non-negatively onto it.
Vec estimate_pca(const std::vector<std::pair<Vec, Vec>>& pairs);

struct ProbeTrainConfig {
    double reg_strength = 1e-3;  // L2 on w
    int max_iters = 500;
    double learning_rate = 1.0;
    double loss_tolerance = 1e-8;  // stop when the loss change drops below this
    std::uint64_t seed = 0;
};

ProbeModel train_probe(const std::vector<Vec>& pos, const std::vector<Vec>& neg,
                       const ProbeTrainConfig& config,
                       const std::vector<Vec>* val_pos = nullptr,
                       const std::vector<Vec>* val_neg = nullptr);

// Classification accuracy of the probe on labelled activations.
double probe_accuracy(const ProbeModel& probe, const std::vector<Vec>& pos,
                      const std::vector<Vec>& neg);

// w / ||w||; throws on a zero weight vector.
Vec probe_direction(const ProbeModel& probe);

// Layers whose accuracy clears `threshold`, best first (ties broken by
// ascending layer index), truncated to `max_layers`. Throws
// NoLayerQualifiesError when nothing clears, reporting the best accuracy.
std::vector<int> select_layers_auto(const std::map<int, double>& per_layer_accuracy,
                                    double threshold, int max_layers);

struct EstimationConfig {
    std::vector<int> layers;  // empty -> default_steering_layers(backend)
    PositionPolicy position_policy = PositionPolicy::last_token;
    bool normalize = false;   // applies to mean_diff; pca/probe are unit by construction
    std::uint64_t seed = 0;
    // Probe-only knobs.
    ProbeTrainConfig probe;
    double train_fraction = 0.8;      // split for held-out layer accuracy
    double accuracy_threshold = 0.8;  // auto layer selection
    int max_selected_layers = 5;
};

struct EstimationResult {
    ValueDirection direction;
    // Probe method only: the per-layer probes behind the directions, for
    // calibrated magnitude selection downstream.
    std::map<int, ProbeModel> probes;
};

// Capture activations for every pair in `ds` and run the chosen
// estimator per layer.
EstimationResult estimate_directions(ModelBackend& backend, const ContrastiveDataset& ds,
                                     EstimatorMethod method, const EstimationConfig& config);

}  // namespace valsteer
