#include "valsteer/direction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "valsteer/error.hpp"

namespace valsteer {

const char* to_string(EstimatorMethod m) {
    switch (m) {
        case EstimatorMethod::pca: return "pca";
        case EstimatorMethod::mean_diff: return "mean_diff";
        case EstimatorMethod::probe: return "probe";
    }
    return "?";
}

EstimatorMethod estimator_method_from_string(const std::string& s) {
    if (s == "pca") return EstimatorMethod::pca;
    if (s == "mean_diff" || s == "mean") return EstimatorMethod::mean_diff;
    if (s == "probe") return EstimatorMethod::probe;
    throw ValidationError("unknown estimator method \"" + s + "\"");
}

std::vector<int> ValueDirection::layer_indices() const {
    std::vector<int> out;
    out.reserve(layers.size());
    for (const auto& [l, _] : layers) out.push_back(l);
    return out;
}

Vec estimate_mean_difference(const std::vector<Vec>& pos, const std::vector<Vec>& neg) {
    if (pos.empty() || neg.empty())
        throw ValidationError("mean difference needs non-empty positive and negative sets");
    const Vec mp = mean_of(pos);
    const Vec mn = mean_of(neg);
    if (mp.size() != mn.size())
        throw ValidationError("mean difference: dimension mismatch between classes");
    Vec out(mp.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = mp[i] - mn[i];
    return out;
}

namespace {

// Leading eigenvector of a symmetric PSD matrix by power iteration with
// deflation-free restarts over basis starts. Deterministic.
std::vector<double> leading_eigenvector(const std::vector<double>& m, std::size_t d) {
    // Start from the basis vector of the largest diagonal entry; a zero
    // matrix is handled by the caller.
    std::size_t start = 0;
    for (std::size_t i = 1; i < d; ++i)
        if (m[i * d + i] > m[start * d + start]) start = i;

    std::vector<double> v(d, 0.0), next(d, 0.0);
    v[start] = 1.0;
    for (int iter = 0; iter < 1000; ++iter) {
        for (std::size_t r = 0; r < d; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < d; ++c) acc += m[r * d + c] * v[c];
            next[r] = acc;
        }
        double nn = 0.0;
        for (double x : next) nn += x * x;
        nn = std::sqrt(nn);
        if (nn == 0.0) break;  // v is in the null space; diagonal start prevents this unless m = 0
        double delta = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            next[i] /= nn;
            delta = std::max(delta, std::abs(std::abs(next[i]) - std::abs(v[i])));
        }
        v = next;
        if (delta < 1e-13 && iter > 2) break;
    }
    return v;
}

}  // namespace

Vec estimate_pca(const std::vector<std::pair<Vec, Vec>>& pairs) {
    if (pairs.size() < 2) throw ValidationError("pca needs at least 2 pairs");
    const std::size_t d = pairs.front().first.size();

    std::vector<std::vector<double>> diffs;
    std::vector<double> mean_pos(d, 0.0), mean_diff(d, 0.0);
    for (const auto& [p, n] : pairs) {
        if (p.size() != d || n.size() != d)
            throw ValidationError("pca: inconsistent activation dimensions");
        std::vector<double> diff(d);
        for (std::size_t i = 0; i < d; ++i) {
            diff[i] = double(p[i]) - double(n[i]);
            mean_pos[i] += p[i];
            mean_diff[i] += diff[i];
        }
        diffs.push_back(std::move(diff));
    }
    for (std::size_t i = 0; i < d; ++i) {
        mean_pos[i] /= double(pairs.size());
        mean_diff[i] /= double(pairs.size());
    }

    double spread = 0.0;
    std::vector<double> cov(d * d, 0.0);
    for (auto& diff : diffs) {
        for (std::size_t i = 0; i < d; ++i) diff[i] -= mean_diff[i];
        for (std::size_t i = 0; i < d; ++i) {
            if (diff[i] == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j) cov[i * d + j] += diff[i] * diff[j];
        }
        for (double x : diff) spread += x * x;
    }

    std::vector<double> component;
    if (spread == 0.0) {
        // Identical differences across pairs: the centered cloud is a
        // point. The shared difference itself is the separating axis,
        // unless it is zero too, which is genuinely degenerate.
        double md_norm = 0.0;
        for (double x : mean_diff) md_norm += x * x;
        if (md_norm == 0.0)
            throw DegenerateDataError("pca: all pair differences are zero");
        component = mean_diff;
    } else {
        component = leading_eigenvector(cov, d);
    }

    double cn = 0.0;
    for (double x : component) cn += x * x;
    cn = std::sqrt(cn);
    if (cn == 0.0) throw DegenerateDataError("pca: degenerate covariance");

    // Sign disambiguation: positive-class mean projects non-negatively.
    double proj = 0.0;
    for (std::size_t i = 0; i < d; ++i) proj += component[i] * mean_pos[i];
    double sign = proj > 0.0 ? 1.0 : proj < 0.0 ? -1.0 : 0.0;
    if (sign == 0.0) {
        // Orthogonal to the positive mean: canonicalize on the largest
        // magnitude entry instead so the result is still deterministic.
        std::size_t big = 0;
        for (std::size_t i = 1; i < d; ++i)
            if (std::abs(component[i]) > std::abs(component[big])) big = i;
        sign = component[big] >= 0.0 ? 1.0 : -1.0;
    }

    Vec out(d);
    for (std::size_t i = 0; i < d; ++i) out[i] = float(sign * component[i] / cn);
    return out;
}

namespace {

double bce_loss_and_grad(const std::vector<Vec>& pos, const std::vector<Vec>& neg,
                         const std::vector<double>& w, double b, double reg,
                         std::vector<double>& grad_w, double& grad_b) {
    const std::size_t d = w.size();
    std::fill(grad_w.begin(), grad_w.end(), 0.0);
    grad_b = 0.0;
    double loss = 0.0;
    const double n = double(pos.size() + neg.size());

    auto accumulate = [&](const Vec& x, double label) {
        double z = b;
        for (std::size_t i = 0; i < d; ++i) z += w[i] * x[i];
        const double p = logistic(z);
        const double eps = 1e-12;
        loss += -(label * std::log(p + eps) + (1.0 - label) * std::log(1.0 - p + eps));
        const double g = (p - label) / n;
        for (std::size_t i = 0; i < d; ++i) grad_w[i] += g * x[i];
        grad_b += g;
    };
    for (const Vec& x : pos) accumulate(x, 1.0);
    for (const Vec& x : neg) accumulate(x, 0.0);

    loss /= n;
    for (std::size_t i = 0; i < d; ++i) {
        loss += 0.5 * reg * w[i] * w[i];
        grad_w[i] += reg * w[i];
    }
    return loss;
}

}  // namespace

ProbeModel train_probe(const std::vector<Vec>& pos, const std::vector<Vec>& neg,
                       const ProbeTrainConfig& config, const std::vector<Vec>* val_pos,
                       const std::vector<Vec>* val_neg) {
    if (pos.empty() || neg.empty())
        throw ValidationError("probe training needs both classes non-empty");
    if (config.max_iters < 1) throw ValidationError("probe training needs max_iters >= 1");
    const std::size_t d = pos.front().size();
    for (const Vec& x : pos)
        if (x.size() != d || !all_finite(x))
            throw ValidationError("probe training: bad positive activation");
    for (const Vec& x : neg)
        if (x.size() != d || !all_finite(x))
            throw ValidationError("probe training: bad negative activation");

    // Small seeded init; keeps runs reproducible while letting distinct
    // seeds explore distinct solutions on non-separable data.
    std::mt19937_64 rng(config.seed);
    std::vector<double> w(d);
    for (double& wi : w) wi = (double(rng() >> 40) / 16777216.0 - 0.5) * 0.02;
    double b = 0.0;

    // Step size capped by the logistic-loss smoothness bound (~mean
    // squared input norm / 4) so descent stays stable whatever the
    // activation scale.
    double mean_sq = 0.0;
    for (const Vec& x : pos) mean_sq += dot(x, x);
    for (const Vec& x : neg) mean_sq += dot(x, x);
    mean_sq /= double(pos.size() + neg.size());
    const double lr = config.learning_rate * std::min(1.0, 4.0 / std::max(4.0, mean_sq));

    std::vector<double> grad_w(d);
    double grad_b = 0.0;
    double prev_loss = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < config.max_iters; ++iter) {
        const double loss = bce_loss_and_grad(pos, neg, w, b, config.reg_strength, grad_w, grad_b);
        for (std::size_t i = 0; i < d; ++i) w[i] -= lr * grad_w[i];
        b -= lr * grad_b;
        if (std::abs(prev_loss - loss) < config.loss_tolerance) break;
        prev_loss = loss;
    }

    ProbeModel probe;
    probe.w.resize(d);
    for (std::size_t i = 0; i < d; ++i) probe.w[i] = float(w[i]);
    probe.bias = float(b);
    probe.seed = config.seed;
    if (val_pos && val_neg) probe.val_accuracy = probe_accuracy(probe, *val_pos, *val_neg);
    return probe;
}

double probe_accuracy(const ProbeModel& probe, const std::vector<Vec>& pos,
                      const std::vector<Vec>& neg) {
    if (pos.empty() && neg.empty()) throw ValidationError("probe_accuracy: no examples");
    std::size_t hits = 0;
    for (const Vec& x : pos) hits += probe.probability(x) > 0.5 ? 1 : 0;
    for (const Vec& x : neg) hits += probe.probability(x) <= 0.5 ? 1 : 0;
    return double(hits) / double(pos.size() + neg.size());
}

Vec probe_direction(const ProbeModel& probe) {
    if (norm(probe.w) == 0.0) throw ValidationError("probe has a zero weight vector");
    return normalized(probe.w);
}

std::vector<int> select_layers_auto(const std::map<int, double>& per_layer_accuracy,
                                    double threshold, int max_layers) {
    if (per_layer_accuracy.empty()) throw ValidationError("select_layers_auto: empty accuracy map");
    if (max_layers < 1) throw ValidationError("select_layers_auto: max_layers must be >= 1");

    std::vector<std::pair<int, double>> qualifying;
    double best = -1.0;
    for (const auto& [layer, acc] : per_layer_accuracy) {
        best = std::max(best, acc);
        if (acc >= threshold) qualifying.emplace_back(layer, acc);
    }
    if (qualifying.empty())
        throw NoLayerQualifiesError("no layer reaches accuracy " + std::to_string(threshold) +
                                        "; best observed " + std::to_string(best),
                                    best);
    std::sort(qualifying.begin(), qualifying.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (int(qualifying.size()) > max_layers) qualifying.resize(std::size_t(max_layers));
    std::vector<int> out;
    for (const auto& [layer, _] : qualifying) out.push_back(layer);
    return out;
}

namespace {

// Stable per-(seed, value, layer) stream so estimation is reproducible
// pair-for-pair regardless of which values run in which order.
std::uint64_t mix_seed(std::uint64_t seed, const std::string& value_id, int layer) {
    std::uint64_t h = 1469598103934665603ull ^ seed;
    for (char c : value_id) {
        h ^= std::uint64_t(static_cast<unsigned char>(c));
        h *= 1099511628211ull;
    }
    h ^= std::uint64_t(layer) + 0x9e3779b97f4a7c15ull;
    h *= 1099511628211ull;
    return h;
}

struct CapturedPairs {
    // Per layer: aligned positive and negative activation lists.
    std::map<int, std::vector<Vec>> pos, neg;
};

CapturedPairs capture_pairs(ModelBackend& backend, const std::vector<ContrastivePair>& pairs,
                            const std::vector<int>& layers, PositionPolicy policy) {
    CapturedPairs out;
    for (const ContrastivePair& pair : pairs) {
        ActivationRecord rp = backend.capture(pair.positive, layers, policy);
        ActivationRecord rn = backend.capture(pair.negative, layers, policy);
        for (int l : layers) {
            out.pos[l].push_back(rp.layers.at(l));
            out.neg[l].push_back(rn.layers.at(l));
        }
    }
    return out;
}

}  // namespace

EstimationResult estimate_directions(ModelBackend& backend, const ContrastiveDataset& ds,
                                     EstimatorMethod method, const EstimationConfig& config) {
    if (ds.pairs.size() < 2)
        throw ValidationError("dataset \"" + ds.value_id + "\" has fewer than 2 pairs");
    std::vector<int> layers =
        config.layers.empty() ? default_steering_layers(backend.num_layers()) : config.layers;
    if (layers.empty()) throw ValidationError("estimation layer set is empty");
    for (int l : layers)
        if (l < 0 || l >= backend.num_layers())
            throw ValidationError("estimation layer " + std::to_string(l) + " out of range");

    EstimationResult result;
    ValueDirection& dir = result.direction;
    dir.value_id = ds.value_id;
    dir.method = method;
    dir.metadata.train_pairs = int(ds.pairs.size());
    dir.metadata.seed = config.seed;

    if (method == EstimatorMethod::probe) {
        // Held-out split drives per-layer accuracy and auto selection.
        auto [train, val] = split_pairs(ds, config.train_fraction, config.seed);
        CapturedPairs tr = capture_pairs(backend, train.pairs, layers, config.position_policy);
        CapturedPairs va = capture_pairs(backend, val.pairs, layers, config.position_policy);

        std::map<int, double> accuracy;
        std::map<int, ProbeModel> probes;
        for (int l : layers) {
            ProbeTrainConfig ptc = config.probe;
            ptc.seed = mix_seed(config.seed, ds.value_id, l);
            ProbeModel probe = train_probe(tr.pos[l], tr.neg[l], ptc, &va.pos[l], &va.neg[l]);
            accuracy[l] = probe.val_accuracy;
            probes[l] = std::move(probe);
        }
        std::vector<int> selected;
        try {
            selected = select_layers_auto(accuracy, config.accuracy_threshold,
                                          config.max_selected_layers);
        } catch (NoLayerQualifiesError& e) {
            throw NoLayerQualifiesError("value \"" + ds.value_id + "\": " + e.what(),
                                        e.best_accuracy);
        }
        for (int l : selected) {
            dir.layers[l] = probe_direction(probes[l]);
            result.probes[l] = std::move(probes[l]);
        }
        dir.normalized = true;
        return result;
    }

    CapturedPairs cap = capture_pairs(backend, ds.pairs, layers, config.position_policy);
    for (int l : layers) {
        if (method == EstimatorMethod::mean_diff) {
            Vec v = estimate_mean_difference(cap.pos[l], cap.neg[l]);
            dir.layers[l] = config.normalize ? normalized(v) : v;
        } else {
            std::vector<std::pair<Vec, Vec>> pairs;
            for (std::size_t i = 0; i < cap.pos[l].size(); ++i)
                pairs.emplace_back(cap.pos[l][i], cap.neg[l][i]);
            dir.layers[l] = estimate_pca(pairs);
        }
    }
    dir.normalized = (method == EstimatorMethod::pca) || config.normalize;
    return result;
}

}  // namespace valsteer
