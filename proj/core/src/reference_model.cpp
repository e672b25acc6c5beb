#include "valsteer/reference_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "valsteer/error.hpp"

namespace valsteer {

namespace {

constexpr int kVocab = 256;
constexpr float kNormEps = 1e-5f;

// 24-bit uniform in [0,1); mt19937_64 output is pinned by the standard,
// so weights are identical on every platform for a given seed.
float next_uniform(std::mt19937_64& rng) {
    return float(rng() >> 40) * (1.0f / 16777216.0f);
}

void fill_uniform(std::vector<float>& w, std::size_t n, float scale, std::mt19937_64& rng) {
    w.resize(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = (2.0f * next_uniform(rng) - 1.0f) * scale;
}

// y = W x with W row-major [rows][cols].
void matvec(std::span<const float> w, std::span<const float> x, std::span<float> y) {
    const std::size_t rows = y.size(), cols = x.size();
    for (std::size_t r = 0; r < rows; ++r) {
        const float* wr = w.data() + r * cols;
        float acc = 0.0f;
        for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
        y[r] = acc;
    }
}

void rmsnorm(std::span<const float> x, std::span<const float> gain, std::span<float> y) {
    float ss = 0.0f;
    for (float v : x) ss += v * v;
    const float inv = 1.0f / std::sqrt(ss / float(x.size()) + kNormEps);
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * inv * gain[i];
}

float silu(float x) { return x / (1.0f + std::exp(-x)); }

}  // namespace

struct ReferenceModel::Session {
    // kv[layer] holds keys then values, each [max_positions][hidden].
    std::vector<std::vector<float>> keys, values;
    std::vector<float> x, xn, q, k, v, att, mlp;
    std::vector<float> logits;
    int positions = 0;

    Session(int layers, int hidden, int mlp_hidden, int max_positions) {
        keys.assign(layers, std::vector<float>(std::size_t(max_positions) * hidden));
        values.assign(layers, std::vector<float>(std::size_t(max_positions) * hidden));
        x.resize(hidden);
        xn.resize(hidden);
        q.resize(hidden);
        k.resize(hidden);
        v.resize(hidden);
        att.resize(hidden);
        mlp.resize(mlp_hidden);
        logits.resize(kVocab);
    }
};

ReferenceModel::ReferenceModel() : ReferenceModel(Config{}) {}

ReferenceModel::ReferenceModel(const Config& config) : config_(config) {
    if (config_.layers <= 0 || config_.hidden <= 0 || config_.heads <= 0 || config_.max_seq <= 0)
        throw ValidationError("reference model dimensions must be positive");
    if (config_.hidden % config_.heads != 0)
        throw ValidationError("hidden size must be divisible by head count");
    head_dim_ = config_.hidden / config_.heads;
    mlp_hidden_ = 2 * config_.hidden;

    const int d = config_.hidden;
    std::mt19937_64 rng(config_.seed);
    const float emb_scale = 0.5f;
    const float mat_scale = 1.0f / std::sqrt(float(d));
    const float mlp_scale = 1.0f / std::sqrt(float(mlp_hidden_));

    fill_uniform(tok_emb_, std::size_t(kVocab) * d, emb_scale, rng);
    fill_uniform(pos_emb_, std::size_t(config_.max_seq) * d, emb_scale, rng);

    wq_.resize(config_.layers);
    wk_.resize(config_.layers);
    wv_.resize(config_.layers);
    wo_.resize(config_.layers);
    w_up_.resize(config_.layers);
    w_down_.resize(config_.layers);
    norm_attn_.assign(config_.layers, std::vector<float>(d, 1.0f));
    norm_mlp_.assign(config_.layers, std::vector<float>(d, 1.0f));
    for (int l = 0; l < config_.layers; ++l) {
        fill_uniform(wq_[l], std::size_t(d) * d, mat_scale, rng);
        fill_uniform(wk_[l], std::size_t(d) * d, mat_scale, rng);
        fill_uniform(wv_[l], std::size_t(d) * d, mat_scale, rng);
        fill_uniform(wo_[l], std::size_t(d) * d, mat_scale, rng);
        fill_uniform(w_up_[l], std::size_t(mlp_hidden_) * d, mat_scale, rng);
        fill_uniform(w_down_[l], std::size_t(d) * mlp_hidden_, mlp_scale, rng);
    }
    norm_final_.assign(d, 1.0f);
    fill_uniform(lm_head_, std::size_t(kVocab) * d, mat_scale, rng);
}

std::vector<int> ReferenceModel::tokenize(std::string_view text) const {
    if (text.empty()) throw ValidationError("cannot tokenize an empty string");
    std::vector<int> tokens;
    tokens.reserve(text.size());
    for (unsigned char c : text) tokens.push_back(int(c));
    return tokens;
}

std::string ReferenceModel::detokenize(std::span<const int> tokens) const {
    std::string out;
    out.reserve(tokens.size());
    for (int t : tokens) {
        if (t < 0 || t >= kVocab) throw ValidationError("token id out of range");
        out.push_back(char(static_cast<unsigned char>(t)));
    }
    return out;
}

void ReferenceModel::forward_position(Session& s, int token, int position, bool generation,
                                      const std::vector<LayerHook>& hooks) const {
    const int d = config_.hidden;
    if (position >= config_.max_seq)
        throw ContextOverflowError("position " + std::to_string(position) +
                                   " exceeds max context " + std::to_string(config_.max_seq));

    for (int i = 0; i < d; ++i)
        s.x[i] = tok_emb_[std::size_t(token) * d + i] + pos_emb_[std::size_t(position) * d + i];

    const float att_scale = 1.0f / std::sqrt(float(head_dim_));
    for (int l = 0; l < config_.layers; ++l) {
        // Attention over the cached prefix (causal, multi-head).
        rmsnorm(s.x, norm_attn_[l], s.xn);
        matvec(wq_[l], s.xn, s.q);
        matvec(wk_[l], s.xn, s.k);
        matvec(wv_[l], s.xn, s.v);
        std::copy(s.k.begin(), s.k.end(), s.keys[l].begin() + std::size_t(position) * d);
        std::copy(s.v.begin(), s.v.end(), s.values[l].begin() + std::size_t(position) * d);

        for (int h = 0; h < config_.heads; ++h) {
            const int off = h * head_dim_;
            float max_score = -1e30f;
            std::vector<float> scores(std::size_t(position) + 1);
            for (int t = 0; t <= position; ++t) {
                const float* kt = s.keys[l].data() + std::size_t(t) * d + off;
                float acc = 0.0f;
                for (int i = 0; i < head_dim_; ++i) acc += s.q[off + i] * kt[i];
                scores[t] = acc * att_scale;
                max_score = std::max(max_score, scores[t]);
            }
            float denom = 0.0f;
            for (int t = 0; t <= position; ++t) {
                scores[t] = std::exp(scores[t] - max_score);
                denom += scores[t];
            }
            for (int i = 0; i < head_dim_; ++i) {
                float acc = 0.0f;
                for (int t = 0; t <= position; ++t)
                    acc += scores[t] * s.values[l][std::size_t(t) * d + off + i];
                s.att[off + i] = acc / denom;
            }
        }
        matvec(wo_[l], s.att, s.xn);
        for (int i = 0; i < d; ++i) s.x[i] += s.xn[i];

        rmsnorm(s.x, norm_mlp_[l], s.xn);
        matvec(w_up_[l], s.xn, s.mlp);
        for (float& m : s.mlp) m = silu(m);
        matvec(w_down_[l], s.mlp, s.xn);
        for (int i = 0; i < d; ++i) s.x[i] += s.xn[i];

        // Hook site: the block output h_{l,position}. Edits feed layer
        // l+1 and, through this position's KV entries there, all later
        // positions.
        if (!hooks.empty()) {
            HookContext ctx{l, position, generation};
            for (const LayerHook& hook : hooks) hook(ctx, std::span<float>(s.x));
        }
    }
    s.positions = position + 1;
}

int ReferenceModel::argmax_logits(const Session& s) const {
    int lo = 0, hi = kVocab;
    int best = -1;
    float best_score = -1e30f;
    auto eligible = [&](int t) {
        if (!config_.printable_only) return true;
        return t == int('\n') || (t >= 32 && t <= 126);
    };
    for (int t = lo; t < hi; ++t) {
        if (!eligible(t)) continue;
        if (s.logits[t] > best_score) {  // strict: ties go to the lowest id
            best_score = s.logits[t];
            best = t;
        }
    }
    return best;
}

std::string ReferenceModel::generate_hooked(const std::string& prompt, int max_tokens,
                                            const std::vector<LayerHook>& hooks) const {
    const std::vector<int> prompt_tokens = tokenize(prompt);
    if (max_tokens < 1) throw ValidationError("max_tokens must be >= 1");
    if (int(prompt_tokens.size()) + max_tokens > config_.max_seq)
        throw ContextOverflowError("prompt (" + std::to_string(prompt_tokens.size()) +
                                   " tokens) + max_tokens (" + std::to_string(max_tokens) +
                                   ") exceeds context " + std::to_string(config_.max_seq));

    Session s(config_.layers, config_.hidden, mlp_hidden_, int(prompt_tokens.size()) + max_tokens);
    const int last_prompt = int(prompt_tokens.size()) - 1;
    for (int p = 0; p < int(prompt_tokens.size()); ++p)
        forward_position(s, prompt_tokens[p], p, p >= last_prompt, hooks);

    std::vector<int> generated;
    std::vector<float> xn(config_.hidden);
    for (int step = 0; step < max_tokens; ++step) {
        rmsnorm(s.x, norm_final_, xn);
        matvec(lm_head_, xn, s.logits);
        const int next = argmax_logits(s);
        generated.push_back(next);
        if (step + 1 < max_tokens)
            forward_position(s, next, last_prompt + 1 + step, true, hooks);
    }
    return detokenize(generated);
}

ActivationRecord ReferenceModel::capture_hooked(const std::string& text,
                                                const std::vector<int>& layers,
                                                PositionPolicy policy,
                                                const std::vector<LayerHook>& hooks) const {
    const std::vector<int> tokens = tokenize(text);
    for (int l : layers)
        if (l < 0 || l >= config_.layers)
            throw ValidationError("capture layer " + std::to_string(l) + " out of range [0, " +
                                  std::to_string(config_.layers) + ")");

    std::map<int, std::vector<double>> sums;
    std::map<int, Vec> last;
    for (int l : layers) {
        sums[l].assign(config_.hidden, 0.0);
        last[l].assign(config_.hidden, 0.0f);
    }

    Session s(config_.layers, config_.hidden, mlp_hidden_, int(tokens.size()));
    std::vector<LayerHook> all = hooks;
    all.push_back([&](const HookContext& ctx, std::span<float> h) {
        auto it = sums.find(ctx.layer);
        if (it == sums.end()) return;
        for (int i = 0; i < config_.hidden; ++i) it->second[i] += h[i];
        Vec& lv = last[ctx.layer];
        std::copy(h.begin(), h.end(), lv.begin());
    });
    for (int p = 0; p < int(tokens.size()); ++p) forward_position(s, tokens[p], p, false, all);

    ActivationRecord rec;
    rec.position_policy = policy;
    for (int l : layers) {
        if (policy == PositionPolicy::last_token) {
            rec.layers[l] = last[l];
        } else {
            Vec mean(config_.hidden);
            for (int i = 0; i < config_.hidden; ++i)
                mean[i] = float(sums[l][i] / double(tokens.size()));
            rec.layers[l] = std::move(mean);
        }
    }
    return rec;
}

LayerHook ReferenceModel::plan_hook(const SteeringPlan& plan) {
    return [plan](const HookContext& ctx, std::span<float> h) {
        if (plan.token_policy == TokenPolicy::generated_only && !ctx.generation) return;
        for (const PlanEntry& e : plan.entries)
            if (e.layer == ctx.layer) axpy(e.coefficient, e.direction, h);
    };
}

std::string ReferenceModel::generate(const std::string& prompt, int max_tokens,
                                     const SteeringPlan* plan, std::uint64_t /*seed*/) {
    // Decoding is greedy, so the sampling seed does not enter; it is part
    // of the interface for backends that sample.
    std::vector<LayerHook> hooks;
    if (plan) {
        plan->validate(config_.hidden);
        hooks.push_back(plan_hook(*plan));
    }
    return generate_hooked(prompt, max_tokens, hooks);
}

ActivationRecord ReferenceModel::capture(const std::string& text, const std::vector<int>& layers,
                                         PositionPolicy policy) {
    return capture_hooked(text, layers, policy, {});
}

}  // namespace valsteer
