#pragma once
// A small byte-level decoder transformer with deterministic seeded
// weights. It is not a language model anyone trained; it exists so the
// steering machinery has a backend whose dynamics are reproducible,
// hook-observable, and cheap enough for tests.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "valsteer/model_backend.hpp"

namespace valsteer {

struct HookContext {
    int layer = 0;
    int position = 0;
    // True from the final prompt position onward during generation (the
    // state the next token is predicted from). Always false in capture.
    bool generation = false;
};

// Observes and may rewrite the block output h_{layer,position} in place.
using LayerHook = std::function<void(const HookContext&, std::span<float>)>;

class ReferenceModel final : public ModelBackend {
public:
    struct Config {
        int layers = 8;
        int hidden = 64;
        int heads = 4;
        int max_seq = 1024;
        std::uint64_t seed = 1;
        // Restrict greedy argmax to printable ASCII + newline so generated
        // artifacts stay valid UTF-8. The vocabulary itself is all 256
        // bytes and any byte string tokenizes.
        bool printable_only = true;
    };

    ReferenceModel();
    explicit ReferenceModel(const Config& config);

    int num_layers() const override { return config_.layers; }
    int hidden_size() const override { return config_.hidden; }
    int max_context() const override { return config_.max_seq; }
    const Config& config() const { return config_; }

    std::vector<int> tokenize(std::string_view text) const override;
    std::string detokenize(std::span<const int> tokens) const;

    std::string generate(const std::string& prompt, int max_tokens,
                         const SteeringPlan* plan, std::uint64_t seed) override;

    ActivationRecord capture(const std::string& text, const std::vector<int>& layers,
                             PositionPolicy policy) override;

    // Hook-level entry points. Hooks run in order at every (layer,
    // position) the forward pass touches; plan-based generation is one
    // such hook.
    std::string generate_hooked(const std::string& prompt, int max_tokens,
                                const std::vector<LayerHook>& hooks) const;
    ActivationRecord capture_hooked(const std::string& text, const std::vector<int>& layers,
                                    PositionPolicy policy,
                                    const std::vector<LayerHook>& hooks) const;

    // Translate a plan into a position-filtered hook.
    static LayerHook plan_hook(const SteeringPlan& plan);

private:
    struct Session;  // per-call KV cache and running state

    void forward_position(Session& s, int token, int position, bool generation,
                          const std::vector<LayerHook>& hooks) const;
    int argmax_logits(const Session& s) const;

    Config config_;
    int head_dim_ = 0;
    int mlp_hidden_ = 0;

    // Row-major [out][in] matrices, one per layer where applicable.
    std::vector<float> tok_emb_, pos_emb_;            // [vocab|max_seq][hidden]
    std::vector<std::vector<float>> wq_, wk_, wv_, wo_;  // [hidden][hidden]
    std::vector<std::vector<float>> w_up_, w_down_;      // mlp
    std::vector<std::vector<float>> norm_attn_, norm_mlp_;
    std::vector<float> norm_final_;
    std::vector<float> lm_head_;                      // [vocab][hidden]
};

}  // namespace valsteer
