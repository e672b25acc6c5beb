#pragma once
// Adapter that forwards generation to an external service speaking the
// line protocol, so GPU-hosted models can replace the reference model
// without touching anything above the ModelBackend interface.
//
// Request:  {prompt, max_tokens, seed, layer_edits: [{layer, vector,
//            coefficient}], token_policy}
// Response: {text}
//
// Capture is not part of the wire protocol; direction estimation against
// an external model runs on the service side.

#include <memory>

#include "valsteer/line_client.hpp"
#include "valsteer/model_backend.hpp"

namespace valsteer {

class ExternalBackend final : public ModelBackend {
public:
    struct Info {
        int layers = 0;
        int hidden = 0;
        int max_context = 0;
    };

    ExternalBackend(const Endpoint& endpoint, const Info& info);

    int num_layers() const override { return info_.layers; }
    int hidden_size() const override { return info_.hidden; }
    int max_context() const override { return info_.max_context; }

    // Whitespace split; the service owns real tokenization, this only
    // feeds coarse context-budget checks.
    std::vector<int> tokenize(std::string_view text) const override;

    std::string generate(const std::string& prompt, int max_tokens,
                         const SteeringPlan* plan, std::uint64_t seed) override;

    ActivationRecord capture(const std::string& text, const std::vector<int>& layers,
                             PositionPolicy policy) override;

    static nlohmann::json encode_request(const std::string& prompt, int max_tokens,
                                         const SteeringPlan* plan, std::uint64_t seed);

private:
    std::unique_ptr<LineClient> client_;
    Info info_;
};

}  // namespace valsteer
