#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "valsteer/pluralism.hpp"
#include "valsteer/reference_model.hpp"

using namespace valsteer;

namespace {

ValueTaxonomy tiny_taxonomy() {
    std::vector<ValueSpec> values{
        {"alpha_value", "Alpha", ValueCategory::schwartz, "first test value"},
        {"beta_value", "Beta", ValueCategory::schwartz, "second test value"},
        {"gamma_value", "Gamma", ValueCategory::schwartz, "third test value"},
    };
    return ValueTaxonomy("test", values, {});
}

// Backend that records prompts and answers from a scripted table.
class ScriptedBackend final : public ModelBackend {
public:
    int num_layers() const override { return 8; }
    int hidden_size() const override { return 4; }
    int max_context() const override { return budget; }
    std::vector<int> tokenize(std::string_view text) const override {
        return std::vector<int>(text.size(), 0);
    }
    std::string generate(const std::string& prompt, int, const SteeringPlan* plan,
                         std::uint64_t) override {
        prompts.push_back(prompt);
        plans.push_back(plan ? *plan : SteeringPlan{});
        if (!script.empty()) {
            const std::string out = script.front();
            script.erase(script.begin());
            return out;
        }
        return "reply to: " + prompt.substr(0, 24);
    }
    ActivationRecord capture(const std::string&, const std::vector<int>& layers,
                             PositionPolicy policy) override {
        ActivationRecord rec;
        rec.position_policy = policy;
        for (int l : layers) rec.layers[l] = Vec{0, 0, 0, 0};
        return rec;
    }

    std::vector<std::string> prompts;
    std::vector<SteeringPlan> plans;
    std::vector<std::string> script;
    int budget = 100000;
};

DirectionBank tiny_bank() {
    DirectionBank bank;
    bank.model_layers = 8;
    bank.model_hidden = 4;
    for (const std::string id : {"alpha_value", "beta_value", "gamma_value"}) {
        BankEntry e;
        e.direction.value_id = id;
        e.direction.method = EstimatorMethod::mean_diff;
        e.direction.layers[3] = Vec{1, 0, 0, 0};
        e.direction.layers[4] = Vec{0, 1, 0, 0};
        bank.entries[id] = e;
    }
    return bank;
}

GateResult tiny_gate(std::vector<std::pair<std::string, double>> ranked) {
    GateResult g;
    g.input_id = "in1";
    g.k = int(ranked.size());
    for (auto& [id, s] : ranked) g.scores[id] = s;
    g.ranked = std::move(ranked);
    return g;
}

CommentSet set_with(std::vector<std::pair<std::string, std::string>> id_text,
                    std::vector<double> relevance = {}) {
    CommentSet s;
    s.input_id = "in1";
    for (std::size_t i = 0; i < id_text.size(); ++i) {
        ValueComment c;
        c.value_id = id_text[i].first;
        c.text = id_text[i].second;
        c.relevance = i < relevance.size() ? relevance[i] : 1.0;
        s.comments.push_back(std::move(c));
    }
    return s;
}

}  // namespace

TEST_CASE("generate_value_comments: one comment per gated value, rank order") {
    ScriptedBackend backend;
    auto gate = tiny_gate({{"beta_value", 0.9}, {"alpha_value", 0.4}});
    CommentConfig cfg;
    CommentSet set = generate_value_comments(backend, gate, "a situation", tiny_taxonomy(),
                                             tiny_bank(), MagnitudePolicy::fixed(0.5), cfg);
    REQUIRE(set.comments.size() == 2);
    CHECK(set.comments[0].value_id == "beta_value");
    CHECK(set.comments[1].value_id == "alpha_value");
    CHECK(set.comments[0].relevance == 0.9);
    CHECK(set.comments[0].provenance.layers == std::vector<int>{3, 4});
    CHECK(set.comments[0].provenance.coefficients == std::vector<float>{0.5f, 0.5f});
    // Prompt template substitution uses the display name.
    CHECK(backend.prompts[0].find("Beta") != std::string::npos);
    CHECK(backend.prompts[0].find("a situation") != std::string::npos);
    // Every generation carried a plan for the gated value's direction.
    REQUIRE(backend.plans.size() == 2);
    CHECK(backend.plans[0].entries.size() == 2);
}

TEST_CASE("generate_value_comments: missing direction names the value") {
    ScriptedBackend backend;
    auto gate = tiny_gate({{"alpha_value", 0.5}});
    DirectionBank empty;
    empty.model_layers = 8;
    empty.model_hidden = 4;
    CHECK_THROWS_WITH_AS(generate_value_comments(backend, gate, "s", tiny_taxonomy(), empty,
                                                 MagnitudePolicy::fixed(0.5), CommentConfig{}),
                         doctest::Contains("alpha_value"), ValidationError);
}

TEST_CASE("comments are deterministic on the reference model") {
    ReferenceModel model;
    DirectionBank bank;
    bank.model_layers = model.num_layers();
    bank.model_hidden = model.hidden_size();
    BankEntry e;
    e.direction.value_id = "alpha_value";
    e.direction.layers[3] = Vec(64, 0.0f);
    e.direction.layers[3][7] = 1.0f;
    bank.entries["alpha_value"] = e;

    auto gate = tiny_gate({{"alpha_value", 0.7}});
    CommentConfig cfg;
    cfg.max_tokens = 16;
    CommentSet a = generate_value_comments(model, gate, "the same input", tiny_taxonomy(), bank,
                                           MagnitudePolicy::fixed(1.5), cfg);
    CommentSet b = generate_value_comments(model, gate, "the same input", tiny_taxonomy(), bank,
                                           MagnitudePolicy::fixed(1.5), cfg);
    CHECK(a.comments[0].text == b.comments[0].text);

    // lambda = 0 equals the unsteered generation of the same prompt.
    CommentSet zero = generate_value_comments(model, gate, "the same input", tiny_taxonomy(),
                                              bank, MagnitudePolicy::fixed(0.0), cfg);
    const std::string prompt =
        "Please comment on whether Alpha supports, opposes, or applies to the following "
        "situation:\nthe same input\nAnswer:";
    CHECK(zero.comments[0].text == model.generate(prompt, cfg.max_tokens, nullptr, 0));
}

TEST_CASE("compose_overton inlines every comment under its display name") {
    ScriptedBackend backend;
    auto set = set_with({{"alpha_value", "first comment"}, {"beta_value", "second comment"}});
    const std::string out =
        compose_overton(set, "the situation", tiny_taxonomy(), backend, ComposeConfig{});
    REQUIRE(backend.prompts.size() == 1);
    const std::string& prompt = backend.prompts[0];
    CHECK(prompt.find("[Alpha] first comment") != std::string::npos);
    CHECK(prompt.find("[Beta] second comment") != std::string::npos);
    CHECK(prompt.find("the situation") != std::string::npos);
    CHECK(!out.empty());

    CHECK_THROWS_AS(compose_overton(CommentSet{}, "s", tiny_taxonomy(), backend, ComposeConfig{}),
                    ValidationError);
}

TEST_CASE("compose_overton refuses to truncate oversized prompts") {
    ScriptedBackend backend;
    backend.budget = 64;
    auto set = set_with({{"alpha_value", std::string(400, 'x')}});
    CHECK_THROWS_WITH_AS(compose_overton(set, "s", tiny_taxonomy(), backend, ComposeConfig{}),
                         doctest::Contains("alpha_value=400"), ContextOverflowError);
}

TEST_CASE("compose_steerable uses exactly the target comment") {
    ScriptedBackend backend;
    auto set = set_with({{"alpha_value", "alpha text ONLY_A"}, {"beta_value", "beta text ONLY_B"}});
    compose_steerable(set, "beta_value", "situation", tiny_taxonomy(), backend, ComposeConfig{});
    REQUIRE(backend.prompts.size() == 1);
    CHECK(backend.prompts[0].find("ONLY_B") != std::string::npos);
    // Never consults the other comments.
    CHECK(backend.prompts[0].find("ONLY_A") == std::string::npos);
    CHECK(backend.prompts[0].find("Beta") != std::string::npos);

    CHECK_THROWS_AS(compose_steerable(set, "gamma_value", "s", tiny_taxonomy(), backend,
                                      ComposeConfig{}),
                    ValidationError);
}

TEST_CASE("extract_choice") {
    const std::vector<std::string> ab{"A", "B"};
    CHECK(extract_choice("Answer: A", ab) == "A");
    CHECK(extract_choice("I think both", ab) == std::nullopt);
    CHECK(extract_choice("B. definitely, not A later", ab) == "B");
    CHECK(extract_choice("CAB has no standalone labels", ab) == std::nullopt);
    CHECK(extract_choice("ends with B", ab) == "B");
    CHECK(extract_choice("A", ab) == "A");
    CHECK(extract_choice("", ab) == std::nullopt);
    CHECK_THROWS_AS(extract_choice("x", {}), ValidationError);
}

TEST_CASE("compose_distributional") {
    const std::vector<std::string> ab{"A", "B"};

    SUBCASE("one comment choosing A -> {1, 0}") {
        auto set = set_with({{"alpha_value", "Answer: A"}});
        ChoiceDistribution d = compose_distributional({set}, ab, ChoiceWeighting::uniform);
        CHECK(d.probs[0] == doctest::Approx(1.0));
        CHECK(d.probs[1] == doctest::Approx(0.0));
    }
    SUBCASE("A, A, B uniform -> {2/3, 1/3}") {
        auto set = set_with({{"alpha_value", "A"}, {"beta_value", "A"}, {"gamma_value", "B"}});
        ChoiceDistribution d = compose_distributional({set}, ab, ChoiceWeighting::uniform);
        CHECK(d.probs[0] == doctest::Approx(2.0 / 3.0));
        CHECK(d.probs[1] == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("relevance weights 0.9/0.1 -> {0.9, 0.1}") {
        auto set = set_with({{"alpha_value", "A"}, {"beta_value", "B"}}, {0.9, 0.1});
        ChoiceDistribution d = compose_distributional({set}, ab, ChoiceWeighting::relevance);
        CHECK(d.probs[0] == doctest::Approx(0.9));
        CHECK(d.probs[1] == doctest::Approx(0.1));
    }
    SUBCASE("unparseable comments are dropped before renormalization") {
        auto set = set_with({{"alpha_value", "A"}, {"beta_value", "no choice here"}});
        ChoiceDistribution d = compose_distributional({set}, ab, ChoiceWeighting::uniform);
        CHECK(d.probs[0] == doctest::Approx(1.0));
    }
    SUBCASE("impute_uniform spreads unparsed mass evenly") {
        auto set = set_with({{"alpha_value", "A"}, {"beta_value", "no choice here"}});
        ChoiceDistribution d = compose_distributional({set}, ab, ChoiceWeighting::uniform,
                                                      UnparsedPolicy::impute_uniform);
        CHECK(d.probs[0] == doctest::Approx(0.75));
        CHECK(d.probs[1] == doctest::Approx(0.25));
    }
    SUBCASE("zero parseable comments is an explicit error") {
        auto set = set_with({{"alpha_value", "nothing"}, {"beta_value", "nope"}});
        CHECK_THROWS_AS(compose_distributional({set}, ab, ChoiceWeighting::uniform),
                        ValidationError);
    }
    SUBCASE("uniform weighting is permutation invariant") {
        auto fwd = set_with({{"alpha_value", "A"}, {"beta_value", "B"}, {"gamma_value", "A"}});
        auto rev = set_with({{"gamma_value", "A"}, {"beta_value", "B"}, {"alpha_value", "A"}});
        ChoiceDistribution df = compose_distributional({fwd}, ab, ChoiceWeighting::uniform);
        ChoiceDistribution dr = compose_distributional({rev}, ab, ChoiceWeighting::uniform);
        CHECK(df.probs == dr.probs);
    }
    SUBCASE("output always validates") {
        auto set = set_with({{"alpha_value", "B"}, {"beta_value", "garbled"},
                             {"gamma_value", "A then B"}});
        ChoiceDistribution d = compose_distributional({set}, ab, ChoiceWeighting::uniform);
        d.validate();
        double sum = 0;
        for (double p : d.probs) sum += p;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("needs at least two options") {
        auto set = set_with({{"alpha_value", "A"}});
        CHECK_THROWS_AS(compose_distributional({set}, {"A"}, ChoiceWeighting::uniform),
                        ValidationError);
    }
}

TEST_CASE("choice distribution validation") {
    ChoiceDistribution bad_sum{{"A", "B"}, {0.6, 0.6}};
    CHECK_THROWS_AS(bad_sum.validate(), ValidationError);
    ChoiceDistribution negative{{"A", "B"}, {1.5, -0.5}};
    CHECK_THROWS_AS(negative.validate(), ValidationError);
    ChoiceDistribution mismatch{{"A", "B"}, {1.0}};
    CHECK_THROWS_AS(mismatch.validate(), ValidationError);
    ChoiceDistribution ok{{"A", "B"}, {0.25, 0.75}};
    ok.validate();
}
