#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

#include "line_server.hpp"
#include "valsteer/relevance.hpp"

using namespace valsteer;

namespace {

// Taxonomy of synthetic ids; descriptions equal ids so table scorers key
// off them directly.
ValueTaxonomy make_taxonomy(const std::vector<std::string>& ids) {
    std::vector<ValueSpec> values;
    for (const auto& id : ids)
        values.push_back({id, id, ValueCategory::schwartz, id});
    return ValueTaxonomy("test", values, {});
}

class TableScorer final : public RelevanceScorer {
public:
    explicit TableScorer(std::map<std::string, double> table) : table_(std::move(table)) {}
    double score(const std::string&, const std::string& description) override {
        auto it = table_.find(description);
        return it == table_.end() ? 0.0 : it->second;
    }
    bool share_safe() const override { return true; }

private:
    std::map<std::string, double> table_;
};

class ConstantScorer final : public RelevanceScorer {
public:
    explicit ConstantScorer(double v) : v_(v) {}
    double score(const std::string&, const std::string&) override { return v_; }
    bool share_safe() const override { return true; }

private:
    double v_;
};

class ThrowingScorer final : public RelevanceScorer {
public:
    double score(const std::string&, const std::string& description) override {
        if (description == "bad_value") throw std::runtime_error("boom");
        return 0.5;
    }
    bool share_safe() const override { return true; }
};

}  // namespace

TEST_CASE("constant scorer, k=3: ties break by ascending value id") {
    std::vector<std::string> ids;
    for (char c = 'a'; c <= 'z'; ++c) ids.push_back(std::string("v_") + c);
    ids.resize(31 - 5);
    for (int i = 0; i < 5; ++i) ids.push_back("w_" + std::to_string(i));
    auto tax = make_taxonomy(ids);
    ConstantScorer scorer(0.5);
    GateResult g = gate_top_k("anything", "x", tax, scorer, 3);
    std::vector<std::string> sorted_ids = ids;
    std::sort(sorted_ids.begin(), sorted_ids.end());
    REQUIRE(g.ranked.size() == 3);
    CHECK(g.ranked[0].first == sorted_ids[0]);
    CHECK(g.ranked[1].first == sorted_ids[1]);
    CHECK(g.ranked[2].first == sorted_ids[2]);
    CHECK(g.scores.size() == ids.size());  // exhaustive pass
}

TEST_CASE("table scorer {a:0.9, b:0.2, c:0.7}, k=2 -> [(a,0.9),(c,0.7)]") {
    auto tax = make_taxonomy({"a", "b", "c"});
    TableScorer scorer({{"a", 0.9}, {"b", 0.2}, {"c", 0.7}});
    GateResult g = gate_top_k("x", "x", tax, scorer, 2);
    REQUIRE(g.ranked.size() == 2);
    CHECK(g.ranked[0] == std::pair<std::string, double>{"a", 0.9});
    CHECK(g.ranked[1] == std::pair<std::string, double>{"c", 0.7});
}

TEST_CASE("k >= |V| returns the full ranking") {
    auto tax = make_taxonomy({"a", "b", "c"});
    ConstantScorer scorer(0.1);
    CHECK(gate_top_k("x", "x", tax, scorer, 99).ranked.size() == 3);
}

TEST_CASE("scorer failure carries the value id") {
    auto tax = make_taxonomy({"good_value", "bad_value"});
    ThrowingScorer scorer;
    CHECK_THROWS_WITH_AS(gate_top_k("x", "x", tax, scorer, 2),
                         doctest::Contains("bad_value"), Error);
}

TEST_CASE("gate preconditions") {
    auto tax = make_taxonomy({"a"});
    ConstantScorer scorer(0.5);
    CHECK_THROWS_AS(gate_top_k("x", "x", tax, scorer, 0), ValidationError);
    auto empty = make_taxonomy({});
    CHECK_THROWS_AS(gate_top_k("x", "x", empty, scorer, 1), ValidationError);
}

TEST_CASE("property: permutation invariance and score monotonicity") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 4 + int(rng() % 12);
        std::vector<std::string> ids;
        std::map<std::string, double> table;
        for (int i = 0; i < n; ++i) {
            ids.push_back("val_" + std::to_string(i));
            table[ids.back()] = double(rng() % 1000) / 999.0;
        }
        const int k = 1 + int(rng() % n);
        TableScorer scorer(table);

        auto tax_a = make_taxonomy(ids);
        std::vector<std::string> shuffled = ids;
        for (std::size_t i = shuffled.size() - 1; i > 0; --i)
            std::swap(shuffled[i], shuffled[rng() % (i + 1)]);
        auto tax_b = make_taxonomy(shuffled);

        GateResult ga = gate_top_k("x", "x", tax_a, scorer, k);
        GateResult gb = gate_top_k("x", "x", tax_b, scorer, k);
        CHECK(ga.ranked == gb.ranked);

        // Raising one value's score never lowers its rank.
        const std::string& bump = ids[rng() % ids.size()];
        auto rank_of = [&](const GateResult& g) {
            for (std::size_t i = 0; i < g.ranked.size(); ++i)
                if (g.ranked[i].first == bump) return int(i);
            return int(g.ranked.size());
        };
        const int before = rank_of(ga);
        table[bump] = std::min(1.0, table[bump] + 0.5);
        TableScorer bumped(table);
        const int after = rank_of(gate_top_k("x", "x", tax_a, bumped, k));
        CHECK(after <= before);
    }
}

TEST_CASE("force_include keeps invariants and cardinality") {
    auto tax = make_taxonomy({"a", "b", "c", "d"});
    TableScorer scorer({{"a", 0.9}, {"b", 0.8}, {"c", 0.7}, {"d", 0.1}});
    GateResult g = gate_top_k("x", "x", tax, scorer, 2);
    force_include(g, "d");
    REQUIRE(g.ranked.size() == 2);
    CHECK(g.ranked[0].first == "a");
    CHECK(g.ranked[1].first == "d");  // evicted b, kept sorted
    force_include(g, "a");            // already present: no-op
    CHECK(g.ranked.size() == 2);
}

TEST_CASE("selection statistics") {
    auto tax = make_taxonomy({"x", "y", "z"});

    SUBCASE("top-1 everywhere -> 100") {
        TableScorer scorer({{"x", 0.9}, {"y", 0.5}, {"z", 0.1}});
        std::vector<GateResult> results;
        for (int i = 0; i < 10; ++i)
            results.push_back(gate_top_k("t", "i" + std::to_string(i), tax, scorer, 2));
        SelectionStats stats = selection_statistics(results, tax);
        CHECK(stats.per_value.at("x").top1_pct == doctest::Approx(100.0));
        CHECK(stats.per_value.at("z").topk_pct == doctest::Approx(0.0));
        CHECK(stats.per_value.at("x").avg_score == doctest::Approx(0.9));
        // Exhaustive scoring means absent-from-Top-k values still average
        // their raw scores.
        CHECK(stats.per_value.at("z").avg_score == doctest::Approx(0.1));
    }

    SUBCASE("2 results, first in one and second in the other -> 50/100") {
        TableScorer s1({{"x", 0.9}, {"y", 0.5}, {"z", 0.1}});
        TableScorer s2({{"x", 0.4}, {"y", 0.5}, {"z", 0.1}});
        std::vector<GateResult> results{gate_top_k("t", "a", tax, s1, 2),
                                        gate_top_k("t", "b", tax, s2, 2)};
        SelectionStats stats = selection_statistics(results, tax);
        CHECK(stats.per_value.at("x").top1_pct == doctest::Approx(50.0));
        CHECK(stats.per_value.at("x").topk_pct == doctest::Approx(100.0));
    }

    SUBCASE("top1 percentages sum to 100") {
        std::mt19937_64 rng(5);
        std::vector<GateResult> results;
        for (int i = 0; i < 25; ++i) {
            TableScorer scorer({{"x", double(rng() % 100)}, {"y", double(rng() % 100)},
                                {"z", double(rng() % 100)}});
            results.push_back(gate_top_k("t", "i" + std::to_string(i), tax, scorer, 2));
        }
        SelectionStats stats = selection_statistics(results, tax);
        double total = 0.0;
        for (const auto& [_, s] : stats.per_value) total += s.top1_pct;
        CHECK(total == doctest::Approx(100.0));
    }

    SUBCASE("mixed k and empty input are rejected") {
        TableScorer scorer({{"x", 0.9}});
        auto r1 = gate_top_k("t", "a", tax, scorer, 1);
        auto r2 = gate_top_k("t", "b", tax, scorer, 2);
        CHECK_THROWS_AS(selection_statistics({r1, r2}, tax), ValidationError);
        CHECK_THROWS_AS(selection_statistics({}, tax), ValidationError);
    }
}

TEST_CASE("lexical overlap scorer is a deterministic Jaccard in [0,1]") {
    LexicalOverlapScorer scorer;
    const double s1 = scorer.score("the fair trial was fair", "fair treatment and trial");
    CHECK(s1 == scorer.score("the fair trial was fair", "fair treatment and trial"));
    CHECK(s1 > 0.0);
    CHECK(s1 <= 1.0);
    // {the, fair, trial, was} vs {fair, treatment, and, trial}: 2 shared, 6 union.
    CHECK(s1 == doctest::Approx(2.0 / 6.0));
    CHECK(scorer.score("abc", "xyz") == 0.0);
    CHECK(scorer.score("", "anything") == 0.0);
}

TEST_CASE("entailment scorer speaks the line protocol") {
    testutil::LineServer server([](const nlohmann::json& req) -> nlohmann::json {
        // Echo-check the wire format.
        REQUIRE(req.contains("premise"));
        REQUIRE(req.contains("hypothesis"));
        const std::string hyp = req.at("hypothesis").get<std::string>();
        return {{"entailment", hyp.find("care") != std::string::npos ? 0.92 : 0.08}};
    });

    EntailmentScorer scorer(parse_endpoint(server.endpoint()));
    CHECK(scorer.render_hypothesis("care for others") ==
          "This situation involves the value of care for others.");
    CHECK(scorer.score("someone helps a friend", "care for others") == doctest::Approx(0.92));
    CHECK(scorer.score("someone helps a friend", "rules") == doctest::Approx(0.08));

    // Full gate pass through the protocol.
    auto tax = make_taxonomy({"care", "rules"});
    GateResult g = gate_top_k("helping", "x", tax, scorer, 1);
    REQUIRE(g.ranked.size() == 1);
    CHECK(g.ranked[0].first == "care");
}

TEST_CASE("entailment scorer rejects malformed responses") {
    testutil::LineServer server(
        [](const nlohmann::json&) -> nlohmann::json { return {{"wrong_field", 1}}; });
    EntailmentScorer scorer(parse_endpoint(server.endpoint()));
    CHECK_THROWS_AS(scorer.score("a", "b"), ProtocolError);
}

TEST_CASE("endpoint parsing") {
    const Endpoint ep = parse_endpoint("127.0.0.1:8080");
    CHECK(ep.host == "127.0.0.1");
    CHECK(ep.port == 8080);
    CHECK_THROWS_AS(parse_endpoint("nohost"), ValidationError);
    CHECK_THROWS_AS(parse_endpoint("host:"), ValidationError);
    CHECK_THROWS_AS(parse_endpoint("host:99999"), ValidationError);
}
