#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "valsteer/pipeline.hpp"
#include "valsteer/sha256.hpp"

using namespace valsteer;
namespace fs = std::filesystem;

namespace {

const fs::path kDataDir = VALSTEER_DATA_DIR;

// Fresh scratch directory per test run.
fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("valsteer_pipe_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

json smoke_config_doc(const std::string& mode, const fs::path& out_dir) {
    json cfg = {
        {"seed", 7},
        {"taxonomy", (kDataDir / "taxonomy.json").string()},
        {"contrastive_corpus", (kDataDir / "contrastive_pairs.jsonl").string()},
        {"output_dir", out_dir.string()},
        {"mode", mode},
        {"scorer", "stub"},
        {"k", 3},
        {"estimator", {{"method", "mean_diff"}}},
        {"magnitude", {{"kind", "fixed"}, {"alpha", 0.5}}},
        {"backend", {{"kind", "reference"}, {"model_seed", 1}}},
        {"comment_max_tokens", 16},
        {"compose_max_tokens", 24},
        {"tau", 0.05},
    };
    if (mode == "overton") {
        cfg["inputs"] = (kDataDir / "smoke/inputs_overton.jsonl").string();
        cfg["gold"] = (kDataDir / "smoke/gold_overton.jsonl").string();
    } else if (mode == "steerable") {
        cfg["inputs"] = (kDataDir / "smoke/inputs_steerable.jsonl").string();
        cfg["gold"] = (kDataDir / "smoke/gold_steerable.jsonl").string();
    } else {
        cfg["inputs"] = (kDataDir / "smoke/inputs_distributional.jsonl").string();
        cfg["gold"] = (kDataDir / "smoke/gold_distributional.jsonl").string();
        cfg["options"] = {"A", "B"};
        cfg["unparsed"] = "impute_uniform";
    }
    return cfg;
}

RunConfig config_from_doc(const json& doc, const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("valsteer_cfg_" + name + ".json");
    std::ofstream out(p, std::ios::trunc);
    out << doc.dump(2);
    out.close();
    return load_run_config(p);
}

std::map<std::string, std::string> artifact_hashes(const json& manifest) {
    std::map<std::string, std::string> out;
    for (const json& stage : manifest.at("stages"))
        for (const json& a : stage.at("artifacts"))
            out[a.at("path").get<std::string>()] = a.at("sha256").get<std::string>();
    return out;
}

}  // namespace

TEST_CASE("validate_config reports every violation at once") {
    RunConfig cfg;  // empty: many problems
    const auto violations = validate_config(cfg);
    CHECK(violations.size() >= 4);

    // k = 0 is reported alongside the rest, not first-failure.
    RunConfig bad_k = cfg;
    bad_k.k = 0;
    const auto vk = validate_config(bad_k);
    bool saw_k = false;
    for (const auto& v : vk) saw_k = saw_k || v.find("k must be >= 1") != std::string::npos;
    CHECK(saw_k);
    CHECK(vk.size() > violations.size() - 1);
}

TEST_CASE("valid smoke config validates cleanly") {
    const auto dir = scratch_dir("validate_ok");
    RunConfig cfg = config_from_doc(smoke_config_doc("overton", dir), "validate_ok");
    const auto violations = validate_config(cfg);
    for (const auto& v : violations) MESSAGE(v);
    CHECK(violations.empty());
}

TEST_CASE("missing seed is a violation") {
    const auto dir = scratch_dir("no_seed");
    json doc = smoke_config_doc("overton", dir);
    doc.erase("seed");
    RunConfig cfg = config_from_doc(doc, "no_seed");
    const auto violations = validate_config(cfg);
    bool saw = false;
    for (const auto& v : violations) saw = saw || v.find("seed") != std::string::npos;
    CHECK(saw);
}

TEST_CASE("overton smoke pipeline is hash-stable across reruns") {
    const auto dir1 = scratch_dir("ov_run1");
    const auto dir2 = scratch_dir("ov_run2");
    RunManifest m1 = run_pipeline(config_from_doc(smoke_config_doc("overton", dir1), "ov1"));
    RunManifest m2 = run_pipeline(config_from_doc(smoke_config_doc("overton", dir2), "ov2"));

    CHECK(m1.doc.at("status") == "ok");
    const auto h1 = artifact_hashes(m1.doc);
    const auto h2 = artifact_hashes(m2.doc);
    REQUIRE(!h1.empty());
    CHECK(h1 == h2);

    // Expected artifacts all exist.
    for (const char* name : {"bank.vdb", "gates.jsonl", "comments.jsonl", "responses.jsonl",
                             "report.json", "manifest.json"})
        CHECK_MESSAGE(fs::exists(dir1 / name), name);

    // The recorded hash matches the bytes on disk.
    for (const auto& [rel, hash] : h1)
        CHECK(sha256_hex(read_file(dir1 / rel)) == hash);
}

TEST_CASE("steerable smoke pipeline completes with forced target comments") {
    const auto dir = scratch_dir("steer_run");
    RunManifest m = run_pipeline(config_from_doc(smoke_config_doc("steerable", dir), "st"));
    CHECK(m.doc.at("status") == "ok");

    // Forced inclusion: each input's comments contain its target value
    // even when the stub gate would not rank it.
    std::map<std::string, std::string> targets;
    for (const json& in : read_jsonl(kDataDir / "smoke/inputs_steerable.jsonl"))
        targets[in.at("input_id")] = in.at("target_value");
    std::size_t checked = 0;
    for (const json& rec : read_jsonl(dir / "comments.jsonl")) {
        const std::string& want = targets.at(rec.at("input_id"));
        bool found = false;
        for (const json& c : rec.at("comments")) found = found || c.at("value_id") == want;
        CHECK_MESSAGE(found, rec.at("input_id").get<std::string>());
        ++checked;
    }
    CHECK(checked == targets.size());

    for (const json& resp : read_jsonl(dir / "responses.jsonl"))
        CHECK(resp.at("target_value") == targets.at(resp.at("input_id")));
}

TEST_CASE("distributional smoke pipeline emits valid distributions and a JS report") {
    const auto dir = scratch_dir("dist_run");
    json doc = smoke_config_doc("distributional", dir);
    doc["ci_iterations"] = 100;
    RunManifest m = run_pipeline(config_from_doc(doc, "di"));
    CHECK(m.doc.at("status") == "ok");

    for (const json& resp : read_jsonl(dir / "responses.jsonl")) {
        ChoiceDistribution d{resp.at("options").get<std::vector<std::string>>(),
                             resp.at("probs").get<std::vector<double>>()};
        d.validate();
    }
    const json report = json::parse(read_file(dir / "report.json"));
    const double js = report.at("js").at("mean_js_distance").get<double>();
    CHECK(js >= 0.0);
    CHECK(js <= 1.0);
    REQUIRE(report.contains("ci"));
    CHECK(report.at("ci").at("iterations") == 100);
    CHECK(report.at("ci").at("lower").get<double>() <= report.at("ci").at("upper").get<double>());
}

TEST_CASE("missing bank aborts at the compose stage, gate artifacts preserved") {
    const auto dir = scratch_dir("missing_bank");
    json doc = smoke_config_doc("overton", dir);
    doc["bank"] = (dir / "nonexistent.vdb").string();
    doc.erase("contrastive_corpus");
    RunConfig cfg = config_from_doc(doc, "missing_bank");

    try {
        run_pipeline(cfg);
        FAIL("expected PipelineError");
    } catch (const PipelineError& e) {
        CHECK(e.stage == "compose");
    }
    CHECK(fs::exists(dir / "gates.jsonl"));
    CHECK_FALSE(fs::exists(dir / "responses.jsonl"));

    const json manifest = json::parse(read_file(dir / "manifest.json"));
    CHECK(manifest.at("status") == "failed");
    CHECK(manifest.at("failed_stage") == "compose");
    bool gate_recorded = false;
    for (const json& stage : manifest.at("stages"))
        gate_recorded = gate_recorded || stage.at("name") == "gate";
    CHECK(gate_recorded);
}

TEST_CASE("structurally invalid config aborts before any stage") {
    const auto dir = scratch_dir("bad_struct");
    json doc = smoke_config_doc("overton", dir);
    doc["k"] = 0;
    CHECK_THROWS_AS(run_pipeline(config_from_doc(doc, "bad_struct")), ValidationError);
    CHECK_FALSE(fs::exists(dir / "gates.jsonl"));
}

TEST_CASE("gates artifact keys stay aligned with inputs") {
    const auto dir = scratch_dir("gate_keys");
    RunManifest m = run_pipeline(config_from_doc(smoke_config_doc("overton", dir), "gk"));
    (void)m;
    std::set<std::string> input_ids, gate_ids;
    for (const json& in : read_jsonl(kDataDir / "smoke/inputs_overton.jsonl"))
        input_ids.insert(in.at("input_id"));
    for (const json& g : read_jsonl(dir / "gates.jsonl")) {
        gate_ids.insert(g.at("input_id"));
        CHECK(g.at("k") == 3);
        CHECK(g.at("ranked").size() == 3);
        CHECK(g.at("scores").size() == 31);  // exhaustive scoring over the taxonomy
    }
    CHECK(input_ids == gate_ids);
}

TEST_CASE("evaluate_files matches direct metric computation for distributional gold") {
    const auto dir = scratch_dir("eval_direct");
    // Hand-written predictions against the bundled gold.
    std::vector<json> preds{
        {{"input_id", "di1"}, {"mode", "distributional"}, {"options", {"A", "B"}},
         {"probs", {0.5, 0.5}}},
        {{"input_id", "di2"}, {"mode", "distributional"}, {"options", {"A", "B"}},
         {"probs", {0.8, 0.2}}},
    };
    write_jsonl(dir / "preds.jsonl", preds);
    const ValueTaxonomy taxonomy = load_taxonomy(kDataDir / "taxonomy.json");
    LexicalOverlapScorer scorer;
    json report = evaluate_files("distributional", dir / "preds.jsonl",
                                 kDataDir / "smoke/gold_distributional.jsonl", taxonomy, scorer,
                                 0.5, 0, 1);

    ChoiceDistribution p1{{"A", "B"}, {0.5, 0.5}}, g1{{"A", "B"}, {0.35, 0.65}};
    ChoiceDistribution p2{{"A", "B"}, {0.8, 0.2}}, g2{{"A", "B"}, {0.8, 0.2}};
    const double expected = 0.5 * (js_distance(p1, g1) + js_distance(p2, g2));
    CHECK(report.at("js").at("mean_js_distance").get<double>() == doctest::Approx(expected));
}
