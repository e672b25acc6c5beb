#include "valsteer/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <memory>
#include <set>

#include "valsteer/external_backend.hpp"
#include "valsteer/reference_model.hpp"
#include "valsteer/sha256.hpp"

namespace valsteer {

namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::unique_ptr<RelevanceScorer> make_scorer(const std::string& kind) {
    if (kind == "stub") return std::make_unique<LexicalOverlapScorer>();
    if (kind == "nli") {
        const char* endpoint = std::getenv(kEndpointEnvVar);
        if (!endpoint)
            throw ValidationError(std::string("scorer \"nli\" needs ") + kEndpointEnvVar +
                                  "=host:port in the environment");
        return std::make_unique<EntailmentScorer>(parse_endpoint(endpoint));
    }
    throw ValidationError("unknown scorer \"" + kind + "\"");
}

std::unique_ptr<ModelBackend> make_backend(const RunConfig::Backend& cfg) {
    if (cfg.kind == "reference") {
        ReferenceModel::Config rc;
        rc.seed = cfg.model_seed;
        if (cfg.layers > 0) rc.layers = cfg.layers;
        if (cfg.hidden > 0) rc.hidden = cfg.hidden;
        if (cfg.max_context > 0) rc.max_seq = cfg.max_context;
        return std::make_unique<ReferenceModel>(rc);
    }
    if (cfg.kind == "external") {
        const char* endpoint = std::getenv(kEndpointEnvVar);
        if (!endpoint)
            throw ValidationError(std::string("backend \"external\" needs ") + kEndpointEnvVar +
                                  "=host:port in the environment");
        ExternalBackend::Info info{cfg.layers, cfg.hidden, cfg.max_context};
        return std::make_unique<ExternalBackend>(parse_endpoint(endpoint), info);
    }
    throw ValidationError("unknown backend kind \"" + cfg.kind + "\"");
}

struct PipelineInput {
    std::string input_id;
    std::string text;
    std::string target_value;  // steerable, optional
};

std::vector<PipelineInput> load_inputs(const fs::path& path) {
    std::vector<PipelineInput> out;
    std::set<std::string> seen;
    for (const json& rec : read_jsonl(path)) {
        PipelineInput in;
        in.input_id = rec.at("input_id").get<std::string>();
        in.text = rec.at("text").get<std::string>();
        in.target_value = rec.value("target_value", "");
        if (in.text.empty()) throw ValidationError(in.input_id + ": empty input text");
        if (!seen.insert(in.input_id).second)
            throw ValidationError("duplicate input_id \"" + in.input_id + "\"");
        out.push_back(std::move(in));
    }
    if (out.empty()) throw ValidationError(path.string() + ": no inputs");
    return out;
}

}  // namespace

RunConfig load_run_config(const fs::path& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": config parse failure: " + e.what());
    }
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");

    RunConfig c;
    c.echo = doc;
    if (doc.contains("seed")) {
        c.seed = doc.at("seed").get<std::uint64_t>();
        c.seed_set = true;
    }
    if (doc.contains("taxonomy")) c.taxonomy = resolve(base, doc.at("taxonomy"));
    if (doc.contains("inputs")) c.inputs = resolve(base, doc.at("inputs"));
    if (doc.contains("contrastive_corpus"))
        c.contrastive_corpus = resolve(base, doc.at("contrastive_corpus"));
    if (doc.contains("bank")) c.bank = resolve(base, doc.at("bank"));
    if (doc.contains("gold")) c.gold = resolve(base, doc.at("gold"));
    if (doc.contains("output_dir")) c.output_dir = resolve(base, doc.at("output_dir"));

    c.mode = doc.value("mode", "");
    c.scorer = doc.value("scorer", "stub");
    c.k = doc.value("k", kDefaultTopK);
    if (doc.contains("estimator")) {
        const json& je = doc.at("estimator");
        c.method = estimator_method_from_string(je.value("method", "mean_diff"));
        c.estimation.normalize = je.value("normalize", false);
        if (je.contains("position_policy"))
            c.estimation.position_policy =
                position_policy_from_string(je.at("position_policy").get<std::string>());
        c.estimation.train_fraction = je.value("train_fraction", 0.8);
        c.estimation.accuracy_threshold = je.value("accuracy_threshold", 0.8);
        c.estimation.max_selected_layers = je.value("max_selected_layers", 5);
        if (je.contains("probe")) {
            const json& jp = je.at("probe");
            c.estimation.probe.reg_strength = jp.value("reg_strength", 1e-3);
            c.estimation.probe.max_iters = jp.value("max_iters", 500);
            c.estimation.probe.learning_rate = jp.value("learning_rate", 1.0);
        }
    }
    if (doc.contains("layers")) c.estimation.layers = doc.at("layers").get<std::vector<int>>();
    c.estimation.seed = c.seed;

    if (doc.contains("magnitude")) {
        const json& jm = doc.at("magnitude");
        const std::string kind = jm.value("kind", "fixed");
        if (kind == "fixed") {
            c.magnitude = MagnitudePolicy::fixed(jm.value("alpha", kDefaultAlpha));
        } else if (kind == "per_value") {
            std::map<std::string, double> table;
            if (jm.contains("table"))
                table = jm.at("table").get<std::map<std::string, double>>();
            c.magnitude = MagnitudePolicy::per_value(std::move(table),
                                                     jm.value("alpha", kDefaultAlpha));
        } else if (kind == "calibrated") {
            c.magnitude = MagnitudePolicy::calibrated(jm.value("p0", kDefaultP0),
                                                      jm.value("epsilon_max", 0.0));
        } else {
            throw ValidationError("unknown magnitude kind \"" + kind + "\"");
        }
    }
    if (doc.contains("token_policy"))
        c.token_policy = token_policy_from_string(doc.at("token_policy").get<std::string>());

    if (doc.contains("backend")) {
        const json& jb = doc.at("backend");
        c.backend.kind = jb.value("kind", "reference");
        c.backend.model_seed = jb.value("model_seed", std::uint64_t(1));
        c.backend.layers = jb.value("layers", 0);
        c.backend.hidden = jb.value("hidden", 0);
        c.backend.max_context = jb.value("max_context", 0);
    }
    c.comment_max_tokens = doc.value("comment_max_tokens", 48);
    c.compose_max_tokens = doc.value("compose_max_tokens", 64);
    if (doc.contains("options")) c.options = doc.at("options").get<std::vector<std::string>>();
    if (doc.contains("weighting"))
        c.weighting = choice_weighting_from_string(doc.at("weighting").get<std::string>());
    if (doc.contains("unparsed")) {
        const std::string u = doc.at("unparsed").get<std::string>();
        if (u == "drop") c.unparsed = UnparsedPolicy::drop;
        else if (u == "impute_uniform") c.unparsed = UnparsedPolicy::impute_uniform;
        else throw ValidationError("unknown unparsed policy \"" + u + "\"");
    }
    c.target_value = doc.value("target_value", "");
    c.tau = doc.value("tau", kDefaultCoverageTau);
    c.ci_iterations = doc.value("ci_iterations", 0);
    return c;
}

std::vector<std::string> validate_config(const RunConfig& c) {
    std::vector<std::string> violations;
    auto need_file = [&](const fs::path& p, const std::string& what) {
        if (p.empty())
            violations.push_back(what + " path missing");
        else if (!fs::exists(p))
            violations.push_back(what + " file does not exist: " + p.string());
    };

    if (!c.seed_set) violations.push_back("seed is mandatory (no wall-clock default)");
    if (c.k < 1) violations.push_back("k must be >= 1");
    if (c.mode != "overton" && c.mode != "steerable" && c.mode != "distributional")
        violations.push_back("mode must be overton, steerable, or distributional");
    if (c.scorer != "stub" && c.scorer != "nli")
        violations.push_back("scorer must be stub or nli");
    if (c.output_dir.empty()) violations.push_back("output_dir missing");
    if (!(c.tau > 0.0 && c.tau < 1.0)) violations.push_back("tau must lie in (0,1)");
    if (c.ci_iterations < 0) violations.push_back("ci_iterations must be >= 0");
    if (c.comment_max_tokens < 1) violations.push_back("comment_max_tokens must be >= 1");
    if (c.compose_max_tokens < 1) violations.push_back("compose_max_tokens must be >= 1");

    need_file(c.taxonomy, "taxonomy");
    need_file(c.inputs, "inputs");
    if (c.bank.empty())
        need_file(c.contrastive_corpus, "contrastive_corpus (no bank given)");
    else
        need_file(c.bank, "bank");
    if (!c.gold.empty()) need_file(c.gold, "gold");

    if (c.mode == "distributional" && c.options.size() < 2)
        violations.push_back("distributional mode needs >= 2 options");
    if (c.magnitude.kind == MagnitudePolicy::Kind::calibrated) {
        if (!(c.magnitude.calibration.p0 > 0.0 && c.magnitude.calibration.p0 < 1.0))
            violations.push_back("calibrated magnitude needs P0 strictly in (0,1)");
        if (c.method != EstimatorMethod::probe && c.bank.empty())
            violations.push_back("calibrated magnitude needs probe-based directions");
    }
    if (c.backend.kind == "external" &&
        (c.backend.layers < 1 || c.backend.hidden < 1 || c.backend.max_context < 1))
        violations.push_back("external backend needs layers/hidden/max_context declared");
    if (!(c.estimation.train_fraction > 0.0 && c.estimation.train_fraction < 1.0))
        violations.push_back("estimator train_fraction must lie in (0,1)");
    return violations;
}

namespace {

struct ManifestBuilder {
    json stages = json::array();
    json current_artifacts = json::array();
    std::string current_stage;
    fs::path out_dir;

    void begin(const std::string& name) {
        current_stage = name;
        current_artifacts = json::array();
    }
    void artifact(const fs::path& path) {
        const std::string bytes = read_file(path);
        current_artifacts.push_back({{"path", fs::relative(path, out_dir).string()},
                                     {"sha256", sha256_hex(bytes)}});
    }
    void end() {
        stages.push_back({{"name", current_stage}, {"artifacts", current_artifacts}});
        current_stage.clear();
    }
};

json comment_to_json(const ValueComment& c) {
    return {{"value_id", c.value_id},
            {"relevance", c.relevance},
            {"text", c.text},
            {"method", to_string(c.provenance.method)},
            {"layers", c.provenance.layers},
            {"coefficients", c.provenance.coefficients}};
}

}  // namespace

RunManifest run_pipeline(const RunConfig& config) {
    // Structural violations (bad fields) abort before any work. Files that
    // only a later stage reads are checked when that stage starts, so
    // earlier artifacts survive a bad path; the `validate` entry point is
    // the strict full check.
    {
        std::vector<std::string> structural;
        for (const std::string& v : validate_config(config)) {
            const bool file_missing = v.find("does not exist") != std::string::npos;
            if (!file_missing) structural.push_back(v);
        }
        if (!structural.empty()) {
            std::string msg = "config invalid:";
            for (const std::string& v : structural) msg += "\n  - " + v;
            throw ValidationError(msg);
        }
    }

    fs::create_directories(config.output_dir);
    ManifestBuilder mb;
    mb.out_dir = config.output_dir;

    json manifest = {{"config", config.echo},
                     {"seed", config.seed},
                     {"mode", config.mode},
                     {"status", "ok"}};
    const fs::path manifest_path = config.output_dir / "manifest.json";
    auto write_manifest = [&]() {
        manifest["stages"] = mb.stages;
        write_file(manifest_path, manifest.dump(2) + "\n");
    };
    auto fail = [&](const std::string& stage, const std::string& why) -> PipelineError {
        manifest["status"] = "failed";
        manifest["failed_stage"] = stage;
        manifest["error"] = why;
        write_manifest();
        return PipelineError(stage, why + " (partial artifacts kept under " +
                                         config.output_dir.string() + ")");
    };

    ValueTaxonomy taxonomy;
    std::vector<PipelineInput> inputs;
    std::unique_ptr<RelevanceScorer> scorer;
    std::unique_ptr<ModelBackend> backend;
    try {
        taxonomy = load_taxonomy(config.taxonomy);
        inputs = load_inputs(config.inputs);
        scorer = make_scorer(config.scorer);
        backend = make_backend(config.backend);
    } catch (const std::exception& e) {
        throw fail("setup", e.what());
    }

    // -- estimate ---------------------------------------------------------
    fs::path bank_path = config.bank;
    if (bank_path.empty()) {
        mb.begin("estimate");
        try {
            auto datasets = load_contrastive_dataset(config.contrastive_corpus, taxonomy);
            DirectionBank bank;
            bank.model_layers = backend->num_layers();
            bank.model_hidden = backend->hidden_size();
            for (const auto& [value_id, ds] : datasets) {
                EstimationResult res =
                    estimate_directions(*backend, ds, config.method, config.estimation);
                BankEntry entry;
                entry.direction = std::move(res.direction);
                entry.probes = std::move(res.probes);
                bank.entries[value_id] = std::move(entry);
            }
            bank_path = config.output_dir / "bank.vdb";
            save_bank(bank_path, bank);
            mb.artifact(bank_path);
        } catch (const std::exception& e) {
            throw fail("estimate", e.what());
        }
        mb.end();
    }

    // -- gate --------------------------------------------------------------
    const fs::path gates_path = config.output_dir / "gates.jsonl";
    std::vector<GateResult> gates;
    mb.begin("gate");
    try {
        std::vector<json> records;
        for (const PipelineInput& in : inputs) {
            GateResult gate = gate_top_k(in.text, in.input_id, taxonomy, *scorer, config.k);
            const std::string target =
                !in.target_value.empty() ? in.target_value : config.target_value;
            if (config.mode == "steerable" && !target.empty()) {
                if (!taxonomy.contains(target))
                    throw ValidationError(in.input_id + ": target value \"" + target +
                                          "\" not in taxonomy");
                force_include(gate, target);
            }
            json ranked = json::array();
            for (const auto& [id, s] : gate.ranked) ranked.push_back({{"value_id", id}, {"score", s}});
            records.push_back({{"input_id", gate.input_id},
                               {"k", gate.k},
                               {"ranked", ranked},
                               {"scores", gate.scores}});
            gates.push_back(std::move(gate));
        }
        write_jsonl(gates_path, records);
        mb.artifact(gates_path);
    } catch (const std::exception& e) {
        throw fail("gate", e.what());
    }
    mb.end();

    // -- compose -----------------------------------------------------------
    const fs::path comments_path = config.output_dir / "comments.jsonl";
    const fs::path responses_path = config.output_dir / "responses.jsonl";
    mb.begin("compose");
    try {
        DirectionBank bank = load_bank(bank_path);
        if (bank.model_hidden != backend->hidden_size() ||
            bank.model_layers != backend->num_layers())
            throw ValidationError("bank was built for a " + std::to_string(bank.model_layers) +
                                  "x" + std::to_string(bank.model_hidden) +
                                  " model, backend is " + std::to_string(backend->num_layers()) +
                                  "x" + std::to_string(backend->hidden_size()));

        CommentConfig cc;
        cc.layers = config.estimation.layers;
        cc.token_policy = config.token_policy;
        cc.max_tokens = config.comment_max_tokens;
        cc.seed = config.seed;

        ComposeConfig compose_cfg;
        compose_cfg.max_tokens = config.compose_max_tokens;
        compose_cfg.seed = config.seed;

        std::vector<json> comment_records, response_records;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            const PipelineInput& in = inputs[i];
            CommentSet set = generate_value_comments(*backend, gates[i], in.text, taxonomy, bank,
                                                     config.magnitude, cc);
            json jc = json::array();
            for (const ValueComment& c : set.comments) jc.push_back(comment_to_json(c));
            comment_records.push_back({{"input_id", set.input_id}, {"comments", jc}});

            if (config.mode == "overton") {
                const std::string response =
                    compose_overton(set, in.text, taxonomy, *backend, compose_cfg);
                response_records.push_back(
                    {{"input_id", in.input_id}, {"mode", "overton"}, {"response", response}});
            } else if (config.mode == "steerable") {
                const std::string target =
                    !in.target_value.empty() ? in.target_value : config.target_value;
                if (target.empty())
                    throw ValidationError(in.input_id +
                                          ": steerable mode needs a target value (per input "
                                          "or config-wide)");
                const std::string response =
                    compose_steerable(set, target, in.text, taxonomy, *backend, compose_cfg);
                response_records.push_back({{"input_id", in.input_id},
                                            {"mode", "steerable"},
                                            {"target_value", target},
                                            {"response", response}});
            } else {
                ChoiceDistribution dist = compose_distributional({set}, config.options,
                                                                 config.weighting,
                                                                 config.unparsed);
                response_records.push_back({{"input_id", in.input_id},
                                            {"mode", "distributional"},
                                            {"options", dist.options},
                                            {"probs", dist.probs}});
            }
        }
        write_jsonl(comments_path, comment_records);
        write_jsonl(responses_path, response_records);
        mb.artifact(comments_path);
        mb.artifact(responses_path);
    } catch (const std::exception& e) {
        throw fail("compose", e.what());
    }
    mb.end();

    // -- eval ----------------------------------------------------------------
    if (!config.gold.empty()) {
        const fs::path report_path = config.output_dir / "report.json";
        mb.begin("eval");
        try {
            json report = evaluate_files(config.mode, responses_path, config.gold, taxonomy,
                                         *scorer, config.tau, config.ci_iterations, config.seed);
            write_file(report_path, report.dump(2) + "\n");
            mb.artifact(report_path);
        } catch (const std::exception& e) {
            throw fail("eval", e.what());
        }
        mb.end();
    }

    write_manifest();
    return {manifest, manifest_path};
}

json evaluate_files(const std::string& mode, const fs::path& pred, const fs::path& gold,
                    const ValueTaxonomy& taxonomy, RelevanceScorer& scorer, double tau,
                    int ci_iterations, std::uint64_t seed) {
    const std::vector<json> preds = read_jsonl(pred);
    std::map<std::string, json> gold_by_id;
    for (const json& g : read_jsonl(gold)) gold_by_id[g.at("input_id").get<std::string>()] = g;

    auto gold_for = [&](const std::string& id) -> const json& {
        auto it = gold_by_id.find(id);
        if (it == gold_by_id.end())
            throw ValidationError("no gold record for input_id \"" + id + "\"");
        return it->second;
    };

    json report = {{"mode", mode}, {"tau", tau}, {"num_inputs", preds.size()}};
    std::vector<double> per_sample;  // metric values fed to the bootstrap

    if (mode == "overton") {
        std::vector<std::string> texts;
        json entries = json::array();
        double sum = 0.0;
        for (const json& p : preds) {
            const std::string id = p.at("input_id").get<std::string>();
            const std::string response = p.at("response").get<std::string>();
            texts.push_back(response);
            std::vector<ValueSpec> gold_values;
            for (const json& vid : gold_for(id).at("gold_values"))
                gold_values.push_back(taxonomy.at(vid.get<std::string>()));
            CoverageEntry e = overton_coverage(response, gold_values, scorer, tau);
            e.input_id = id;
            sum += e.coverage_pct;
            per_sample.push_back(e.coverage_pct);
            entries.push_back({{"input_id", e.input_id},
                               {"covered", e.covered},
                               {"gold", e.gold},
                               {"scores", e.scores},
                               {"coverage_pct", e.coverage_pct}});
        }
        const FluencyReport fl = fluency_metrics(texts);
        report["coverage"] = {{"coverage_pct", sum / double(preds.size())}, {"entries", entries}};
        report["fluency"] = {{"avg_length", fl.avg_length},
                             {"repetition_pct", fl.repetition_pct},
                             {"gibberish_pct", fl.gibberish_pct}};
    } else if (mode == "steerable") {
        std::vector<std::string> texts;
        std::vector<std::pair<std::string, ValueSpec>> pairs;
        for (const json& p : preds) {
            const std::string id = p.at("input_id").get<std::string>();
            const std::string response = p.at("response").get<std::string>();
            const std::string target = gold_for(id).at("target_value").get<std::string>();
            texts.push_back(response);
            pairs.emplace_back(response, taxonomy.at(target));
        }
        for (const auto& [response, target] : pairs)
            per_sample.push_back(scorer.score(response, target.description) > tau ? 100.0 : 0.0);
        report["accuracy_pct"] = steerable_accuracy(pairs, scorer, tau);
        const FluencyReport fl = fluency_metrics(texts);
        report["fluency"] = {{"avg_length", fl.avg_length},
                             {"repetition_pct", fl.repetition_pct},
                             {"gibberish_pct", fl.gibberish_pct}};
    } else if (mode == "distributional") {
        json entries = json::array();
        double sum = 0.0;
        for (const json& p : preds) {
            const std::string id = p.at("input_id").get<std::string>();
            ChoiceDistribution predicted{p.at("options").get<std::vector<std::string>>(),
                                         p.at("probs").get<std::vector<double>>()};
            const json& g = gold_for(id);
            ChoiceDistribution reference{g.at("options").get<std::vector<std::string>>(),
                                         g.at("probs").get<std::vector<double>>()};
            const double js = js_distance(predicted, reference);
            sum += js;
            per_sample.push_back(js);
            entries.push_back({{"input_id", id},
                               {"js_distance", js},
                               {"predicted", predicted.probs},
                               {"reference", reference.probs}});
        }
        report["js"] = {{"mean_js_distance", sum / double(preds.size())}, {"entries", entries}};
    } else {
        throw ValidationError("unknown eval mode \"" + mode + "\"");
    }

    if (ci_iterations > 0 && !per_sample.empty()) {
        const CiReport ci = bootstrap_ci(per_sample, ci_iterations, seed);
        report["ci"] = {{"metric", mode == "distributional" ? "mean_js_distance"
                                   : mode == "steerable"    ? "accuracy_pct"
                                                            : "coverage_pct"},
                        {"point", ci.point},
                        {"lower", ci.lower},
                        {"upper", ci.upper},
                        {"iterations", ci.iterations},
                        {"seed", ci.seed}};
    }
    return report;
}

}  // namespace valsteer
