// valsteer CLI: gate, estimate, steer, compose, eval, pipeline, stats,
// validate. File formats are documented in the README; every subcommand
// that generates takes an explicit seed.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "valsteer/bank.hpp"
#include "valsteer/external_backend.hpp"
#include "valsteer/pipeline.hpp"
#include "valsteer/pluralism.hpp"
#include "valsteer/reference_model.hpp"
#include "valsteer/relevance.hpp"

namespace fs = std::filesystem;
using namespace valsteer;

namespace {

std::unique_ptr<RelevanceScorer> make_scorer(const std::string& kind) {
    if (kind == "stub") return std::make_unique<LexicalOverlapScorer>();
    if (kind == "nli") {
        const char* ep = std::getenv(kEndpointEnvVar);
        if (!ep)
            throw ValidationError(std::string("scorer \"nli\" needs ") + kEndpointEnvVar +
                                  "=host:port in the environment");
        return std::make_unique<EntailmentScorer>(parse_endpoint(ep));
    }
    throw ValidationError("unknown scorer \"" + kind + "\"");
}

MagnitudePolicy parse_policy(const std::string& spec) {
    const auto colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
    if (kind == "fixed")
        return MagnitudePolicy::fixed(arg.empty() ? kDefaultAlpha : std::stod(arg));
    if (kind == "calibrated")
        return MagnitudePolicy::calibrated(arg.empty() ? kDefaultP0 : std::stod(arg));
    throw ValidationError("policy must be fixed:<alpha> or calibrated:<p0>, got \"" + spec + "\"");
}

struct InputRecord {
    std::string input_id;
    std::string text;
    std::string target_value;
};

std::vector<InputRecord> read_inputs(const fs::path& path) {
    std::vector<InputRecord> out;
    for (const json& rec : read_jsonl(path))
        out.push_back({rec.at("input_id").get<std::string>(), rec.at("text").get<std::string>(),
                       rec.value("target_value", "")});
    return out;
}

std::vector<GateResult> read_gates(const fs::path& path) {
    std::vector<GateResult> out;
    for (const json& rec : read_jsonl(path)) {
        GateResult g;
        g.input_id = rec.at("input_id").get<std::string>();
        g.k = rec.at("k").get<int>();
        for (const json& r : rec.at("ranked"))
            g.ranked.emplace_back(r.at("value_id").get<std::string>(), r.at("score").get<double>());
        if (rec.contains("scores"))
            g.scores = rec.at("scores").get<std::map<std::string, double>>();
        out.push_back(std::move(g));
    }
    return out;
}

json gate_to_json(const GateResult& g) {
    json ranked = json::array();
    for (const auto& [id, s] : g.ranked) ranked.push_back({{"value_id", id}, {"score", s}});
    return {{"input_id", g.input_id}, {"k", g.k}, {"ranked", ranked}, {"scores", g.scores}};
}

int run(int argc, char** argv) {
    CLI::App app{"value-conditioned activation steering for pluralistic generation"};
    app.require_subcommand(1);

    // ---- gate ----
    auto* gate_cmd = app.add_subcommand("gate", "score value relevance and select Top-k");
    std::string gate_input, gate_tax, gate_out, gate_scorer = "stub";
    int gate_k = kDefaultTopK;
    gate_cmd->add_option("--input", gate_input, "inputs JSONL {input_id, text}")->required();
    gate_cmd->add_option("--taxonomy", gate_tax, "taxonomy manifest")->required();
    gate_cmd->add_option("--k", gate_k, "values per input (default 6)");
    gate_cmd->add_option("--scorer", gate_scorer, "stub|nli");
    gate_cmd->add_option("--out", gate_out, "gates JSONL output")->required();

    // ---- estimate ----
    auto* est_cmd = app.add_subcommand("estimate", "estimate value directions from pairs");
    std::string est_method = "mean", est_values = "all", est_data, est_tax, est_out;
    std::string est_pos = "last_token", est_encoding = "text";
    std::vector<int> est_layers;
    std::uint64_t est_seed = 0, est_model_seed = 1;
    bool est_normalize = false;
    double est_threshold = 0.8;
    int est_max_layers = 5;
    est_cmd->add_option("--method", est_method, "pca|mean|probe")->required();
    est_cmd->add_option("--values", est_values, "all or comma-separated value ids");
    est_cmd->add_option("--data", est_data, "contrastive pairs JSONL")->required();
    est_cmd->add_option("--taxonomy", est_tax, "taxonomy manifest")->required();
    est_cmd->add_option("--out", est_out, "direction bank output (.vdb)")->required();
    est_cmd->add_option("--layers", est_layers, "layer indices (default: model mid band)");
    est_cmd->add_option("--seed", est_seed, "estimation seed");
    est_cmd->add_option("--model-seed", est_model_seed, "reference model weight seed");
    est_cmd->add_option("--position-policy", est_pos, "last_token|mean_over_tokens");
    est_cmd->add_flag("--normalize", est_normalize, "unit-normalize mean_diff directions");
    est_cmd->add_option("--encoding", est_encoding, "bank encoding: text|binary");
    est_cmd->add_option("--accuracy-threshold", est_threshold, "probe layer selection threshold");
    est_cmd->add_option("--max-selected-layers", est_max_layers, "probe layer selection cap");

    // ---- steer ----
    auto* steer_cmd = app.add_subcommand("steer", "generate with one value's steering plan");
    std::string steer_bank, steer_value, steer_policy = "fixed:0.5", steer_prompt_file,
                steer_token_policy = "generated_only", steer_out;
    std::vector<int> steer_layers;
    int steer_max_tokens = 48;
    std::uint64_t steer_seed = 0, steer_model_seed = 1;
    steer_cmd->add_option("--bank", steer_bank, "direction bank")->required();
    steer_cmd->add_option("--value", steer_value, "value id to steer toward")->required();
    steer_cmd->add_option("--policy", steer_policy, "fixed:<alpha>|calibrated:<p0>");
    steer_cmd->add_option("--layers", steer_layers, "layers (default: direction's own)");
    steer_cmd->add_option("--prompt-file", steer_prompt_file, "prompt text file")->required();
    steer_cmd->add_option("--max-tokens", steer_max_tokens, "tokens to generate");
    steer_cmd->add_option("--seed", steer_seed, "generation seed");
    steer_cmd->add_option("--model-seed", steer_model_seed, "reference model weight seed");
    steer_cmd->add_option("--token-policy", steer_token_policy, "generated_only|all_positions");
    steer_cmd->add_option("--out", steer_out, "write generation here instead of stdout");

    // ---- compose ----
    auto* comp_cmd = app.add_subcommand("compose", "steered comments + mode composition");
    std::string comp_mode, comp_gates, comp_bank, comp_inputs, comp_tax, comp_out,
                comp_comments_out, comp_target, comp_policy = "fixed:0.5",
                comp_weighting = "uniform", comp_token_policy = "generated_only",
                comp_unparsed = "drop";
    std::vector<std::string> comp_options;
    std::vector<int> comp_layers;
    int comp_comment_tokens = 48, comp_compose_tokens = 64;
    std::uint64_t comp_seed = 0, comp_model_seed = 1;
    comp_cmd->add_option("--mode", comp_mode, "overton|steerable|distributional")->required();
    comp_cmd->add_option("--gates", comp_gates, "gates JSONL from `gate`")->required();
    comp_cmd->add_option("--bank", comp_bank, "direction bank")->required();
    comp_cmd->add_option("--inputs", comp_inputs, "inputs JSONL (for the situation text)")
        ->required();
    comp_cmd->add_option("--taxonomy", comp_tax, "taxonomy manifest")->required();
    comp_cmd->add_option("--out", comp_out, "responses JSONL output")->required();
    comp_cmd->add_option("--comments-out", comp_comments_out, "also write raw comments JSONL");
    comp_cmd->add_option("--target", comp_target, "steerable: value id to steer toward");
    comp_cmd->add_option("--options", comp_options, "distributional: option labels (>= 2)");
    comp_cmd->add_option("--weighting", comp_weighting, "distributional: uniform|relevance");
    comp_cmd->add_option("--unparsed", comp_unparsed, "distributional: drop|impute_uniform");
    comp_cmd->add_option("--policy", comp_policy, "fixed:<alpha>|calibrated:<p0>");
    comp_cmd->add_option("--layers", comp_layers, "steering layers (default: direction's own)");
    comp_cmd->add_option("--token-policy", comp_token_policy, "generated_only|all_positions");
    comp_cmd->add_option("--comment-max-tokens", comp_comment_tokens, "");
    comp_cmd->add_option("--compose-max-tokens", comp_compose_tokens, "");
    comp_cmd->add_option("--seed", comp_seed, "generation seed");
    comp_cmd->add_option("--model-seed", comp_model_seed, "reference model weight seed");

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "score responses against gold");
    std::string eval_mode, eval_pred, eval_gold, eval_report, eval_tax, eval_scorer = "stub";
    double eval_tau = kDefaultCoverageTau;
    int eval_ci = 0;
    std::uint64_t eval_seed = 0;
    eval_cmd->add_option("--mode", eval_mode, "overton|steerable|distributional")->required();
    eval_cmd->add_option("--pred", eval_pred, "responses JSONL")->required();
    eval_cmd->add_option("--gold", eval_gold, "gold JSONL")->required();
    eval_cmd->add_option("--report", eval_report, "report JSON output")->required();
    eval_cmd->add_option("--taxonomy", eval_tax, "taxonomy manifest")->required();
    eval_cmd->add_option("--scorer", eval_scorer, "stub|nli");
    eval_cmd->add_option("--tau", eval_tau, "coverage threshold in (0,1)");
    eval_cmd->add_option("--ci", eval_ci, "bootstrap iterations (0 = off)");
    eval_cmd->add_option("--seed", eval_seed, "bootstrap seed");

    // ---- pipeline ----
    auto* pipe_cmd = app.add_subcommand("pipeline", "run gate -> steer -> compose -> eval");
    std::string pipe_config;
    pipe_cmd->add_option("--config", pipe_config, "run config JSON")->required();

    // ---- stats ----
    auto* stats_cmd = app.add_subcommand("stats", "selection statistics over gate results");
    std::string stats_gates, stats_tax, stats_out;
    stats_cmd->add_option("--gates", stats_gates, "gates JSONL")->required();
    stats_cmd->add_option("--taxonomy", stats_tax, "taxonomy manifest")->required();
    stats_cmd->add_option("--out", stats_out, "stats JSON output (default: stdout table only)");

    // ---- validate ----
    auto* val_cmd = app.add_subcommand("validate", "check a run config, reporting every violation");
    std::string val_config;
    val_cmd->add_option("--config", val_config, "run config JSON")->required();

    CLI11_PARSE(app, argc, argv);

    if (gate_cmd->parsed()) {
        const ValueTaxonomy taxonomy = load_taxonomy(gate_tax);
        auto scorer = make_scorer(gate_scorer);
        std::vector<json> records;
        for (const InputRecord& in : read_inputs(gate_input))
            records.push_back(gate_to_json(gate_top_k(in.text, in.input_id, taxonomy, *scorer,
                                                      gate_k)));
        write_jsonl(gate_out, records);
        std::cerr << "gated " << records.size() << " inputs -> " << gate_out << "\n";
        return 0;
    }

    if (est_cmd->parsed()) {
        const ValueTaxonomy taxonomy = load_taxonomy(est_tax);
        auto datasets = load_contrastive_dataset(est_data, taxonomy);
        std::set<std::string> wanted;
        if (est_values != "all") {
            std::stringstream ss(est_values);
            std::string id;
            while (std::getline(ss, id, ',')) wanted.insert(id);
        }
        ReferenceModel::Config rc;
        rc.seed = est_model_seed;
        ReferenceModel backend(rc);

        EstimationConfig ec;
        ec.layers = est_layers;
        ec.position_policy = position_policy_from_string(est_pos);
        ec.normalize = est_normalize;
        ec.seed = est_seed;
        ec.accuracy_threshold = est_threshold;
        ec.max_selected_layers = est_max_layers;

        DirectionBank bank;
        bank.model_layers = backend.num_layers();
        bank.model_hidden = backend.hidden_size();
        const EstimatorMethod method = estimator_method_from_string(est_method);
        for (const auto& [value_id, ds] : datasets) {
            if (!wanted.empty() && !wanted.count(value_id)) continue;
            EstimationResult res = estimate_directions(backend, ds, method, ec);
            bank.entries[value_id] = {std::move(res.direction), std::move(res.probes)};
        }
        if (bank.entries.empty()) throw ValidationError("no values matched --values");
        save_bank(est_out, bank,
                  est_encoding == "binary" ? BankEncoding::binary : BankEncoding::text);
        std::cerr << "estimated " << bank.entries.size() << " directions -> " << est_out << "\n";
        return 0;
    }

    if (steer_cmd->parsed()) {
        const DirectionBank bank = load_bank(steer_bank);
        const BankEntry& entry = bank.at(steer_value);
        ReferenceModel::Config rc;
        rc.seed = steer_model_seed;
        ReferenceModel backend(rc);

        std::vector<int> layers =
            steer_layers.empty() ? entry.direction.layer_indices() : steer_layers;
        const MagnitudePolicy policy = parse_policy(steer_policy);
        const std::string prompt = read_file(steer_prompt_file);

        const ActivationRecord* context = nullptr;
        ActivationRecord captured;
        if (policy.kind == MagnitudePolicy::Kind::calibrated) {
            captured = backend.capture(prompt, layers, PositionPolicy::last_token);
            context = &captured;
        }
        SteeringPlan plan = build_plan(entry, policy, layers, context,
                                       token_policy_from_string(steer_token_policy));
        const std::string text =
            generate_with_hooks(backend, prompt, &plan, steer_max_tokens, steer_seed);
        if (steer_out.empty())
            std::cout << text << "\n";
        else
            write_file(steer_out, text);
        return 0;
    }

    if (comp_cmd->parsed()) {
        const ValueTaxonomy taxonomy = load_taxonomy(comp_tax);
        const DirectionBank bank = load_bank(comp_bank);
        const std::vector<GateResult> gates = read_gates(comp_gates);
        std::map<std::string, InputRecord> inputs;
        for (InputRecord& in : read_inputs(comp_inputs)) inputs[in.input_id] = std::move(in);

        ReferenceModel::Config rc;
        rc.seed = comp_model_seed;
        ReferenceModel backend(rc);

        CommentConfig cc;
        cc.layers = comp_layers;
        cc.token_policy = token_policy_from_string(comp_token_policy);
        cc.max_tokens = comp_comment_tokens;
        cc.seed = comp_seed;
        ComposeConfig compose_cfg;
        compose_cfg.max_tokens = comp_compose_tokens;
        compose_cfg.seed = comp_seed;
        const MagnitudePolicy policy = parse_policy(comp_policy);

        std::vector<json> responses, comment_records;
        for (const GateResult& gate : gates) {
            auto it = inputs.find(gate.input_id);
            if (it == inputs.end())
                throw ValidationError("gates reference input_id \"" + gate.input_id +
                                      "\" missing from --inputs");
            const InputRecord& in = it->second;
            GateResult gated = gate;
            const std::string target =
                !in.target_value.empty() ? in.target_value : comp_target;
            if (comp_mode == "steerable" && !target.empty()) force_include(gated, target);

            CommentSet set = generate_value_comments(backend, gated, in.text, taxonomy, bank,
                                                     policy, cc);
            json jc = json::array();
            for (const ValueComment& c : set.comments)
                jc.push_back({{"value_id", c.value_id},
                              {"relevance", c.relevance},
                              {"text", c.text},
                              {"method", to_string(c.provenance.method)},
                              {"layers", c.provenance.layers},
                              {"coefficients", c.provenance.coefficients}});
            comment_records.push_back({{"input_id", set.input_id}, {"comments", jc}});

            if (comp_mode == "overton") {
                responses.push_back({{"input_id", in.input_id},
                                     {"mode", "overton"},
                                     {"response", compose_overton(set, in.text, taxonomy,
                                                                  backend, compose_cfg)}});
            } else if (comp_mode == "steerable") {
                if (target.empty())
                    throw ValidationError(in.input_id + ": steerable compose needs --target or "
                                                        "per-input target_value");
                responses.push_back({{"input_id", in.input_id},
                                     {"mode", "steerable"},
                                     {"target_value", target},
                                     {"response", compose_steerable(set, target, in.text,
                                                                    taxonomy, backend,
                                                                    compose_cfg)}});
            } else if (comp_mode == "distributional") {
                ChoiceDistribution dist = compose_distributional(
                    {set}, comp_options, choice_weighting_from_string(comp_weighting),
                    comp_unparsed == "impute_uniform" ? UnparsedPolicy::impute_uniform
                                                      : UnparsedPolicy::drop);
                responses.push_back({{"input_id", in.input_id},
                                     {"mode", "distributional"},
                                     {"options", dist.options},
                                     {"probs", dist.probs}});
            } else {
                throw ValidationError("unknown mode \"" + comp_mode + "\"");
            }
        }
        write_jsonl(comp_out, responses);
        if (!comp_comments_out.empty()) write_jsonl(comp_comments_out, comment_records);
        std::cerr << "composed " << responses.size() << " responses -> " << comp_out << "\n";
        return 0;
    }

    if (eval_cmd->parsed()) {
        const ValueTaxonomy taxonomy = load_taxonomy(eval_tax);
        auto scorer = make_scorer(eval_scorer);
        json report = evaluate_files(eval_mode, eval_pred, eval_gold, taxonomy, *scorer, eval_tau,
                                     eval_ci, eval_seed);
        write_file(eval_report, report.dump(2) + "\n");
        std::cerr << "report -> " << eval_report << "\n";
        return 0;
    }

    if (pipe_cmd->parsed()) {
        const RunConfig config = load_run_config(pipe_config);
        RunManifest manifest = run_pipeline(config);
        std::cout << manifest.path.string() << "\n";
        return 0;
    }

    if (stats_cmd->parsed()) {
        const ValueTaxonomy taxonomy = load_taxonomy(stats_tax);
        const SelectionStats stats = selection_statistics(read_gates(stats_gates), taxonomy);
        json per_value = json::object();
        std::printf("%-24s %8s %8s %8s\n", "value", "top1%", "topk%", "avg");
        for (const auto& [id, s] : stats.per_value) {
            std::printf("%-24s %8.2f %8.2f %8.4f\n", id.c_str(), s.top1_pct, s.topk_pct,
                        s.avg_score);
            per_value[id] = {{"top1_pct", s.top1_pct},
                             {"topk_pct", s.topk_pct},
                             {"avg_score", s.avg_score}};
        }
        if (!stats_out.empty()) {
            json doc = {{"k", stats.k}, {"num_results", stats.num_results},
                        {"per_value", per_value}};
            write_file(stats_out, doc.dump(2) + "\n");
        }
        return 0;
    }

    if (val_cmd->parsed()) {
        const RunConfig config = load_run_config(val_config);
        const std::vector<std::string> violations = validate_config(config);
        if (violations.empty()) {
            std::cout << "ok\n";
            return 0;
        }
        for (const std::string& v : violations) std::cout << "violation: " << v << "\n";
        return 1;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
