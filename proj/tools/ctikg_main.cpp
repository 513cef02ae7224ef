// ctikg — CTI knowledge-graph pipeline CLI.
// Subcommands: extract (phase 1 only), pipeline (all three phases), eval
// (score predictions against gold). Exit codes: 0 success, 1 runtime
// failure, 2 usage error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ctikg/core.hpp"
#include "ctikg/errors.hpp"
#include "ctikg/evaluation.hpp"
#include "ctikg/exporters.hpp"
#include "ctikg/gateway.hpp"
#include "ctikg/pipeline.hpp"
#include "ctikg/prompt.hpp"
#include "ctikg/retriever.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ctikg;

namespace {

json parse_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw UsageError("cannot open file: " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

Ontology load_ontology(const std::string& path) {
    Ontology ontology = Ontology::from_json(parse_json_file(path));
    ontology.validate();
    return ontology;
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw InternalError("cannot write " + path.string());
    out << content;
}

// Flags shared by the subcommands that talk to a backend.
struct CommonOpts {
    std::string reports_path;
    std::string ontology_path;
    std::string demos_path;
    std::string config_path;
    std::string backend_config_path;
    std::string templates_dir;
    std::string backend = "replay";
    std::string cache_dir;
    std::string out_root = "runs";
    std::string permutation;
    int k = -1;
    int k_typing = -1;
    int k_relation = -1;
    double threshold = -1.0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::vector<std::string> exports;
    int jobs = 1;
    bool force = false;
};

void add_backend_flags(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--backend", o.backend, "Gateway mode: live, record, or replay")
        ->check(CLI::IsMember({"live", "record", "replay"}))
        ->capture_default_str();
    cmd->add_option("--cache-dir", o.cache_dir,
                    "Fixture directory (required for record/replay)");
    cmd->add_option("--backend-config", o.backend_config_path,
                    "Backend configuration JSON (endpoints, models, prices)");
}

void add_pipeline_flags(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("reports", o.reports_path, "Report file (JSON lines: {id, text, ...})")
        ->required();
    cmd->add_option("--ontology", o.ontology_path, "Ontology JSON file")->required();
    cmd->add_option("--demos", o.demos_path, "Demonstration corpus (JSON lines)");
    cmd->add_option("--config", o.config_path, "Pipeline configuration JSON");
    cmd->add_option("--templates", o.templates_dir,
                    "Prompt template directory (default: built-in templates)");
    cmd->add_option("--k", o.k, "Demonstrations per extraction prompt");
    cmd->add_option("--k-typing", o.k_typing, "Demonstrations per typing prompt");
    cmd->add_option("--k-relation", o.k_relation, "Demonstrations per relation prompt");
    cmd->add_option("--threshold", o.threshold, "Merge threshold tau in [0, 1]");
    cmd->add_option("--permutation", o.permutation,
                    "Demo order: knn_ascend, knn_descend, or random")
        ->check(CLI::IsMember({"knn_ascend", "knn_descend", "random"}));
    cmd->add_option("--seed", o.seed, "Seed for the random demo permutation")
        ->each([&o](const std::string&) { o.seed_set = true; });
    cmd->add_option("--out", o.out_root, "Output root (run directory = out/<run id>)")
        ->capture_default_str();
    cmd->add_flag("--force", o.force, "Reuse an existing run directory");
    add_backend_flags(cmd, o);
}

PipelineConfig build_config(const CommonOpts& o) {
    PipelineConfig config;
    if (!o.config_path.empty())
        config = PipelineConfig::from_json(parse_json_file(o.config_path));
    if (o.k >= 0)
        config.k_extract = o.k;
    if (o.k_typing >= 0)
        config.k_typing = o.k_typing;
    if (o.k_relation >= 0)
        config.k_relation = o.k_relation;
    if (o.threshold >= 0.0)
        config.merge_threshold = o.threshold;
    if (!o.permutation.empty())
        config.permutation = permutation_from_name(o.permutation);
    if (o.seed_set)
        config.seed = o.seed;
    config.validate();
    return config;
}

std::unique_ptr<Gateway> build_gateway(const CommonOpts& o) {
    BackendConfig backend = o.backend_config_path.empty()
                                ? BackendConfig{}
                                : BackendConfig::load_file(o.backend_config_path);
    std::optional<fs::path> cache;
    if (!o.cache_dir.empty())
        cache = fs::path(o.cache_dir);
    return std::make_unique<Gateway>(gateway_mode_from_name(o.backend), std::move(backend),
                                     cache);
}

PromptTemplateSet load_templates(const CommonOpts& o) {
    return o.templates_dir.empty() ? PromptTemplateSet::builtin()
                                   : PromptTemplateSet::load_dir(o.templates_dir);
}

std::vector<Demonstration> load_corpus(const CommonOpts& o) {
    if (o.demos_path.empty())
        return {};
    return load_demo_corpus_jsonl(o.demos_path);
}

std::string sanitize_component(const std::string& id) {
    std::string out;
    for (char c : id)
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' ||
                              c == '-'
                          ? c
                          : '_');
    return out.empty() ? "_" : out;
}

// ---------------------------------------------------------------------------
// extract

int cmd_extract(const CommonOpts& o) {
    const auto reports = load_reports_jsonl(o.reports_path);
    if (reports.empty())
        throw UsageError("no reports in " + o.reports_path);
    const Ontology ontology = load_ontology(o.ontology_path);
    PipelineConfig config = build_config(o);
    // Only phase 1 runs here; suppress demo preparation for the other phases.
    config.k_typing = 0;
    config.k_relation = 0;
    const PromptTemplateSet templates = load_templates(o);
    const auto gateway = build_gateway(o);
    const PreparedDemos demos = prepare_demos(load_corpus(o), config, *gateway);

    std::vector<std::string> ids;
    for (const auto& r : reports)
        ids.push_back(r.id);
    const std::string run_id = compute_run_id(gateway->mode(), config, ontology.name, ids);
    const fs::path run_dir = fs::path(o.out_root) / ("extract-" + run_id);
    if (fs::exists(run_dir) && !o.force)
        throw UsageError("run directory exists (rerun with --force to overwrite): " +
                         run_dir.string());
    fs::create_directories(run_dir);

    json outputs = json::object();
    for (const auto& report : reports) {
        const ExtractionResult result =
            extract_triplets(report, ontology, demos.extraction, config, templates, *gateway);
        const std::string rel = sanitize_component(report.id);
        const fs::path report_dir = run_dir / rel;
        fs::create_directories(report_dir);
        write_text_file(report_dir / "extraction.json", result.to_json().dump(2) + "\n");
        write_text_file(report_dir / "raw_response.txt", result.raw_response);
        outputs[report.id] = {{"extraction", rel + "/extraction.json"},
                              {"raw_response", rel + "/raw_response.txt"}};
        std::cout << report.id << ": " << result.triplets.size() << " triplets ("
                  << result.calls << " call" << (result.calls == 1 ? "" : "s") << ")\n";
    }

    json manifest{{"run_id", "extract-" + run_id},
                  {"mode", to_string(gateway->mode())},
                  {"replay", gateway->mode() == GatewayMode::replay},
                  {"config", config.to_json()},
                  {"ontology", ontology.name},
                  {"outputs", outputs},
                  {"total_usage", gateway->total_usage().to_json()}};
    write_text_file(run_dir / "manifest.json", manifest.dump(2) + "\n");
    std::cout << "wrote " << (run_dir / "manifest.json").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// pipeline

std::map<std::string, std::vector<TypedTriplet>> load_gold_typed(const std::string& path) {
    std::map<std::string, std::vector<TypedTriplet>> out;
    auto take = [&](const GoldReport& gold) {
        if (!gold.typed_triplets.empty())
            out[gold.report_id] = gold.typed_triplets;
    };
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(path))
            if (entry.path().extension() == ".json")
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files)
            take(GoldReport::load_file(f.string()));
    } else {
        take(GoldReport::load_file(path));
    }
    return out;
}

int cmd_pipeline(const CommonOpts& o, const std::string& gold_typed_path) {
    const auto reports = load_reports_jsonl(o.reports_path);
    const Ontology ontology = load_ontology(o.ontology_path);
    const PipelineConfig config = build_config(o);
    const PromptTemplateSet templates = load_templates(o);
    const auto gateway = build_gateway(o);

    RunOptions options;
    options.mode = gateway->mode();
    options.out_root = o.out_root;
    options.jobs = o.jobs;
    options.force = o.force;
    for (const auto& e : o.exports)
        if (e != "json") // JSON artifacts are always written
            options.exports.push_back(e);

    std::map<std::string, std::vector<TypedTriplet>> gold_typed;
    if (!gold_typed_path.empty())
        gold_typed = load_gold_typed(gold_typed_path);

    const RunOutcome outcome =
        run_pipeline(reports, ontology, config, templates, load_corpus(o), *gateway, options,
                     gold_typed.empty() ? nullptr : &gold_typed);

    for (const auto& r : outcome.reports) {
        std::cout << r.report_id << ": " << r.graph.nodes().size() << " nodes, "
                  << r.graph.edges().size() << " edges";
        if (r.used_gold_typed)
            std::cout << " (gold typing)";
        std::cout << "\n";
    }
    const UsageRecord usage = outcome.manifest.total_usage;
    std::cout << "usage: " << usage.prompt_tokens << " prompt + " << usage.completion_tokens
              << " completion tokens, cost " << usage.cost_nanos << " nanodollars\n";
    std::cout << "run directory: " << outcome.run_dir.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOpts {
    std::string pred_path;
    std::string gold_path;
    std::string match_mode = "normalized_exact";
    std::string out_path;
    CommonOpts backend; // used only in judge mode
};

std::vector<RawTriplet> triplets_from_json(const json& j) {
    std::vector<RawTriplet> out;
    if (!j.is_array())
        throw SchemaError("expected an array of triplets");
    for (const auto& item : j) {
        RawTriplet t{Mention{item.at("subject").get<std::string>(), std::nullopt},
                     item.at("relation").get<std::string>(),
                     Mention{item.at("object").get<std::string>(), std::nullopt}};
        out.push_back(std::move(t));
    }
    return out;
}

// Prediction artifacts for one report, as produced by cmd_pipeline.
struct PredReport {
    std::vector<RawTriplet> triplets;
    std::vector<TypedTriplet> typed;
    std::vector<std::vector<std::string>> clusters;
    std::optional<KnowledgeGraph> graph;
};

PredReport load_pred_report(const fs::path& dir) {
    PredReport pred;
    if (fs::exists(dir / "extraction.json")) {
        const json j = parse_json_file((dir / "extraction.json").string());
        pred.triplets = triplets_from_json(j.at("triplets"));
    }
    if (fs::exists(dir / "typed.json"))
        for (const auto& item : parse_json_file((dir / "typed.json").string()))
            pred.typed.push_back(TypedTriplet::from_json(item));
    if (fs::exists(dir / "clusters.json"))
        for (const auto& item : parse_json_file((dir / "clusters.json").string())) {
            std::vector<std::string> members;
            for (const auto& m : item.at("members"))
                members.push_back(m.is_string() ? m.get<std::string>()
                                                : m.at("surface").get<std::string>());
            pred.clusters.push_back(std::move(members));
        }
    if (fs::exists(dir / "graph.json"))
        pred.graph = KnowledgeGraph::from_json(parse_json_file((dir / "graph.json").string()));
    return pred;
}

std::vector<std::string> typed_labels(const std::vector<TypedTriplet>& typed) {
    std::vector<std::string> labels;
    for (const auto& t : typed) {
        labels.push_back(t.subject.entity_type);
        labels.push_back(t.object.entity_type);
    }
    return labels;
}

std::vector<std::string> typed_surfaces(const std::vector<TypedTriplet>& typed) {
    std::vector<std::string> surfaces;
    for (const auto& t : typed) {
        surfaces.push_back(t.subject.mention.surface);
        surfaces.push_back(t.object.mention.surface);
    }
    return surfaces;
}

int cmd_eval(const EvalOpts& o) {
    const MatchPolicy policy{match_mode_from_name(o.match_mode), true, true, true};
    std::unique_ptr<Gateway> gateway;
    if (policy.mode == MatchMode::judge)
        gateway = build_gateway(o.backend);

    // Gold: a single file or a directory of per-report files, keyed by id.
    std::map<std::string, GoldReport> gold;
    if (fs::is_directory(o.gold_path)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(o.gold_path))
            if (entry.path().extension() == ".json")
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            GoldReport g = GoldReport::load_file(f.string());
            gold[g.report_id] = std::move(g);
        }
    } else {
        GoldReport g = GoldReport::load_file(o.gold_path);
        gold[g.report_id] = std::move(g);
    }
    if (gold.empty())
        throw UsageError("no gold reports under " + o.gold_path);

    // Predictions: a pipeline run directory (manifest.json present) or a
    // single report's artifact directory.
    std::map<std::string, PredReport> preds;
    const fs::path pred_root(o.pred_path);
    if (!fs::is_directory(pred_root))
        throw UsageError("prediction path is not a directory: " + o.pred_path);
    if (fs::exists(pred_root / "manifest.json")) {
        const json manifest = parse_json_file((pred_root / "manifest.json").string());
        for (const auto& [report_id, entry] : manifest.at("outputs").items()) {
            fs::path dir = pred_root;
            if (entry.contains("graph"))
                dir = pred_root / fs::path(entry.at("graph").get<std::string>()).parent_path();
            else if (entry.contains("extraction"))
                dir = pred_root /
                      fs::path(entry.at("extraction").get<std::string>()).parent_path();
            preds[report_id] = load_pred_report(dir);
        }
    } else {
        for (const auto& [report_id, g] : gold) {
            (void)g;
            preds[report_id] = load_pred_report(pred_root);
            if (gold.size() > 1)
                throw UsageError(
                    "bare artifact directory can only score a single gold report");
        }
    }

    json report{{"match_mode", to_string(policy.mode)}, {"reports", json::object()}};
    PRF agg_triplets, agg_inferred, agg_end_to_end;
    PRF agg_merge;
    std::size_t agg_entities = 0;
    std::vector<std::string> all_pred_labels, all_gold_labels;
    bool any_triplets = false, any_typing = false, any_merge = false, any_inferred = false,
         any_e2e = false;
    CallContext judge_ctx{"judge", ""};
    Gateway* judge = gateway.get();

    for (const auto& [report_id, g] : gold) {
        auto it = preds.find(report_id);
        if (it == preds.end())
            throw SchemaError("prediction set has no report '" + report_id + "'");
        const PredReport& p = it->second;
        judge_ctx.report_id = report_id;
        json scores;

        if (!g.triplets.empty()) {
            const PRF prf = match_triplets(p.triplets, g.triplets, policy, judge, judge_ctx);
            scores["triplets"] = prf.to_json();
            agg_triplets.tp += prf.tp;
            agg_triplets.fp += prf.fp;
            agg_triplets.fn += prf.fn;
            any_triplets = true;
        }
        if (!g.typed_triplets.empty()) {
            if (typed_surfaces(p.typed) == typed_surfaces(g.typed_triplets)) {
                const auto pred_labels = typed_labels(p.typed);
                const auto gold_labels = typed_labels(g.typed_triplets);
                scores["typing"] = typing_metrics(pred_labels, gold_labels).to_json();
                all_pred_labels.insert(all_pred_labels.end(), pred_labels.begin(),
                                       pred_labels.end());
                all_gold_labels.insert(all_gold_labels.end(), gold_labels.begin(),
                                       gold_labels.end());
                any_typing = true;
            } else {
                scores["typing"] = {{"skipped", "mention sequences differ"}};
            }
        }
        if (!g.clusters.empty()) {
            try {
                const MergeMetrics m = merge_metrics(p.clusters, g.clusters);
                scores["merge"] = m.to_json();
                agg_merge.tp += m.pairwise.tp;
                agg_merge.fp += m.pairwise.fp;
                agg_merge.fn += m.pairwise.fn;
                agg_entities += m.entity_count;
                any_merge = true;
            } catch (const SchemaError& e) {
                scores["merge"] = {{"skipped", e.what()}};
            }
        }
        if (!g.inferred_relations.empty() && p.graph) {
            std::vector<RawTriplet> inferred;
            for (const auto& e : p.graph->edges())
                if (e.provenance == Provenance::inferred) {
                    const auto* src = p.graph->find_node(e.source);
                    const auto* dst = p.graph->find_node(e.target);
                    if (src && dst)
                        inferred.push_back(
                            RawTriplet{Mention{src->canonical, std::nullopt}, e.relation,
                                       Mention{dst->canonical, std::nullopt}});
                }
            const PRF prf =
                match_triplets(inferred, g.inferred_relations, policy, judge, judge_ctx);
            scores["inferred"] = prf.to_json();
            agg_inferred.tp += prf.tp;
            agg_inferred.fp += prf.fp;
            agg_inferred.fn += prf.fn;
            any_inferred = true;
        }
        if (p.graph) {
            std::vector<RawTriplet> gold_flat;
            if (g.graph) {
                gold_flat = flatten_graph(*g.graph);
            } else {
                gold_flat = g.triplets;
                gold_flat.insert(gold_flat.end(), g.inferred_relations.begin(),
                                 g.inferred_relations.end());
            }
            if (!gold_flat.empty()) {
                const PRF prf =
                    match_triplets(flatten_graph(*p.graph), gold_flat, policy, judge, judge_ctx);
                scores["end_to_end"] = prf.to_json();
                agg_end_to_end.tp += prf.tp;
                agg_end_to_end.fp += prf.fp;
                agg_end_to_end.fn += prf.fn;
                any_e2e = true;
            }
        }
        report["reports"][report_id] = scores;
    }

    json aggregate;
    if (any_triplets)
        aggregate["triplets"] = agg_triplets.to_json();
    if (any_typing)
        aggregate["typing"] = typing_metrics(all_pred_labels, all_gold_labels).to_json();
    if (any_merge) {
        MergeMetrics m;
        m.pairwise = agg_merge;
        m.entity_count = agg_entities;
        aggregate["merge"] = m.to_json();
    }
    if (any_inferred)
        aggregate["inferred"] = agg_inferred.to_json();
    if (any_e2e)
        aggregate["end_to_end"] = agg_end_to_end.to_json();
    report["aggregate"] = aggregate;

    std::cout << report.dump(2) << "\n";
    if (!o.out_path.empty()) {
        write_text_file(o.out_path, report.dump(2) + "\n");
        std::cerr << "wrote " << o.out_path << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"CTI knowledge-graph pipeline: extraction, alignment, completion, scoring"};
    app.require_subcommand(1);

    CommonOpts extract_opts;
    CLI::App* extract_cmd =
        app.add_subcommand("extract", "Run triplet extraction only and write the results");
    add_pipeline_flags(extract_cmd, extract_opts);

    CommonOpts pipeline_opts;
    std::string gold_typed_path;
    CLI::App* pipeline_cmd = app.add_subcommand(
        "pipeline", "Run extraction, alignment, and completion; write graph and manifest");
    add_pipeline_flags(pipeline_cmd, pipeline_opts);
    pipeline_cmd
        ->add_option("--export", pipeline_opts.exports,
                     "Graph export formats (json always written): json, dot, graphml")
        ->check(CLI::IsMember({"json", "dot", "graphml"}));
    pipeline_cmd->add_option("--jobs", pipeline_opts.jobs, "Concurrent report workers")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    pipeline_cmd->add_option("--gold-typed", gold_typed_path,
                             "Gold file or directory supplying typed triplets (skips the "
                             "typing call for covered reports)");

    EvalOpts eval_opts;
    CLI::App* eval_cmd =
        app.add_subcommand("eval", "Score a prediction run against gold annotations");
    eval_cmd->add_option("--pred", eval_opts.pred_path,
                         "Pipeline run directory (or one report's artifact directory)")
        ->required();
    eval_cmd->add_option("--gold", eval_opts.gold_path, "Gold file or directory")->required();
    eval_cmd
        ->add_option("--match-mode", eval_opts.match_mode,
                     "Triplet matching: normalized_exact, voice_equivalent, or judge")
        ->check(CLI::IsMember({"normalized_exact", "voice_equivalent", "judge"}))
        ->capture_default_str();
    eval_cmd->add_option("--out", eval_opts.out_path, "Also write the score report here");
    add_backend_flags(eval_cmd, eval_opts.backend);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2; // normalize CLI11's parse-error codes
    }

    try {
        if (extract_cmd->parsed())
            return cmd_extract(extract_opts);
        if (pipeline_cmd->parsed())
            return cmd_pipeline(pipeline_opts, gold_typed_path);
        if (eval_cmd->parsed())
            return cmd_eval(eval_opts);
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
