#include "ctikg/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <thread>

#include "ctikg/errors.hpp"
#include "ctikg/exporters.hpp"

namespace ctikg {

using nlohmann::json;
namespace fs = std::filesystem;

PreparedDemos prepare_demos(const std::vector<Demonstration>& corpus,
                            const PipelineConfig& config, Gateway& gateway) {
    PreparedDemos demos;
    const CallContext ctx{"retrieval", ""};

    auto of_task = [&](DemoTask task) {
        std::vector<Demonstration> subset;
        for (const auto& d : corpus)
            if (d.task == task)
                subset.push_back(d);
        return subset;
    };

    const auto extraction = of_task(DemoTask::extraction);
    if (config.k_extract > 0 && config.mode_extraction == DemoMode::knn) {
        if (extraction.empty())
            throw UsageError("extraction uses kNN demos but the corpus has none");
        demos.extraction = build_index(extraction, gateway, ctx);
    } else {
        demos.extraction.demos = extraction;
    }

    demos.typing = of_task(DemoTask::typing);
    if (config.k_typing > 0 && config.mode_typing == DemoMode::knn) {
        if (demos.typing.empty())
            throw UsageError("typing uses kNN demos but the corpus has none");
        demos.typing_index = build_index(demos.typing, gateway, ctx);
    }

    demos.relation = of_task(DemoTask::relation);
    if (config.k_relation > 0 && config.mode_relation == DemoMode::knn) {
        if (demos.relation.empty())
            throw UsageError("relation prediction uses kNN demos but the corpus has none");
        demos.relation_index = build_index(demos.relation, gateway, ctx);
    }
    return demos;
}

namespace {

std::vector<Demonstration> demos_for(const std::optional<DemoIndex>& index,
                                     const std::vector<Demonstration>& fixed, DemoTask task,
                                     DemoMode mode, int k, const std::string& query,
                                     const PipelineConfig& config, Gateway& gateway,
                                     const CallContext& ctx) {
    if (k <= 0)
        return {};
    if (mode == DemoMode::knn) {
        std::vector<Demonstration> out;
        for (const auto& s :
             retrieve(*index, gateway, query, k, config.permutation, config.seed, ctx))
            out.push_back(s.demo);
        return out;
    }
    return fixed_demos(fixed, task, k);
}

} // namespace

ReportPipelineResult run_pipeline_for_report(const CtiReport& report, const Ontology& ontology,
                                             const PipelineConfig& config,
                                             const PromptTemplateSet& templates,
                                             const PreparedDemos& demos, Gateway& gateway,
                                             const std::vector<TypedTriplet>* gold_typed) {
    ReportPipelineResult result;
    result.report_id = report.id;

    // Phase 1 — triplet extraction.
    result.extraction =
        extract_triplets(report, ontology, demos.extraction, config, templates, gateway);

    // Phase 2 — hierarchical entity alignment.
    if (gold_typed) {
        result.typed = *gold_typed;
        result.used_gold_typed = true;
    } else if (!result.extraction.triplets.empty()) {
        const auto typing_demos =
            demos_for(demos.typing_index, demos.typing, DemoTask::typing, config.mode_typing,
                      config.k_typing, report.text, config, gateway,
                      CallContext{"typing", report.id});
        result.typed = assign_types(result.extraction.triplets, ontology, typing_demos, config,
                                    templates, gateway, CallContext{"typing", report.id});
    }

    for (const auto& group : group_by_type(result.typed)) {
        const auto clusters =
            merge_group(group, gateway, config.merge_threshold, CallContext{"merge", report.id});
        result.clusters.insert(result.clusters.end(), clusters.begin(), clusters.end());
    }
    KnowledgeGraph aligned = rebuild_graph(result.typed, result.clusters);

    // Phase 3 — long-distance relation prediction.
    const auto components = connected_components(aligned);
    json meta{{"component_count", components.size()},
              {"components", json::array()},
              {"calls", 0},
              {"outcomes", json::array()}};
    for (const auto& c : components)
        meta["components"].push_back(c.node_ids);

    if (components.size() >= 2) {
        const CentralSelection selection = select_centrals(components, aligned);
        const auto relation_demos =
            demos_for(demos.relation_index, demos.relation, DemoTask::relation,
                      config.mode_relation, config.k_relation, report.text, config, gateway,
                      CallContext{"relation", report.id});
        const RelationPredictionResult prediction =
            predict_relations(aligned, components, selection, report.text, relation_demos,
                              config, templates, gateway, CallContext{"relation", report.id});
        result.graph = integrate(aligned, prediction.edges);
        meta["selection"] = selection.to_json(aligned);
        meta["calls"] = prediction.calls;
        for (const auto& o : prediction.outcomes)
            meta["outcomes"].push_back(o.to_json());
        meta["integrated_connected"] = connected_components(result.graph).size() <= 1;
    } else {
        result.graph = std::move(aligned);
        if (!components.empty())
            meta["selection"] = select_centrals(components, result.graph).to_json(result.graph);
        meta["integrated_connected"] = components.size() <= 1;
    }
    result.completion_meta = std::move(meta);
    return result;
}

// ---------------------------------------------------------------------------
// Run manifest and artifact layout

json RunManifest::to_json() const {
    json j{{"run_id", run_id},
           {"mode", mode},
           {"replay", replay},
           {"config", config},
           {"ontology", ontology},
           {"report_ids", report_ids},
           {"per_phase_usage", per_phase_usage},
           {"total_usage", total_usage.to_json()},
           {"outputs", outputs},
           {"warnings", warnings},
           {"failed", failed}};
    if (failed)
        j["error"] = error;
    return j;
}

std::string compute_run_id(GatewayMode mode, const PipelineConfig& config,
                           const std::string& ontology_name,
                           std::vector<std::string> report_ids) {
    std::sort(report_ids.begin(), report_ids.end());
    json material{{"mode", to_string(mode)},
                  {"config", config.to_json()},
                  {"ontology", ontology_name},
                  {"reports", report_ids}};
    return sha256_hex(material.dump()).substr(0, 12);
}

namespace {

std::string sanitize_component(const std::string& id) {
    std::string out;
    for (char c : id)
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' ||
                              c == '-'
                          ? c
                          : '_');
    return out.empty() ? "_" : out;
}

void write_file_atomic(const fs::path& target, const std::string& content) {
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw InternalError("cannot write " + tmp.string());
        out << content;
    }
    fs::rename(tmp, target);
}

void write_json_atomic(const fs::path& target, const json& j) {
    write_file_atomic(target, j.dump(2) + "\n");
}

json sorted_call_log(const Gateway& gateway) {
    auto log = gateway.call_log();
    std::stable_sort(log.begin(), log.end(), [](const CallLogEntry& a, const CallLogEntry& b) {
        if (a.report_id != b.report_id)
            return a.report_id < b.report_id;
        if (a.phase != b.phase)
            return a.phase < b.phase;
        return a.seq < b.seq;
    });
    json entries = json::array();
    for (const auto& e : log)
        entries.push_back(e.to_json());
    return entries;
}

json per_phase_usage(const Gateway& gateway) {
    std::map<std::string, std::vector<UsageRecord>> by_phase;
    for (const auto& e : gateway.call_log())
        by_phase[e.phase.empty() ? "other" : e.phase].push_back(e.usage);
    json j;
    for (const auto& [phase, records] : by_phase)
        j[phase] = aggregate_usage(records).to_json();
    return j;
}

} // namespace

std::vector<CtiReport> load_reports_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw UsageError("cannot open reports file: " + path);
    std::vector<CtiReport> reports;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (normalize_ws(line).empty())
            continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw SchemaError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        reports.push_back(CtiReport::from_json(j));
    }
    return reports;
}

RunOutcome run_pipeline(const std::vector<CtiReport>& reports, const Ontology& ontology,
                        const PipelineConfig& config, const PromptTemplateSet& templates,
                        const std::vector<Demonstration>& corpus, Gateway& gateway,
                        const RunOptions& options,
                        const std::map<std::string, std::vector<TypedTriplet>>* gold_typed) {
    if (reports.empty())
        throw UsageError("no reports to process");
    {
        std::set<std::string> ids;
        for (const auto& r : reports)
            if (!ids.insert(r.id).second)
                throw UsageError("duplicate report id: " + r.id);
    }

    RunOutcome outcome;
    std::vector<std::string> ids;
    for (const auto& r : reports)
        ids.push_back(r.id);
    outcome.run_id = compute_run_id(options.mode, config, ontology.name, ids);
    outcome.run_dir = options.out_root / outcome.run_id;
    if (fs::exists(outcome.run_dir) && !options.force)
        throw UsageError("run directory exists (rerun with --force to overwrite): " +
                         outcome.run_dir.string());
    fs::create_directories(outcome.run_dir);

    RunManifest manifest;
    manifest.run_id = outcome.run_id;
    manifest.mode = to_string(options.mode);
    manifest.replay = options.mode == GatewayMode::replay;
    manifest.config = config.to_json();
    manifest.ontology = ontology.name;
    manifest.report_ids = ids;
    std::sort(manifest.report_ids.begin(), manifest.report_ids.end());
    manifest.outputs = json::object();
    manifest.warnings = json::array();

    auto finish_manifest = [&]() {
        manifest.per_phase_usage = per_phase_usage(gateway);
        manifest.total_usage = gateway.total_usage();
        write_json_atomic(outcome.run_dir / "usage_log.json", sorted_call_log(gateway));
        write_json_atomic(outcome.run_dir / "manifest.json", manifest.to_json());
    };

    std::string failure;
    std::exception_ptr failure_ex;
    try {
        const PreparedDemos demos = prepare_demos(corpus, config, gateway);

        outcome.reports.resize(reports.size());
        std::vector<json> output_entries(reports.size());
        std::atomic<std::size_t> next{0};
        std::mutex failure_mutex;

        auto worker = [&]() {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= reports.size())
                    return;
                {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure.empty())
                        return;
                }
                const CtiReport& report = reports[i];
                const fs::path report_dir =
                    outcome.run_dir / sanitize_component(report.id);
                fs::create_directories(report_dir);
                const std::string rel = sanitize_component(report.id);
                json entry;
                try {
                    const std::vector<TypedTriplet>* gold = nullptr;
                    if (gold_typed) {
                        auto it = gold_typed->find(report.id);
                        if (it != gold_typed->end())
                            gold = &it->second;
                    }
                    ReportPipelineResult result = run_pipeline_for_report(
                        report, ontology, config, templates, demos, gateway, gold);

                    write_json_atomic(report_dir / "extraction.json",
                                      result.extraction.to_json());
                    entry["extraction"] = rel + "/extraction.json";
                    json typed = json::array();
                    for (const auto& t : result.typed)
                        typed.push_back(t.to_json());
                    write_json_atomic(report_dir / "typed.json", typed);
                    entry["typed"] = rel + "/typed.json";
                    json clusters = json::array();
                    for (const auto& c : result.clusters)
                        clusters.push_back(c.to_json());
                    write_json_atomic(report_dir / "clusters.json", clusters);
                    entry["clusters"] = rel + "/clusters.json";
                    write_json_atomic(report_dir / "completion_meta.json",
                                      result.completion_meta);
                    entry["completion_meta"] = rel + "/completion_meta.json";
                    write_json_atomic(report_dir / "graph.json", result.graph.to_json());
                    entry["graph"] = rel + "/graph.json";
                    for (const auto& format : options.exports) {
                        if (format == "dot") {
                            write_file_atomic(report_dir / "graph.dot", to_dot(result.graph));
                            entry["dot"] = rel + "/graph.dot";
                        } else if (format == "graphml") {
                            write_file_atomic(report_dir / "graph.graphml",
                                              to_graphml(result.graph));
                            entry["graphml"] = rel + "/graph.graphml";
                        }
                    }
                    output_entries[i] = std::move(entry);
                    outcome.reports[i] = std::move(result);
                } catch (const std::exception& e) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (failure.empty()) {
                        failure = "report " + report.id + ": " + e.what();
                        failure_ex = std::current_exception();
                    }
                    return;
                }
            }
        };

        const int jobs = std::max(1, std::min<int>(options.jobs,
                                                   static_cast<int>(reports.size())));
        if (jobs == 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            pool.reserve(static_cast<std::size_t>(jobs));
            for (int t = 0; t < jobs; ++t)
                pool.emplace_back(worker);
            for (auto& t : pool)
                t.join();
        }

        for (std::size_t i = 0; i < reports.size(); ++i)
            if (!output_entries[i].is_null())
                manifest.outputs[reports[i].id] = output_entries[i];
        for (const auto& r : outcome.reports) {
            if (!r.completion_meta.is_object())
                continue; // report never finished; its failure is reported below
            if (r.completion_meta.contains("selection") &&
                r.completion_meta["selection"].value("topic_tie", false))
                manifest.warnings.push_back("report " + r.report_id +
                                            ": topic tie broken lexicographically");
            for (const auto& o :
                 r.completion_meta.value("outcomes", json::array())) {
                const std::string status = o.value("status", "");
                if (status != "linked" && !status.empty())
                    manifest.warnings.push_back("report " + r.report_id + ": relation for '" +
                                                o.value("central_canonical", "") +
                                                "' dropped (" + status + ")");
            }
        }
    } catch (const std::exception& e) {
        if (failure.empty()) {
            failure = e.what();
            failure_ex = std::current_exception();
        }
    }

    if (!failure.empty()) {
        manifest.failed = true;
        manifest.error = failure;
        finish_manifest();
        if (failure_ex)
            std::rethrow_exception(failure_ex);
        throw PhaseError("pipeline", failure, "");
    }
    finish_manifest();
    outcome.manifest = std::move(manifest);
    return outcome;
}

} // namespace ctikg
