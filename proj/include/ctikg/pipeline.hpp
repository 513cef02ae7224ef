#pragma once
// Orchestration: the three phases wired end to end for one report, and a
// runner that processes a report set, writes per-report artifacts plus a run
// manifest under a deterministic run directory, and accounts usage exactly.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctikg/alignment.hpp"
#include "ctikg/completion.hpp"
#include "ctikg/core.hpp"
#include "ctikg/extraction.hpp"
#include "ctikg/gateway.hpp"
#include "ctikg/prompt.hpp"
#include "ctikg/retriever.hpp"

namespace ctikg {

// Demonstration corpus prepared per task: kNN tasks get an embedded index,
// fixed tasks keep corpus order. Built once per run.
struct PreparedDemos {
    DemoIndex extraction; // vectors filled only when extraction mode is knn
    std::vector<Demonstration> typing;
    std::vector<Demonstration> relation;
    std::optional<DemoIndex> typing_index;   // when typing mode is knn
    std::optional<DemoIndex> relation_index; // when relation mode is knn
};

PreparedDemos prepare_demos(const std::vector<Demonstration>& corpus,
                            const PipelineConfig& config, Gateway& gateway);

struct ReportPipelineResult {
    std::string report_id;
    ExtractionResult extraction;
    std::vector<TypedTriplet> typed;
    std::vector<MergeCluster> clusters;
    KnowledgeGraph graph; // after integration
    nlohmann::json completion_meta;
    bool used_gold_typed = false;
};

// Extraction → alignment → completion for one report. When gold_typed is
// given, the typing call is skipped and alignment starts from those triplets
// (the gold-group ablation). Empty extraction degrades gracefully to an
// empty graph with no further calls.
ReportPipelineResult run_pipeline_for_report(const CtiReport& report, const Ontology& ontology,
                                             const PipelineConfig& config,
                                             const PromptTemplateSet& templates,
                                             const PreparedDemos& demos, Gateway& gateway,
                                             const std::vector<TypedTriplet>* gold_typed = nullptr);

struct RunManifest {
    std::string run_id;
    std::string mode;   // live | record | replay
    bool replay = false;
    nlohmann::json config;
    std::string ontology;
    std::vector<std::string> report_ids; // sorted
    nlohmann::json per_phase_usage;      // phase → usage record
    UsageRecord total_usage;
    nlohmann::json outputs; // report id → relative artifact paths
    nlohmann::json warnings;
    bool failed = false;
    std::string error;

    nlohmann::json to_json() const;
};

struct RunOptions {
    GatewayMode mode = GatewayMode::replay;
    std::filesystem::path out_root;       // run directory = out_root / run_id
    std::vector<std::string> exports;     // extras among {dot, graphml}; json always
    int jobs = 1;
    bool force = false;                   // allow reuse of an existing run dir
};

struct RunOutcome {
    std::string run_id;
    std::filesystem::path run_dir;
    RunManifest manifest;
    std::vector<ReportPipelineResult> reports;
};

// Deterministic function of mode, config, ontology name and the sorted
// report ids — identical runs land in identically named directories.
std::string compute_run_id(GatewayMode mode, const PipelineConfig& config,
                           const std::string& ontology_name,
                           std::vector<std::string> report_ids);

// Processes every report (bounded worker pool, sequential per report),
// writes per-report artifacts, usage_log.json, and manifest.json (atomic).
// A phase failure preserves partial artifacts, writes a failed manifest,
// and rethrows. The gateway must be fresh for the run: usage accounting
// reads its whole call log.
RunOutcome run_pipeline(const std::vector<CtiReport>& reports, const Ontology& ontology,
                        const PipelineConfig& config, const PromptTemplateSet& templates,
                        const std::vector<Demonstration>& corpus, Gateway& gateway,
                        const RunOptions& options,
                        const std::map<std::string, std::vector<TypedTriplet>>* gold_typed = nullptr);

// JSON-lines report loader: {"id", "text", optional "source", "published"}.
std::vector<CtiReport> load_reports_jsonl(const std::string& path);

} // namespace ctikg
