#pragma once
// Scoring against gold annotations: triplet-level P/R/F1 with a pluggable
// match policy, typing accuracy and micro/macro-F1, pairwise-link merge
// metrics, and end-to-end graph comparison. Counts are exact integers;
// ratios derive from them and are reported to four decimal places.

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctikg/core.hpp"
#include "ctikg/gateway.hpp"

namespace ctikg {

enum class MatchMode { normalized_exact, voice_equivalent, judge };
std::string to_string(MatchMode mode);
MatchMode match_mode_from_name(const std::string& name);

struct MatchPolicy {
    MatchMode mode = MatchMode::normalized_exact;
    bool case_fold = true;
    bool collapse_ws = true;
    bool strip_punct = true;
};

// Normalization used for matching (independent of graph canonicalization).
std::string normalize_for_match(const std::string& s, const MatchPolicy& policy);

struct PRF {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;

    double precision() const { return tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp); }
    double recall() const { return tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn); }
    double f1() const {
        const double p = precision(), r = recall();
        return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
    }

    nlohmann::json to_json() const; // ratios rounded to 4 decimals
};

// Greedy one-to-one matching; predictions and gold are visited in lexicographic
// order of their normalized (subject, relation, object) key so scores are
// reproducible. voice_equivalent additionally admits the subject/object swap
// when relations match; judge mode asks the gateway (required then) for a
// yes/no equivalence verdict on pairs the deterministic rules reject.
PRF match_triplets(const std::vector<RawTriplet>& pred, const std::vector<RawTriplet>& gold,
                   const MatchPolicy& policy, Gateway* gateway = nullptr,
                   const CallContext& ctx = {});

struct TypingMetrics {
    double accuracy = 0.0;
    double micro_f1 = 0.0;
    double macro_f1 = 0.0;

    nlohmann::json to_json() const;
};

// Labels aligned by mention; a length mismatch is a SchemaError. Micro-F1
// pools TP/FP/FN over classes; macro-F1 averages per-class F1 over classes
// present on either side.
TypingMetrics typing_metrics(const std::vector<std::string>& pred_labels,
                             const std::vector<std::string>& gold_labels);

struct MergeMetrics {
    PRF pairwise;
    std::size_t entity_count = 0; // |pred_clusters|

    nlohmann::json to_json() const;
};

// PRF over unordered same-cluster mention pairs. Both clusterings must
// partition the same mention set (SchemaError otherwise).
MergeMetrics merge_metrics(const std::vector<std::vector<std::string>>& pred_clusters,
                           const std::vector<std::vector<std::string>>& gold_clusters);

// Flattens both graphs to canonical-surface triplets (extracted and inferred
// edges together) and applies match_triplets.
PRF evaluate_end_to_end(const KnowledgeGraph& pred_graph, const KnowledgeGraph& gold_graph,
                        const MatchPolicy& policy, Gateway* gateway = nullptr,
                        const CallContext& ctx = {});

// Canonical-surface triplet view of a graph, in edge order.
std::vector<RawTriplet> flatten_graph(const KnowledgeGraph& g);

// Gold annotations for one report; every section is optional so partial gold
// can still score the phases it covers.
struct GoldReport {
    std::string report_id;
    std::vector<RawTriplet> triplets;
    std::vector<TypedTriplet> typed_triplets;
    std::vector<std::vector<std::string>> clusters;
    std::vector<RawTriplet> inferred_relations;
    std::optional<KnowledgeGraph> graph;

    static GoldReport from_json(const nlohmann::json& j);
    static GoldReport load_file(const std::string& path);
};

} // namespace ctikg
