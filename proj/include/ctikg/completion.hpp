#pragma once
// Phase 3: long-distance relation prediction. The aligned graph usually falls
// apart into disconnected subgraphs; this phase finds them, picks the most
// connected entity of each (and an overall topic entity), asks the model for
// the relation linking each non-topic central to the topic, and integrates
// the answers as inferred edges.

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctikg/core.hpp"
#include "ctikg/gateway.hpp"
#include "ctikg/prompt.hpp"
#include "ctikg/retriever.hpp"

namespace ctikg {

struct Component {
    std::vector<std::string> node_ids;      // sorted ascending
    std::vector<std::size_t> edge_indices;  // indices into graph.edges()
};

// Weakly connected components (edge direction ignored), ordered by least
// node id. Components partition the node set.
std::vector<Component> connected_components(const KnowledgeGraph& g);

// Degree centrality with the documented tie-break: total degree first, then
// out-degree, compared lexicographically.
struct CentralityKey {
    int total = 0;
    int out = 0;

    friend bool operator<(const CentralityKey& a, const CentralityKey& b) {
        if (a.total != b.total)
            return a.total < b.total;
        return a.out < b.out;
    }
    friend bool operator==(const CentralityKey& a, const CentralityKey& b) {
        return a.total == b.total && a.out == b.out;
    }
};

CentralityKey centrality_key(const KnowledgeGraph& g, const std::string& node_id);

struct CentralSelection {
    std::vector<std::vector<std::string>> centrals; // parallel to the component list
    std::string topic_id;                           // empty only for an empty graph
    std::size_t topic_component = 0;
    bool topic_tie = false; // a tie on the topic key was broken lexicographically

    nlohmann::json to_json(const KnowledgeGraph& g) const;
};

// Every node achieving its component's maximal key is central; the topic is
// the maximal-key central overall, ties broken by least canonical string.
CentralSelection select_centrals(const std::vector<Component>& components,
                                 const KnowledgeGraph& g);

// Parses one predicted_triple: a bare object, a fenced one, an object wrapped
// in "predicted_triple", or a one-element array.
RawTriplet parse_relation_response(const std::string& text);

struct RelationPredictionOutcome {
    std::string central_id;
    std::string central_canonical;
    std::string status; // linked | parse_error | off_entity | empty_relation
    std::string detail;
    std::optional<Edge> edge;

    nlohmann::json to_json() const;
};

struct RelationPredictionResult {
    std::vector<Edge> edges; // provenance = inferred
    std::vector<RelationPredictionOutcome> outcomes;
    int calls = 0;
};

// One completion per central outside the topic's component. A reply is kept
// only when its endpoints resolve (by canonical or alias, case-insensitive)
// to exactly the queried pair; anything else is dropped and recorded, never
// fabricated. Fewer than two components → no calls.
RelationPredictionResult predict_relations(const KnowledgeGraph& g,
                                           const std::vector<Component>& components,
                                           const CentralSelection& selection,
                                           const std::string& report_text,
                                           const std::vector<Demonstration>& demos,
                                           const PipelineConfig& config,
                                           const PromptTemplateSet& templates, Gateway& gateway,
                                           const CallContext& ctx = {});

// Appends inferred edges (duplicates collapse, self-loops drop) and
// revalidates; an invariant breach is an InternalError.
KnowledgeGraph integrate(const KnowledgeGraph& g, const std::vector<Edge>& inferred);

} // namespace ctikg
