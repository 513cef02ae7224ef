#pragma once
// Domain types shared by every pipeline stage: reports, ontologies,
// triplets, entities, graphs, configuration.
//
// All types are plain values and safe to share read-only between threads.
// Graph mutation is single-writer.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ctikg/errors.hpp"

namespace ctikg {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// string helpers
// ---------------------------------------------------------------------------

// Trim and collapse internal runs of whitespace to single spaces.
std::string normalize_ws(const std::string& s);

// Relations are stored verbatim apart from trimming and single-spacing.
std::string normalize_relation(const std::string& s);

// ASCII lowercase copy.
std::string to_lower(const std::string& s);

// Content-derived entity id: FNV-1a 64 over canonical + type, as hex.
// Replayed runs produce identical ids.
std::string entity_id(const std::string& canonical, const std::string& entity_type);

uint64_t fnv1a64(const std::string& s);

// ---------------------------------------------------------------------------
// reports and ontologies
// ---------------------------------------------------------------------------

struct CtiReport {
    std::string id;
    std::string source;                   // publisher name
    std::optional<std::string> published; // ISO-8601 date
    std::string text;

    static CtiReport from_json(const json& j);
    json to_json() const;
};

struct EntityType {
    std::string label;
    std::optional<std::string> parent;
    std::optional<std::string> description;
};

struct Ontology {
    std::string name;
    std::vector<EntityType> entity_types;
    std::vector<std::string> relation_types; // empty => open relation extraction
    std::optional<std::string> fallback_type;

    bool has_type(const std::string& label) const;
    // Case-insensitive exact match against the declared labels; nullopt if none.
    std::optional<std::string> resolve_label(const std::string& candidate) const;
    // Label assigned to mentions whose model-provided type is unknown.
    std::string effective_fallback() const;

    // Throws SchemaError when labels are not unique, a parent does not
    // resolve, or the type list is empty.
    void validate() const;

    static Ontology from_json(const json& j);
    json to_json() const;
};

// ---------------------------------------------------------------------------
// triplets
// ---------------------------------------------------------------------------

struct Mention {
    std::string surface;
    // Character offsets into the source report; when present,
    // report.text[span) must equal surface.
    std::optional<std::pair<size_t, size_t>> span;

    bool operator==(const Mention& o) const { return surface == o.surface && span == o.span; }
};

// Checks the span invariant against the owning report.
bool mention_span_valid(const Mention& m, const CtiReport& report);

struct RawTriplet {
    Mention subject;
    std::string relation;
    Mention object;

    // All three fields non-empty after whitespace trim.
    bool well_formed() const;
    json to_json() const;
};

struct TypedMention {
    Mention mention;
    std::string entity_type;
};

struct TypedTriplet {
    TypedMention subject;
    std::string relation;
    TypedMention object;

    json to_json() const;
    static TypedTriplet from_json(const json& j);
};

// ---------------------------------------------------------------------------
// knowledge graph
// ---------------------------------------------------------------------------

struct EntityNode {
    std::string id;
    std::string canonical;
    std::set<std::string> aliases; // all merged mentions; contains canonical
    std::string entity_type;
    std::optional<std::string> ioc_class;
};

enum class Provenance { extracted, inferred };

std::string provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& s);

struct Edge {
    std::string source; // EntityNode id
    std::string target; // EntityNode id
    std::string relation;
    Provenance provenance = Provenance::extracted;

    bool same_key(const Edge& o) const {
        return source == o.source && target == o.target && relation == o.relation;
    }
};

class KnowledgeGraph {
public:
    const std::map<std::string, EntityNode>& nodes() const { return nodes_; }
    const std::vector<Edge>& edges() const { return edges_; }

    const EntityNode* find_node(const std::string& id) const;

    // Inserts or, for an existing id with matching canonical/type, unions
    // the alias sets. A conflicting reinsert is an internal error.
    void add_node(EntityNode node);

    // Returns false for self-loops and duplicate (source, relation, target)
    // edges; throws InternalError when an endpoint is missing.
    bool add_edge(Edge edge);

    bool empty() const { return nodes_.empty() && edges_.empty(); }

    // Serialized form uses stable key ordering (object keys sorted).
    json to_json() const;
    // Loads verbatim, without insertion-time rejection, so that
    // validate_graph can report violations in foreign files.
    static KnowledgeGraph from_json(const json& j);

private:
    std::map<std::string, EntityNode> nodes_;
    std::vector<Edge> edges_;
};

// Empty list iff all graph invariants hold; each violation names the
// offending node or edge. Total, idempotent, side-effect free.
std::vector<std::string> validate_graph(const KnowledgeGraph& g);

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

enum class Permutation { knn_ascend, knn_descend, random_order };

std::string permutation_name(Permutation p);
Permutation permutation_from_name(const std::string& s);

struct DecodingParams {
    double temperature = 0.0;
    int max_output_tokens = 4096;
};

// Per-task demonstration selection: kNN retrieval or a fixed list.
enum class DemoMode { knn, fixed };

std::string demo_mode_name(DemoMode m);
DemoMode demo_mode_from_name(const std::string& s);

struct PipelineConfig {
    int k_extract = 2;
    int k_typing = 8;
    int k_relation = 2; // may be 0 (zero-shot relation prediction)
    double merge_threshold = 0.6;
    Permutation permutation = Permutation::knn_ascend;
    DecodingParams decoding;
    uint64_t seed = 0; // drives the random permutation
    DemoMode mode_extraction = DemoMode::knn;
    DemoMode mode_typing = DemoMode::fixed;
    DemoMode mode_relation = DemoMode::fixed;
    double chars_per_token = 4.0; // advisory token estimation

    // Throws SchemaError on out-of-range values.
    void validate() const;

    json to_json() const;
    // Partial override: absent keys keep the defaults already present.
    static PipelineConfig from_json(const json& j);
};

} // namespace ctikg
