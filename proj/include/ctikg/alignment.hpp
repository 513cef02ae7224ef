#pragma once
// Phase 2: hierarchical entity alignment. Coarse pass — one completion types
// every mention and mentions sharing a type are grouped. Fine pass — each
// group is embedded and mentions whose cosine similarity reaches the merge
// threshold are clustered by connected components, except that IOC literals
// (CVE ids, addresses, hashes, ...) never merge unless their normalized
// literals are identical. The graph is then rebuilt on canonical entities.

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctikg/core.hpp"
#include "ctikg/gateway.hpp"
#include "ctikg/ioc.hpp"
#include "ctikg/prompt.hpp"
#include "ctikg/retriever.hpp"

namespace ctikg {

struct GroupMember {
    std::string surface;
    int frequency = 0;                     // occurrences across the typed triplets
    std::vector<std::size_t> triplet_refs; // indices into the typed-triplet list
};

struct EntityGroup {
    std::string entity_type;
    std::vector<GroupMember> members; // distinct surfaces, first-appearance order
};

struct MergeCluster {
    std::string entity_type;
    std::vector<GroupMember> members;
    std::string canonical;
    std::optional<std::string> ioc_class; // set when the members are one IOC literal

    nlohmann::json to_json() const;
};

// One completion call (plus at most two repair re-asks) assigns every mention
// a type; unknown labels map case-insensitively onto the ontology, else to
// its fallback type. Surfaces and relations stay as given.
std::vector<TypedTriplet> assign_types(const std::vector<RawTriplet>& triplets,
                                       const Ontology& ontology,
                                       const std::vector<Demonstration>& demos,
                                       const PipelineConfig& config,
                                       const PromptTemplateSet& templates, Gateway& gateway,
                                       const CallContext& ctx = {});

// Parses a typing response for exactly expected items; accepts items shaped
// {"triplet", "tagged_triplet"} or bare tagged triplets. Returns the type
// label pairs (subject, object) in input order, resolved against the ontology.
std::vector<std::pair<std::string, std::string>>
parse_typing_response(const std::string& text, std::size_t expected, const Ontology& ontology);

// Distinct surfaces partitioned by assigned type. When occurrences of one
// surface disagree on type, the first assignment wins.
std::vector<EntityGroup> group_by_type(const std::vector<TypedTriplet>& typed);

// Fine-grained merge of one group; embeds member surfaces through the gateway.
std::vector<MergeCluster> merge_group(const EntityGroup& group, Gateway& gateway,
                                      double threshold, const CallContext& ctx = {});

// Pure core used by tests and threshold sweeps: vectors[i] embeds members[i].
std::vector<MergeCluster> merge_group_with_vectors(const EntityGroup& group,
                                                   const std::vector<EmbeddingVector>& vectors,
                                                   double threshold);

// Most frequent surface; ties → longest; remaining ties → lexicographic least.
std::string choose_canonical(const std::vector<GroupMember>& members);

// One node per cluster, edges rewritten onto canonical entities; duplicates
// collapse and self-loops drop. A mention outside every cluster is an
// InternalError.
KnowledgeGraph rebuild_graph(const std::vector<TypedTriplet>& typed,
                             const std::vector<MergeCluster>& clusters);

} // namespace ctikg
