#pragma once
// Graph export formats. JSON is the canonical artifact (core KnowledgeGraph
// serialization); DOT and GraphML are for visualization and interchange.
// Both renderings are deterministic: nodes in id order, edges in graph order.

#include <string>

#include "ctikg/core.hpp"

namespace ctikg {

// Graphviz digraph; inferred edges render dashed and carry a provenance
// attribute, so phase-3 links are visually distinct from extracted ones.
std::string to_dot(const KnowledgeGraph& g);

// GraphML with node data (canonical, entity_type, ioc_class, aliases) and
// edge data (relation, provenance).
std::string to_graphml(const KnowledgeGraph& g);

} // namespace ctikg
