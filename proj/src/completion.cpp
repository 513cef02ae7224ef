#include "ctikg/completion.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "ctikg/errors.hpp"
#include "ctikg/extraction.hpp"

namespace ctikg {

using nlohmann::json;

std::vector<Component> connected_components(const KnowledgeGraph& g) {
    // Undirected adjacency; nodes_ iteration is id-sorted, which fixes both
    // component order (least id first) and member order.
    std::map<std::string, std::vector<std::string>> adjacency;
    for (const auto& [id, node] : g.nodes()) {
        (void)node;
        adjacency[id];
    }
    for (const auto& e : g.edges()) {
        adjacency[e.source].push_back(e.target);
        adjacency[e.target].push_back(e.source);
    }

    std::set<std::string> seen;
    std::vector<Component> components;
    for (const auto& [start, unused] : adjacency) {
        (void)unused;
        if (seen.count(start))
            continue;
        Component component;
        std::vector<std::string> stack{start};
        seen.insert(start);
        while (!stack.empty()) {
            const std::string id = stack.back();
            stack.pop_back();
            component.node_ids.push_back(id);
            for (const auto& next : adjacency.at(id)) {
                if (seen.insert(next).second)
                    stack.push_back(next);
            }
        }
        std::sort(component.node_ids.begin(), component.node_ids.end());
        components.push_back(std::move(component));
    }

    for (std::size_t i = 0; i < g.edges().size(); ++i) {
        const auto& e = g.edges()[i];
        for (auto& component : components) {
            if (std::binary_search(component.node_ids.begin(), component.node_ids.end(),
                                   e.source)) {
                component.edge_indices.push_back(i);
                break;
            }
        }
    }
    return components;
}

CentralityKey centrality_key(const KnowledgeGraph& g, const std::string& node_id) {
    if (!g.find_node(node_id))
        throw InternalError("centrality_key: unknown node " + node_id);
    CentralityKey key;
    for (const auto& e : g.edges()) {
        if (e.source == node_id) {
            ++key.total;
            ++key.out;
        }
        if (e.target == node_id)
            ++key.total;
    }
    return key;
}

json CentralSelection::to_json(const KnowledgeGraph& g) const {
    auto canonical_of = [&](const std::string& id) {
        const EntityNode* node = g.find_node(id);
        return node ? node->canonical : id;
    };
    json per_component = json::array();
    for (const auto& component_centrals : centrals) {
        json ids = json::array();
        for (const auto& id : component_centrals)
            ids.push_back(json{{"id", id}, {"canonical", canonical_of(id)}});
        per_component.push_back(ids);
    }
    return json{{"centrals", per_component},
                {"topic_id", topic_id},
                {"topic_canonical", topic_id.empty() ? "" : canonical_of(topic_id)},
                {"topic_component", topic_component},
                {"topic_tie", topic_tie}};
}

CentralSelection select_centrals(const std::vector<Component>& components,
                                 const KnowledgeGraph& g) {
    if (components.empty())
        throw InternalError("select_centrals over no components");

    CentralSelection selection;
    for (const auto& component : components) {
        CentralityKey best;
        std::vector<std::string> centrals;
        for (const auto& id : component.node_ids) {
            const CentralityKey key = centrality_key(g, id);
            if (centrals.empty() || best < key) {
                best = key;
                centrals = {id};
            } else if (key == best) {
                centrals.push_back(id);
            }
        }
        selection.centrals.push_back(std::move(centrals));
    }

    // Topic: same key over all centrals; ties break by least canonical
    // string (then id) because the relation prompts need a unique topic.
    CentralityKey best;
    std::vector<std::string> tied;
    for (const auto& component_centrals : selection.centrals) {
        for (const auto& id : component_centrals) {
            const CentralityKey key = centrality_key(g, id);
            if (tied.empty() || best < key) {
                best = key;
                tied = {id};
            } else if (key == best) {
                tied.push_back(id);
            }
        }
    }
    selection.topic_tie = tied.size() > 1;
    auto canonical_of = [&](const std::string& id) { return g.find_node(id)->canonical; };
    selection.topic_id = *std::min_element(
        tied.begin(), tied.end(), [&](const std::string& a, const std::string& b) {
            if (canonical_of(a) != canonical_of(b))
                return canonical_of(a) < canonical_of(b);
            return a < b;
        });
    for (std::size_t i = 0; i < components.size(); ++i) {
        if (std::binary_search(components[i].node_ids.begin(), components[i].node_ids.end(),
                               selection.topic_id))
            selection.topic_component = i;
    }
    return selection;
}

RawTriplet parse_relation_response(const std::string& text) {
    json payload = recover_json_value(text);
    if (payload.is_array()) {
        if (payload.size() != 1)
            throw ParseError("relation response array must hold exactly one triple");
        payload = payload.at(0);
    }
    if (payload.is_object() && payload.contains("predicted_triple"))
        payload = payload.at("predicted_triple");
    if (!payload.is_object())
        throw ParseError("relation response is not a JSON object");
    for (const char* field : {"subject", "relation", "object"}) {
        if (!payload.contains(field))
            throw ParseError(std::string("predicted triple missing field '") + field + "'");
        if (!payload[field].is_string())
            throw ParseError(std::string("predicted triple field '") + field +
                             "' is not a string");
    }
    return RawTriplet{Mention{normalize_ws(payload["subject"].get<std::string>()), std::nullopt},
                      normalize_relation(payload["relation"].get<std::string>()),
                      Mention{normalize_ws(payload["object"].get<std::string>()), std::nullopt}};
}

json RelationPredictionOutcome::to_json() const {
    json j{{"central_id", central_id},
           {"central_canonical", central_canonical},
           {"status", status},
           {"detail", detail}};
    if (edge)
        j["edge"] = json{{"source", edge->source},
                         {"target", edge->target},
                         {"relation", edge->relation}};
    return j;
}

namespace {

// Resolves a mention against one node by canonical or alias, after
// whitespace normalization and case folding.
bool names_node(const std::string& text, const EntityNode& node) {
    const std::string needle = to_lower(normalize_ws(text));
    if (needle == to_lower(node.canonical))
        return true;
    return std::any_of(node.aliases.begin(), node.aliases.end(),
                       [&](const std::string& alias) { return needle == to_lower(alias); });
}

} // namespace

RelationPredictionResult predict_relations(const KnowledgeGraph& g,
                                           const std::vector<Component>& components,
                                           const CentralSelection& selection,
                                           const std::string& report_text,
                                           const std::vector<Demonstration>& demos,
                                           const PipelineConfig& config,
                                           const PromptTemplateSet& templates, Gateway& gateway,
                                           const CallContext& ctx) {
    RelationPredictionResult result;
    if (components.size() < 2)
        return result;
    if (selection.centrals.size() != components.size())
        throw InternalError("central selection does not match the component list");

    const EntityNode* topic = g.find_node(selection.topic_id);
    if (!topic)
        throw InternalError("topic node missing from graph");

    for (std::size_t i = 0; i < components.size(); ++i) {
        if (i == selection.topic_component)
            continue;
        for (const auto& central_id : selection.centrals[i]) {
            const EntityNode* central = g.find_node(central_id);
            if (!central)
                throw InternalError("central node missing from graph");
            if (central->canonical == topic->canonical) {
                // Same surface under two types; the question could not tell
                // the pair apart, so skip without a call.
                result.outcomes.push_back({central_id, central->canonical, "off_entity",
                                           "central and topic share a surface", std::nullopt});
                continue;
            }

            const PromptSpec prompt = build_relation_prompt(templates, demos, report_text,
                                                            central->canonical, topic->canonical);
            const CompletionResult reply =
                gateway.complete({prompt.render(), config.decoding}, ctx);
            ++result.calls;

            RelationPredictionOutcome outcome;
            outcome.central_id = central_id;
            outcome.central_canonical = central->canonical;
            try {
                const RawTriplet triple = parse_relation_response(reply.text);
                const bool subject_is_central = names_node(triple.subject.surface, *central);
                const bool subject_is_topic = names_node(triple.subject.surface, *topic);
                const bool object_is_central = names_node(triple.object.surface, *central);
                const bool object_is_topic = names_node(triple.object.surface, *topic);
                // Direction comes from the model; endpoints must be exactly
                // the queried pair.
                std::string source, target;
                if (subject_is_central && object_is_topic) {
                    source = central->id;
                    target = topic->id;
                } else if (subject_is_topic && object_is_central) {
                    source = topic->id;
                    target = central->id;
                }
                if (source.empty()) {
                    outcome.status = "off_entity";
                    outcome.detail = "predicted triple names <" + triple.subject.surface +
                                     ", " + triple.object.surface + ">, expected <" +
                                     central->canonical + ", " + topic->canonical + ">";
                } else if (triple.relation.empty()) {
                    outcome.status = "empty_relation";
                } else {
                    outcome.status = "linked";
                    outcome.edge = Edge{source, target, triple.relation, Provenance::inferred};
                    result.edges.push_back(*outcome.edge);
                }
            } catch (const ParseError& e) {
                outcome.status = "parse_error";
                outcome.detail = e.what();
            }
            result.outcomes.push_back(std::move(outcome));
        }
    }
    return result;
}

KnowledgeGraph integrate(const KnowledgeGraph& g, const std::vector<Edge>& inferred) {
    KnowledgeGraph merged = g;
    for (const auto& e : inferred) {
        Edge edge = e;
        edge.provenance = Provenance::inferred;
        merged.add_edge(edge);
    }
    const auto violations = validate_graph(merged);
    if (!violations.empty())
        throw InternalError("integrated graph violates invariants: " + violations.front());
    return merged;
}

} // namespace ctikg
