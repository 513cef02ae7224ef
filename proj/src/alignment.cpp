#include "ctikg/alignment.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "ctikg/errors.hpp"
#include "ctikg/extraction.hpp"
#include "ctikg/simkernel.hpp"

namespace ctikg {

using nlohmann::json;

json MergeCluster::to_json() const {
    json members_json = json::array();
    for (const auto& m : members)
        members_json.push_back(json{{"surface", m.surface}, {"frequency", m.frequency}});
    json j{{"entity_type", entity_type}, {"members", members_json}, {"canonical", canonical}};
    if (ioc_class)
        j["ioc_class"] = *ioc_class;
    return j;
}

namespace {

// Exact label, else case-insensitive label, else the ontology's fallback.
std::string resolve_type_label(const std::string& raw, const Ontology& ontology) {
    const std::string label = normalize_ws(raw);
    if (ontology.has_type(label))
        return label;
    if (auto resolved = ontology.resolve_label(label))
        return *resolved;
    return ontology.effective_fallback();
}

std::string type_from_json(const json& side, const char* key) {
    if (!side.is_object() || !side.contains("type") || !side.at("type").is_string())
        throw ParseError(std::string("tagged triplet ") + key + " needs a string 'type'");
    return side.at("type").get<std::string>();
}

} // namespace

std::vector<std::pair<std::string, std::string>>
parse_typing_response(const std::string& text, std::size_t expected, const Ontology& ontology) {
    json payload = recover_json_value(text);
    if (payload.is_object()) {
        // Unwrap {"answers": [...]}-style envelopes.
        const json* only_array = nullptr;
        for (const auto& [key, value] : payload.items()) {
            (void)key;
            if (value.is_array()) {
                if (only_array)
                    throw ParseError("typing response has more than one array field");
                only_array = &value;
            }
        }
        if (!only_array)
            throw ParseError("typing response has no array field");
        payload = *only_array;
    }
    if (!payload.is_array())
        throw ParseError("typing response is not a JSON array");
    if (payload.size() != expected)
        throw ParseError("typing response has " + std::to_string(payload.size()) +
                         " items, expected " + std::to_string(expected));

    std::vector<std::pair<std::string, std::string>> labels;
    labels.reserve(expected);
    for (const auto& item : payload) {
        const json* tagged = &item;
        if (item.is_object() && item.contains("tagged_triplet"))
            tagged = &item.at("tagged_triplet");
        if (!tagged->is_object() || !tagged->contains("subject") || !tagged->contains("object"))
            throw ParseError("tagged triplet needs 'subject' and 'object'");
        labels.emplace_back(
            resolve_type_label(type_from_json(tagged->at("subject"), "subject"), ontology),
            resolve_type_label(type_from_json(tagged->at("object"), "object"), ontology));
    }
    return labels;
}

std::vector<TypedTriplet> assign_types(const std::vector<RawTriplet>& triplets,
                                       const Ontology& ontology,
                                       const std::vector<Demonstration>& demos,
                                       const PipelineConfig& config,
                                       const PromptTemplateSet& templates, Gateway& gateway,
                                       const CallContext& ctx) {
    if (triplets.empty())
        throw InternalError("assign_types needs at least one triplet");

    const PromptSpec prompt = build_typing_prompt(templates, ontology, demos, triplets);
    std::string prompt_text = prompt.render();

    std::vector<std::pair<std::string, std::string>> labels;
    std::string parse_failure;
    std::string raw_response;
    int calls = 0;
    for (int attempt = 0; attempt < 3; ++attempt) {
        const CompletionResult reply = gateway.complete({prompt_text, config.decoding}, ctx);
        ++calls;
        raw_response = reply.text;
        try {
            labels = parse_typing_response(reply.text, triplets.size(), ontology);
            parse_failure.clear();
            break;
        } catch (const ParseError& e) {
            parse_failure = e.what();
            prompt_text += "\n\nThe previous answer could not be parsed (" + parse_failure +
                           "). Answer again with only the JSON array, one item per input "
                           "triplet, each carrying \"triplet\" and \"tagged_triplet\".";
        }
    }
    if (!parse_failure.empty())
        throw PhaseError("typing",
                         "response unparseable after " + std::to_string(calls) +
                             " calls: " + parse_failure,
                         raw_response);

    std::vector<TypedTriplet> typed;
    typed.reserve(triplets.size());
    for (std::size_t i = 0; i < triplets.size(); ++i) {
        TypedTriplet t;
        t.subject = TypedMention{triplets[i].subject, labels[i].first};
        t.relation = triplets[i].relation;
        t.object = TypedMention{triplets[i].object, labels[i].second};
        typed.push_back(std::move(t));
    }
    return typed;
}

std::vector<EntityGroup> group_by_type(const std::vector<TypedTriplet>& typed) {
    std::vector<EntityGroup> groups;
    std::map<std::string, std::size_t> group_of_type;   // type → groups index
    std::map<std::string, std::pair<std::size_t, std::size_t>> member_of; // surface → (g, m)

    auto add_mention = [&](const TypedMention& tm, std::size_t triplet_index) {
        const std::string& surface = tm.mention.surface;
        if (auto it = member_of.find(surface); it != member_of.end()) {
            // First assignment wins on type disagreement.
            GroupMember& member = groups[it->second.first].members[it->second.second];
            ++member.frequency;
            member.triplet_refs.push_back(triplet_index);
            return;
        }
        auto [git, inserted] = group_of_type.try_emplace(tm.entity_type, groups.size());
        if (inserted)
            groups.push_back(EntityGroup{tm.entity_type, {}});
        EntityGroup& group = groups[git->second];
        group.members.push_back(GroupMember{surface, 1, {triplet_index}});
        member_of[surface] = {git->second, group.members.size() - 1};
    };

    for (std::size_t i = 0; i < typed.size(); ++i) {
        add_mention(typed[i].subject, i);
        add_mention(typed[i].object, i);
    }
    return groups;
}

std::vector<MergeCluster> merge_group_with_vectors(const EntityGroup& group,
                                                   const std::vector<EmbeddingVector>& vectors,
                                                   double threshold) {
    const std::size_t n = group.members.size();
    if (n == 0)
        throw InternalError("merge over an empty group");
    if (vectors.size() != n)
        throw InternalError("merge: one vector per member required");

    std::vector<std::optional<std::string>> ioc(n);
    std::vector<std::string> literal(n);
    for (std::size_t i = 0; i < n; ++i) {
        ioc[i] = detect_ioc(group.members[i].surface);
        if (ioc[i])
            literal[i] = normalize_ioc(group.members[i].surface, *ioc[i]);
    }

    // An IOC mention only ever links to the same normalized literal; in
    // particular it never rides a non-IOC bridge into a wider cluster.
    const auto admit = [&](std::size_t a, std::size_t b) {
        if (!ioc[a] && !ioc[b])
            return true;
        return ioc[a] && ioc[b] && *ioc[a] == *ioc[b] && literal[a] == literal[b];
    };

    VectorBatch batch;
    for (const auto& v : vectors)
        batch.push_back(v);

    // Union-find over the admitted τ-graph; clusters are its components.
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
        while (parent[x] != x)
            x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& [a, b] : threshold_pairs(batch, threshold, admit)) {
        const auto ra = find(a), rb = find(b);
        if (ra != rb)
            parent[std::max(ra, rb)] = std::min(ra, rb);
    }

    std::map<std::size_t, std::size_t> cluster_of_root; // root → output index
    std::vector<MergeCluster> clusters;
    for (std::size_t i = 0; i < n; ++i) {
        auto [it, inserted] = cluster_of_root.try_emplace(find(i), clusters.size());
        if (inserted)
            clusters.push_back(MergeCluster{group.entity_type, {}, "", std::nullopt});
        MergeCluster& cluster = clusters[it->second];
        cluster.members.push_back(group.members[i]);
        if (ioc[i])
            cluster.ioc_class = ioc[i];
    }
    for (auto& cluster : clusters)
        cluster.canonical = choose_canonical(cluster.members);
    return clusters;
}

std::vector<MergeCluster> merge_group(const EntityGroup& group, Gateway& gateway,
                                      double threshold, const CallContext& ctx) {
    if (group.members.empty())
        throw InternalError("merge over an empty group");
    if (group.members.size() == 1) {
        MergeCluster cluster{group.entity_type, group.members,
                             choose_canonical(group.members), std::nullopt};
        cluster.ioc_class = detect_ioc(group.members.front().surface);
        return {cluster};
    }
    std::vector<std::string> surfaces;
    surfaces.reserve(group.members.size());
    for (const auto& m : group.members)
        surfaces.push_back(m.surface);
    return merge_group_with_vectors(group, gateway.embed(surfaces, ctx), threshold);
}

std::string choose_canonical(const std::vector<GroupMember>& members) {
    if (members.empty())
        throw InternalError("choose_canonical on an empty cluster");
    const GroupMember* best = &members.front();
    for (const auto& m : members) {
        if (m.frequency != best->frequency) {
            if (m.frequency > best->frequency)
                best = &m;
            continue;
        }
        if (m.surface.size() != best->surface.size()) {
            if (m.surface.size() > best->surface.size())
                best = &m;
            continue;
        }
        if (m.surface < best->surface)
            best = &m;
    }
    return best->surface;
}

KnowledgeGraph rebuild_graph(const std::vector<TypedTriplet>& typed,
                             const std::vector<MergeCluster>& clusters) {
    KnowledgeGraph graph;
    std::map<std::string, std::string> node_of_surface; // mention surface → node id
    for (const auto& cluster : clusters) {
        EntityNode node;
        node.id = entity_id(cluster.canonical, cluster.entity_type);
        node.canonical = cluster.canonical;
        node.entity_type = cluster.entity_type;
        node.ioc_class = cluster.ioc_class;
        for (const auto& m : cluster.members)
            node.aliases.insert(m.surface);
        node.aliases.insert(cluster.canonical);
        graph.add_node(node);
        for (const auto& m : cluster.members)
            node_of_surface[m.surface] = node.id;
    }

    auto node_of = [&](const TypedMention& tm) {
        auto it = node_of_surface.find(tm.mention.surface);
        if (it == node_of_surface.end())
            throw InternalError("mention '" + tm.mention.surface + "' belongs to no cluster");
        return it->second;
    };
    for (const auto& t : typed)
        graph.add_edge(Edge{node_of(t.subject), node_of(t.object), t.relation,
                            Provenance::extracted});
    return graph;
}

} // namespace ctikg
