#include "ctikg/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "ctikg/errors.hpp"

namespace ctikg {

using nlohmann::json;

std::string to_string(MatchMode mode) {
    switch (mode) {
    case MatchMode::normalized_exact: return "normalized_exact";
    case MatchMode::voice_equivalent: return "voice_equivalent";
    case MatchMode::judge: return "judge";
    }
    throw InternalError("unreachable match mode");
}

MatchMode match_mode_from_name(const std::string& name) {
    if (name == "normalized_exact") return MatchMode::normalized_exact;
    if (name == "voice_equivalent") return MatchMode::voice_equivalent;
    if (name == "judge") return MatchMode::judge;
    throw UsageError("unknown match mode: " + name +
                     " (expected normalized_exact|voice_equivalent|judge)");
}

std::string normalize_for_match(const std::string& s, const MatchPolicy& policy) {
    std::string out = policy.collapse_ws ? normalize_ws(s) : s;
    if (policy.strip_punct) {
        std::string stripped;
        for (char c : out)
            if (!std::ispunct(static_cast<unsigned char>(c)))
                stripped.push_back(c);
        out = policy.collapse_ws ? normalize_ws(stripped) : stripped;
    }
    if (policy.case_fold)
        out = to_lower(out);
    return out;
}

namespace {

double round4(double x) { return std::round(x * 10000.0) / 10000.0; }

struct MatchKey {
    std::string subject;
    std::string relation;
    std::string object;

    bool operator<(const MatchKey& o) const {
        if (subject != o.subject) return subject < o.subject;
        if (relation != o.relation) return relation < o.relation;
        return object < o.object;
    }
    bool operator==(const MatchKey& o) const {
        return subject == o.subject && relation == o.relation && object == o.object;
    }
};

MatchKey key_of(const RawTriplet& t, const MatchPolicy& policy) {
    return {normalize_for_match(t.subject.surface, policy),
            normalize_for_match(t.relation, policy),
            normalize_for_match(t.object.surface, policy)};
}

bool judge_says_equivalent(const RawTriplet& pred, const RawTriplet& gold, Gateway& gateway,
                           const CallContext& ctx) {
    const std::string prompt =
        "Do these two cybersecurity triplets state the same fact?\n"
        "First: (" + pred.subject.surface + ", " + pred.relation + ", " + pred.object.surface +
        ")\n"
        "Second: (" + gold.subject.surface + ", " + gold.relation + ", " + gold.object.surface +
        ")\n"
        "Answer with exactly one word: yes or no.";
    const CompletionResult reply = gateway.complete({prompt, DecodingParams{}}, ctx);
    const std::string verdict = to_lower(normalize_ws(reply.text));
    return verdict.rfind("yes", 0) == 0;
}

} // namespace

json PRF::to_json() const {
    return json{{"tp", tp},
                {"fp", fp},
                {"fn", fn},
                {"precision", round4(precision())},
                {"recall", round4(recall())},
                {"f1", round4(f1())}};
}

PRF match_triplets(const std::vector<RawTriplet>& pred, const std::vector<RawTriplet>& gold,
                   const MatchPolicy& policy, Gateway* gateway, const CallContext& ctx) {
    if (policy.mode == MatchMode::judge && !gateway)
        throw UsageError("judge match mode requires a gateway");

    // Visit both sides in lexicographic key order so greedy matching is
    // reproducible regardless of input order.
    std::vector<std::size_t> pred_order(pred.size()), gold_order(gold.size());
    for (std::size_t i = 0; i < pred.size(); ++i)
        pred_order[i] = i;
    for (std::size_t i = 0; i < gold.size(); ++i)
        gold_order[i] = i;
    std::vector<MatchKey> pred_keys, gold_keys;
    pred_keys.reserve(pred.size());
    gold_keys.reserve(gold.size());
    for (const auto& t : pred)
        pred_keys.push_back(key_of(t, policy));
    for (const auto& t : gold)
        gold_keys.push_back(key_of(t, policy));
    std::sort(pred_order.begin(), pred_order.end(),
              [&](std::size_t a, std::size_t b) { return pred_keys[a] < pred_keys[b]; });
    std::sort(gold_order.begin(), gold_order.end(),
              [&](std::size_t a, std::size_t b) { return gold_keys[a] < gold_keys[b]; });

    const bool allow_swap =
        policy.mode == MatchMode::voice_equivalent || policy.mode == MatchMode::judge;
    auto matches = [&](std::size_t p, std::size_t g) {
        if (pred_keys[p] == gold_keys[g])
            return true;
        if (allow_swap && pred_keys[p].relation == gold_keys[g].relation &&
            pred_keys[p].subject == gold_keys[g].object &&
            pred_keys[p].object == gold_keys[g].subject)
            return true;
        if (policy.mode == MatchMode::judge)
            return judge_says_equivalent(pred[p], gold[g], *gateway, ctx);
        return false;
    };

    std::vector<bool> gold_used(gold.size(), false);
    PRF prf;
    for (const std::size_t p : pred_order) {
        bool matched = false;
        for (const std::size_t g : gold_order) {
            if (gold_used[g])
                continue;
            if (matches(p, g)) {
                gold_used[g] = true;
                matched = true;
                break;
            }
        }
        matched ? ++prf.tp : ++prf.fp;
    }
    prf.fn = static_cast<std::int64_t>(gold.size()) - prf.tp;
    return prf;
}

json TypingMetrics::to_json() const {
    return json{{"accuracy", round4(accuracy)},
                {"micro_f1", round4(micro_f1)},
                {"macro_f1", round4(macro_f1)}};
}

TypingMetrics typing_metrics(const std::vector<std::string>& pred_labels,
                             const std::vector<std::string>& gold_labels) {
    if (pred_labels.size() != gold_labels.size())
        throw SchemaError("typing metrics: label lists differ in length");

    TypingMetrics m;
    if (pred_labels.empty())
        return m;

    std::int64_t correct = 0;
    std::map<std::string, PRF> per_class;
    for (std::size_t i = 0; i < pred_labels.size(); ++i) {
        if (pred_labels[i] == gold_labels[i]) {
            ++correct;
            ++per_class[gold_labels[i]].tp;
        } else {
            ++per_class[pred_labels[i]].fp;
            ++per_class[gold_labels[i]].fn;
        }
    }
    m.accuracy = double(correct) / double(pred_labels.size());

    PRF pooled;
    double f1_sum = 0.0;
    for (const auto& [label, prf] : per_class) {
        (void)label;
        pooled.tp += prf.tp;
        pooled.fp += prf.fp;
        pooled.fn += prf.fn;
        f1_sum += prf.f1();
    }
    m.micro_f1 = pooled.f1();
    m.macro_f1 = f1_sum / double(per_class.size());
    return m;
}

json MergeMetrics::to_json() const {
    json j = pairwise.to_json();
    j["entity_count"] = entity_count;
    return j;
}

MergeMetrics merge_metrics(const std::vector<std::vector<std::string>>& pred_clusters,
                           const std::vector<std::vector<std::string>>& gold_clusters) {
    auto mention_set = [](const std::vector<std::vector<std::string>>& clusters,
                          const char* side) {
        std::set<std::string> mentions;
        for (const auto& cluster : clusters)
            for (const auto& m : cluster)
                if (!mentions.insert(m).second)
                    throw SchemaError(std::string("merge metrics: ") + side +
                                      " clusters repeat mention '" + m + "'");
        return mentions;
    };
    const auto pred_mentions = mention_set(pred_clusters, "pred");
    const auto gold_mentions = mention_set(gold_clusters, "gold");
    if (pred_mentions != gold_mentions)
        throw SchemaError("merge metrics: clusterings cover different mention sets");

    auto link_set = [](const std::vector<std::vector<std::string>>& clusters) {
        std::set<std::pair<std::string, std::string>> links;
        for (const auto& cluster : clusters) {
            for (std::size_t i = 0; i < cluster.size(); ++i)
                for (std::size_t j = i + 1; j < cluster.size(); ++j)
                    links.insert(std::minmax(cluster[i], cluster[j]));
        }
        return links;
    };
    const auto pred_links = link_set(pred_clusters);
    const auto gold_links = link_set(gold_clusters);

    MergeMetrics m;
    m.entity_count = pred_clusters.size();
    for (const auto& link : pred_links)
        gold_links.count(link) ? ++m.pairwise.tp : ++m.pairwise.fp;
    for (const auto& link : gold_links)
        if (!pred_links.count(link))
            ++m.pairwise.fn;
    return m;
}

std::vector<RawTriplet> flatten_graph(const KnowledgeGraph& g) {
    std::vector<RawTriplet> triplets;
    triplets.reserve(g.edges().size());
    for (const auto& e : g.edges()) {
        const EntityNode* source = g.find_node(e.source);
        const EntityNode* target = g.find_node(e.target);
        if (!source || !target)
            throw InternalError("flatten_graph: edge endpoint missing");
        triplets.push_back(RawTriplet{Mention{source->canonical, std::nullopt}, e.relation,
                                      Mention{target->canonical, std::nullopt}});
    }
    return triplets;
}

PRF evaluate_end_to_end(const KnowledgeGraph& pred_graph, const KnowledgeGraph& gold_graph,
                        const MatchPolicy& policy, Gateway* gateway, const CallContext& ctx) {
    return match_triplets(flatten_graph(pred_graph), flatten_graph(gold_graph), policy, gateway,
                          ctx);
}

namespace {

RawTriplet plain_triplet_from_json(const json& j) {
    for (const char* field : {"subject", "relation", "object"})
        if (!j.contains(field) || !j.at(field).is_string())
            throw SchemaError(std::string("gold triplet needs string '") + field + "'");
    return RawTriplet{Mention{normalize_ws(j.at("subject").get<std::string>()), std::nullopt},
                      normalize_relation(j.at("relation").get<std::string>()),
                      Mention{normalize_ws(j.at("object").get<std::string>()), std::nullopt}};
}

} // namespace

GoldReport GoldReport::from_json(const json& j) {
    GoldReport gold;
    try {
        gold.report_id = j.value("report_id", std::string{});
        if (j.contains("triplets"))
            for (const auto& t : j.at("triplets"))
                gold.triplets.push_back(plain_triplet_from_json(t));
        if (j.contains("typed_triplets"))
            for (const auto& t : j.at("typed_triplets"))
                gold.typed_triplets.push_back(TypedTriplet::from_json(t));
        if (j.contains("clusters"))
            gold.clusters = j.at("clusters").get<std::vector<std::vector<std::string>>>();
        if (j.contains("inferred_relations"))
            for (const auto& t : j.at("inferred_relations"))
                gold.inferred_relations.push_back(plain_triplet_from_json(t));
        if (j.contains("graph"))
            gold.graph = KnowledgeGraph::from_json(j.at("graph"));
    } catch (const json::exception& e) {
        throw SchemaError(std::string("bad gold report: ") + e.what());
    }
    return gold;
}

GoldReport GoldReport::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw UsageError("cannot open gold file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaError("gold file " + path + ": " + e.what());
    }
    return from_json(j);
}

} // namespace ctikg
