// Acceptance suite: ten offline criteria exercising retrieval ranking,
// clustering, the IOC guard, central selection, relation-prediction
// connectivity, metric arithmetic, replay determinism, and parser tolerance.
// Prints one [PASS]/[FAIL] line per criterion; exit status 0 iff all pass.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctikg/alignment.hpp"
#include "ctikg/completion.hpp"
#include "ctikg/evaluation.hpp"
#include "ctikg/extraction.hpp"
#include "ctikg/gateway.hpp"
#include "ctikg/ioc.hpp"
#include "ctikg/pipeline.hpp"
#include "ctikg/retriever.hpp"
#include "ctikg/simkernel.hpp"

#include "support/scripted_backend.hpp"

using namespace ctikg;
using ctikg::testing::ScriptedTransport;
using ctikg::testing::TempDir;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int index, const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << index << ". " << name;
    if (!ok && !detail.empty())
        std::cout << " — " << detail;
    std::cout << "\n";
    if (!ok)
        ++g_failures;
}

// High-precision cosine, independent of the library kernels.
double reference_cosine(const std::vector<double>& a, const std::vector<double>& b) {
    long double dot = 0.0L, na = 0.0L, nb = 0.0L;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<long double>(a[i]) * b[i];
        na += static_cast<long double>(a[i]) * a[i];
        nb += static_cast<long double>(b[i]) * b[i];
    }
    if (na == 0.0L || nb == 0.0L)
        return 0.0;
    return static_cast<double>(dot / (std::sqrt(na) * std::sqrt(nb)));
}

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(dim);
    for (auto& x : v)
        x = dist(rng);
    return v;
}

// --- 1. retrieval ranking vs brute force ----------------------------------

bool retrieval_oracle(std::string& detail) {
    std::mt19937_64 rng(1001);
    for (int corpus_no = 0; corpus_no < 200; ++corpus_no) {
        const std::size_t docs = 1 + rng() % 50;
        const std::size_t dim = 2 + rng() % 63;
        const int k = 1 + static_cast<int>(rng() % docs);

        DemoIndex index;
        std::vector<std::vector<double>> vectors;
        for (std::size_t d = 0; d < docs; ++d) {
            Demonstration demo;
            std::ostringstream id;
            id << "d" << (d < 10 ? "0" : "") << d; // lexicographic == numeric
            demo.id = id.str();
            demo.task = DemoTask::extraction;
            demo.report_text = "doc " + demo.id;
            index.demos.push_back(demo);
            // occasional exact duplicates force score ties
            if (d > 0 && rng() % 7 == 0)
                vectors.push_back(vectors[rng() % d]);
            else
                vectors.push_back(random_vector(rng, dim));
            index.vectors.push_back(vectors.back());
        }
        const std::vector<double> query = random_vector(rng, dim);

        const auto ranked = retrieve(index, query, k, Permutation::knn_descend);
        if (ranked.size() != static_cast<std::size_t>(k)) {
            detail = "corpus " + std::to_string(corpus_no) + ": wrong result size";
            return false;
        }

        // brute force: score descending, then id ascending
        std::vector<std::size_t> order(docs);
        std::iota(order.begin(), order.end(), 0);
        std::vector<double> ref(docs);
        for (std::size_t d = 0; d < docs; ++d)
            ref[d] = reference_cosine(vectors[d], query);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (ref[a] != ref[b])
                return ref[a] > ref[b];
            return index.demos[a].id < index.demos[b].id;
        });

        for (int i = 0; i < k; ++i) {
            if (ranked[i].demo.id != index.demos[order[i]].id) {
                detail = "corpus " + std::to_string(corpus_no) + ": rank " +
                         std::to_string(i) + " is " + ranked[i].demo.id + ", expected " +
                         index.demos[order[i]].id;
                return false;
            }
            if (std::abs(ranked[i].score - ref[order[i]]) > 1e-12) {
                detail = "corpus " + std::to_string(corpus_no) + ": score off by " +
                         std::to_string(std::abs(ranked[i].score - ref[order[i]]));
                return false;
            }
        }

        const auto ascending = retrieve(index, query, k, Permutation::knn_ascend);
        std::set<std::string> want, got;
        for (int i = 0; i < k; ++i) {
            want.insert(ranked[i].demo.id);
            got.insert(ascending[i].demo.id);
        }
        if (want != got) {
            detail = "corpus " + std::to_string(corpus_no) + ": ascend changed the top-k set";
            return false;
        }
        for (std::size_t i = 1; i < ascending.size(); ++i)
            if (ascending[i].score < ascending[i - 1].score) {
                detail = "corpus " + std::to_string(corpus_no) + ": ascend scores decrease";
                return false;
            }
    }
    return true;
}

// --- 2. clustering vs transitive closure ----------------------------------

std::set<std::set<std::string>> cluster_surfaces(const std::vector<MergeCluster>& clusters) {
    std::set<std::set<std::string>> out;
    for (const auto& c : clusters) {
        std::set<std::string> members;
        for (const auto& m : c.members)
            members.insert(m.surface);
        out.insert(std::move(members));
    }
    return out;
}

bool clustering_oracle(std::string& detail) {
    const std::vector<std::string> ioc_pool{
        "CVE-2023-23397", "cve-2023-23397",  "CVE-2023-23392",
        "198.51.100.7",   "evil.example.com", "deadbeefdeadbeefdeadbeefdeadbeef"};
    const double thresholds[] = {0.4, 0.5, 0.6, 0.7};

    std::mt19937_64 rng(2002);
    for (int group_no = 0; group_no < 200; ++group_no) {
        const std::size_t n = 1 + rng() % 200;
        const std::size_t dim = 8 + rng() % 25;
        const double tau = thresholds[group_no % 4];
        const std::size_t centers = 1 + rng() % 8;

        EntityGroup group;
        group.entity_type = "Information";
        std::vector<std::vector<double>> vectors;
        std::vector<std::vector<double>> basis;
        for (std::size_t c = 0; c < centers; ++c)
            basis.push_back(random_vector(rng, dim));

        std::vector<std::string> pool = ioc_pool; // each IOC used at most once
        std::normal_distribution<double> noise(0.0, 0.35);
        for (std::size_t i = 0; i < n; ++i) {
            std::string surface;
            if (!pool.empty() && rng() % 5 == 0) {
                surface = pool.back();
                pool.pop_back();
            } else {
                surface = "entity " + std::to_string(group_no) + "-" + std::to_string(i);
            }
            group.members.push_back(GroupMember{surface, 1, {i}});
            std::vector<double> v = basis[rng() % centers];
            for (auto& x : v)
                x += noise(rng);
            vectors.push_back(std::move(v));
        }

        std::vector<EmbeddingVector> embedded;
        for (const auto& v : vectors)
            embedded.push_back(v);
        const auto clusters = merge_group_with_vectors(group, embedded, tau);

        // oracle: union-find over the admitted τ-relation
        std::vector<std::optional<std::string>> ioc(n);
        std::vector<std::string> literal(n);
        for (std::size_t i = 0; i < n; ++i) {
            ioc[i] = detect_ioc(group.members[i].surface);
            if (ioc[i])
                literal[i] = normalize_ioc(group.members[i].surface, *ioc[i]);
        }
        std::vector<std::size_t> parent(n);
        std::iota(parent.begin(), parent.end(), 0);
        std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
            while (parent[x] != x)
                x = parent[x] = parent[parent[x]];
            return x;
        };
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const bool admitted =
                    (!ioc[i] && !ioc[j]) ||
                    (ioc[i] && ioc[j] && *ioc[i] == *ioc[j] && literal[i] == literal[j]);
                if (!admitted)
                    continue;
                if (reference_cosine(vectors[i], vectors[j]) < tau)
                    continue;
                parent[find(i)] = find(j);
            }
        std::map<std::size_t, std::set<std::string>> expected;
        for (std::size_t i = 0; i < n; ++i)
            expected[find(i)].insert(group.members[i].surface);
        std::set<std::set<std::string>> want;
        for (auto& [root, members] : expected)
            want.insert(members);

        if (cluster_surfaces(clusters) != want) {
            detail = "group " + std::to_string(group_no) + " (n=" + std::to_string(n) +
                     ", tau=" + std::to_string(tau) + "): partitions differ";
            return false;
        }
    }
    return true;
}

// --- 3. threshold monotonicity ---------------------------------------------

bool threshold_monotonicity(std::string& detail) {
    // six two-mention ladders with within-pair cosines straddling the sweep
    const double pair_cosines[] = {0.72, 0.68, 0.62, 0.55, 0.48, 0.42};
    EntityGroup group;
    group.entity_type = "Information";
    std::vector<EmbeddingVector> vectors;
    std::size_t axis = 0;
    for (double c : pair_cosines) {
        EmbeddingVector first(12, 0.0), second(12, 0.0);
        first[axis] = 1.0;
        second[axis] = c;
        second[axis + 1] = std::sqrt(1.0 - c * c);
        vectors.push_back(first);
        vectors.push_back(second);
        const std::size_t i = group.members.size();
        group.members.push_back(GroupMember{"ladder " + std::to_string(i), 1, {i}});
        group.members.push_back(GroupMember{"ladder " + std::to_string(i + 1), 1, {i + 1}});
        axis += 2;
    }

    std::vector<std::size_t> counts;
    for (double tau : {0.7, 0.6, 0.5, 0.4})
        counts.push_back(merge_group_with_vectors(group, vectors, tau).size());
    for (std::size_t i = 1; i < counts.size(); ++i)
        if (counts[i] > counts[i - 1]) {
            detail = "cluster count increased from " + std::to_string(counts[i - 1]) + " to " +
                     std::to_string(counts[i]);
            return false;
        }
    if (counts.front() == counts.back()) {
        detail = "sweep never merged anything; the fixture is too coarse";
        return false;
    }
    return true;
}

// --- 4. IOC guard -----------------------------------------------------------

bool ioc_guard(std::string& detail) {
    EntityGroup group;
    group.entity_type = "Vulnerability";
    group.members = {GroupMember{"CVE-2023-23397", 1, {0}}, GroupMember{"CVE-2023-23392", 1, {1}}};
    std::vector<EmbeddingVector> vectors(2, EmbeddingVector(8, 0.0));
    vectors[0][0] = 1.0;
    vectors[1][0] = 0.99;
    vectors[1][1] = std::sqrt(1.0 - 0.99 * 0.99);

    for (double tau : {0.4, 0.5, 0.6, 0.7}) {
        const auto clusters = merge_group_with_vectors(group, vectors, tau);
        if (clusters.size() != 2) {
            detail = "distinct CVEs co-clustered at tau=" + std::to_string(tau);
            return false;
        }
    }

    // control: the same CVE in different case merges at every tau
    group.members[1].surface = "cve-2023-23397";
    for (double tau : {0.4, 0.5, 0.6, 0.7}) {
        const auto clusters = merge_group_with_vectors(group, vectors, tau);
        if (clusters.size() != 1) {
            detail = "case variants of one CVE failed to merge at tau=" + std::to_string(tau);
            return false;
        }
        if (!clusters[0].ioc_class || *clusters[0].ioc_class != "cve") {
            detail = "merged CVE cluster lost its ioc_class";
            return false;
        }
    }
    return true;
}

// --- 5. central selection on the five-subgraph fixture ----------------------

void star(KnowledgeGraph& g, const std::string& hub, const std::vector<std::string>& out,
          const std::vector<std::string>& in) {
    auto ensure = [&](const std::string& surface) {
        const std::string id = entity_id(surface, "Information");
        if (!g.find_node(id))
            g.add_node(EntityNode{id, surface, {surface}, "Information", std::nullopt});
        return id;
    };
    const std::string hub_id = ensure(hub);
    for (const auto& o : out)
        g.add_edge(Edge{hub_id, ensure(o), "relates to", Provenance::extracted});
    for (const auto& i : in)
        g.add_edge(Edge{ensure(i), hub_id, "relates to", Provenance::extracted});
}

bool central_selection(std::string& detail) {
    KnowledgeGraph g;
    star(g, "Victim", {"ransom note", "file access"}, {"negotiation site"});
    star(g, "Akira",
         {"corporate networks", "sensitive data", "ransom payments", "data publication"},
         {"security researchers", "VPN credentials"});
    star(g, "the ransomware Trojan", {"antivirus tools", "shadow copies"}, {});
    star(g, "Akira ransomware group", {"leak site", "affiliates"}, {});
    star(g, ".akira files", {"original documents", "encryption completion"}, {});

    const auto components = connected_components(g);
    if (components.size() != 5) {
        detail = "expected 5 subgraphs, found " + std::to_string(components.size());
        return false;
    }
    const auto selection = select_centrals(components, g);

    std::set<std::string> centrals;
    for (const auto& per_component : selection.centrals) {
        if (per_component.size() != 1) {
            detail = "a component elected " + std::to_string(per_component.size()) +
                     " centrals, expected exactly one";
            return false;
        }
        centrals.insert(g.nodes().at(per_component[0]).canonical);
    }
    const std::set<std::string> expected{"Victim", "Akira", "the ransomware Trojan",
                                         "Akira ransomware group", ".akira files"};
    if (centrals != expected) {
        detail = "central set mismatch";
        return false;
    }
    const EntityNode* topic = g.find_node(selection.topic_id);
    if (!topic || topic->canonical != "Akira") {
        detail = "topic is not Akira";
        return false;
    }
    if (centrality_key(g, selection.topic_id).total != 6) {
        detail = "topic degree is " + std::to_string(centrality_key(g, selection.topic_id).total) +
                 ", expected 6";
        return false;
    }
    if (selection.topic_tie) {
        detail = "unexpected topic tie";
        return false;
    }
    return true;
}

// --- 6. relation prediction connects everything ----------------------------

bool connectivity_property(std::string& detail) {
    TempDir cache("acc-connect");
    BackendConfig backend;
    backend.backoff_base_ms = 1;
    std::mt19937_64 rng(3003);

    for (int graph_no = 0; graph_no < 100; ++graph_no) {
        const std::size_t parts = 2 + rng() % 5;
        KnowledgeGraph g;
        auto scripted = std::make_unique<ScriptedTransport>();
        std::vector<std::string> hubs;
        for (std::size_t c = 0; c < parts; ++c) {
            const std::string hub =
                "g" + std::to_string(graph_no) + " hub " + std::to_string(c);
            hubs.push_back(hub);
            std::vector<std::string> leaves;
            for (std::size_t l = 0; l < 2 + c; ++l) // distinct sizes → unique topic
                leaves.push_back(hub + " leaf " + std::to_string(l));
            star(g, hub, leaves, {});
        }
        // the largest star wins the topic; script one reply per other hub
        const std::string topic = hubs.back();
        for (std::size_t c = 0; c + 1 < parts; ++c)
            scripted->add_completion(
                "between \"" + hubs[c] + "\" and \"" + topic + "\"",
                json{{"subject", hubs[c]}, {"relation", "relates to"}, {"object", topic}}
                    .dump());

        const auto components = connected_components(g);
        const auto selection = select_centrals(components, g);
        PipelineConfig config;
        config.k_relation = 0;

        Gateway recorder(GatewayMode::record, backend, cache.path(), std::move(scripted));
        const auto recorded = predict_relations(g, components, selection, "synthetic report",
                                                {}, config, PromptTemplateSet::builtin(),
                                                recorder);
        Gateway replayer(GatewayMode::replay, backend, cache.path());
        const auto replayed = predict_relations(g, components, selection, "synthetic report",
                                                {}, config, PromptTemplateSet::builtin(),
                                                replayer);

        for (const auto* result : {&recorded, &replayed}) {
            if (result->calls != static_cast<int>(parts) - 1) {
                detail = "graph " + std::to_string(graph_no) + ": " +
                         std::to_string(result->calls) + " calls for " +
                         std::to_string(parts) + " components";
                return false;
            }
            const KnowledgeGraph merged = integrate(g, result->edges);
            if (connected_components(merged).size() != 1) {
                detail = "graph " + std::to_string(graph_no) + ": integration left it split";
                return false;
            }
        }
        if (recorded.edges.size() != replayed.edges.size()) {
            detail = "graph " + std::to_string(graph_no) + ": replay changed the edge count";
            return false;
        }
    }
    return true;
}

// --- 7. connected components vs reachability -------------------------------

bool components_oracle(std::string& detail) {
    std::mt19937_64 rng(4004);
    for (int graph_no = 0; graph_no < 100; ++graph_no) {
        KnowledgeGraph g;
        const int n = 50;
        std::vector<std::string> ids;
        for (int i = 0; i < n; ++i) {
            const std::string id =
                entity_id("node " + std::to_string(graph_no) + "-" + std::to_string(i), "T");
            ids.push_back(id);
            g.add_node(EntityNode{id, "node " + std::to_string(i), {}, "T", std::nullopt});
        }
        std::uniform_int_distribution<int> pick(0, n - 1);
        const int edges = static_cast<int>(rng() % 80);
        for (int e = 0; e < edges; ++e) {
            const int a = pick(rng), b = pick(rng);
            if (a != b)
                g.add_edge(Edge{ids[a], ids[b], "r" + std::to_string(e), Provenance::extracted});
        }

        std::vector<int> parent(n);
        std::iota(parent.begin(), parent.end(), 0);
        std::function<int(int)> find = [&](int x) {
            while (parent[x] != x)
                x = parent[x] = parent[parent[x]];
            return x;
        };
        std::map<std::string, int> index_of;
        for (int i = 0; i < n; ++i)
            index_of[ids[i]] = i;
        for (const auto& e : g.edges())
            parent[find(index_of[e.source])] = find(index_of[e.target]);

        std::map<int, std::set<std::string>> expected;
        for (int i = 0; i < n; ++i)
            expected[find(i)].insert(ids[i]);
        std::set<std::set<std::string>> want;
        for (auto& [root, members] : expected)
            want.insert(members);

        std::set<std::set<std::string>> got;
        for (const auto& c : connected_components(g))
            got.insert(std::set<std::string>(c.node_ids.begin(), c.node_ids.end()));
        if (got != want) {
            detail = "graph " + std::to_string(graph_no) + ": component sets differ";
            return false;
        }
    }
    return true;
}

// --- 8. metric arithmetic on the worked examples ----------------------------

bool metric_fixtures(std::string& detail) {
    auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9; };

    PRF prf;
    prf.tp = 3;
    prf.fp = 2;
    prf.fn = 1;
    if (!close(prf.precision(), 0.6) || !close(prf.recall(), 0.75) ||
        !close(prf.f1(), 2.0 / 3.0)) {
        detail = "PRF example off";
        return false;
    }

    const TypingMetrics typing = typing_metrics({"A", "A", "B", "A"}, {"A", "A", "B", "B"});
    if (!close(typing.accuracy, 0.75) || !close(typing.micro_f1, 0.75) ||
        !close(typing.macro_f1, (0.8 + 2.0 / 3.0) / 2.0)) {
        detail = "typing example off";
        return false;
    }

    const MergeMetrics merged =
        merge_metrics({{"A", "B"}, {"C", "D"}}, {{"A", "B", "C"}, {"D"}});
    if (merged.pairwise.tp != 1 || merged.pairwise.fp != 1 || merged.pairwise.fn != 2 ||
        !close(merged.pairwise.precision(), 0.5) ||
        !close(merged.pairwise.recall(), 1.0 / 3.0) || !close(merged.pairwise.f1(), 0.4)) {
        detail = "merge example off";
        return false;
    }

    if (std::abs(cosine({1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}) - 0.9746318461970762) > 1e-12) {
        detail = "cosine worked example off";
        return false;
    }
    return true;
}

// --- 9. replay determinism over a three-report run --------------------------

struct ReplayFixtureSet {
    std::string text;                       // report text
    std::string central;                    // non-topic hub surface
    std::string topic;                      // topic hub surface
    json extraction;                        // scripted extraction payload
    json typing;                            // scripted typing payload
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

json tag(const std::string& s, const std::string& st, const std::string& r, const std::string& o,
         const std::string& ot) {
    return json{{"subject", json{{"text", s}, {"type", st}}},
                {"relation", r},
                {"object", json{{"text", o}, {"type", ot}}}};
}

bool replay_determinism(std::string& detail) {
    Ontology ontology;
    ontology.name = "MiniOnt";
    ontology.entity_types = {EntityType{"Malware", std::nullopt, std::nullopt},
                             EntityType{"Information", std::nullopt, std::nullopt}};
    ontology.fallback_type = "Information";

    // three reports with disjoint vocabulary so every fixture is hit once
    const std::vector<std::array<std::string, 3>> casts{
        {"Alphaware", "alpha files", "AlphaKit"},
        {"Bravoware", "bravo files", "BravoKit"},
        {"Charlieware", "charlie files", "CharlieKit"}};

    auto report_text = [](const std::array<std::string, 3>& cast) {
        return cast[0] + " encrypts " + cast[1] + " and drops a " + cast[0] +
               " note while " + cast[2] + " spreads through mail.";
    };

    auto make_transport = [&]() {
        auto t = std::make_unique<ScriptedTransport>();
        for (const auto& cast : casts) {
            const std::string& topic = cast[0];
            const std::string& object = cast[1];
            const std::string& central = cast[2];
            const std::string note = topic + " note";
            // two topic edges vs one central edge: the topic is never tied
            const json extraction = json::array(
                {json{{"subject", topic}, {"relation", "encrypts"}, {"object", object}},
                 json{{"subject", topic}, {"relation", "drops"}, {"object", note}},
                 json{{"subject", central}, {"relation", "spreads through"},
                      {"object", "mail"}}});
            // relation rules first: their prompts also contain the report text
            t->add_completion(
                "between \"" + central + "\" and \"" + topic + "\"",
                json{{"subject", central}, {"relation", "supports"}, {"object", topic}}.dump());
            t->add_completion_all({"mirroring the input order", "\"" + topic + "\""},
                                  json::array({tag(topic, "Malware", "encrypts", object,
                                                   "Information"),
                                               tag(topic, "Malware", "drops", note,
                                                   "Information"),
                                               tag(central, "Malware", "spreads through",
                                                   "mail", "Information")})
                                      .dump());
            t->add_completion_all({"each carrying exactly the keys", report_text(cast)},
                                  extraction.dump());
            // orthogonal axes: nothing merges, so every report keeps exactly
            // two components and the relation phase fires exactly once
            t->set_axis_embedding(object, 1);
            t->set_axis_embedding("mail", 3);
            t->set_axis_embedding(note, 5);
            t->set_axis_embedding(topic, 7);
            t->set_axis_embedding(central, 9);
        }
        return t;
    };

    std::vector<CtiReport> reports;
    int report_no = 0;
    for (const auto& cast : casts) {
        CtiReport r;
        r.id = "rep-" + std::to_string(++report_no);
        r.text = report_text(cast);
        reports.push_back(r);
    }

    PipelineConfig config;
    config.k_extract = 0;
    config.k_typing = 0;
    config.k_relation = 0;

    BackendConfig backend;
    backend.backoff_base_ms = 1;
    backend.prices.prompt_nanos_per_token = 30000;
    backend.prices.completion_nanos_per_token = 60000;
    backend.prices.embedding_nanos_per_token = 130;

    TempDir cache("acc-replay-cache");
    TempDir out_record("acc-replay-rec");
    TempDir out_a("acc-replay-a");
    TempDir out_b("acc-replay-b");

    {
        Gateway gw(GatewayMode::record, backend, cache.path(), make_transport());
        RunOptions options;
        options.mode = GatewayMode::record;
        options.out_root = out_record.path();
        run_pipeline(reports, ontology, config, PromptTemplateSet::builtin(), {}, gw, options);
    }

    auto replay_run = [&](const fs::path& out_root) {
        Gateway gw(GatewayMode::replay, backend, cache.path());
        RunOptions options;
        options.mode = GatewayMode::replay;
        options.out_root = out_root;
        return run_pipeline(reports, ontology, config, PromptTemplateSet::builtin(), {}, gw,
                            options);
    };
    const RunOutcome first = replay_run(out_a.path());
    const RunOutcome second = replay_run(out_b.path());

    if (first.run_id != second.run_id) {
        detail = "replay run ids differ";
        return false;
    }
    if (slurp(first.run_dir / "manifest.json") != slurp(second.run_dir / "manifest.json")) {
        detail = "manifests differ between replays";
        return false;
    }
    if (slurp(first.run_dir / "manifest.json").empty()) {
        detail = "manifest missing";
        return false;
    }
    for (const auto& r : reports) {
        for (const char* name :
             {"extraction.json", "typed.json", "clusters.json", "completion_meta.json",
              "graph.json"}) {
            const std::string a = slurp(first.run_dir / r.id / name);
            if (a.empty() || a != slurp(second.run_dir / r.id / name)) {
                detail = std::string(name) + " differs for " + r.id;
                return false;
            }
        }
    }

    // aggregated usage must equal the fixture-file sum exactly
    UsageRecord fixture_sum;
    for (const auto& entry : fs::directory_iterator(cache.path())) {
        if (entry.path().extension() != ".json")
            continue;
        json j;
        std::ifstream(entry.path()) >> j;
        const UsageRecord usage = UsageRecord::from_json(j.at("usage"));
        fixture_sum.prompt_tokens += usage.prompt_tokens;
        fixture_sum.completion_tokens += usage.completion_tokens;
        fixture_sum.cost_nanos += usage.cost_nanos;
        fixture_sum.latency_micros += usage.latency_micros;
    }
    const UsageRecord total = first.manifest.total_usage;
    if (total.prompt_tokens != fixture_sum.prompt_tokens ||
        total.completion_tokens != fixture_sum.completion_tokens ||
        total.cost_nanos != fixture_sum.cost_nanos ||
        total.latency_micros != fixture_sum.latency_micros) {
        detail = "replayed usage does not equal the fixture sum";
        return false;
    }
    if (total.cost_nanos <= 0) {
        detail = "fixture usage carries no cost; the comparison is vacuous";
        return false;
    }
    return true;
}

// --- 10. tolerant parsing ----------------------------------------------------

bool parser_robustness(std::string& detail) {
    const json payload = json::array(
        {json{{"subject", "Akira"}, {"relation", "encrypts"}, {"object", "files"}},
         json{{"subject", "Akira"}, {"relation", "demands"}, {"object", "ransom"}}});

    const std::string bare = payload.dump();
    const std::string fenced = "```json\n" + payload.dump(2) + "\n```";
    const std::string wrapped = json{{"triplets", payload}}.dump();

    const auto from_bare = parse_triplet_response(bare);
    const auto from_fenced = parse_triplet_response(fenced);
    const auto from_wrapped = parse_triplet_response(wrapped);
    auto same = [](const std::vector<RawTriplet>& a, const std::vector<RawTriplet>& b) {
        if (a.size() != b.size())
            return false;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i].subject.surface != b[i].subject.surface || a[i].relation != b[i].relation ||
                a[i].object.surface != b[i].object.surface)
                return false;
        return true;
    };
    if (from_bare.size() != 2 || !same(from_bare, from_fenced) ||
        !same(from_bare, from_wrapped)) {
        detail = "the three response forms parsed differently";
        return false;
    }

    for (const char* missing : {"subject", "relation", "object"}) {
        json entry{{"subject", "A"}, {"relation", "r"}, {"object", "B"}};
        entry.erase(missing);
        try {
            parse_triplet_response(json::array({entry}).dump());
            detail = std::string("accepted a triplet without '") + missing + "'";
            return false;
        } catch (const ParseError& e) {
            if (std::string(e.what()).find(missing) == std::string::npos) {
                detail = std::string("diagnostic does not name '") + missing + "'";
                return false;
            }
        }
    }
    return true;
}

} // namespace

int main() {
    struct Criterion {
        std::string name;
        std::function<bool(std::string&)> run;
    };
    const std::vector<Criterion> criteria{
        {"retrieval matches brute-force ranking", retrieval_oracle},
        {"clustering matches transitive closure", clustering_oracle},
        {"cluster count is monotone in the threshold", threshold_monotonicity},
        {"distinct IOCs never co-cluster", ioc_guard},
        {"central selection reproduces the five-subgraph fixture", central_selection},
        {"relation prediction connects every component", connectivity_property},
        {"components match undirected reachability", components_oracle},
        {"metrics reproduce the worked examples", metric_fixtures},
        {"replayed runs are byte-identical with exact usage", replay_determinism},
        {"triplet parsing tolerates all documented forms", parser_robustness},
    };

    int index = 0;
    for (const auto& criterion : criteria) {
        std::string det;
        bool ok = false;
        try {
            ok = criterion.run(det);
        } catch (const std::exception& e) {
            det = std::string("exception: ") + e.what();
        }
        report(++index, criterion.name, ok, det);
    }

    if (g_failures == 0) {
        std::cout << "all criteria passed\n";
        return 0;
    }
    std::cout << g_failures << " criteria failed\n";
    return 1;
}
