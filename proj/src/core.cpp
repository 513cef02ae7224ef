#include "ctikg/core.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace ctikg {

// ---------------------------------------------------------------------------
// string helpers
// ---------------------------------------------------------------------------

std::string normalize_ws(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool in_ws = true; // swallow leading whitespace
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            in_ws = true;
        } else {
            if (in_ws && !out.empty()) out.push_back(' ');
            out.push_back(static_cast<char>(c));
            in_ws = false;
        }
    }
    return out;
}

std::string normalize_relation(const std::string& s) { return normalize_ws(s); }

std::string to_lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string entity_id(const std::string& canonical, const std::string& entity_type) {
    uint64_t h = fnv1a64(canonical + '\x1f' + entity_type);
    char buf[17];
    snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

CtiReport CtiReport::from_json(const json& j) {
    if (!j.is_object()) throw SchemaError("report: expected a JSON object");
    CtiReport r;
    if (!j.contains("id") || !j.at("id").is_string())
        throw SchemaError("report: missing string field 'id'");
    r.id = j.at("id").get<std::string>();
    r.source = j.value("source", std::string{});
    if (j.contains("published") && !j.at("published").is_null())
        r.published = j.at("published").get<std::string>();
    if (!j.contains("text") || !j.at("text").is_string())
        throw SchemaError("report " + r.id + ": missing string field 'text'");
    r.text = j.at("text").get<std::string>();
    if (r.text.empty()) throw SchemaError("report " + r.id + ": text is empty");
    return r;
}

json CtiReport::to_json() const {
    json j;
    j["id"] = id;
    j["source"] = source;
    j["published"] = published ? json(*published) : json(nullptr);
    j["text"] = text;
    return j;
}

// ---------------------------------------------------------------------------
// ontology
// ---------------------------------------------------------------------------

bool Ontology::has_type(const std::string& label) const {
    return std::any_of(entity_types.begin(), entity_types.end(),
                       [&](const EntityType& t) { return t.label == label; });
}

std::optional<std::string> Ontology::resolve_label(const std::string& candidate) const {
    for (const auto& t : entity_types)
        if (t.label == candidate) return t.label;
    std::string lower = to_lower(candidate);
    for (const auto& t : entity_types)
        if (to_lower(t.label) == lower) return t.label;
    return std::nullopt;
}

std::string Ontology::effective_fallback() const {
    if (fallback_type && has_type(*fallback_type)) return *fallback_type;
    if (has_type("Information")) return "Information";
    return entity_types.front().label;
}

void Ontology::validate() const {
    if (entity_types.empty()) throw SchemaError("ontology " + name + ": no entity types");
    std::set<std::string> labels;
    for (const auto& t : entity_types) {
        if (t.label.empty()) throw SchemaError("ontology " + name + ": empty type label");
        if (!labels.insert(t.label).second)
            throw SchemaError("ontology " + name + ": duplicate type label '" + t.label + "'");
    }
    for (const auto& t : entity_types) {
        if (t.parent && !labels.count(*t.parent))
            throw SchemaError("ontology " + name + ": type '" + t.label +
                              "' references unknown parent '" + *t.parent + "'");
    }
    std::set<std::string> rels;
    for (const auto& r : relation_types) {
        if (!rels.insert(r).second)
            throw SchemaError("ontology " + name + ": duplicate relation label '" + r + "'");
    }
    if (fallback_type && !labels.count(*fallback_type))
        throw SchemaError("ontology " + name + ": fallback_type '" + *fallback_type +
                          "' is not a declared entity type");
}

Ontology Ontology::from_json(const json& j) {
    if (!j.is_object()) throw SchemaError("ontology: expected a JSON object");
    Ontology o;
    o.name = j.value("name", std::string{"unnamed"});
    if (!j.contains("entity_types") || !j.at("entity_types").is_array())
        throw SchemaError("ontology " + o.name + ": missing 'entity_types' array");
    for (const auto& t : j.at("entity_types")) {
        EntityType et;
        if (t.is_string()) {
            et.label = t.get<std::string>();
        } else if (t.is_object()) {
            if (!t.contains("label")) throw SchemaError("ontology " + o.name + ": entity type without 'label'");
            et.label = t.at("label").get<std::string>();
            if (t.contains("parent") && !t.at("parent").is_null())
                et.parent = t.at("parent").get<std::string>();
            if (t.contains("description") && !t.at("description").is_null())
                et.description = t.at("description").get<std::string>();
        } else {
            throw SchemaError("ontology " + o.name + ": entity type must be string or object");
        }
        o.entity_types.push_back(std::move(et));
    }
    if (j.contains("relation_types") && !j.at("relation_types").is_null())
        o.relation_types = j.at("relation_types").get<std::vector<std::string>>();
    if (j.contains("fallback_type") && !j.at("fallback_type").is_null())
        o.fallback_type = j.at("fallback_type").get<std::string>();
    o.validate();
    return o;
}

json Ontology::to_json() const {
    json types = json::array();
    for (const auto& t : entity_types) {
        json jt;
        jt["label"] = t.label;
        if (t.parent) jt["parent"] = *t.parent;
        if (t.description) jt["description"] = *t.description;
        types.push_back(std::move(jt));
    }
    json j;
    j["name"] = name;
    j["entity_types"] = std::move(types);
    j["relation_types"] = relation_types;
    if (fallback_type) j["fallback_type"] = *fallback_type;
    return j;
}

// ---------------------------------------------------------------------------
// triplets
// ---------------------------------------------------------------------------

bool mention_span_valid(const Mention& m, const CtiReport& report) {
    if (!m.span) return true;
    auto [start, end] = *m.span;
    if (end < start || end > report.text.size()) return false;
    return report.text.compare(start, end - start, m.surface) == 0;
}

bool RawTriplet::well_formed() const {
    return !normalize_ws(subject.surface).empty() && !normalize_ws(relation).empty() &&
           !normalize_ws(object.surface).empty();
}

json RawTriplet::to_json() const {
    json j;
    j["subject"] = subject.surface;
    j["relation"] = relation;
    j["object"] = object.surface;
    return j;
}

json TypedTriplet::to_json() const {
    json j;
    j["subject"] = {{"text", subject.mention.surface}, {"type", subject.entity_type}};
    j["relation"] = relation;
    j["object"] = {{"text", object.mention.surface}, {"type", object.entity_type}};
    return j;
}

TypedTriplet TypedTriplet::from_json(const json& j) {
    auto side = [](const json& s, const char* role) -> TypedMention {
        if (!s.is_object() || !s.contains("text") || !s.contains("type"))
            throw SchemaError(std::string("typed triplet: '") + role + "' needs 'text' and 'type'");
        return TypedMention{Mention{normalize_ws(s.at("text").get<std::string>()), std::nullopt},
                            s.at("type").get<std::string>()};
    };
    if (!j.is_object() || !j.contains("subject") || !j.contains("relation") || !j.contains("object"))
        throw SchemaError("typed triplet: needs 'subject', 'relation', 'object'");
    TypedTriplet t;
    t.subject = side(j.at("subject"), "subject");
    t.relation = normalize_relation(j.at("relation").get<std::string>());
    t.object = side(j.at("object"), "object");
    return t;
}

// ---------------------------------------------------------------------------
// knowledge graph
// ---------------------------------------------------------------------------

std::string provenance_name(Provenance p) {
    return p == Provenance::extracted ? "extracted" : "inferred";
}

Provenance provenance_from_name(const std::string& s) {
    if (s == "extracted") return Provenance::extracted;
    if (s == "inferred") return Provenance::inferred;
    throw SchemaError("unknown provenance '" + s + "'");
}

const EntityNode* KnowledgeGraph::find_node(const std::string& id) const {
    auto it = nodes_.find(id);
    return it == nodes_.end() ? nullptr : &it->second;
}

void KnowledgeGraph::add_node(EntityNode node) {
    if (node.aliases.empty()) node.aliases.insert(node.canonical);
    auto it = nodes_.find(node.id);
    if (it == nodes_.end()) {
        nodes_.emplace(node.id, std::move(node));
        return;
    }
    EntityNode& existing = it->second;
    if (existing.canonical != node.canonical || existing.entity_type != node.entity_type)
        throw InternalError("node id collision for '" + node.id + "' with conflicting identity");
    existing.aliases.insert(node.aliases.begin(), node.aliases.end());
    if (!existing.ioc_class && node.ioc_class) existing.ioc_class = node.ioc_class;
}

bool KnowledgeGraph::add_edge(Edge edge) {
    if (!nodes_.count(edge.source))
        throw InternalError("edge references missing source node '" + edge.source + "'");
    if (!nodes_.count(edge.target))
        throw InternalError("edge references missing target node '" + edge.target + "'");
    if (edge.source == edge.target) return false; // self-loops carry no graph information
    for (const auto& e : edges_)
        if (e.same_key(edge)) return false;
    edges_.push_back(std::move(edge));
    return true;
}

json KnowledgeGraph::to_json() const {
    json jnodes = json::object();
    for (const auto& [id, n] : nodes_) {
        json jn;
        jn["canonical"] = n.canonical;
        jn["entity_type"] = n.entity_type;
        jn["aliases"] = std::vector<std::string>(n.aliases.begin(), n.aliases.end());
        jn["ioc_class"] = n.ioc_class ? json(*n.ioc_class) : json(nullptr);
        jnodes[id] = std::move(jn);
    }
    json jedges = json::array();
    for (const auto& e : edges_) {
        json je;
        je["source"] = e.source;
        je["target"] = e.target;
        je["relation"] = e.relation;
        je["provenance"] = provenance_name(e.provenance);
        jedges.push_back(std::move(je));
    }
    json j;
    j["nodes"] = std::move(jnodes);
    j["edges"] = std::move(jedges);
    return j;
}

KnowledgeGraph KnowledgeGraph::from_json(const json& j) {
    if (!j.is_object() || !j.contains("nodes") || !j.contains("edges"))
        throw SchemaError("graph: expected object with 'nodes' and 'edges'");
    KnowledgeGraph g;
    for (const auto& [id, jn] : j.at("nodes").items()) {
        EntityNode n;
        n.id = id;
        n.canonical = jn.at("canonical").get<std::string>();
        n.entity_type = jn.at("entity_type").get<std::string>();
        if (jn.contains("aliases"))
            for (const auto& a : jn.at("aliases")) n.aliases.insert(a.get<std::string>());
        if (jn.contains("ioc_class") && !jn.at("ioc_class").is_null())
            n.ioc_class = jn.at("ioc_class").get<std::string>();
        g.nodes_.emplace(id, std::move(n));
    }
    for (const auto& je : j.at("edges")) {
        Edge e;
        e.source = je.at("source").get<std::string>();
        e.target = je.at("target").get<std::string>();
        e.relation = je.at("relation").get<std::string>();
        e.provenance = provenance_from_name(je.value("provenance", std::string{"extracted"}));
        g.edges_.push_back(std::move(e)); // verbatim: validate_graph reports violations
    }
    return g;
}

std::vector<std::string> validate_graph(const KnowledgeGraph& g) {
    std::vector<std::string> violations;
    for (const auto& [id, n] : g.nodes()) {
        if (n.id != id)
            violations.push_back("node '" + id + "': stored id field '" + n.id + "' differs from key");
        if (n.aliases.empty())
            violations.push_back("node '" + id + "': empty alias set");
        else if (!n.aliases.count(n.canonical))
            violations.push_back("node '" + id + "': canonical '" + n.canonical + "' not in aliases");
        if (n.entity_type.empty()) violations.push_back("node '" + id + "': empty entity type");
    }
    for (size_t i = 0; i < g.edges().size(); ++i) {
        const Edge& e = g.edges()[i];
        if (!g.find_node(e.source))
            violations.push_back("edge #" + std::to_string(i) + ": missing source node '" + e.source + "'");
        if (!g.find_node(e.target))
            violations.push_back("edge #" + std::to_string(i) + ": missing target node '" + e.target + "'");
        if (e.source == e.target)
            violations.push_back("edge #" + std::to_string(i) + ": self-loop on '" + e.source + "'");
        for (size_t k = i + 1; k < g.edges().size(); ++k) {
            if (g.edges()[k].same_key(e))
                violations.push_back("edge #" + std::to_string(k) + ": duplicate of edge #" +
                                     std::to_string(i) + " (" + e.source + ", " + e.relation + ", " +
                                     e.target + ")");
        }
    }
    return violations;
}

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

std::string permutation_name(Permutation p) {
    switch (p) {
    case Permutation::knn_ascend: return "knn_ascend";
    case Permutation::knn_descend: return "knn_descend";
    case Permutation::random_order: return "random";
    }
    return "knn_ascend";
}

Permutation permutation_from_name(const std::string& s) {
    if (s == "knn_ascend") return Permutation::knn_ascend;
    if (s == "knn_descend") return Permutation::knn_descend;
    if (s == "random") return Permutation::random_order;
    throw SchemaError("unknown permutation '" + s + "' (expected knn_ascend, knn_descend, random)");
}

std::string demo_mode_name(DemoMode m) { return m == DemoMode::knn ? "knn" : "fixed"; }

DemoMode demo_mode_from_name(const std::string& s) {
    if (s == "knn") return DemoMode::knn;
    if (s == "fixed") return DemoMode::fixed;
    throw SchemaError("unknown demo mode '" + s + "' (expected knn or fixed)");
}

void PipelineConfig::validate() const {
    if (k_extract < 0) throw SchemaError("config: k_extract must be non-negative");
    if (k_typing < 0) throw SchemaError("config: k_typing must be non-negative");
    if (k_relation < 0) throw SchemaError("config: k_relation must be non-negative");
    if (merge_threshold < -1.0 || merge_threshold > 1.0)
        throw SchemaError("config: merge_threshold must lie in [-1, 1]");
    if (decoding.temperature < 0.0) throw SchemaError("config: temperature must be >= 0");
    if (decoding.max_output_tokens < 1) throw SchemaError("config: max_output_tokens must be positive");
    if (chars_per_token <= 0.0) throw SchemaError("config: chars_per_token must be positive");
}

json PipelineConfig::to_json() const {
    json j;
    j["k_extract"] = k_extract;
    j["k_typing"] = k_typing;
    j["k_relation"] = k_relation;
    j["merge_threshold"] = merge_threshold;
    j["permutation"] = permutation_name(permutation);
    j["seed"] = seed;
    j["decoding"] = {{"temperature", decoding.temperature},
                     {"max_output_tokens", decoding.max_output_tokens}};
    j["demo_mode"] = {{"extraction", demo_mode_name(mode_extraction)},
                      {"typing", demo_mode_name(mode_typing)},
                      {"relation", demo_mode_name(mode_relation)}};
    j["chars_per_token"] = chars_per_token;
    return j;
}

PipelineConfig PipelineConfig::from_json(const json& j) {
    PipelineConfig c;
    if (!j.is_object()) throw SchemaError("config: expected a JSON object");
    c.k_extract = j.value("k_extract", c.k_extract);
    c.k_typing = j.value("k_typing", c.k_typing);
    c.k_relation = j.value("k_relation", c.k_relation);
    c.merge_threshold = j.value("merge_threshold", c.merge_threshold);
    if (j.contains("permutation")) c.permutation = permutation_from_name(j.at("permutation"));
    c.seed = j.value("seed", c.seed);
    if (j.contains("decoding")) {
        const auto& d = j.at("decoding");
        c.decoding.temperature = d.value("temperature", c.decoding.temperature);
        c.decoding.max_output_tokens = d.value("max_output_tokens", c.decoding.max_output_tokens);
    }
    if (j.contains("demo_mode")) {
        const auto& m = j.at("demo_mode");
        if (m.contains("extraction")) c.mode_extraction = demo_mode_from_name(m.at("extraction"));
        if (m.contains("typing")) c.mode_typing = demo_mode_from_name(m.at("typing"));
        if (m.contains("relation")) c.mode_relation = demo_mode_from_name(m.at("relation"));
    }
    c.chars_per_token = j.value("chars_per_token", c.chars_per_token);
    c.validate();
    return c;
}

} // namespace ctikg
