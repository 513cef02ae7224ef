#include "ctikg/prompt.hpp"

#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ctikg/errors.hpp"

namespace ctikg {

using nlohmann::json;

const char* const kAnswerPlaceholder = "insert your answer here";

namespace {

// Builtin template text; the files under templates/ carry the same bytes so
// deployments can start from the shipped wording.
const char* const kExtractionTemplate =
    R"TPL([instruction]
You are a cybersecurity threat intelligence analyst building a knowledge graph from CTI reports.
Extract all cybersecurity triplets mentioned in the report below. Subjects and objects are entities of the kinds defined by the {{ontology_name}} ontology:
{{entity_types}}
{{relations_clause}}
Answer with a JSON array of objects, each carrying exactly the keys "subject", "relation", and "object". Output the JSON array and nothing else.
[demo]
Report:
{{report_text}}
Triplets:
{{gold_json}}
[query]
Answer with a JSON array of objects, each carrying exactly the keys "subject", "relation", and "object". Output the JSON array and nothing else.
Report:
{{report_text}}
Triplets:
)TPL";

const char* const kTypingTemplate =
    R"TPL([instruction]
You are a cybersecurity threat intelligence analyst assigning entity types.
Tag the subject and the object of every triplet below with one entity type each, chosen from:
{{entity_types}}
Answer with a JSON array mirroring the input order; each item carries "triplet" unchanged and "tagged_triplet", where subject and object become {"text", "type"} objects. Output the JSON array and nothing else.
[demo]
Triplets:
{{pairs_json}}
[query]
Answer with a JSON array mirroring the input order; each item carries "triplet" unchanged and "tagged_triplet", where subject and object become {"text", "type"} objects. Output the JSON array and nothing else.
Triplets:
{{items_json}}
)TPL";

const char* const kRelationTemplate =
    R"TPL([instruction]
You are a cybersecurity threat intelligence analyst connecting entities across a CTI report.
Use the report given as context to answer the question: predict the triple linking the two entities named in the question.
Answer with a single JSON object carrying exactly the keys "subject", "relation", and "object". Output the JSON object and nothing else.
[demo]
context:
{{context}}
question:
{{question}}
predicted_triple:
{{gold_json}}
[query]
Answer with a single JSON object carrying exactly the keys "subject", "relation", and "object". Output the JSON object and nothing else.
context:
{{context}}
question:
{{question}}
predicted_triple: "insert your answer here"
)TPL";

std::string rstrip_newlines(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r'))
        s.pop_back();
    return s;
}

std::string question_for(const std::string& first, const std::string& second) {
    return "What is the relation between \"" + first + "\" and \"" + second + "\"?";
}

void require_task(const std::vector<Demonstration>& demos, DemoTask task) {
    for (const auto& d : demos)
        if (d.task != task)
            throw InternalError("demonstration " + d.id + " has task " + to_string(d.task) +
                                ", prompt needs " + to_string(task));
}

json entity_type_labels(const Ontology& ontology) {
    json labels = json::array();
    for (const auto& t : ontology.entity_types)
        labels.push_back(t.label);
    return labels;
}

} // namespace

PromptTemplate PromptTemplate::parse(const std::string& text, const std::string& origin) {
    PromptTemplate tmpl;
    std::string* current = nullptr;
    bool seen_instruction = false, seen_demo = false, seen_query = false;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line == "[instruction]" || line == "[demo]" || line == "[query]") {
            bool* seen = line == "[instruction]" ? &seen_instruction
                         : line == "[demo]"      ? &seen_demo
                                                 : &seen_query;
            if (*seen)
                throw SchemaError(origin + ": duplicate section " + line);
            *seen = true;
            current = line == "[instruction]" ? &tmpl.instruction
                      : line == "[demo]"      ? &tmpl.demo
                                              : &tmpl.query;
            continue;
        }
        if (!current) {
            if (!normalize_ws(line).empty())
                throw SchemaError(origin + ": content before first section header");
            continue;
        }
        current->append(line);
        current->push_back('\n');
    }
    if (!seen_instruction || !seen_demo || !seen_query)
        throw SchemaError(origin + ": template needs [instruction], [demo] and [query] sections");
    tmpl.instruction = rstrip_newlines(tmpl.instruction);
    tmpl.demo = rstrip_newlines(tmpl.demo);
    tmpl.query = rstrip_newlines(tmpl.query);
    return tmpl;
}

const PromptTemplateSet& PromptTemplateSet::builtin() {
    static const PromptTemplateSet set{
        PromptTemplate::parse(kExtractionTemplate, "builtin extraction template"),
        PromptTemplate::parse(kTypingTemplate, "builtin typing template"),
        PromptTemplate::parse(kRelationTemplate, "builtin relation template"),
    };
    return set;
}

PromptTemplateSet PromptTemplateSet::load_dir(const std::string& dir) {
    auto load = [&](const std::string& name) {
        const std::string path = dir + "/" + name + ".tmpl";
        std::ifstream in(path);
        if (!in)
            throw UsageError("cannot open template: " + path);
        std::ostringstream buf;
        buf << in.rdbuf();
        return PromptTemplate::parse(buf.str(), path);
    };
    return PromptTemplateSet{load("extraction"), load("typing"), load("relation")};
}

std::string render_section(const std::string& section,
                           const std::map<std::string, std::string>& slots) {
    static const std::regex slot_re(R"(\{\{([A-Za-z_]+)\}\})");
    std::string out;
    auto begin = std::sregex_iterator(section.begin(), section.end(), slot_re);
    auto end = std::sregex_iterator();
    std::size_t last = 0;
    for (auto it = begin; it != end; ++it) {
        const auto& match = *it;
        out.append(section, last, static_cast<std::size_t>(match.position()) - last);
        const std::string name = match[1].str();
        auto slot = slots.find(name);
        if (slot == slots.end())
            throw SchemaError("template slot '" + name + "' has no value");
        out.append(slot->second);
        last = static_cast<std::size_t>(match.position() + match.length());
    }
    out.append(section, last, section.size() - last);
    return out;
}

std::string PromptSpec::render() const {
    std::string out = instruction;
    for (const auto& demo : demonstrations) {
        out.append("\n\n");
        out.append(demo);
    }
    out.append("\n\n");
    out.append(query_block);
    return out;
}

std::int64_t token_estimate(const PromptSpec& spec, double chars_per_token) {
    if (chars_per_token <= 0.0)
        throw UsageError("chars_per_token must be positive");
    const double chars = static_cast<double>(spec.render().size());
    return static_cast<std::int64_t>(std::ceil(chars / chars_per_token));
}

PromptSpec build_extraction_prompt(const PromptTemplateSet& templates, const Ontology& ontology,
                                   const std::vector<Demonstration>& demos,
                                   const std::string& report_text) {
    require_task(demos, DemoTask::extraction);
    const PromptTemplate& tmpl = templates.extraction;

    std::string relations_clause;
    if (ontology.relation_types.empty()) {
        relations_clause = "Relations are concise verb phrases linking the two entities.";
    } else {
        json rels = json::array();
        for (const auto& r : ontology.relation_types)
            rels.push_back(r);
        relations_clause = "Relations must be chosen from: " + rels.dump();
    }

    PromptSpec spec;
    spec.task = DemoTask::extraction;
    spec.instruction = render_section(tmpl.instruction,
                                      {{"ontology_name", ontology.name},
                                       {"entity_types", entity_type_labels(ontology).dump()},
                                       {"relations_clause", relations_clause}});
    for (const auto& demo : demos) {
        // Re-dump the gold through the domain type so demo blocks parse under
        // the same schema the model is asked to produce.
        json gold = json::array();
        for (const auto& t : demo.gold) {
            RawTriplet triplet{Mention{t.at("subject").get<std::string>(), std::nullopt},
                               t.at("relation").get<std::string>(),
                               Mention{t.at("object").get<std::string>(), std::nullopt}};
            gold.push_back(triplet.to_json());
        }
        spec.demonstrations.push_back(render_section(
            tmpl.demo, {{"report_text", demo.report_text}, {"gold_json", gold.dump(2)}}));
    }
    spec.query_block = render_section(tmpl.query, {{"report_text", report_text}});
    return spec;
}

PromptSpec build_typing_prompt(const PromptTemplateSet& templates, const Ontology& ontology,
                               const std::vector<Demonstration>& demos,
                               const std::vector<RawTriplet>& triplets) {
    require_task(demos, DemoTask::typing);
    if (triplets.empty())
        throw InternalError("typing prompt needs at least one triplet");
    const PromptTemplate& tmpl = templates.typing;

    PromptSpec spec;
    spec.task = DemoTask::typing;
    spec.instruction = render_section(
        tmpl.instruction, {{"entity_types", entity_type_labels(ontology).dump()}});
    for (const auto& demo : demos) {
        json pairs = json::array();
        for (const auto& item : demo.gold) {
            const TypedTriplet typed = TypedTriplet::from_json(item);
            json untagged{{"subject", typed.subject.mention.surface},
                          {"relation", typed.relation},
                          {"object", typed.object.mention.surface}};
            pairs.push_back(json{{"triplet", untagged}, {"tagged_triplet", typed.to_json()}});
        }
        spec.demonstrations.push_back(render_section(tmpl.demo, {{"pairs_json", pairs.dump(2)}}));
    }
    json items = json::array();
    for (const auto& t : triplets)
        items.push_back(json{{"triplet", t.to_json()}, {"tagged_triplet", kAnswerPlaceholder}});
    spec.query_block = render_section(tmpl.query, {{"items_json", items.dump(2)}});
    return spec;
}

PromptSpec build_relation_prompt(const PromptTemplateSet& templates,
                                 const std::vector<Demonstration>& demos,
                                 const std::string& report_text, const std::string& central,
                                 const std::string& topic) {
    require_task(demos, DemoTask::relation);
    if (central == topic)
        throw InternalError("relation prompt needs two distinct entities");
    const PromptTemplate& tmpl = templates.relation;

    PromptSpec spec;
    spec.task = DemoTask::relation;
    spec.instruction = render_section(tmpl.instruction, {});
    for (const auto& demo : demos) {
        RawTriplet gold{Mention{demo.gold.at("subject").get<std::string>(), std::nullopt},
                        demo.gold.at("relation").get<std::string>(),
                        Mention{demo.gold.at("object").get<std::string>(), std::nullopt}};
        spec.demonstrations.push_back(render_section(
            tmpl.demo, {{"context", demo.report_text},
                        {"question", question_for(gold.subject.surface, gold.object.surface)},
                        {"gold_json", gold.to_json().dump(2)}}));
    }
    spec.query_block = render_section(
        tmpl.query, {{"context", report_text}, {"question", question_for(central, topic)}});
    return spec;
}

} // namespace ctikg
