#pragma once
// Assembly of the three ICL prompt families (extraction, typing, relation
// prediction). A prompt is instruction first, demonstrations in retriever
// order, query last; the output-format constraint is stated twice — in the
// instruction and again immediately before the query. Templates are plain
// text files with [instruction]/[demo]/[query] sections and {{slot}} holes,
// so deployments can audit and swap wording without rebuilding.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ctikg/core.hpp"
#include "ctikg/retriever.hpp"

namespace ctikg {

struct PromptTemplate {
    std::string instruction;
    std::string demo;
    std::string query;

    // Parses the sectioned template text; all three sections are required.
    static PromptTemplate parse(const std::string& text, const std::string& origin);
};

struct PromptTemplateSet {
    PromptTemplate extraction;
    PromptTemplate typing;
    PromptTemplate relation;

    static const PromptTemplateSet& builtin();
    // Expects extraction.tmpl, typing.tmpl, relation.tmpl in the directory.
    static PromptTemplateSet load_dir(const std::string& dir);
};

// Fills {{slot}} holes; an unfilled or unknown slot is a SchemaError.
std::string render_section(const std::string& section,
                           const std::map<std::string, std::string>& slots);

struct PromptSpec {
    DemoTask task = DemoTask::extraction;
    std::string instruction;
    std::vector<std::string> demonstrations; // retriever order, most similar last under knn_ascend
    std::string query_block;

    // Full prompt text: instruction, demos, query, double-newline separated.
    std::string render() const;
};

// Advisory length estimate: ceil(chars / chars_per_token).
std::int64_t token_estimate(const PromptSpec& spec, double chars_per_token);

// demos must carry the matching task's gold; they are rendered verbatim in
// the given order.
PromptSpec build_extraction_prompt(const PromptTemplateSet& templates, const Ontology& ontology,
                                   const std::vector<Demonstration>& demos,
                                   const std::string& report_text);

PromptSpec build_typing_prompt(const PromptTemplateSet& templates, const Ontology& ontology,
                               const std::vector<Demonstration>& demos,
                               const std::vector<RawTriplet>& triplets);

PromptSpec build_relation_prompt(const PromptTemplateSet& templates,
                                 const std::vector<Demonstration>& demos,
                                 const std::string& report_text, const std::string& central,
                                 const std::string& topic);

// The literal the model is asked to overwrite in typing/relation queries.
extern const char* const kAnswerPlaceholder;

} // namespace ctikg
