#pragma once
// Phase 1: one in-context completion per report turns CTI text into a list
// of raw (subject, relation, object) triplets. On unparseable output, a small
// repair loop re-asks with a format reminder — at most two re-asks, so the
// total budget is three calls per report.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctikg/core.hpp"
#include "ctikg/gateway.hpp"
#include "ctikg/prompt.hpp"
#include "ctikg/retriever.hpp"

namespace ctikg {

struct ExtractionResult {
    std::string report_id;
    std::vector<RawTriplet> triplets;
    UsageRecord usage;        // summed over the call plus any re-asks
    std::string raw_response; // response the triplets were parsed from
    int calls = 0;

    nlohmann::json to_json() const;
};

// Recovers the outermost JSON value from a model response: the bare text, a
// ``` fenced block, or the widest bracket/brace slice. ParseError when no
// payload parses. Shared by all three phase parsers.
nlohmann::json recover_json_value(const std::string& text);

// Tolerant parser: accepts a bare JSON array, a fenced code block containing
// one, or an object with a single array field. Strings are whitespace-
// normalized; an entry missing subject/relation/object is a ParseError naming
// the field. Malformed triplets (empty sides after normalization) are dropped.
std::vector<RawTriplet> parse_triplet_response(const std::string& text);

// Demo selection follows config: kNN retrieval over the index (default) or
// the corpus fixed order. Duplicate triplets in one response collapse; an
// empty list is a valid result. Parse failure after the repair budget is a
// PhaseError carrying the raw response.
ExtractionResult extract_triplets(const CtiReport& report, const Ontology& ontology,
                                  const DemoIndex& index, const PipelineConfig& config,
                                  const PromptTemplateSet& templates, Gateway& gateway);

} // namespace ctikg
