#include "ctikg/extraction.hpp"

#include <algorithm>

#include "ctikg/errors.hpp"

namespace ctikg {

using nlohmann::json;

json ExtractionResult::to_json() const {
    json triplet_list = json::array();
    for (const auto& t : triplets)
        triplet_list.push_back(t.to_json());
    return json{{"report_id", report_id},
                {"triplets", triplet_list},
                {"usage", usage.to_json()},
                {"raw_response", raw_response},
                {"calls", calls}};
}

namespace {

// Strips one ``` fence pair (optionally with a language tag) and returns the
// inner text; nullopt when the text carries no complete fence.
std::optional<std::string> strip_fence(const std::string& text) {
    const auto open = text.find("```");
    if (open == std::string::npos)
        return std::nullopt;
    auto body = text.find('\n', open);
    if (body == std::string::npos)
        return std::nullopt;
    ++body;
    const auto close = text.find("```", body);
    if (close == std::string::npos)
        return std::nullopt;
    return text.substr(body, close - body);
}

std::optional<json> try_parse(const std::string& text) {
    auto parsed = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (parsed.is_discarded())
        return std::nullopt;
    return std::optional<json>(std::move(parsed));
}

} // namespace

json recover_json_value(const std::string& text) {
    std::optional<json> parsed = try_parse(text);
    if (!parsed) {
        if (auto inner = strip_fence(text))
            parsed = try_parse(*inner);
    }
    for (const auto [open, close] : {std::pair{'[', ']'}, std::pair{'{', '}'}}) {
        if (parsed)
            break;
        const auto first = text.find(open);
        const auto last = text.rfind(close);
        if (first != std::string::npos && last != std::string::npos && first < last)
            parsed = try_parse(text.substr(first, last - first + 1));
    }
    if (!parsed)
        throw ParseError("no JSON payload recovered from response");
    return *parsed;
}

namespace {

// Payload array: bare array, fenced array, or object with a single array field.
json recover_array(const std::string& text) {
    std::optional<json> parsed = recover_json_value(text);
    if (parsed->is_object()) {
        const json* only_array = nullptr;
        for (const auto& [key, value] : parsed->items()) {
            (void)key;
            if (!value.is_array())
                continue;
            if (only_array)
                throw ParseError("response object has more than one array field");
            only_array = &value;
        }
        if (!only_array)
            throw ParseError("response object has no array field");
        return *only_array;
    }
    if (!parsed->is_array())
        throw ParseError("response payload is not a JSON array");
    return *parsed;
}

} // namespace

std::vector<RawTriplet> parse_triplet_response(const std::string& text) {
    const json payload = recover_array(text);
    std::vector<RawTriplet> triplets;
    for (const auto& entry : payload) {
        if (!entry.is_object())
            throw ParseError("triplet entry is not an object");
        for (const char* field : {"subject", "relation", "object"}) {
            if (!entry.contains(field))
                throw ParseError(std::string("triplet missing field '") + field + "'");
            if (!entry[field].is_string())
                throw ParseError(std::string("triplet field '") + field + "' is not a string");
        }
        RawTriplet t{Mention{normalize_ws(entry["subject"].get<std::string>()), std::nullopt},
                     normalize_relation(entry["relation"].get<std::string>()),
                     Mention{normalize_ws(entry["object"].get<std::string>()), std::nullopt}};
        if (!t.well_formed())
            continue; // empty side after normalization: drop, not fatal
        triplets.push_back(std::move(t));
    }
    return triplets;
}

ExtractionResult extract_triplets(const CtiReport& report, const Ontology& ontology,
                                  const DemoIndex& index, const PipelineConfig& config,
                                  const PromptTemplateSet& templates, Gateway& gateway) {
    const CallContext ctx{"extraction", report.id};

    std::vector<Demonstration> demos;
    if (config.k_extract > 0) {
        if (config.mode_extraction == DemoMode::knn) {
            const auto scored = retrieve(index, gateway, report.text, config.k_extract,
                                         config.permutation, config.seed, ctx);
            for (const auto& s : scored)
                demos.push_back(s.demo);
        } else {
            demos = fixed_demos(index.demos, DemoTask::extraction, config.k_extract);
        }
    }

    const PromptSpec prompt = build_extraction_prompt(templates, ontology, demos, report.text);

    ExtractionResult result;
    result.report_id = report.id;
    std::string prompt_text = prompt.render();
    std::vector<UsageRecord> usage;
    std::string parse_failure;

    // One call on the happy path, at most two repair re-asks.
    for (int attempt = 0; attempt < 3; ++attempt) {
        const CompletionResult reply =
            gateway.complete({prompt_text, config.decoding}, ctx);
        usage.push_back(reply.usage);
        ++result.calls;
        result.raw_response = reply.text;
        try {
            result.triplets = parse_triplet_response(reply.text);
            parse_failure.clear();
            break;
        } catch (const ParseError& e) {
            parse_failure = e.what();
            prompt_text += "\n\nThe previous answer could not be parsed (" + parse_failure +
                           "). Answer again with only the JSON array of "
                           "{\"subject\", \"relation\", \"object\"} objects.";
        }
    }
    if (!parse_failure.empty())
        throw PhaseError("extraction",
                         "response unparseable after " + std::to_string(result.calls) +
                             " calls: " + parse_failure,
                         result.raw_response);

    // Deduplicate exact repeats, preserving first occurrence order.
    std::vector<RawTriplet> unique;
    for (auto& t : result.triplets) {
        const bool seen = std::any_of(unique.begin(), unique.end(), [&](const RawTriplet& u) {
            return u.subject.surface == t.subject.surface && u.relation == t.relation &&
                   u.object.surface == t.object.surface;
        });
        if (!seen)
            unique.push_back(std::move(t));
    }
    result.triplets = std::move(unique);
    result.usage = aggregate_usage(usage);
    return result;
}

} // namespace ctikg
