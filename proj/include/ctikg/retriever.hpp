#pragma once
// Demonstration corpus and kNN retrieval. Demonstrations are annotated
// (report, gold output) pairs; retrieval embeds the query, scores it against
// every candidate by cosine similarity, and orders the top-k for prompt
// assembly (most similar last under knn_ascend).

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctikg/core.hpp"
#include "ctikg/gateway.hpp"
#include "ctikg/simkernel.hpp"

namespace ctikg {

enum class DemoTask { extraction, typing, relation };
std::string to_string(DemoTask task);
DemoTask demo_task_from_name(const std::string& name);

struct Demonstration {
    std::string id;
    DemoTask task = DemoTask::extraction;
    std::string report_text;
    // Task-specific gold output:
    //   extraction — array of {subject, relation, object}
    //   typing     — array of typed triplets ({text, type} endpoints)
    //   relation   — one {subject, relation, object}
    nlohmann::json gold;

    nlohmann::json to_json() const;
    static Demonstration from_json(const nlohmann::json& j);
};

// Throws SchemaError when gold does not parse under the task's schema.
void validate_gold(const Demonstration& demo);

struct DemoIndex {
    std::vector<Demonstration> demos;
    VectorBatch vectors; // row i embeds demos[i].report_text

    std::size_t size() const { return demos.size(); }
};

// Embeds every demonstration's report text. Corpus must be non-empty.
DemoIndex build_index(const std::vector<Demonstration>& corpus, Gateway& gateway,
                      const CallContext& ctx = {});

// Spec'd cosine for retrieval: throws on dimension mismatch or zero norm.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

struct ScoredDemo {
    Demonstration demo;
    double score = 0.0;
};

// Pure core: rank against a pre-computed query vector. Returns min(k, size)
// demonstrations; ties in score break by demonstration id (lexicographic).
// knn_ascend → scores non-decreasing (most similar last); knn_descend →
// non-increasing; random_order → seeded shuffle of the same top-k set.
std::vector<ScoredDemo> retrieve(const DemoIndex& index, const EmbeddingVector& query_vec, int k,
                                 Permutation permutation, std::uint64_t seed = 0);

// Convenience overload that embeds the query through the gateway.
std::vector<ScoredDemo> retrieve(const DemoIndex& index, Gateway& gateway,
                                 const std::string& query_text, int k, Permutation permutation,
                                 std::uint64_t seed = 0, const CallContext& ctx = {});

// Fixed-list mode: demonstrations of one task in corpus order, truncated to k.
std::vector<Demonstration> fixed_demos(const std::vector<Demonstration>& corpus, DemoTask task,
                                       int k);

// JSON-lines corpus, one demonstration per line; blank lines skipped.
std::vector<Demonstration> load_demo_corpus_jsonl(const std::string& path);

} // namespace ctikg
