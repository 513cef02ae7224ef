#include "ctikg/retriever.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include "ctikg/errors.hpp"

namespace ctikg {

using nlohmann::json;

std::string to_string(DemoTask task) {
    switch (task) {
    case DemoTask::extraction: return "extraction";
    case DemoTask::typing: return "typing";
    case DemoTask::relation: return "relation";
    }
    throw InternalError("unreachable demo task");
}

DemoTask demo_task_from_name(const std::string& name) {
    if (name == "extraction") return DemoTask::extraction;
    if (name == "typing") return DemoTask::typing;
    if (name == "relation") return DemoTask::relation;
    throw SchemaError("unknown demonstration task: " + name);
}

json Demonstration::to_json() const {
    return json{{"id", id}, {"task", to_string(task)}, {"report_text", report_text},
                {"gold", gold}};
}

Demonstration Demonstration::from_json(const json& j) {
    Demonstration d;
    try {
        d.id = j.at("id").get<std::string>();
        d.task = demo_task_from_name(j.at("task").get<std::string>());
        d.report_text = j.at("report_text").get<std::string>();
        d.gold = j.at("gold");
    } catch (const json::exception& e) {
        throw SchemaError(std::string("bad demonstration: ") + e.what());
    }
    if (d.id.empty())
        throw SchemaError("demonstration with empty id");
    if (d.report_text.empty())
        throw SchemaError("demonstration " + d.id + " has empty report_text");
    validate_gold(d);
    return d;
}

namespace {

void require_plain_triplet(const json& j, const std::string& where) {
    if (!j.is_object())
        throw SchemaError(where + ": triplet must be an object");
    for (const char* key : {"subject", "relation", "object"}) {
        if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty())
            throw SchemaError(where + ": triplet needs non-empty string '" + key + "'");
    }
}

} // namespace

void validate_gold(const Demonstration& demo) {
    const std::string where = "demonstration " + demo.id;
    switch (demo.task) {
    case DemoTask::extraction: {
        if (!demo.gold.is_array())
            throw SchemaError(where + ": extraction gold must be an array of triplets");
        for (const auto& t : demo.gold)
            require_plain_triplet(t, where);
        return;
    }
    case DemoTask::typing: {
        if (!demo.gold.is_array())
            throw SchemaError(where + ": typing gold must be an array of typed triplets");
        for (const auto& t : demo.gold) {
            try {
                TypedTriplet::from_json(t);
            } catch (const Error& e) {
                throw SchemaError(where + ": " + e.what());
            }
        }
        return;
    }
    case DemoTask::relation:
        require_plain_triplet(demo.gold, where);
        return;
    }
}

DemoIndex build_index(const std::vector<Demonstration>& corpus, Gateway& gateway,
                      const CallContext& ctx) {
    if (corpus.empty())
        throw UsageError("demonstration corpus is empty");
    std::vector<std::string> texts;
    texts.reserve(corpus.size());
    for (const auto& d : corpus)
        texts.push_back(d.report_text);
    const auto vectors = gateway.embed(texts, ctx);

    DemoIndex index;
    index.demos = corpus;
    for (const auto& v : vectors)
        index.vectors.push_back(v);
    return index;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.size() != b.size())
        throw InternalError("cosine: dimension mismatch");
    if (a.empty())
        throw InternalError("cosine: empty vectors");
    double na = 0.0, nb = 0.0;
    for (double x : a)
        na += x * x;
    for (double x : b)
        nb += x * x;
    if (na == 0.0 || nb == 0.0)
        throw InternalError("cosine: zero-norm vector");
    return cosine_similarity(a, b);
}

std::vector<ScoredDemo> retrieve(const DemoIndex& index, const EmbeddingVector& query_vec, int k,
                                 Permutation permutation, std::uint64_t seed) {
    if (k < 1)
        throw UsageError("retrieval k must be >= 1");
    if (index.demos.empty())
        throw UsageError("retrieval over an empty index");
    {
        double norm = 0.0;
        for (double x : query_vec)
            norm += x * x;
        if (query_vec.empty() || norm == 0.0)
            throw InternalError("cosine: zero-norm query vector");
    }

    const std::vector<double> scores = cosine_scores(index.vectors, query_vec);

    // Top-k set: highest score first, ties by id.
    std::vector<std::size_t> order(index.demos.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b])
            return scores[a] > scores[b];
        return index.demos[a].id < index.demos[b].id;
    });
    order.resize(std::min<std::size_t>(static_cast<std::size_t>(k), order.size()));

    switch (permutation) {
    case Permutation::knn_descend:
        break; // already most similar first
    case Permutation::knn_ascend:
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (scores[a] != scores[b])
                return scores[a] < scores[b];
            return index.demos[a].id < index.demos[b].id;
        });
        break;
    case Permutation::random_order: {
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
        break;
    }
    }

    std::vector<ScoredDemo> result;
    result.reserve(order.size());
    for (std::size_t i : order)
        result.push_back({index.demos[i], scores[i]});
    return result;
}

std::vector<ScoredDemo> retrieve(const DemoIndex& index, Gateway& gateway,
                                 const std::string& query_text, int k, Permutation permutation,
                                 std::uint64_t seed, const CallContext& ctx) {
    const auto vectors = gateway.embed({query_text}, ctx);
    return retrieve(index, vectors.at(0), k, permutation, seed);
}

std::vector<Demonstration> fixed_demos(const std::vector<Demonstration>& corpus, DemoTask task,
                                       int k) {
    if (k < 1)
        throw UsageError("fixed demo count must be >= 1");
    std::vector<Demonstration> out;
    for (const auto& d : corpus) {
        if (d.task != task)
            continue;
        out.push_back(d);
        if (static_cast<int>(out.size()) == k)
            break;
    }
    return out;
}

std::vector<Demonstration> load_demo_corpus_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw UsageError("cannot open demonstration corpus: " + path);
    std::vector<Demonstration> corpus;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (normalize_ws(line).empty())
            continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw SchemaError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        corpus.push_back(Demonstration::from_json(j));
    }
    return corpus;
}

} // namespace ctikg
