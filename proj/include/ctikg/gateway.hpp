#pragma once
// Uniform access to chat-completion and text-embedding backends. Three modes:
//   live    — HTTP backend only, nothing persisted
//   record  — serve from the fixture store when possible, otherwise call the
//             live backend and persist the exchange
//   replay  — fixture store only; a miss is an error naming the request hash
// Requests are keyed by a canonical hash over the exact prompt bytes and the
// decoding parameters, so fixtures are stable across runs and machines.

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctikg/core.hpp"

namespace ctikg {

struct UsageRecord {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    std::int64_t cost_nanos = 0;     // nano-dollars, exact integer arithmetic
    std::int64_t latency_micros = 0;

    nlohmann::json to_json() const;
    static UsageRecord from_json(const nlohmann::json& j);
};

// Componentwise sum; the empty list folds to an all-zero record.
UsageRecord aggregate_usage(const std::vector<UsageRecord>& records);

using EmbeddingVector = std::vector<double>;

struct CompletionRequest {
    std::string prompt;
    DecodingParams decoding;
};

struct CompletionResult {
    std::string text;
    UsageRecord usage;
    std::string request_hash;
    bool from_cache = false;
};

// Prices are configuration, never constants: nano-dollars per token.
struct PriceTable {
    std::int64_t prompt_nanos_per_token = 0;
    std::int64_t completion_nanos_per_token = 0;
    std::int64_t embedding_nanos_per_token = 0;
};

enum class GatewayMode { live, record, replay };
std::string to_string(GatewayMode mode);
GatewayMode gateway_mode_from_name(const std::string& name);

struct BackendConfig {
    std::string base_url = "https://api.openai.com";
    std::string completion_path = "/v1/chat/completions";
    std::string embedding_path = "/v1/embeddings";
    std::string completion_model = "gpt-4";
    std::string embedding_model = "text-embedding-3-large";
    std::string api_key_env = "CTIKG_API_KEY";
    PriceTable prices;
    int max_attempts = 3;     // retry budget per request
    int backoff_base_ms = 250;
    int max_inflight = 4;     // concurrent transport calls
    int timeout_seconds = 120;

    nlohmann::json to_json() const;
    static BackendConfig from_json(const nlohmann::json& j);
    static BackendConfig load_file(const std::string& path);
};

// Raw exchange with a concrete backend; the gateway layers caching, retries,
// hashing, and accounting on top.
struct TransportCompletion {
    std::string text;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

struct TransportEmbeddings {
    std::vector<EmbeddingVector> vectors;
    std::int64_t prompt_tokens = 0;
};

class Transport {
public:
    virtual ~Transport() = default;
    // Both throw TransportError on retryable failures.
    virtual TransportCompletion complete(const std::string& prompt,
                                         const DecodingParams& decoding) = 0;
    virtual TransportEmbeddings embed(const std::vector<std::string>& texts) = 0;
};

// HTTP transport speaking a chat-completion / embeddings API.
std::unique_ptr<Transport> make_http_transport(const BackendConfig& config);

std::string sha256_hex(const std::string& bytes);
std::string canonical_completion_hash(const std::string& prompt, const DecodingParams& decoding);
std::string canonical_embedding_hash(const std::string& text);

struct CompletionFixture {
    std::string request_hash;
    std::string prompt;
    DecodingParams params;
    std::string response_text;
    UsageRecord usage;
};

struct EmbeddingFixture {
    std::string request_hash;
    std::string text;
    EmbeddingVector vector;
    UsageRecord usage;
};

// One JSON file per request hash under the cache directory; writes go through
// a temp file and rename, so concurrent readers never see partial fixtures.
class FixtureStore {
public:
    explicit FixtureStore(std::filesystem::path dir);

    const std::filesystem::path& dir() const { return dir_; }

    std::optional<CompletionFixture> load_completion(const std::string& request_hash) const;
    std::optional<EmbeddingFixture> load_embedding(const std::string& request_hash) const;
    void store_completion(const CompletionFixture& fixture);
    void store_embedding(const EmbeddingFixture& fixture);

private:
    std::filesystem::path fixture_path(const std::string& prefix,
                                       const std::string& request_hash) const;
    void write_atomic(const std::filesystem::path& target, const std::string& payload);

    std::filesystem::path dir_;
    mutable std::mutex write_mutex_;
};

// Where a call came from, for the usage log.
struct CallContext {
    std::string phase;     // extraction | typing | merge | relation | retrieval
    std::string report_id; // empty for corpus-level work
};

struct CallLogEntry {
    std::string kind; // complete | embed
    std::string phase;
    std::string report_id;
    int seq = 0; // per (report, phase) ordinal, assigned by the gateway
    std::string request_hash;
    UsageRecord usage;
    bool from_cache = false;

    nlohmann::json to_json() const;
};

class Gateway {
public:
    // transport may be null in replay mode, or injected for tests; when null
    // outside replay mode, an HTTP transport is built from the config.
    Gateway(GatewayMode mode, BackendConfig config,
            std::optional<std::filesystem::path> cache_dir,
            std::unique_ptr<Transport> transport = nullptr);

    GatewayMode mode() const { return mode_; }

    CompletionResult complete(const CompletionRequest& req, const CallContext& ctx = {});

    // Order-preserving; duplicate texts inside one batch are embedded once.
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts,
                                       const CallContext& ctx = {});

    std::vector<CallLogEntry> call_log() const;
    UsageRecord total_usage() const;

private:
    TransportCompletion complete_with_retry(const std::string& prompt,
                                            const DecodingParams& decoding);
    TransportEmbeddings embed_with_retry(const std::vector<std::string>& texts);
    void log_call(const std::string& kind, const CallContext& ctx, const std::string& request_hash,
                  const UsageRecord& usage, bool from_cache);

    GatewayMode mode_;
    BackendConfig config_;
    std::unique_ptr<FixtureStore> store_; // null in live mode without cache dir
    std::unique_ptr<Transport> transport_;

    mutable std::mutex mutex_;
    std::unordered_map<std::string, EmbeddingVector> embed_cache_; // text hash → vector
    std::vector<CallLogEntry> log_;
    std::unordered_map<std::string, int> seq_; // "report\nphase" → next ordinal
    std::size_t embed_dims_ = 0;               // learned from the first vector

    std::mutex inflight_mutex_;
    std::condition_variable inflight_cv_;
    int inflight_ = 0;
};

} // namespace ctikg
