#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "ctikg/gateway.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <openssl/evp.h>

#include "ctikg/errors.hpp"

namespace ctikg {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Usage accounting

json UsageRecord::to_json() const {
    return json{{"prompt_tokens", prompt_tokens},
                {"completion_tokens", completion_tokens},
                {"cost_nanos", cost_nanos},
                {"latency_micros", latency_micros}};
}

UsageRecord UsageRecord::from_json(const json& j) {
    UsageRecord r;
    r.prompt_tokens = j.at("prompt_tokens").get<std::int64_t>();
    r.completion_tokens = j.at("completion_tokens").get<std::int64_t>();
    r.cost_nanos = j.at("cost_nanos").get<std::int64_t>();
    r.latency_micros = j.at("latency_micros").get<std::int64_t>();
    if (r.prompt_tokens < 0 || r.completion_tokens < 0 || r.cost_nanos < 0 ||
        r.latency_micros < 0)
        throw SchemaError("usage record with negative field");
    return r;
}

UsageRecord aggregate_usage(const std::vector<UsageRecord>& records) {
    UsageRecord total;
    for (const auto& r : records) {
        total.prompt_tokens += r.prompt_tokens;
        total.completion_tokens += r.completion_tokens;
        total.cost_nanos += r.cost_nanos;
        total.latency_micros += r.latency_micros;
    }
    return total;
}

// ---------------------------------------------------------------------------
// Mode and backend configuration

std::string to_string(GatewayMode mode) {
    switch (mode) {
    case GatewayMode::live: return "live";
    case GatewayMode::record: return "record";
    case GatewayMode::replay: return "replay";
    }
    throw InternalError("unreachable gateway mode");
}

GatewayMode gateway_mode_from_name(const std::string& name) {
    if (name == "live") return GatewayMode::live;
    if (name == "record") return GatewayMode::record;
    if (name == "replay") return GatewayMode::replay;
    throw UsageError("unknown backend mode: " + name + " (expected live|record|replay)");
}

json BackendConfig::to_json() const {
    return json{{"base_url", base_url},
                {"completion_path", completion_path},
                {"embedding_path", embedding_path},
                {"completion_model", completion_model},
                {"embedding_model", embedding_model},
                {"api_key_env", api_key_env},
                {"prices",
                 {{"prompt_nanos_per_token", prices.prompt_nanos_per_token},
                  {"completion_nanos_per_token", prices.completion_nanos_per_token},
                  {"embedding_nanos_per_token", prices.embedding_nanos_per_token}}},
                {"max_attempts", max_attempts},
                {"backoff_base_ms", backoff_base_ms},
                {"max_inflight", max_inflight},
                {"timeout_seconds", timeout_seconds}};
}

BackendConfig BackendConfig::from_json(const json& j) {
    BackendConfig c;
    if (!j.is_object())
        throw SchemaError("backend config must be a JSON object");
    auto str = [&](const char* key, std::string& out) {
        if (j.contains(key)) out = j.at(key).get<std::string>();
    };
    str("base_url", c.base_url);
    str("completion_path", c.completion_path);
    str("embedding_path", c.embedding_path);
    str("completion_model", c.completion_model);
    str("embedding_model", c.embedding_model);
    str("api_key_env", c.api_key_env);
    if (j.contains("prices")) {
        const auto& p = j.at("prices");
        auto rate = [&](const char* key, std::int64_t& out) {
            if (p.contains(key)) out = p.at(key).get<std::int64_t>();
        };
        rate("prompt_nanos_per_token", c.prices.prompt_nanos_per_token);
        rate("completion_nanos_per_token", c.prices.completion_nanos_per_token);
        rate("embedding_nanos_per_token", c.prices.embedding_nanos_per_token);
    }
    auto num = [&](const char* key, int& out) {
        if (j.contains(key)) out = j.at(key).get<int>();
    };
    num("max_attempts", c.max_attempts);
    num("backoff_base_ms", c.backoff_base_ms);
    num("max_inflight", c.max_inflight);
    num("timeout_seconds", c.timeout_seconds);
    if (c.max_attempts < 1)
        throw SchemaError("backend config: max_attempts must be >= 1");
    if (c.max_inflight < 1)
        throw SchemaError("backend config: max_inflight must be >= 1");
    if (c.prices.prompt_nanos_per_token < 0 || c.prices.completion_nanos_per_token < 0 ||
        c.prices.embedding_nanos_per_token < 0)
        throw SchemaError("backend config: negative price");
    return c;
}

BackendConfig BackendConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw UsageError("cannot open backend config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaError("backend config " + path + ": " + e.what());
    }
    return from_json(j);
}

// ---------------------------------------------------------------------------
// Hashing

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw InternalError("sha256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0x0f]);
    }
    return out;
}

namespace {

// The canonical form is the exact prompt bytes plus the decoding parameters;
// nothing volatile (timestamps, model endpoints) participates.
std::string canonical_material(const char* kind, const json& body) {
    json material = json::array({kind, body});
    return material.dump();
}

} // namespace

std::string canonical_completion_hash(const std::string& prompt, const DecodingParams& decoding) {
    json body{{"prompt", prompt},
              {"temperature", decoding.temperature},
              {"max_output_tokens", decoding.max_output_tokens}};
    return sha256_hex(canonical_material("complete", body));
}

std::string canonical_embedding_hash(const std::string& text) {
    return sha256_hex(canonical_material("embed", json{{"text", text}}));
}

// ---------------------------------------------------------------------------
// Fixture store

FixtureStore::FixtureStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::filesystem::path FixtureStore::fixture_path(const std::string& prefix,
                                                 const std::string& request_hash) const {
    return dir_ / (prefix + request_hash + ".json");
}

void FixtureStore::write_atomic(const std::filesystem::path& target, const std::string& payload) {
    std::lock_guard<std::mutex> lock(write_mutex_);
    static std::atomic<unsigned> counter{0};
    auto tmp = target;
    tmp += ".tmp" + std::to_string(counter.fetch_add(1));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw InternalError("cannot write fixture: " + tmp.string());
        out << payload;
    }
    std::filesystem::rename(tmp, target);
}

std::optional<CompletionFixture> FixtureStore::load_completion(
    const std::string& request_hash) const {
    std::ifstream in(fixture_path("cmp_", request_hash));
    if (!in)
        return std::nullopt;
    json j;
    try {
        in >> j;
        CompletionFixture f;
        f.request_hash = j.at("request_hash").get<std::string>();
        f.prompt = j.at("prompt").get<std::string>();
        f.params.temperature = j.at("params").at("temperature").get<double>();
        f.params.max_output_tokens = j.at("params").at("max_output_tokens").get<int>();
        f.response_text = j.at("response_text").get<std::string>();
        f.usage = UsageRecord::from_json(j.at("usage"));
        return f;
    } catch (const json::exception& e) {
        throw SchemaError("corrupt completion fixture " + request_hash + ": " + e.what());
    }
}

std::optional<EmbeddingFixture> FixtureStore::load_embedding(
    const std::string& request_hash) const {
    std::ifstream in(fixture_path("emb_", request_hash));
    if (!in)
        return std::nullopt;
    json j;
    try {
        in >> j;
        EmbeddingFixture f;
        f.request_hash = j.at("request_hash").get<std::string>();
        f.text = j.at("text").get<std::string>();
        f.vector = j.at("vector").get<EmbeddingVector>();
        f.usage = UsageRecord::from_json(j.at("usage"));
        return f;
    } catch (const json::exception& e) {
        throw SchemaError("corrupt embedding fixture " + request_hash + ": " + e.what());
    }
}

void FixtureStore::store_completion(const CompletionFixture& fixture) {
    json j{{"request_hash", fixture.request_hash},
           {"prompt", fixture.prompt},
           {"params",
            {{"temperature", fixture.params.temperature},
             {"max_output_tokens", fixture.params.max_output_tokens}}},
           {"response_text", fixture.response_text},
           {"usage", fixture.usage.to_json()}};
    write_atomic(fixture_path("cmp_", fixture.request_hash), j.dump(2) + "\n");
}

void FixtureStore::store_embedding(const EmbeddingFixture& fixture) {
    json j{{"request_hash", fixture.request_hash},
           {"text", fixture.text},
           {"vector", fixture.vector},
           {"usage", fixture.usage.to_json()}};
    write_atomic(fixture_path("emb_", fixture.request_hash), j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// HTTP transport

namespace {

class HttpTransport final : public Transport {
public:
    explicit HttpTransport(BackendConfig config) : config_(std::move(config)) {
        const char* key = std::getenv(config_.api_key_env.c_str());
        api_key_ = key ? key : "";
    }

    TransportCompletion complete(const std::string& prompt,
                                 const DecodingParams& decoding) override {
        json body{{"model", config_.completion_model},
                  {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
                  {"temperature", decoding.temperature},
                  {"max_tokens", decoding.max_output_tokens}};
        json reply = post(config_.completion_path, body);
        TransportCompletion result;
        try {
            result.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
            if (reply.contains("usage")) {
                result.prompt_tokens = reply["usage"].value("prompt_tokens", std::int64_t{0});
                result.completion_tokens =
                    reply["usage"].value("completion_tokens", std::int64_t{0});
            }
        } catch (const json::exception& e) {
            throw TransportError(std::string("malformed completion reply: ") + e.what());
        }
        return result;
    }

    TransportEmbeddings embed(const std::vector<std::string>& texts) override {
        json body{{"model", config_.embedding_model}, {"input", texts}};
        json reply = post(config_.embedding_path, body);
        TransportEmbeddings result;
        try {
            std::vector<std::pair<std::int64_t, EmbeddingVector>> rows;
            for (const auto& item : reply.at("data"))
                rows.emplace_back(item.value("index", std::int64_t(rows.size())),
                                  item.at("embedding").get<EmbeddingVector>());
            std::sort(rows.begin(), rows.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            for (auto& row : rows)
                result.vectors.push_back(std::move(row.second));
            if (reply.contains("usage"))
                result.prompt_tokens = reply["usage"].value("prompt_tokens", std::int64_t{0});
        } catch (const json::exception& e) {
            throw TransportError(std::string("malformed embedding reply: ") + e.what());
        }
        if (result.vectors.size() != texts.size())
            throw TransportError("embedding reply count mismatch");
        return result;
    }

private:
    json post(const std::string& path, const json& body) {
        httplib::Client client(config_.base_url);
        client.set_connection_timeout(config_.timeout_seconds, 0);
        client.set_read_timeout(config_.timeout_seconds, 0);
        httplib::Headers headers;
        if (!api_key_.empty())
            headers.emplace("Authorization", "Bearer " + api_key_);
        auto res = client.Post(path, headers, body.dump(), "application/json");
        if (!res)
            throw TransportError("http request failed: " + httplib::to_string(res.error()));
        if (res->status == 429 || res->status >= 500)
            throw TransportError("backend returned status " + std::to_string(res->status));
        if (res->status != 200)
            throw BackendUnavailable("backend returned status " + std::to_string(res->status) +
                                     ": " + res->body);
        try {
            return json::parse(res->body);
        } catch (const json::exception& e) {
            throw TransportError(std::string("unparseable backend reply: ") + e.what());
        }
    }

    BackendConfig config_;
    std::string api_key_;
};

} // namespace

std::unique_ptr<Transport> make_http_transport(const BackendConfig& config) {
    return std::make_unique<HttpTransport>(config);
}

// ---------------------------------------------------------------------------
// Gateway

json CallLogEntry::to_json() const {
    return json{{"kind", kind},        {"phase", phase},
                {"report_id", report_id}, {"seq", seq},
                {"request_hash", request_hash}, {"usage", usage.to_json()},
                {"from_cache", from_cache}};
}

Gateway::Gateway(GatewayMode mode, BackendConfig config,
                 std::optional<std::filesystem::path> cache_dir,
                 std::unique_ptr<Transport> transport)
    : mode_(mode), config_(std::move(config)), transport_(std::move(transport)) {
    if (mode_ != GatewayMode::live || cache_dir) {
        if (!cache_dir)
            throw UsageError("record/replay mode requires a cache directory");
        store_ = std::make_unique<FixtureStore>(*cache_dir);
    }
    if (!transport_ && mode_ != GatewayMode::replay)
        transport_ = make_http_transport(config_);
}

namespace {

// RAII slot under the in-flight cap.
class InflightSlot {
public:
    InflightSlot(std::mutex& m, std::condition_variable& cv, int& count, int cap)
        : mutex_(m), cv_(cv), count_(count) {
        std::unique_lock<std::mutex> lock(mutex_);
        cv_.wait(lock, [&] { return count_ < cap; });
        ++count_;
    }
    ~InflightSlot() {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            --count_;
        }
        cv_.notify_one();
    }

private:
    std::mutex& mutex_;
    std::condition_variable& cv_;
    int& count_;
};

std::int64_t elapsed_micros(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() -
                                                                 start)
        .count();
}

} // namespace

TransportCompletion Gateway::complete_with_retry(const std::string& prompt,
                                                 const DecodingParams& decoding) {
    InflightSlot slot(inflight_mutex_, inflight_cv_, inflight_, config_.max_inflight);
    std::string last_error;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
        try {
            return transport_->complete(prompt, decoding);
        } catch (const TransportError& e) {
            last_error = e.what();
            if (attempt < config_.max_attempts)
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(config_.backoff_base_ms * (1 << (attempt - 1))));
        }
    }
    throw BackendUnavailable("completion failed after " + std::to_string(config_.max_attempts) +
                             " attempts: " + last_error);
}

TransportEmbeddings Gateway::embed_with_retry(const std::vector<std::string>& texts) {
    InflightSlot slot(inflight_mutex_, inflight_cv_, inflight_, config_.max_inflight);
    std::string last_error;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
        try {
            return transport_->embed(texts);
        } catch (const TransportError& e) {
            last_error = e.what();
            if (attempt < config_.max_attempts)
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(config_.backoff_base_ms * (1 << (attempt - 1))));
        }
    }
    throw BackendUnavailable("embedding failed after " + std::to_string(config_.max_attempts) +
                             " attempts: " + last_error);
}

void Gateway::log_call(const std::string& kind, const CallContext& ctx,
                       const std::string& request_hash, const UsageRecord& usage,
                       bool from_cache) {
    std::lock_guard<std::mutex> lock(mutex_);
    CallLogEntry entry;
    entry.kind = kind;
    entry.phase = ctx.phase;
    entry.report_id = ctx.report_id;
    entry.seq = seq_[ctx.report_id + "\n" + ctx.phase]++;
    entry.request_hash = request_hash;
    entry.usage = usage;
    entry.from_cache = from_cache;
    log_.push_back(std::move(entry));
}

CompletionResult Gateway::complete(const CompletionRequest& req, const CallContext& ctx) {
    if (req.prompt.empty())
        throw InternalError("completion request with empty prompt");
    const std::string hash = canonical_completion_hash(req.prompt, req.decoding);

    if (store_ && mode_ != GatewayMode::live) {
        if (auto fixture = store_->load_completion(hash)) {
            CompletionResult result{fixture->response_text, fixture->usage, hash, true};
            log_call("completion", ctx, hash, result.usage, true);
            return result;
        }
        if (mode_ == GatewayMode::replay)
            throw MissingFixture(hash, "completion");
    }

    const auto start = std::chrono::steady_clock::now();
    TransportCompletion raw = complete_with_retry(req.prompt, req.decoding);
    UsageRecord usage;
    usage.prompt_tokens = raw.prompt_tokens;
    usage.completion_tokens = raw.completion_tokens;
    usage.cost_nanos = raw.prompt_tokens * config_.prices.prompt_nanos_per_token +
                       raw.completion_tokens * config_.prices.completion_nanos_per_token;
    usage.latency_micros = elapsed_micros(start);

    if (mode_ == GatewayMode::record)
        store_->store_completion({hash, req.prompt, req.decoding, raw.text, usage});
    CompletionResult result{raw.text, usage, hash, false};
    log_call("completion", ctx, hash, usage, false);
    return result;
}

std::vector<EmbeddingVector> Gateway::embed(const std::vector<std::string>& texts,
                                            const CallContext& ctx) {
    if (texts.empty())
        throw InternalError("embed called with no texts");
    for (const auto& t : texts)
        if (t.empty())
            throw InternalError("embed called with an empty text");

    std::vector<std::string> hashes(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i)
        hashes[i] = canonical_embedding_hash(texts[i]);

    std::vector<std::optional<EmbeddingVector>> out(texts.size());
    // Misses keyed by hash so a duplicate text is fetched once per batch.
    std::vector<std::size_t> miss_first; // first position of each distinct missing hash
    {
        std::lock_guard<std::mutex> lock(mutex_);
        std::unordered_map<std::string, std::size_t> seen;
        for (std::size_t i = 0; i < texts.size(); ++i) {
            if (auto it = embed_cache_.find(hashes[i]); it != embed_cache_.end()) {
                out[i] = it->second;
                log_.push_back({"embedding", ctx.phase, ctx.report_id,
                                seq_[ctx.report_id + "\n" + ctx.phase]++, hashes[i], UsageRecord{},
                                true});
                continue;
            }
            if (seen.emplace(hashes[i], i).second)
                miss_first.push_back(i);
        }
    }

    // Fixture store pass.
    std::vector<std::size_t> remote;
    for (std::size_t pos : miss_first) {
        if (store_ && mode_ != GatewayMode::live) {
            if (auto fixture = store_->load_embedding(hashes[pos])) {
                {
                    std::lock_guard<std::mutex> lock(mutex_);
                    embed_cache_[hashes[pos]] = fixture->vector;
                }
                out[pos] = fixture->vector;
                log_call("embedding", ctx, hashes[pos], fixture->usage, true);
                continue;
            }
            if (mode_ == GatewayMode::replay)
                throw MissingFixture(hashes[pos], "embedding");
        }
        remote.push_back(pos);
    }

    if (!remote.empty()) {
        std::vector<std::string> batch;
        batch.reserve(remote.size());
        for (std::size_t pos : remote)
            batch.push_back(texts[pos]);
        const auto start = std::chrono::steady_clock::now();
        TransportEmbeddings raw = embed_with_retry(batch);
        const std::int64_t latency = elapsed_micros(start);
        if (raw.vectors.size() != batch.size())
            throw ParseError("embedding backend returned wrong vector count");

        // Charge the batch usage to its first request; the rest are free.
        for (std::size_t b = 0; b < remote.size(); ++b) {
            UsageRecord usage;
            if (b == 0) {
                usage.prompt_tokens = raw.prompt_tokens;
                usage.cost_nanos = raw.prompt_tokens * config_.prices.embedding_nanos_per_token;
                usage.latency_micros = latency;
            }
            const std::size_t pos = remote[b];
            if (raw.vectors[b].empty())
                throw ParseError("embedding backend returned an empty vector");
            if (mode_ == GatewayMode::record)
                store_->store_embedding({hashes[pos], texts[pos], raw.vectors[b], usage});
            {
                std::lock_guard<std::mutex> lock(mutex_);
                embed_cache_[hashes[pos]] = raw.vectors[b];
            }
            out[pos] = raw.vectors[b];
            log_call("embedding", ctx, hashes[pos], usage, false);
        }
    }

    // Fill duplicate positions from the now-warm cache and check dims.
    std::vector<EmbeddingVector> result(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (!out[i]) {
            std::lock_guard<std::mutex> lock(mutex_);
            auto it = embed_cache_.find(hashes[i]);
            if (it == embed_cache_.end())
                throw InternalError("embedding cache miss after fill");
            out[i] = it->second;
        }
        result[i] = std::move(*out[i]);
        std::lock_guard<std::mutex> lock(mutex_);
        if (embed_dims_ == 0)
            embed_dims_ = result[i].size();
        else if (result[i].size() != embed_dims_)
            throw ParseError("embedding backend changed dimensions within a run");
    }
    return result;
}

std::vector<CallLogEntry> Gateway::call_log() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return log_;
}

UsageRecord Gateway::total_usage() const {
    std::lock_guard<std::mutex> lock(mutex_);
    std::vector<UsageRecord> records;
    records.reserve(log_.size());
    for (const auto& e : log_)
        records.push_back(e.usage);
    return aggregate_usage(records);
}

} // namespace ctikg
