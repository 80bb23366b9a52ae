#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "qqeval/types.hpp"

namespace qqeval {

// ---- time ----------------------------------------------------------------
// All waiting (backoff, rate limiting) goes through a Clock so tests can run
// on virtual time.

class Clock {
public:
    virtual ~Clock() = default;
    virtual int64_t now_ms() = 0;
    virtual void sleep_ms(int64_t ms) = 0;
};

class SystemClock : public Clock {
public:
    int64_t now_ms() override;
    void sleep_ms(int64_t ms) override;
};

class VirtualClock : public Clock {
public:
    explicit VirtualClock(int64_t start_ms = 0) : now_(start_ms) {}
    int64_t now_ms() override;
    void sleep_ms(int64_t ms) override;  // advances time instead of blocking

private:
    std::mutex mu_;
    int64_t now_;
};

std::shared_ptr<Clock> system_clock();

// ---- requests ------------------------------------------------------------

struct CompletionRequest {
    std::string prompt;
    double temperature = 0.0;        // [0, 2]
    int max_output_tokens = 1024;    // > 0
    std::string request_tag;         // non-empty; keys cache entries and replay transcripts
};

struct CompletionResponse {
    std::string text;  // verbatim model output
    std::string provider_model;
    int64_t latency_ms = 0;
    bool from_cache = false;
};

// Throws ArgumentError when a request violates its bounds.
void validate_request(const CompletionRequest& req);

enum class ProviderKind { http_chat, mock, replay };

const char* provider_kind_key(ProviderKind kind);
std::optional<ProviderKind> provider_kind_from_key(const std::string& key);

struct ProviderConfig {
    ProviderKind kind = ProviderKind::mock;
    std::string endpoint;        // http_chat: URL to POST to
    std::string model_name;
    std::string auth_token_env;  // name of the env var holding the bearer token; value is
                                 // read once at construction and never persisted anywhere
    double timeout_seconds = 60.0;
    int max_retries = 3;
    std::optional<int> requests_per_minute;
    std::string transcript_path;  // replay: source transcript
    std::string cache_dir;        // http_chat: response cache location, empty = no cache
    uint64_t seed = 0;            // mock determinism and backoff jitter

    // Throws ConfigError naming the offending field.
    void validate() const;

    // Stable identity used to share provider instances (and with them the
    // rate limiter and cache) between roles pointing at the same place.
    std::string signature() const;
};

class CompletionProvider {
public:
    virtual ~CompletionProvider() = default;
    virtual CompletionResponse complete(const CompletionRequest& req) = 0;
    virtual const std::string& model_name() const = 0;
};

// ---- rate limiting -------------------------------------------------------
// Sliding 60 s window: acquire() blocks (via the clock) until dispatching one
// more call keeps the window at or under the configured budget.

class RateLimiter {
public:
    RateLimiter(int requests_per_minute, std::shared_ptr<Clock> clock);
    void acquire();

private:
    int budget_;
    std::shared_ptr<Clock> clock_;
    std::mutex mu_;
    std::deque<int64_t> dispatched_;
};

// ---- transcripts ---------------------------------------------------------
// Line-delimited JSON, one object per completed request:
//   {"request_tag": ..., "prompt_hash": ..., "temperature": ..., "response_text": ...}
// Appending is safe from multiple threads; on read, the last entry for a tag
// wins, so re-recorded runs supersede earlier lines.

struct TranscriptEntry {
    std::string request_tag;
    std::string prompt_hash;  // hex64(fnv1a64(prompt))
    double temperature = 0.0;
    std::string response_text;
};

class TranscriptWriter {
public:
    explicit TranscriptWriter(const std::string& path);  // opens for append
    ~TranscriptWriter();
    void record(const TranscriptEntry& entry);
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::mutex mu_;
    FILE* file_;
};

std::map<std::string, TranscriptEntry> load_transcript(const std::string& path);

// ---- providers -----------------------------------------------------------

// Deterministic offline stand-in. The reply is synthesized from a keyed hash
// of (prompt, temperature, seed) expanded through small fixture templates, and
// its shape follows the output-format contract of whichever prompt family the
// text looks like (judge, candidate generation, or plain scoring).
class MockProvider : public CompletionProvider {
public:
    MockProvider(uint64_t seed, std::string model_name);
    CompletionResponse complete(const CompletionRequest& req) override;
    const std::string& model_name() const override { return model_name_; }

private:
    uint64_t seed_;
    std::string model_name_;
};

// Replays a recorded transcript; lookup is by request_tag. A missing tag is a
// replay-miss error; a tag recorded for a different prompt is a hard error,
// since silently answering a changed prompt would hide drift.
class ReplayProvider : public CompletionProvider {
public:
    ReplayProvider(const std::string& transcript_path, std::string model_name);
    CompletionResponse complete(const CompletionRequest& req) override;
    const std::string& model_name() const override { return model_name_; }

private:
    std::map<std::string, TranscriptEntry> entries_;
    std::string model_name_;
};

struct HttpResult {
    int status = 0;  // 0 = connection failure
    std::string body;
};

// Chat-completion JSON POST. Reads the bearer token from the environment
// variable named in the config at construction; the token lives only in this
// object and the request header. Retries transient failures (connect errors,
// 408, 429, 5xx) with exponential backoff, base 1 s, cap 30 s, jittered;
// 401/403 abort immediately as auth errors, other 4xx as transport errors.
class HttpChatProvider : public CompletionProvider {
public:
    using Transport = std::function<HttpResult(const std::string& request_body)>;

    HttpChatProvider(const ProviderConfig& config, std::shared_ptr<Clock> clock,
                     std::shared_ptr<RateLimiter> limiter = nullptr,
                     Transport transport = nullptr);
    CompletionResponse complete(const CompletionRequest& req) override;
    const std::string& model_name() const override { return model_name_; }

    std::string build_request_body(const CompletionRequest& req) const;
    static std::string extract_reply_text(const std::string& response_body);

private:
    HttpResult perform(const std::string& body);
    int64_t backoff_delay_ms(int attempt);

    std::string endpoint_;
    std::string model_name_;
    std::string auth_token_;
    double timeout_seconds_;
    int max_retries_;
    std::shared_ptr<Clock> clock_;
    std::shared_ptr<RateLimiter> limiter_;
    Transport transport_;
    std::mutex rng_mu_;
    std::mt19937_64 rng_;
};

// Consults a content-addressed file cache before the wrapped provider.
// Key = hash of (prompt, temperature, model_name); hits are byte-for-byte
// the originally stored text.
std::shared_ptr<CompletionProvider> with_cache(std::shared_ptr<CompletionProvider> inner,
                                               const std::string& cache_dir);

// Appends every successful completion to the shared transcript writer.
std::shared_ptr<CompletionProvider> with_recording(std::shared_ptr<CompletionProvider> inner,
                                                   std::shared_ptr<TranscriptWriter> writer);

std::string cache_key(const std::string& prompt, double temperature,
                      const std::string& model_name);

// Builds providers from configs, reusing one instance per config signature so
// roles that share an endpoint also share its rate limiter and cache.
class ProviderFactory {
public:
    explicit ProviderFactory(std::shared_ptr<Clock> clock = nullptr);
    std::shared_ptr<CompletionProvider> get(const ProviderConfig& config);

private:
    std::shared_ptr<Clock> clock_;
    std::mutex mu_;
    std::map<std::string, std::shared_ptr<CompletionProvider>> shared_;
};

}  // namespace qqeval
