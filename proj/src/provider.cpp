#include "qqeval/provider.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#if defined(QQEVAL_HAVE_OPENSSL) && !defined(CPPHTTPLIB_OPENSSL_SUPPORT)
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"
#include "json.hpp"
#include "qqeval/errors.hpp"
#include "qqeval/util.hpp"

namespace qqeval {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- clocks ----------------------------------------------------------------

int64_t SystemClock::now_ms() {
    auto now = std::chrono::steady_clock::now().time_since_epoch();
    return std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
}

void SystemClock::sleep_ms(int64_t ms) {
    if (ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(ms));
}

int64_t VirtualClock::now_ms() {
    std::lock_guard<std::mutex> lock(mu_);
    return now_;
}

void VirtualClock::sleep_ms(int64_t ms) {
    std::lock_guard<std::mutex> lock(mu_);
    if (ms > 0) now_ += ms;
}

std::shared_ptr<Clock> system_clock() {
    static auto instance = std::make_shared<SystemClock>();
    return instance;
}

// ---- request / config validation -------------------------------------------

void validate_request(const CompletionRequest& req) {
    if (req.request_tag.empty())
        throw ArgumentError("completion request needs a non-empty request_tag");
    if (req.temperature < 0.0 || req.temperature > 2.0)
        throw ArgumentError("temperature " + format_double(req.temperature, 3) +
                            " outside [0, 2] for request " + req.request_tag);
    if (req.max_output_tokens <= 0)
        throw ArgumentError("max_output_tokens must be positive for request " + req.request_tag);
}

const char* provider_kind_key(ProviderKind kind) {
    switch (kind) {
        case ProviderKind::http_chat: return "http_chat";
        case ProviderKind::mock: return "mock";
        case ProviderKind::replay: return "replay";
    }
    return "?";
}

std::optional<ProviderKind> provider_kind_from_key(const std::string& key) {
    if (key == "http_chat") return ProviderKind::http_chat;
    if (key == "mock") return ProviderKind::mock;
    if (key == "replay") return ProviderKind::replay;
    return std::nullopt;
}

void ProviderConfig::validate() const {
    if (model_name.empty()) throw ConfigError("model_name", "must not be empty");
    if (timeout_seconds <= 0.0) throw ConfigError("timeout_seconds", "must be positive");
    if (max_retries < 0) throw ConfigError("max_retries", "must be >= 0");
    if (requests_per_minute && *requests_per_minute <= 0)
        throw ConfigError("requests_per_minute", "must be positive when set");
    if (kind == ProviderKind::http_chat) {
        if (endpoint.empty()) throw ConfigError("endpoint", "required for http_chat providers");
        if (endpoint.rfind("http://", 0) != 0 && endpoint.rfind("https://", 0) != 0)
            throw ConfigError("endpoint", "must start with http:// or https://");
    }
    if (kind == ProviderKind::replay && transcript_path.empty())
        throw ConfigError("transcript_path", "required for replay providers");
}

std::string ProviderConfig::signature() const {
    std::ostringstream out;
    out << provider_kind_key(kind) << '\x1f' << endpoint << '\x1f' << model_name << '\x1f'
        << auth_token_env << '\x1f' << format_double(timeout_seconds, 3) << '\x1f' << max_retries
        << '\x1f' << (requests_per_minute ? std::to_string(*requests_per_minute) : "-") << '\x1f'
        << transcript_path << '\x1f' << cache_dir << '\x1f' << seed;
    return out.str();
}

// ---- rate limiter -----------------------------------------------------------

RateLimiter::RateLimiter(int requests_per_minute, std::shared_ptr<Clock> clock)
    : budget_(requests_per_minute), clock_(std::move(clock)) {
    if (budget_ <= 0) throw ArgumentError("rate limiter budget must be positive");
}

void RateLimiter::acquire() {
    constexpr int64_t kWindowMs = 60 * 1000;
    for (;;) {
        int64_t wait = 0;
        {
            std::lock_guard<std::mutex> lock(mu_);
            int64_t now = clock_->now_ms();
            while (!dispatched_.empty() && dispatched_.front() <= now - kWindowMs)
                dispatched_.pop_front();
            if (static_cast<int>(dispatched_.size()) < budget_) {
                dispatched_.push_back(now);
                return;
            }
            wait = dispatched_.front() + kWindowMs - now;
        }
        clock_->sleep_ms(wait > 0 ? wait : 1);
    }
}

// ---- transcripts --------------------------------------------------------------

TranscriptWriter::TranscriptWriter(const std::string& path) : path_(path) {
    file_ = std::fopen(path.c_str(), "ab");
    if (!file_) throw IoError("cannot open transcript for append: " + path);
}

TranscriptWriter::~TranscriptWriter() {
    if (file_) std::fclose(file_);
}

void TranscriptWriter::record(const TranscriptEntry& entry) {
    json line = {{"request_tag", entry.request_tag},
                 {"prompt_hash", entry.prompt_hash},
                 {"temperature", entry.temperature},
                 {"response_text", entry.response_text}};
    std::string text = line.dump();
    text.push_back('\n');
    std::lock_guard<std::mutex> lock(mu_);
    if (std::fwrite(text.data(), 1, text.size(), file_) != text.size() || std::fflush(file_) != 0)
        throw IoError("cannot write transcript entry to " + path_);
}

std::map<std::string, TranscriptEntry> load_transcript(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read transcript: " + path);
    std::map<std::string, TranscriptEntry> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim_view(line).empty()) continue;
        try {
            json j = json::parse(line);
            TranscriptEntry e;
            e.request_tag = j.at("request_tag").get<std::string>();
            e.prompt_hash = j.at("prompt_hash").get<std::string>();
            e.temperature = j.at("temperature").get<double>();
            e.response_text = j.at("response_text").get<std::string>();
            out[e.request_tag] = std::move(e);  // last occurrence wins
        } catch (const json::exception& e) {
            throw IoError(path + " line " + std::to_string(lineno) +
                          ": malformed transcript entry: " + e.what());
        }
    }
    return out;
}

// ---- mock provider -------------------------------------------------------------

namespace {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

uint64_t mix(uint64_t a, uint64_t b) { return splitmix64(a ^ (b * 0x9e3779b97f4a7c15ULL)); }

const char* const kStrengthPhrases[] = {
    "the question targets the central idea of the passage",
    "the phrasing is direct and free of ambiguity",
    "it invites an answer in the student's own words rather than a quote",
    "the question connects two parts of the passage that must be read together",
    "the difficulty is well matched to the passage's level",
    "it asks for a reason, not just a fact, which rewards real understanding",
    "the question stays answerable strictly from the given material",
    "the wording mirrors how an educator would pose it in class",
};

const char* const kWeaknessPhrases[] = {
    "the answer can be lifted verbatim from a single sentence",
    "the scope is wider than what the passage actually supports",
    "the phrasing presupposes detail the passage never states",
    "it reads as two questions fused together, which muddles the ask",
    "the question ignores the most instructive part of the passage",
    "a key term is used loosely, so strong answers could be marked wrong",
    "it tests recall only and would not distinguish weak from strong readers",
    "the register is too informal for an assessment setting",
};

const char* const kPreambles[] = {
    "I reviewed the question against the passage and the metric definitions.",
    "After reading the passage twice, my assessment follows.",
    "Weighing the question against each metric in turn, here is my judgment.",
    "My evaluation, considering the passage as the sole source of truth:",
};

// Largest [gN] marker in the text, 0 when none. Generation responses carry
// these markers; they ride along verbatim through feedback and candidate
// lists, giving the mock a view of how deep the refinement chain is.
int max_depth_marker(const std::string& text) {
    int best = 0;
    size_t pos = 0;
    while ((pos = text.find("[g", pos)) != std::string::npos) {
        size_t i = pos + 2;
        int value = 0;
        bool any = false;
        while (i < text.size() && text[i] >= '0' && text[i] <= '9') {
            value = value * 10 + (text[i] - '0');
            any = true;
            ++i;
        }
        if (any && i < text.size() && text[i] == ']' && value > best) best = value;
        pos = i;
    }
    return best;
}

// Candidate count declared by the judge prompt ("There are N candidate pairs").
int scan_candidate_count(const std::string& prompt) {
    const std::string lead = "There are ";
    size_t pos = prompt.find(lead);
    while (pos != std::string::npos) {
        size_t i = pos + lead.size();
        int value = 0;
        bool any = false;
        while (i < prompt.size() && prompt[i] >= '0' && prompt[i] <= '9') {
            value = value * 10 + (prompt[i] - '0');
            any = true;
            ++i;
        }
        if (any && prompt.compare(i, 16, " candidate pairs") == 0) return value;
        pos = prompt.find(lead, pos + lead.size());
    }
    return 1;
}

// The question block shared by both modules' judge prompts at one iteration.
// Falls back to the whole prompt when the landmarks are absent (custom
// templates), which only makes settling less likely, never incorrect.
std::string question_extract(const std::string& prompt) {
    const std::string open = "Question under review:\n";
    const std::string close = "\n\nCandidate strengths:";
    size_t a = prompt.find(open);
    if (a == std::string::npos) return prompt;
    a += open.size();
    size_t b = prompt.find(close, a);
    if (b == std::string::npos) return prompt;
    return prompt.substr(a, b - a);
}

int score_from(uint64_t base, int slot) { return 1 + static_cast<int>(mix(base, slot) % 5); }

std::string scores_lines(uint64_t base) {
    std::ostringstream out;
    for (Metric m : kAllMetrics)
        out << metric_label(m) << ": " << score_from(base, static_cast<int>(m) + 1) << "\n";
    return out.str();
}

}  // namespace

MockProvider::MockProvider(uint64_t seed, std::string model_name)
    : seed_(seed), model_name_(std::move(model_name)) {}

CompletionResponse MockProvider::complete(const CompletionRequest& req) {
    validate_request(req);
    uint64_t h0 = fnv1a64(req.prompt);
    h0 = mix(h0, fnv1a64(format_double(req.temperature, 6)));
    h0 = mix(h0, seed_);

    std::ostringstream out;
    out << kPreambles[mix(h0, 7) % (sizeof(kPreambles) / sizeof(kPreambles[0]))] << "\n\n";

    if (contains(req.prompt, "BestStrength")) {
        // Judge-shaped reply. Once the refinement chain is deep enough for
        // this question, scores depend only on the question text, so the two
        // modules start agreeing and the run can converge; a slice of
        // questions never settles and rides out max_iterations.
        int count = scan_candidate_count(req.prompt);
        int depth = max_depth_marker(req.prompt);
        uint64_t qh = mix(fnv1a64(question_extract(req.prompt)), seed_);
        uint64_t r = (qh >> 16) % 8;
        bool settled = r != 0 && depth >= static_cast<int>(1 + r);
        out << "```\n"
            << "BestStrength: " << 1 + static_cast<int>(mix(h0, 101) % count) << "\n"
            << "BestWeakness: " << 1 + static_cast<int>(mix(h0, 202) % count) << "\n"
            << scores_lines(settled ? qh : h0) << "```\n";
    } else if (contains(req.prompt, "two labeled sections")) {
        int depth = max_depth_marker(req.prompt) + 1;
        constexpr size_t n_s = sizeof(kStrengthPhrases) / sizeof(kStrengthPhrases[0]);
        constexpr size_t n_w = sizeof(kWeaknessPhrases) / sizeof(kWeaknessPhrases[0]);
        out << "Strength: " << kStrengthPhrases[mix(h0, 11) % n_s] << " (s"
            << hex64(mix(h0, 12)).substr(12) << ") [g" << depth << "]\n"
            << "Weakness: " << kWeaknessPhrases[mix(h0, 13) % n_w] << " (w"
            << hex64(mix(h0, 14)).substr(12) << ") [g" << depth << "]\n";
    } else {
        out << "```\n" << scores_lines(h0) << "```\n";
    }
    return CompletionResponse{out.str(), model_name_, 0, false};
}

// ---- replay provider -----------------------------------------------------------

ReplayProvider::ReplayProvider(const std::string& transcript_path, std::string model_name)
    : entries_(load_transcript(transcript_path)), model_name_(std::move(model_name)) {}

CompletionResponse ReplayProvider::complete(const CompletionRequest& req) {
    validate_request(req);
    auto it = entries_.find(req.request_tag);
    if (it == entries_.end()) throw ReplayMissError(req.request_tag);
    std::string want = hex64(fnv1a64(req.prompt));
    if (it->second.prompt_hash != want)
        throw Error("transcript entry " + req.request_tag +
                    " was recorded for a different prompt (recorded hash " +
                    it->second.prompt_hash + ", current " + want + ")");
    return CompletionResponse{it->second.response_text, model_name_, 0, false};
}

// ---- http chat provider ----------------------------------------------------------

namespace {

// Splits a URL into the scheme://host[:port] base and the request path.
void split_endpoint(const std::string& url, std::string* base, std::string* path) {
    size_t scheme = url.find("://");
    size_t slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) {
        *base = url;
        *path = "/v1/chat/completions";
    } else {
        *base = url.substr(0, slash);
        *path = url.substr(slash);
        if (*path == "/") *path = "/v1/chat/completions";
    }
}

std::string body_snippet(const std::string& body) {
    std::string s = trim(body);
    if (s.size() > 200) s = s.substr(0, 200) + "...";
    return s;
}

}  // namespace

HttpChatProvider::HttpChatProvider(const ProviderConfig& config, std::shared_ptr<Clock> clock,
                                   std::shared_ptr<RateLimiter> limiter, Transport transport)
    : endpoint_(config.endpoint),
      model_name_(config.model_name),
      timeout_seconds_(config.timeout_seconds),
      max_retries_(config.max_retries),
      clock_(clock ? std::move(clock) : system_clock()),
      limiter_(std::move(limiter)),
      transport_(std::move(transport)),
      rng_(config.seed ^ 0x5851f42d4c957f2dULL) {
    config.validate();
    if (!config.auth_token_env.empty()) {
        const char* token = std::getenv(config.auth_token_env.c_str());
        if (!token || !*token)
            throw AuthError("environment variable " + config.auth_token_env +
                            " is not set (expected bearer token)");
        auth_token_ = token;
    }
}

std::string HttpChatProvider::build_request_body(const CompletionRequest& req) const {
    json body = {{"model", model_name_},
                 {"messages", json::array({{{"role", "user"}, {"content", req.prompt}}})},
                 {"temperature", req.temperature},
                 {"max_tokens", req.max_output_tokens}};
    return body.dump();
}

std::string HttpChatProvider::extract_reply_text(const std::string& response_body) {
    try {
        json j = json::parse(response_body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw TransportError(200, std::string("malformed completion response: ") + e.what() +
                                      " in: " + body_snippet(response_body));
    }
}

HttpResult HttpChatProvider::perform(const std::string& body) {
    if (transport_) return transport_(body);

    std::string base, path;
    split_endpoint(endpoint_, &base, &path);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (base.rfind("https://", 0) == 0)
        throw TransportError(0, "https endpoint needs a build with TLS support: " + endpoint_);
#endif
    httplib::Client client(base);
    auto secs = static_cast<time_t>(timeout_seconds_);
    auto usecs = static_cast<time_t>((timeout_seconds_ - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    if (!auth_token_.empty()) headers.emplace("Authorization", "Bearer " + auth_token_);
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) return HttpResult{0, httplib::to_string(res.error())};
    return HttpResult{res->status, res->body};
}

int64_t HttpChatProvider::backoff_delay_ms(int attempt) {
    int64_t base = attempt >= 15 ? 30000 : std::min<int64_t>(30000, 1000LL << attempt);
    double jitter;
    {
        std::lock_guard<std::mutex> lock(rng_mu_);
        jitter = std::uniform_real_distribution<double>(0.5, 1.0)(rng_);
    }
    return static_cast<int64_t>(static_cast<double>(base) * jitter);
}

CompletionResponse HttpChatProvider::complete(const CompletionRequest& req) {
    validate_request(req);
    std::string body = build_request_body(req);
    int attempt = 0;
    for (;;) {
        if (limiter_) limiter_->acquire();
        int64_t t0 = clock_->now_ms();
        HttpResult res = perform(body);
        if (res.status == 200) {
            CompletionResponse out;
            out.text = extract_reply_text(res.body);
            out.provider_model = model_name_;
            out.latency_ms = clock_->now_ms() - t0;
            return out;
        }
        if (res.status == 401 || res.status == 403)
            throw AuthError("authentication rejected (HTTP " + std::to_string(res.status) +
                            ") for request " + req.request_tag);
        bool retryable = res.status == 0 || res.status == 408 || res.status == 429 ||
                         res.status >= 500;
        if (!retryable)
            throw TransportError(res.status, "request " + req.request_tag + " failed (HTTP " +
                                                 std::to_string(res.status) +
                                                 "): " + body_snippet(res.body));
        if (attempt >= max_retries_)
            throw TransportError(res.status,
                                 "request " + req.request_tag + " failed after " +
                                     std::to_string(attempt + 1) + " attempts (last status " +
                                     std::to_string(res.status) + "): " + body_snippet(res.body));
        clock_->sleep_ms(backoff_delay_ms(attempt));
        ++attempt;
    }
}

// ---- decorators ---------------------------------------------------------------

std::string cache_key(const std::string& prompt, double temperature,
                      const std::string& model_name) {
    uint64_t h = fnv1a64(prompt);
    h = mix(h, fnv1a64(format_double(temperature, 6)));
    h = mix(h, fnv1a64(model_name));
    return hex64(h);
}

namespace {

class CachingProvider : public CompletionProvider {
public:
    CachingProvider(std::shared_ptr<CompletionProvider> inner, std::string dir)
        : inner_(std::move(inner)), dir_(std::move(dir)) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw IoError("cannot create cache directory " + dir_ + ": " + ec.message());
    }

    CompletionResponse complete(const CompletionRequest& req) override {
        fs::path entry = fs::path(dir_) / (cache_key(req.prompt, req.temperature,
                                                     inner_->model_name()) +
                                           ".txt");
        {
            std::lock_guard<std::mutex> lock(mu_);
            if (fs::exists(entry))
                return CompletionResponse{read_text_file(entry.string()), inner_->model_name(),
                                          0, true};
        }
        CompletionResponse resp = inner_->complete(req);
        std::lock_guard<std::mutex> lock(mu_);
        if (fs::exists(entry)) {
            // Another thread filled the slot first; serve what was stored so
            // a fixed key always yields one byte-identical text.
            resp.text = read_text_file(entry.string());
            resp.from_cache = true;
            return resp;
        }
        fs::path tmp = entry;
        tmp += ".tmp";
        write_text_file(tmp.string(), resp.text);
        std::error_code ec;
        fs::rename(tmp, entry, ec);
        if (ec) throw IoError("cannot store cache entry " + entry.string() + ": " + ec.message());
        return resp;
    }

    const std::string& model_name() const override { return inner_->model_name(); }

private:
    std::shared_ptr<CompletionProvider> inner_;
    std::string dir_;
    std::mutex mu_;
};

class RecordingProvider : public CompletionProvider {
public:
    RecordingProvider(std::shared_ptr<CompletionProvider> inner,
                      std::shared_ptr<TranscriptWriter> writer)
        : inner_(std::move(inner)), writer_(std::move(writer)) {}

    CompletionResponse complete(const CompletionRequest& req) override {
        CompletionResponse resp = inner_->complete(req);
        writer_->record(TranscriptEntry{req.request_tag, hex64(fnv1a64(req.prompt)),
                                        req.temperature, resp.text});
        return resp;
    }

    const std::string& model_name() const override { return inner_->model_name(); }

private:
    std::shared_ptr<CompletionProvider> inner_;
    std::shared_ptr<TranscriptWriter> writer_;
};

}  // namespace

std::shared_ptr<CompletionProvider> with_cache(std::shared_ptr<CompletionProvider> inner,
                                               const std::string& cache_dir) {
    return std::make_shared<CachingProvider>(std::move(inner), cache_dir);
}

std::shared_ptr<CompletionProvider> with_recording(std::shared_ptr<CompletionProvider> inner,
                                                   std::shared_ptr<TranscriptWriter> writer) {
    return std::make_shared<RecordingProvider>(std::move(inner), std::move(writer));
}

// ---- factory -------------------------------------------------------------------

ProviderFactory::ProviderFactory(std::shared_ptr<Clock> clock)
    : clock_(clock ? std::move(clock) : system_clock()) {}

std::shared_ptr<CompletionProvider> ProviderFactory::get(const ProviderConfig& config) {
    config.validate();
    std::string sig = config.signature();
    std::lock_guard<std::mutex> lock(mu_);
    auto it = shared_.find(sig);
    if (it != shared_.end()) return it->second;

    std::shared_ptr<CompletionProvider> provider;
    switch (config.kind) {
        case ProviderKind::mock:
            provider = std::make_shared<MockProvider>(config.seed, config.model_name);
            break;
        case ProviderKind::replay:
            provider = std::make_shared<ReplayProvider>(config.transcript_path,
                                                        config.model_name);
            break;
        case ProviderKind::http_chat: {
            std::shared_ptr<RateLimiter> limiter;
            if (config.requests_per_minute)
                limiter = std::make_shared<RateLimiter>(*config.requests_per_minute, clock_);
            provider = std::make_shared<HttpChatProvider>(config, clock_, limiter);
            if (!config.cache_dir.empty()) provider = with_cache(provider, config.cache_dir);
            break;
        }
    }
    shared_[sig] = provider;
    return provider;
}

}  // namespace qqeval
