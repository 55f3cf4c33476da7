#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lsrp/errors.hpp"
#include "lsrp/jsonl.hpp"
#include "lsrp/text.hpp"

namespace lsrp {

enum class Role { System, User, Assistant };

inline std::string to_string(Role r) {
    switch (r) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "user";
}

struct ChatMessage {
    Role role = Role::User;
    std::string text;
};

struct SamplingConfig {
    double temperature = 0.0;
    double top_p = 0.9;
    int max_new_tokens = 1024;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    SamplingConfig sampling;
    std::string model_id;

    static ChatRequest single_user(std::string text, SamplingConfig sampling = {},
                                   std::string model_id = {}) {
        ChatRequest req;
        req.messages.push_back({Role::User, std::move(text)});
        req.sampling = sampling;
        req.model_id = std::move(model_id);
        return req;
    }

    // All message texts, newline-joined. Used by the mock for script matching.
    std::string joined_text() const {
        std::string out;
        for (const auto& m : messages) {
            if (!out.empty()) out += '\n';
            out += m.text;
        }
        return out;
    }

    void validate() const {
        if (messages.empty()) throw BackendError("chat request has no messages");
        if (messages.front().role == Role::Assistant)
            throw BackendError("chat request must start with a system or user message");
    }
};

struct TokenLogprobs {
    std::vector<std::string> tokens;
    std::vector<double> logprobs; // natural log, each <= 0

    void validate() const {
        if (tokens.size() != logprobs.size())
            throw Error("token/logprob length mismatch");
        for (double lp : logprobs) {
            if (!(lp <= 0.0) || !std::isfinite(lp))
                throw Error("logprob must be a finite value <= 0");
        }
    }
};

struct EmbeddingVector {
    std::vector<float> values;

    std::size_t dim() const { return values.size(); }
};

inline double euclidean_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) throw Error("embedding dimension mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        double d = static_cast<double>(a.values[i]) - static_cast<double>(b.values[i]);
        acc += d * d;
    }
    return std::sqrt(acc);
}

// ---------------------------------------------------------------------------
// Backend interfaces

class ChatBackend {
  public:
    virtual ~ChatBackend() = default;
    virtual std::string chat(const ChatRequest& request) = 0;
};

class LogprobBackend {
  public:
    virtual ~LogprobBackend() = default;
    // Log-probabilities of exactly the continuation tokens, conditioned on context.
    virtual TokenLogprobs score_logprobs(const std::string& context,
                                         const std::string& continuation,
                                         const std::string& model_id) = 0;
};

class Embedder {
  public:
    virtual ~Embedder() = default;
    virtual EmbeddingVector embed(const std::string& input) = 0;
    virtual std::size_t dim() const = 0;
    // Stable identity recorded in index manifests so a query-side embedder
    // mismatch is detectable.
    virtual std::string id() const = 0;
};

// ---------------------------------------------------------------------------
// Scripted mock chat backend.
//
// Scripts are {key, response} records; a request matches a script when the
// key occurs as a substring of the request's match text — a
// "temperature=<t>" line followed by the joined message text, so scripts can
// also key on the sampling temperature. The longest matching key wins (ties
// broken lexicographically), so matching never depends on script order.
// Without a match, a fallback reply is synthesized as a pure function of
// (seed, match text): identical requests always produce identical text.
class MockChatBackend : public ChatBackend {
  public:
    explicit MockChatBackend(std::uint64_t seed = 0, bool allow_fallback = true)
        : seed_(seed), allow_fallback_(allow_fallback) {}

    void script(std::string key, std::string response) {
        std::lock_guard lock(mutex_);
        scripts_[std::move(key)] = std::move(response);
    }

    void load_scripts(const std::filesystem::path& path) {
        for (const auto& rec : jsonl::read_file(path)) {
            if (!rec.contains("key") || !rec.contains("response"))
                throw IoError("mock script record needs {key, response}: " + path.string());
            script(rec.at("key").get<std::string>(), rec.at("response").get<std::string>());
        }
    }

    static std::string match_text(const ChatRequest& request) {
        std::ostringstream head;
        head << "temperature=" << request.sampling.temperature << '\n';
        return head.str() + request.joined_text();
    }

    std::string chat(const ChatRequest& request) override {
        request.validate();
        const std::string haystack = match_text(request);
        std::optional<std::string> reply;
        {
            std::lock_guard lock(mutex_);
            ++calls_;
            const std::string* best = nullptr;
            std::size_t best_len = 0;
            for (const auto& [key, response] : scripts_) {
                if (key.size() >= best_len && haystack.find(key) != std::string::npos) {
                    // map iteration is ordered, so equal lengths resolve to the
                    // lexicographically smallest key
                    if (key.size() > best_len) {
                        best = &response;
                        best_len = key.size();
                    }
                }
            }
            if (best) reply = *best;
        }
        if (!reply) {
            if (!allow_fallback_)
                throw BackendError("no mock script matches request");
            reply = synthesize(haystack);
        }
        if (reply->empty()) throw BackendError("backend returned an empty completion");
        return *reply;
    }

    std::size_t call_count() const {
        std::lock_guard lock(mutex_);
        return calls_;
    }

  private:
    // Deterministic stand-in reply: echo a hash-selected subset of the request
    // words so downstream metrics see content-dependent text.
    std::string synthesize(const std::string& haystack) const {
        auto words = text::whitespace_tokens(haystack);
        std::uint64_t h = text::fnv1a(haystack, seed_);
        std::vector<std::string> picked;
        if (!words.empty()) {
            std::size_t stride = 1 + static_cast<std::size_t>(h % 7);
            for (std::size_t i = h % words.size(); picked.size() < 24 && i < words.size();
                 i += stride)
                picked.push_back(words[i]);
        }
        if (picked.empty()) picked.push_back("ack");
        return "reply " + std::to_string(h % 1000) + ": " + text::join(picked, " ");
    }

    std::uint64_t seed_;
    bool allow_fallback_;
    mutable std::mutex mutex_;
    std::map<std::string, std::string> scripts_;
    std::size_t calls_ = 0;
};

// ---------------------------------------------------------------------------
// Mock logprob backend: whitespace word tokens. Continuations with an exact
// scripted entry return those per-token values; everything else scores under
// a uniform distribution over `vocab_size` outcomes.
class MockLogprobBackend : public LogprobBackend {
  public:
    explicit MockLogprobBackend(std::size_t vocab_size = 64) : vocab_size_(vocab_size) {
        if (vocab_size_ < 1) throw ConfigError("vocab size must be >= 1");
    }

    void script(std::string continuation, std::vector<double> per_token) {
        scripts_[std::move(continuation)] = std::move(per_token);
    }

    TokenLogprobs score_logprobs(const std::string& /*context*/,
                                 const std::string& continuation,
                                 const std::string& /*model_id*/) override {
        auto tokens = text::whitespace_tokens(continuation);
        if (tokens.empty()) throw BackendError("continuation is empty");
        TokenLogprobs out;
        out.tokens = std::move(tokens);
        if (auto it = scripts_.find(continuation); it != scripts_.end()) {
            if (it->second.size() != out.tokens.size())
                throw BackendError("scripted logprobs do not cover the continuation tokens");
            out.logprobs = it->second;
        } else {
            out.logprobs.assign(out.tokens.size(), -std::log(static_cast<double>(vocab_size_)));
        }
        out.validate();
        return out;
    }

  private:
    std::size_t vocab_size_;
    std::map<std::string, std::vector<double>> scripts_;
};

// ---------------------------------------------------------------------------
// Seeded feature-hashing embedder: lowercased word tokens hashed into `dim`
// signed buckets, L2-normalized. Deterministic, no model weights.
class HashingEmbedder : public Embedder {
  public:
    explicit HashingEmbedder(std::size_t dim, std::uint64_t seed = 0)
        : dim_(dim), seed_(seed) {
        if (dim_ == 0) throw ConfigError("embedder dim must be positive");
    }

    EmbeddingVector embed(const std::string& input) override {
        if (input.empty()) throw BackendError("cannot embed empty text");
        std::vector<float> v(dim_, 0.0f);
        for (const auto& tok : text::alnum_tokens(input)) {
            std::uint64_t h = text::fnv1a(tok, seed_);
            std::size_t bucket = static_cast<std::size_t>((h >> 1) % dim_);
            float sign = (h & 1u) ? 1.0f : -1.0f;
            v[bucket] += sign;
        }
        double norm = 0.0;
        for (float x : v) norm += static_cast<double>(x) * x;
        if (norm > 0.0) {
            float inv = static_cast<float>(1.0 / std::sqrt(norm));
            for (float& x : v) x *= inv;
        }
        return {std::move(v)};
    }

    std::size_t dim() const override { return dim_; }

    std::string id() const override {
        return "hashing:dim=" + std::to_string(dim_) + ":seed=" + std::to_string(seed_);
    }

  private:
    std::size_t dim_;
    std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Pluggable source of the token logprobs that feed perplexity.

class LogprobSource {
  public:
    virtual ~LogprobSource() = default;
    virtual TokenLogprobs response_logprobs(const std::string& response) = 0;
};

class BackendLogprobSource : public LogprobSource {
  public:
    BackendLogprobSource(LogprobBackend& backend, std::string model_id, std::string context = {})
        : backend_(backend), model_id_(std::move(model_id)), context_(std::move(context)) {}

    TokenLogprobs response_logprobs(const std::string& response) override {
        return backend_.score_logprobs(context_, response, model_id_);
    }

  private:
    LogprobBackend& backend_;
    std::string model_id_;
    std::string context_;
};

} // namespace lsrp
