#pragma once

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "lsrp/errors.hpp"
#include "lsrp/model_gateway.hpp"

namespace lsrp {

struct HttpEndpoint {
    std::string base_url;       // e.g. http://localhost:8000
    std::string api_key;        // sent as Bearer token when non-empty
    std::string api_key_env;    // environment variable consulted when api_key is empty
    int timeout_seconds = 120;
    int max_retries = 2;        // retries after the first attempt
    int retry_base_ms = 250;    // doubled per retry

    std::string resolved_key() const {
        if (!api_key.empty()) return api_key;
        if (!api_key_env.empty()) {
            if (const char* v = std::getenv(api_key_env.c_str())) return v;
        }
        return {};
    }
};

namespace detail {

// POSTs JSON, retrying transport failures and 5xx responses with exponential
// backoff. 4xx responses are not retried.
inline nlohmann::json post_json(const HttpEndpoint& ep, const std::string& path,
                                const nlohmann::json& body) {
    httplib::Client client(ep.base_url);
    client.set_connection_timeout(ep.timeout_seconds);
    client.set_read_timeout(ep.timeout_seconds);
    httplib::Headers headers;
    if (auto key = ep.resolved_key(); !key.empty())
        headers.emplace("Authorization", "Bearer " + key);

    std::string last_error;
    for (int attempt = 0; attempt <= ep.max_retries; ++attempt) {
        if (attempt > 0) {
            auto delay = std::chrono::milliseconds(ep.retry_base_ms << (attempt - 1));
            if (delay.count() > 0) std::this_thread::sleep_for(delay);
        }
        auto res = client.Post(path, headers, body.dump(), "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "server error " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw BackendError("HTTP " + std::to_string(res->status) + " from " + ep.base_url +
                               path + ": " + res->body);
        auto parsed = nlohmann::json::parse(res->body, nullptr, false);
        if (parsed.is_discarded())
            throw BackendError("invalid JSON from " + ep.base_url + path);
        return parsed;
    }
    throw BackendError(ep.base_url + path + ": " + last_error + " after " +
                       std::to_string(ep.max_retries + 1) + " attempts");
}

} // namespace detail

// OpenAI-compatible /v1/chat/completions client.
class HttpChatBackend : public ChatBackend {
  public:
    explicit HttpChatBackend(HttpEndpoint endpoint, std::string default_model = {})
        : endpoint_(std::move(endpoint)), default_model_(std::move(default_model)) {}

    std::string chat(const ChatRequest& request) override {
        request.validate();
        nlohmann::json body;
        body["model"] = request.model_id.empty() ? default_model_ : request.model_id;
        body["messages"] = nlohmann::json::array();
        for (const auto& m : request.messages)
            body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.text}});
        body["temperature"] = request.sampling.temperature;
        body["top_p"] = request.sampling.top_p;
        body["max_tokens"] = request.sampling.max_new_tokens;

        auto reply = detail::post_json(endpoint_, "/v1/chat/completions", body);
        if (!reply.contains("choices") || reply["choices"].empty())
            throw BackendError("chat completion reply has no choices");
        auto content = reply["choices"][0].value("message", nlohmann::json::object())
                           .value("content", std::string{});
        if (content.empty()) throw BackendError("backend returned an empty completion");
        return content;
    }

  private:
    HttpEndpoint endpoint_;
    std::string default_model_;
};

// The chat-completions wire protocol exposes no scored continuations, so HTTP
// deployments compute perplexity from the bigram source or a logprob-capable
// backend instead.
class HttpLogprobBackend : public LogprobBackend {
  public:
    TokenLogprobs score_logprobs(const std::string&, const std::string&,
                                 const std::string&) override {
        throw CapabilityError(
            "chat-completions backends expose no token log-probabilities; "
            "configure a bigram or mock logprob source");
    }
};

// OpenAI-compatible /v1/embeddings client. `dim` is a configuration value and
// replies are validated against it.
class HttpEmbedder : public Embedder {
  public:
    HttpEmbedder(HttpEndpoint endpoint, std::string model, std::size_t dim)
        : endpoint_(std::move(endpoint)), model_(std::move(model)), dim_(dim) {
        if (dim_ == 0) throw ConfigError("embedder dim must be positive");
    }

    EmbeddingVector embed(const std::string& input) override {
        if (input.empty()) throw BackendError("cannot embed empty text");
        nlohmann::json body{{"model", model_}, {"input", input}};
        auto reply = detail::post_json(endpoint_, "/v1/embeddings", body);
        if (!reply.contains("data") || reply["data"].empty())
            throw BackendError("embeddings reply has no data");
        auto vec = reply["data"][0].value("embedding", std::vector<float>{});
        if (vec.size() != dim_)
            throw BackendError("embedding dimension mismatch: got " + std::to_string(vec.size()) +
                               ", configured " + std::to_string(dim_));
        return {std::move(vec)};
    }

    std::size_t dim() const override { return dim_; }

    std::string id() const override { return "http:" + model_ + ":dim=" + std::to_string(dim_); }

  private:
    HttpEndpoint endpoint_;
    std::string model_;
    std::size_t dim_;
};

} // namespace lsrp
