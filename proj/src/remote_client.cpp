#include "aie/remote_client.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "aie/errors.hpp"

namespace aie {

namespace {

constexpr std::size_t kBodyExcerptBytes = 512;

struct SplitUrl {
    std::string origin;       // scheme://host[:port]
    std::string path_prefix;  // "" or "/v1" style, no trailing slash
};

SplitUrl split_url(const std::string& base_url, const std::string& field) {
    std::size_t scheme = base_url.find("://");
    if (scheme == std::string::npos)
        throw ValidationError(field, "must start with http:// or https://");
    std::size_t slash = base_url.find('/', scheme + 3);
    SplitUrl out;
    if (slash == std::string::npos) {
        out.origin = base_url;
    } else {
        out.origin = base_url.substr(0, slash);
        out.path_prefix = base_url.substr(slash);
        while (!out.path_prefix.empty() && out.path_prefix.back() == '/')
            out.path_prefix.pop_back();
    }
    if (out.origin.size() <= scheme + 3)
        throw ValidationError(field, "must name a host");
    return out;
}

std::string require_api_key(const std::string& env_name) {
    if (env_name.empty())
        throw ValidationError("api_key_env", "must name an environment variable");
    const char* value = std::getenv(env_name.c_str());
    if (value == nullptr || *value == '\0')
        throw MissingApiKey("environment variable " + env_name + " is not set");
    return value;
}

bool retryable_status(int status) { return status == 429 || (status >= 500 && status < 600); }

std::string excerpt(const std::string& body) { return body.substr(0, kBodyExcerptBytes); }

std::string strip(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// POST json to origin+path, honoring the shared retry policy. Returns the
// response body on 2xx; throws Transport/HttpStatus otherwise.
std::string post_with_retries(const SplitUrl& url, const std::string& path,
                              const std::string& api_key, const std::string& body,
                              int timeout_ms, int max_retries, int backoff_ms) {
    httplib::Client client(url.origin);
    client.set_connection_timeout(std::chrono::milliseconds(timeout_ms));
    client.set_read_timeout(std::chrono::milliseconds(timeout_ms));
    client.set_write_timeout(std::chrono::milliseconds(timeout_ms));
    httplib::Headers headers{{"Authorization", "Bearer " + api_key}};

    const std::string full_path = url.path_prefix + path;
    int delay_ms = backoff_ms;
    httplib::Result res{nullptr, httplib::Error::Unknown};
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
            delay_ms *= 2;
        }
        res = client.Post(full_path, headers, body, "application/json");
        if (res && !retryable_status(res->status)) break;
    }
    if (!res) throw Transport(httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300) throw HttpStatus(res->status, excerpt(res->body));
    return res->body;
}

}  // namespace

void RemoteChatConfig::validate() const {
    split_url(base_url, "base_url");
    if (model.empty()) throw ValidationError("model", "must be non-empty");
    if (api_key_env.empty()) throw ValidationError("api_key_env", "must be non-empty");
    if (timeout_ms <= 0) throw ValidationError("timeout_ms", "must be positive");
    if (max_retries < 0) throw ValidationError("max_retries", "must be non-negative");
    if (retry_backoff_ms < 0) throw ValidationError("retry_backoff_ms", "must be non-negative");
}

void RemoteEmbedderConfig::validate() const {
    split_url(base_url, "base_url");
    if (model.empty()) throw ValidationError("model", "must be non-empty");
    if (api_key_env.empty()) throw ValidationError("api_key_env", "must be non-empty");
    if (timeout_ms <= 0) throw ValidationError("timeout_ms", "must be positive");
    if (max_retries < 0) throw ValidationError("max_retries", "must be non-negative");
    if (retry_backoff_ms < 0) throw ValidationError("retry_backoff_ms", "must be non-negative");
}

std::string remote_respond(const RemoteChatConfig& config,
                           const std::vector<ChatMessage>& history,
                           const GenerationParams& params) {
    config.validate();
    const std::string api_key = require_api_key(config.api_key_env);  // before any I/O
    SplitUrl url = split_url(config.base_url, "base_url");

    nlohmann::ordered_json body;
    body["model"] = config.model;
    auto& messages = body["messages"];
    messages = nlohmann::ordered_json::array();
    for (const ChatMessage& m : history)
        messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    body["temperature"] = params.temperature;
    if (params.seed) body["seed"] = *params.seed;
    body["max_tokens"] = params.max_output_tokens;

    std::string response =
        post_with_retries(url, "/chat/completions", api_key, body.dump(), config.timeout_ms,
                          config.max_retries, config.retry_backoff_ms);

    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(response);
    } catch (const nlohmann::json::exception& e) {
        throw MalformedResponse(std::string("chat response is not JSON: ") + e.what());
    }
    if (!parsed.contains("choices") || !parsed["choices"].is_array() || parsed["choices"].empty())
        throw MalformedResponse("chat response has no choices");
    const auto& first = parsed["choices"][0];
    if (!first.contains("message") || !first["message"].contains("content") ||
        !first["message"]["content"].is_string())
        throw MalformedResponse("chat response missing choices[0].message.content");
    std::string content = strip(first["message"]["content"].get<std::string>());
    if (content.empty()) throw EmptyCompletion("chat response content is empty");
    return content;
}

RemoteChatBackend::RemoteChatBackend(RemoteChatConfig config) : config_(std::move(config)) {
    config_.validate();
    require_api_key(config_.api_key_env);  // fail fast at construction
}

std::string RemoteChatBackend::respond(const std::vector<ChatMessage>& history,
                                       const GenerationParams& params) {
    return remote_respond(config_, history, params);
}

Embedder make_remote_embedder(const RemoteEmbedderConfig& config) {
    config.validate();
    require_api_key(config.api_key_env);
    return [config](const std::string& text) -> EmbeddingVector {
        const std::string api_key = require_api_key(config.api_key_env);
        SplitUrl url = split_url(config.base_url, "base_url");
        nlohmann::ordered_json body;
        body["model"] = config.model;
        body["input"] = text;
        std::string response =
            post_with_retries(url, "/embeddings", api_key, body.dump(), config.timeout_ms,
                              config.max_retries, config.retry_backoff_ms);
        nlohmann::json parsed;
        try {
            parsed = nlohmann::json::parse(response);
        } catch (const nlohmann::json::exception& e) {
            throw MalformedResponse(std::string("embedding response is not JSON: ") + e.what());
        }
        if (!parsed.contains("data") || !parsed["data"].is_array() || parsed["data"].empty() ||
            !parsed["data"][0].contains("embedding") || !parsed["data"][0]["embedding"].is_array())
            throw MalformedResponse("embedding response missing data[0].embedding");
        EmbeddingVector vec;
        for (const auto& v : parsed["data"][0]["embedding"]) {
            if (!v.is_number()) throw MalformedResponse("embedding vector has a non-number");
            vec.values.push_back(v.get<double>());
        }
        if (vec.values.empty()) throw MalformedResponse("embedding vector is empty");
        return vec;
    };
}

}  // namespace aie
