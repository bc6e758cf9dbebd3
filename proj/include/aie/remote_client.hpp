#pragma once

#include <string>
#include <vector>

#include "aie/agents.hpp"
#include "aie/distance.hpp"

namespace aie {

struct RemoteChatConfig {
    std::string base_url;  // scheme://host[:port][/path-prefix]
    std::string model;
    std::string api_key_env;
    int timeout_ms = 30000;
    int max_retries = 3;       // retries after the first attempt
    int retry_backoff_ms = 250;  // doubles per retry, no jitter

    void validate() const;
};

struct RemoteEmbedderConfig {
    std::string base_url;
    std::string model;
    std::string api_key_env;
    int timeout_ms = 30000;
    int max_retries = 3;
    int retry_backoff_ms = 250;

    void validate() const;
};

// One chat completion over HTTP. Sends the full history every call; retries
// transport errors and 429/5xx with exponential backoff.
std::string remote_respond(const RemoteChatConfig& config,
                           const std::vector<ChatMessage>& history,
                           const GenerationParams& params);

// AgentBackend adapter; protocol hooks are inherited no-ops since a remote
// model sees every event purely as history text.
class RemoteChatBackend final : public AgentBackend {
public:
    explicit RemoteChatBackend(RemoteChatConfig config);

    std::string respond(const std::vector<ChatMessage>& history,
                        const GenerationParams& params) override;

    const RemoteChatConfig& config() const { return config_; }

private:
    RemoteChatConfig config_;
};

// Embedder backed by an HTTP embeddings endpoint; same auth/retry policy.
Embedder make_remote_embedder(const RemoteEmbedderConfig& config);

}  // namespace aie
