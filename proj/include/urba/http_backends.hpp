// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "urba/backends.hpp"
#include "urba/wire.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

namespace urba {

enum class BackendRole { chat, caption, vlm, ground, embed };

std::string to_string(BackendRole role);

struct Endpoint {
    BackendRole role = BackendRole::chat;
    std::string url;          // "http://host:port" with an optional path prefix
    int timeout_ms = 60000;
    int retries = 2;          // retransmissions after the first attempt
    int backoff_ms = 200;     // doubled after every failed attempt
    std::size_t max_payload = wire::kDefaultMaxPayload;
    std::string model_id;     // reported by the embedder as its identity

    void validate() const;
};

struct EndpointConfig {
    std::map<BackendRole, Endpoint> endpoints;

    const Endpoint* find(BackendRole role) const noexcept;
};

/// {"chat": {"url": ..., "timeout_ms": ..., "retries": ..., "backoff_ms": ...}, ...}
EndpointConfig parse_endpoint_config(const nlohmann::json& j);
EndpointConfig load_endpoint_config(const std::filesystem::path& path);
/// Path named by UR_BACKENDS, if set.
std::optional<std::filesystem::path> endpoint_config_from_env();

/// POSTs JSON with the endpoint's retry policy. Transport failures and
/// 502/503/504 are retried; other non-200 replies become typed errors.
class HttpClient {
public:
    explicit HttpClient(Endpoint endpoint);
    std::string post(const std::string& route, const std::string& body) const;
    const Endpoint& endpoint() const noexcept { return endpoint_; }

private:
    Endpoint endpoint_;
    std::string origin_;
    std::string prefix_;
};

class HttpChat final : public ChatBackend {
public:
    explicit HttpChat(Endpoint endpoint) : client_(std::move(endpoint)) {}
    std::string chat(std::span<const Message> messages) override;

private:
    HttpClient client_;
};

class HttpCaptioner final : public CaptionBackend {
public:
    explicit HttpCaptioner(Endpoint endpoint) : client_(std::move(endpoint)) {}
    std::string caption(const PixelWindow& image) override;

private:
    HttpClient client_;
};

class HttpVlm final : public VlmBackend {
public:
    explicit HttpVlm(Endpoint endpoint) : client_(std::move(endpoint)) {}
    std::string answer(const PixelWindow& image, std::string_view prompt) override;

private:
    HttpClient client_;
};

class HttpGrounder final : public GroundBackend {
public:
    explicit HttpGrounder(Endpoint endpoint) : client_(std::move(endpoint)) {}
    std::vector<GroundingBox> ground(const PixelWindow& image, std::string_view keyword) override;

private:
    HttpClient client_;
};

class HttpEmbedder final : public EmbedBackend {
public:
    explicit HttpEmbedder(Endpoint endpoint) : client_(std::move(endpoint)) {}
    std::vector<Embedding> embed(std::span<const std::string> texts) override;
    std::string id() const override;

private:
    HttpClient client_;
};

/// Clients for every configured perception role. A missing caption role
/// falls back to captioning through the VLM.
Backends make_http_backends(const EndpointConfig& config);
std::unique_ptr<ChatBackend> make_http_chat(const EndpointConfig& config);

} // namespace urba
