// SPDX-License-Identifier: Apache-2.0
#include "urba/http_backends.hpp"

#include "urba/error.hpp"

#include <fmt/format.h>
#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

namespace urba {

std::string to_string(BackendRole role) {
    switch (role) {
    case BackendRole::chat: return "chat";
    case BackendRole::caption: return "caption";
    case BackendRole::vlm: return "vlm";
    case BackendRole::ground: return "ground";
    case BackendRole::embed: return "embed";
    }
    return "chat";
}

void Endpoint::validate() const {
    if (url.rfind("http://", 0) != 0 && url.rfind("https://", 0) != 0) {
        throw Error(ErrorCode::invalid_argument, fmt::format("{} endpoint url '{}' is not http(s)", to_string(role), url));
    }
    if (retries < 0 || timeout_ms < 1 || backoff_ms < 0) {
        throw Error(ErrorCode::invalid_argument, fmt::format("{} endpoint has a negative retry policy", to_string(role)));
    }
}

const Endpoint* EndpointConfig::find(BackendRole role) const noexcept {
    auto it = endpoints.find(role);
    return it == endpoints.end() ? nullptr : &it->second;
}

EndpointConfig parse_endpoint_config(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(ErrorCode::schema_violation, "endpoint config must be a JSON object");
    EndpointConfig config;
    for (const auto& [key, value] : j.items()) {
        std::optional<BackendRole> role;
        for (auto r : {BackendRole::chat, BackendRole::caption, BackendRole::vlm, BackendRole::ground,
                       BackendRole::embed}) {
            if (to_string(r) == key) role = r;
        }
        if (!role) throw Error(ErrorCode::schema_violation, fmt::format("unknown backend role '{}'", key));
        try {
            Endpoint e;
            e.role = *role;
            e.url = value.at("url").get<std::string>();
            e.timeout_ms = value.value("timeout_ms", e.timeout_ms);
            e.retries = value.value("retries", e.retries);
            e.backoff_ms = value.value("backoff_ms", e.backoff_ms);
            e.max_payload = value.value("max_payload", e.max_payload);
            e.model_id = value.value("model", std::string());
            e.validate();
            config.endpoints[*role] = std::move(e);
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorCode::schema_violation, fmt::format("bad '{}' endpoint: {}", key, ex.what()));
        }
    }
    return config;
}

EndpointConfig load_endpoint_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, fmt::format("cannot open backend config {}", path.string()));
    try {
        return parse_endpoint_config(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::schema_violation, fmt::format("{}: {}", path.string(), e.what()));
    }
}

std::optional<std::filesystem::path> endpoint_config_from_env() {
    const char* value = std::getenv("UR_BACKENDS");
    if (value == nullptr || *value == '\0') return std::nullopt;
    return std::filesystem::path(value);
}

HttpClient::HttpClient(Endpoint endpoint) : endpoint_(std::move(endpoint)) {
    endpoint_.validate();
    const auto scheme_end = endpoint_.url.find("://") + 3;
    const auto path_start = endpoint_.url.find('/', scheme_end);
    origin_ = endpoint_.url.substr(0, path_start);
    if (path_start != std::string::npos) {
        prefix_ = endpoint_.url.substr(path_start);
        while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }
}

std::string HttpClient::post(const std::string& route, const std::string& body) const {
    if (body.size() > endpoint_.max_payload) {
        throw Error(ErrorCode::payload_too_large,
                    fmt::format("{} request of {} bytes exceeds the {} byte cap", to_string(endpoint_.role),
                                body.size(), endpoint_.max_payload));
    }
    httplib::Client client(origin_);
    const auto timeout = std::chrono::milliseconds(endpoint_.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    std::string last_failure;
    auto backoff = std::chrono::milliseconds(endpoint_.backoff_ms);
    for (int attempt = 0; attempt <= endpoint_.retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
        auto res = client.Post(prefix_ + route, body, "application/json");
        if (!res) {
            last_failure = httplib::to_string(res.error());
            continue;
        }
        if (res->status == 200) return res->body;
        if (res->status == 502 || res->status == 503 || res->status == 504) {
            last_failure = fmt::format("HTTP {}", res->status);
            continue;
        }
        ErrorCode code = res->status == 413 ? ErrorCode::payload_too_large : ErrorCode::backend_unavailable;
        std::string message = fmt::format("HTTP {}", res->status);
        try {
            const auto err = wire::decode_error_response(res->body);
            if (auto parsed = parse_error_code(err.code)) code = *parsed;
            message = fmt::format("{}: {}", err.code, err.message);
        } catch (const Error&) {
        }
        throw Error(code, fmt::format("{} {} failed: {}", to_string(endpoint_.role), route, message));
    }
    throw Error(ErrorCode::backend_unavailable,
                fmt::format("{} backend at {} unreachable after {} attempts ({})", to_string(endpoint_.role),
                            endpoint_.url, endpoint_.retries + 1, last_failure));
}

namespace {

template <typename Decode>
auto decode_reply(const std::string& body, Decode decode) {
    try {
        return decode(body);
    } catch (const Error& e) {
        throw Error(ErrorCode::backend_unavailable, fmt::format("malformed backend reply: {}", e.what()));
    }
}

} // namespace

std::string HttpChat::chat(std::span<const Message> messages) {
    if (messages.empty()) throw Error(ErrorCode::invalid_argument, "chat needs at least one message");
    wire::ChatRequest req{{messages.begin(), messages.end()}};
    return decode_reply(client_.post("/v1/chat", wire::encode(req)), wire::decode_text_response).text;
}

std::string HttpCaptioner::caption(const PixelWindow& image) {
    wire::CaptionRequest req{wire::encode_image(image)};
    return decode_reply(client_.post("/v1/caption", wire::encode(req)), wire::decode_text_response).text;
}

std::string HttpVlm::answer(const PixelWindow& image, std::string_view prompt) {
    wire::VlmRequest req{wire::encode_image(image), std::string(prompt)};
    return decode_reply(client_.post("/v1/vlm", wire::encode(req)), wire::decode_text_response).text;
}

std::vector<GroundingBox> HttpGrounder::ground(const PixelWindow& image, std::string_view keyword) {
    if (keyword.empty()) throw Error(ErrorCode::invalid_argument, "empty grounding keyword");
    wire::GroundRequest req{wire::encode_image(image), std::string(keyword)};
    auto boxes = decode_reply(client_.post("/v1/ground", wire::encode(req)), wire::decode_ground_response).boxes;
    for (const auto& b : boxes) {
        if (b.score < 0.0 || b.score > 1.0 || b.bbox.x0 < 0 || b.bbox.y0 < 0 || b.bbox.x1 > image.width() ||
            b.bbox.y1 > image.height() || b.bbox.x1 <= b.bbox.x0 || b.bbox.y1 <= b.bbox.y0) {
            throw Error(ErrorCode::backend_unavailable, fmt::format("grounder returned invalid box {} score {}",
                                                                    b.bbox.to_string(), b.score));
        }
    }
    return boxes;
}

std::vector<Embedding> HttpEmbedder::embed(std::span<const std::string> texts) {
    if (texts.empty()) throw Error(ErrorCode::invalid_argument, "embed needs at least one text");
    wire::EmbedRequest req{{texts.begin(), texts.end()}};
    const auto res = decode_reply(client_.post("/v1/embed", wire::encode(req)), wire::decode_embed_response);
    if (res.vectors.size() != texts.size()) {
        throw Error(ErrorCode::embed_inconsistent,
                    fmt::format("embedder returned {} vectors for {} texts", res.vectors.size(), texts.size()));
    }
    std::vector<Embedding> out;
    out.reserve(res.vectors.size());
    for (const auto& v : res.vectors) {
        if (v.size() != res.dim) {
            throw Error(ErrorCode::embed_inconsistent, fmt::format("vector of dim {} in a dim {} reply", v.size(), res.dim));
        }
        out.push_back(Embedding{v});
    }
    return out;
}

std::string HttpEmbedder::id() const {
    const auto& e = client_.endpoint();
    return e.model_id.empty() ? e.url : e.model_id;
}

Backends make_http_backends(const EndpointConfig& config) {
    Backends b;
    if (const auto* e = config.find(BackendRole::vlm)) b.vlm = std::make_shared<HttpVlm>(*e);
    if (const auto* e = config.find(BackendRole::caption)) {
        b.caption = std::make_shared<HttpCaptioner>(*e);
    } else if (b.vlm) {
        b.caption = std::make_shared<VlmCaptioner>(b.vlm);
    }
    if (const auto* e = config.find(BackendRole::ground)) b.ground = std::make_shared<HttpGrounder>(*e);
    if (const auto* e = config.find(BackendRole::embed)) b.embed = std::make_shared<HttpEmbedder>(*e);
    return b;
}

std::unique_ptr<ChatBackend> make_http_chat(const EndpointConfig& config) {
    const auto* e = config.find(BackendRole::chat);
    if (e == nullptr) throw Error(ErrorCode::invalid_argument, "no chat endpoint configured");
    return std::make_unique<HttpChat>(*e);
}

} // namespace urba
