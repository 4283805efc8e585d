// SPDX-License-Identifier: Apache-2.0
#include "urba/mock_server.hpp"

#include "urba/error.hpp"

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include <thread>

namespace urba {

struct MockServer::Impl {
    std::shared_ptr<ChatBackend> chat;
    Backends backends;
    MockServerOptions options;
    httplib::Server server;
    std::thread thread;
    int port = 0;

    void reply_error(httplib::Response& res, ErrorCode code, const std::string& message, int status = 0) {
        res.status = status != 0 ? status : wire::http_status_for(code);
        res.set_content(wire::encode(wire::ErrorResponse{std::string(to_string(code)), message}), "application/json");
    }

    template <typename Handler>
    void route(const char* path, bool available, Handler handler) {
        server.Post(path, [this, path, available, handler](const httplib::Request& req, httplib::Response& res) {
            if (!available) {
                reply_error(res, ErrorCode::invalid_argument, fmt::format("{} is not served here", path), 404);
                return;
            }
            if (req.body.size() > options.max_payload) {
                reply_error(res, ErrorCode::payload_too_large,
                            fmt::format("request of {} bytes exceeds the {} byte cap", req.body.size(),
                                        options.max_payload));
                return;
            }
            try {
                res.set_content(handler(req.body), "application/json");
            } catch (const Error& e) {
                reply_error(res, e.code(), e.what());
            } catch (const std::exception& e) {
                reply_error(res, ErrorCode::backend_unavailable, e.what(), 500);
            }
        });
    }

    void install() {
        server.set_payload_max_length(options.max_payload * 2 + 1024);
        // SO_REUSEADDR only: a second server on a busy port must fail to bind
        // rather than silently share connections with the first.
        server.set_socket_options([](socket_t sock) {
            int yes = 1;
            ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
        });
        server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
            res.set_content(nlohmann::json{{"role", "mock"}, {"model", options.model_id}}.dump(), "application/json");
        });
        route("/v1/chat", chat != nullptr, [this](const std::string& body) {
            const auto req = wire::decode_chat_request(body);
            if (req.messages.empty()) throw Error(ErrorCode::schema_violation, "'messages' is empty");
            return wire::encode(wire::TextResponse{chat->chat(req.messages)});
        });
        route("/v1/caption", backends.caption != nullptr, [this](const std::string& body) {
            const auto req = wire::decode_caption_request(body);
            return wire::encode(wire::TextResponse{backends.caption->caption(wire::decode_image(req.image_b64))});
        });
        route("/v1/vlm", backends.vlm != nullptr, [this](const std::string& body) {
            const auto req = wire::decode_vlm_request(body);
            return wire::encode(
                wire::TextResponse{backends.vlm->answer(wire::decode_image(req.image_b64), req.prompt)});
        });
        route("/v1/ground", backends.ground != nullptr, [this](const std::string& body) {
            const auto req = wire::decode_ground_request(body);
            if (req.keyword.empty()) throw Error(ErrorCode::schema_violation, "'keyword' is empty");
            return wire::encode(
                wire::GroundResponse{backends.ground->ground(wire::decode_image(req.image_b64), req.keyword)});
        });
        route("/v1/embed", backends.embed != nullptr, [this](const std::string& body) {
            const auto req = wire::decode_embed_request(body);
            if (req.texts.empty()) throw Error(ErrorCode::schema_violation, "'texts' is empty");
            for (const auto& t : req.texts)
                if (t.empty()) throw Error(ErrorCode::schema_violation, "texts must be non-empty");
            wire::EmbedResponse out;
            for (auto& e : backends.embed->embed(req.texts)) {
                out.dim = e.dim();
                out.vectors.push_back(std::move(e.values));
            }
            return wire::encode(out);
        });
    }

    void bind() {
        if (options.port == 0) {
            port = server.bind_to_any_port(options.host);
        } else {
            port = server.bind_to_port(options.host, options.port) ? options.port : -1;
        }
        if (port <= 0) {
            throw Error(ErrorCode::io, fmt::format("cannot bind {}:{}", options.host, options.port));
        }
    }
};

MockServer::MockServer(std::shared_ptr<ChatBackend> chat, Backends backends, MockServerOptions options)
    : impl_(std::make_unique<Impl>()) {
    impl_->chat = std::move(chat);
    impl_->backends = std::move(backends);
    impl_->options = std::move(options);
    impl_->install();
}

MockServer::~MockServer() { stop(); }

int MockServer::start() {
    impl_->bind();
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return impl_->port;
}

void MockServer::run() {
    impl_->bind();
    impl_->server.listen_after_bind();
}

void MockServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

int MockServer::port() const noexcept { return impl_->port; }

std::string MockServer::url() const { return fmt::format("http://{}:{}", impl_->options.host, impl_->port); }

} // namespace urba
