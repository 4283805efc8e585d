// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "urba/backends.hpp"
#include "urba/wire.hpp"

#include <memory>
#include <string>

namespace urba {

struct MockServerOptions {
    std::string host = "127.0.0.1";
    int port = 0;  // 0 picks a free port
    std::size_t max_payload = wire::kDefaultMaxPayload;
    std::string model_id = "urba-mock";
};

/// Serves the /v1/* protocol (plus /healthz) over any backend set. Roles
/// left null answer 404 with code "invalid-argument".
class MockServer {
public:
    MockServer(std::shared_ptr<ChatBackend> chat, Backends backends, MockServerOptions options = {});
    ~MockServer();
    MockServer(const MockServer&) = delete;
    MockServer& operator=(const MockServer&) = delete;

    /// Binds and serves on a background thread; returns the bound port.
    int start();
    /// Binds and serves on the calling thread until stop().
    void run();
    void stop();

    int port() const noexcept;
    std::string url() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace urba
