#pragma once

#include <httplib.h>

#include <functional>
#include <string>
#include <thread>

#include "tailor/gateway.hpp"

namespace fixtures {

/// Local OpenAI-style server on an ephemeral port.
class FakeServer {
public:
    using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

    explicit FakeServer(Handler h, const std::string& path = "/v1/chat/completions") {
        server_.new_task_queue = [] { return new httplib::ThreadPool(16); };
        server_.Post(path, std::move(h));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeServer() {
        server_.stop();
        thread_.join();
    }

    tailor::gateway::BackendConfig config() const {
        tailor::gateway::BackendConfig c;
        c.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
        c.model = "test-model";
        c.api_key_env = "TAILOR_TEST_KEY";
        c.retry.base_backoff = std::chrono::milliseconds(1);
        c.timeout = std::chrono::milliseconds(5000);
        return c;
    }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace fixtures
