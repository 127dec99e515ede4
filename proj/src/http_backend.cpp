#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "tailor/error.hpp"
#include "tailor/gateway.hpp"

namespace tailor::gateway {

namespace {

bool retryable(int status) { return status == 429 || status >= 500; }

// Error text quotes the server's body; a server echoing the key must not leak it.
std::string redacted(std::string text, const std::string& secret) {
    if (secret.empty()) return text;
    for (auto pos = text.find(secret); pos != std::string::npos; pos = text.find(secret, pos)) {
        text.replace(pos, secret.size(), "[redacted]");
    }
    return text;
}

}  // namespace

HttpTransport::HttpTransport(BackendConfig cfg) : cfg_(std::move(cfg)), limiter_(cfg_.max_in_flight) {
    cfg_.validate();
    const auto scheme_end = cfg_.base_url.find("://");
    if (scheme_end == std::string::npos) throw DomainError("base_url needs a scheme: " + cfg_.base_url);
    const auto path_start = cfg_.base_url.find('/', scheme_end + 3);
    origin_ = cfg_.base_url.substr(0, path_start);
    path_prefix_ = path_start == std::string::npos ? "" : cfg_.base_url.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string HttpTransport::auth_header() const {
    if (cfg_.api_key_env.empty()) return {};
    const char* key = std::getenv(cfg_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
        throw DomainError("credential missing: environment variable " + cfg_.api_key_env + " is not set");
    }
    return std::string("Bearer ") + key;
}

BackendStats HttpTransport::stats() const {
    return {calls_.load(), retries_.load(), failures_.load()};
}

nlohmann::json HttpTransport::post(const std::string& path, const nlohmann::json& body, int* status) {
    const std::string auth = auth_header();
    const std::string payload = body.dump();
    const std::string full_path = path_prefix_ + path;
    std::string last_error = "no attempt made";
    int last_status = 0;

    for (int attempt = 1; attempt <= cfg_.retry.max_attempts; ++attempt) {
        if (attempt > 1) {
            ++retries_;
            std::this_thread::sleep_for(cfg_.retry.delay_before(attempt));
        }
        httplib::Result res{nullptr, httplib::Error::Unknown};
        {
            InFlightLimiter::Permit permit(limiter_);
            ++calls_;
            httplib::Client client(origin_);
            const auto us = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout).count();
            const auto secs = static_cast<time_t>(us / 1'000'000);
            const auto usecs = static_cast<time_t>(us % 1'000'000);
            client.set_connection_timeout(secs, usecs);
            client.set_read_timeout(secs, usecs);
            client.set_write_timeout(secs, usecs);
            httplib::Headers headers;
            if (!auth.empty()) headers.emplace("Authorization", auth);
            res = client.Post(full_path, headers, payload, "application/json");
        }
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            last_status = 0;
            continue;
        }
        last_status = res->status;
        if (status) *status = res->status;
        if (res->status >= 200 && res->status < 300) {
            try {
                return nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::exception&) {
                ++failures_;
                throw TransportError("malformed response body from " + origin_ + full_path, attempt);
            }
        }
        last_error = "HTTP " + std::to_string(res->status);
        if (!retryable(res->status)) {
            ++failures_;
            const std::string key = auth.empty() ? std::string() : auth.substr(7);
            throw TransportError(last_error + " from " + origin_ + full_path + ": " + redacted(res->body, key).substr(0, 200),
                                 attempt);
        }
    }
    ++failures_;
    if (status) *status = last_status;
    throw TransportError("request to " + origin_ + full_path + " failed after " +
                             std::to_string(cfg_.retry.max_attempts) + " attempts (" + last_error + ")",
                         cfg_.retry.max_attempts);
}

nlohmann::json HttpChatBackend::request_body(const std::string& model, const GenRequest& request) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : request.messages) messages.push_back({{"role", role_name(m.role)}, {"content", m.content}});
    return {
        {"model", model},
        {"messages", std::move(messages)},
        {"temperature", request.temperature},
        {"n", request.n},
        {"max_tokens", request.max_tokens},
    };
}

std::vector<std::string> HttpChatBackend::call(const GenRequest& request, int n) {
    GenRequest r = request;
    r.n = n;
    const auto body = transport_.post("/chat/completions", request_body(transport_.config().model, r));
    std::vector<std::string> out;
    try {
        for (const auto& choice : body.at("choices")) out.push_back(choice.at("message").at("content").get<std::string>());
    } catch (const nlohmann::json::exception&) {
        throw TransportError("malformed response: missing choices[*].message.content");
    }
    if (out.empty()) throw TransportError("malformed response: empty choices");
    return out;
}

std::vector<std::string> HttpChatBackend::chat(const GenRequest& request) {
    request.validate();
    std::vector<std::string> out;
    if (request.n > 1 && !server_rejects_n_) {
        int status = 0;
        try {
            const auto body = transport_.post("/chat/completions",
                                              request_body(transport_.config().model, request), &status);
            for (const auto& choice : body.at("choices")) {
                out.push_back(choice.at("message").at("content").get<std::string>());
            }
        } catch (const TransportError&) {
            if (status != 400 && status != 422) throw;
            server_rejects_n_ = true;
            out.clear();
        } catch (const nlohmann::json::exception&) {
            throw TransportError("malformed response: missing choices[*].message.content");
        }
    }
    // Servers that reject or ignore n>1 get the remainder as single-sample calls.
    while (static_cast<int>(out.size()) < request.n) out.push_back(call(request, 1).front());
    out.resize(static_cast<std::size_t>(request.n));
    return out;
}

}  // namespace tailor::gateway
