#include "tailor/gateway.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "tailor/error.hpp"
#include "tailor/rng.hpp"

namespace tailor::gateway {

std::string_view role_name(ChatMessage::Role r) {
    switch (r) {
        case ChatMessage::Role::System: return "system";
        case ChatMessage::Role::User: return "user";
        case ChatMessage::Role::Assistant: return "assistant";
    }
    return "user";
}

void GenRequest::validate() const {
    if (messages.empty()) throw DomainError("chat request has no messages");
    for (const auto& m : messages) {
        if (m.role != ChatMessage::Role::Assistant && m.content.empty()) {
            throw DomainError("chat request has an empty " + std::string(role_name(m.role)) + " message");
        }
    }
    if (!(temperature >= 0.0)) throw DomainError("temperature must be >= 0");
    if (n < 1) throw DomainError("n must be >= 1");
    if (max_tokens < 1) throw DomainError("max_tokens must be positive");
}

std::string fingerprint(const std::vector<ChatMessage>& messages) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& m : messages) h = fnv1a64(m.content, h);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::chrono::milliseconds RetryPolicy::delay_before(int attempt) const {
    const double factor = std::pow(multiplier, std::max(0, attempt - 2));
    return std::chrono::milliseconds(static_cast<std::int64_t>(static_cast<double>(base_backoff.count()) * factor));
}

void BackendConfig::validate() const {
    if (kind != "http" && kind != "mock") throw DomainError("backend kind must be \"http\" or \"mock\", got \"" + kind + "\"");
    if (max_in_flight < 1) throw DomainError("max_in_flight must be >= 1");
    if (retry.max_attempts < 1) throw DomainError("retry.max_attempts must be >= 1");
    if (retry.multiplier < 1.0) throw DomainError("retry.multiplier must be >= 1");
    if (kind == "mock" && script.empty()) throw DomainError("mock backend needs a script path");
}

InFlightLimiter::InFlightLimiter(int limit) : limit_(limit) {
    if (limit < 1) throw DomainError("in-flight limit must be >= 1");
}

void InFlightLimiter::acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return active_ < limit_; });
    ++active_;
    peak_ = std::max(peak_, active_);
}

void InFlightLimiter::release() {
    {
        std::lock_guard lock(mu_);
        --active_;
    }
    cv_.notify_one();
}

int InFlightLimiter::peak() const {
    std::lock_guard lock(mu_);
    return peak_;
}

std::unique_ptr<ChatBackend> make_backend(const BackendConfig& cfg) {
    cfg.validate();
    if (cfg.kind == "mock") {
        std::ifstream in(cfg.script);
        if (!in) throw DomainError("cannot open mock script: " + cfg.script);
        nlohmann::json script;
        try {
            script = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw DomainError("mock script " + cfg.script + ": " + e.what());
        }
        return MockChatBackend::from_script(script, cfg.max_in_flight, cfg.model);
    }
    return std::make_unique<HttpChatBackend>(cfg);
}

}  // namespace tailor::gateway
