#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace tailor::gateway {

inline constexpr double kTeacherTemperature = 0.5;
inline constexpr double kStudentTemperature = 1.0;

struct ChatMessage {
    enum class Role : std::uint8_t { System, User, Assistant };
    Role role = Role::User;
    std::string content;

    static ChatMessage system(std::string c) { return {Role::System, std::move(c)}; }
    static ChatMessage user(std::string c) { return {Role::User, std::move(c)}; }
};

std::string_view role_name(ChatMessage::Role r);

struct GenRequest {
    std::vector<ChatMessage> messages;
    double temperature = kStudentTemperature;
    int n = 1;
    int max_tokens = 4000;

    /// Throws DomainError when an invariant is broken.
    void validate() const;
};

/// Hex FNV-1a-64 over the concatenated message contents.
std::string fingerprint(const std::vector<ChatMessage>& messages);

struct RetryPolicy {
    int max_attempts = 4;
    std::chrono::milliseconds base_backoff{500};
    double multiplier = 2.0;

    std::chrono::milliseconds delay_before(int attempt) const;  // attempt >= 2
};

struct BackendConfig {
    std::string kind = "http";  // "http" | "mock"
    std::string base_url = "https://api.deepseek.com/v1";
    std::string model = "deepseek-chat";
    std::string api_key_env = "OPENAI_API_KEY";  // empty: no Authorization header
    int max_in_flight = 4;
    RetryPolicy retry;
    std::chrono::milliseconds timeout{120'000};
    std::string script;  // mock script path

    void validate() const;
};

/// Counting gate on concurrent calls; remembers the peak for instrumentation.
class InFlightLimiter {
public:
    explicit InFlightLimiter(int limit);

    class Permit {
    public:
        explicit Permit(InFlightLimiter& l) : l_(&l) { l_->acquire(); }
        Permit(const Permit&) = delete;
        Permit& operator=(const Permit&) = delete;
        ~Permit() { l_->release(); }

    private:
        InFlightLimiter* l_;
    };

    int limit() const { return limit_; }
    int peak() const;

private:
    void acquire();
    void release();

    int limit_;
    int active_ = 0;
    int peak_ = 0;
    mutable std::mutex mu_;
    std::condition_variable cv_;
};

struct BackendStats {
    std::uint64_t calls = 0;
    std::uint64_t retries = 0;
    std::uint64_t failures = 0;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;

    /// Exactly request.n completions.
    virtual std::vector<std::string> chat(const GenRequest& request) = 0;
    virtual std::string model_name() const = 0;
    virtual bool is_mock() const { return false; }
    virtual BackendStats stats() const = 0;
};

/// POSTs JSON to an OpenAI-compatible server with retry and backoff.
class HttpTransport {
public:
    explicit HttpTransport(BackendConfig cfg);

    /// POST {base}{path}. Retries transport errors, 429 and 5xx. Throws TransportError
    /// after exhausting attempts or on other non-2xx statuses (`status` set when known).
    nlohmann::json post(const std::string& path, const nlohmann::json& body, int* status = nullptr);

    const BackendConfig& config() const { return cfg_; }
    BackendStats stats() const;
    int peak_in_flight() const { return limiter_.peak(); }

private:
    std::string auth_header() const;

    BackendConfig cfg_;
    std::string origin_;       // scheme://host[:port]
    std::string path_prefix_;  // e.g. "/v1"
    InFlightLimiter limiter_;
    std::atomic<std::uint64_t> calls_{0}, retries_{0}, failures_{0};
};

class HttpChatBackend final : public ChatBackend {
public:
    explicit HttpChatBackend(BackendConfig cfg) : transport_(std::move(cfg)) {}

    std::vector<std::string> chat(const GenRequest& request) override;
    std::string model_name() const override { return transport_.config().model; }
    BackendStats stats() const override { return transport_.stats(); }

    static nlohmann::json request_body(const std::string& model, const GenRequest& request);

private:
    std::vector<std::string> call(const GenRequest& request, int n);

    HttpTransport transport_;
    std::atomic<bool> server_rejects_n_{false};
};

/// Deterministic stand-in for a chat server.
class MockChatBackend final : public ChatBackend {
public:
    /// Called once per requested sample; `sample` is 0..n-1.
    using Responder = std::function<std::string(const GenRequest& request, int sample)>;

    explicit MockChatBackend(Responder responder, int max_in_flight = 1, std::string model = "mock");

    /// Script: [{"match": {"contains": [...]}, "reply": ...} | {"fingerprint": hex, "reply": ...}].
    /// Contains-rules are tried top-down; fingerprint entries are the fallback.
    static std::unique_ptr<MockChatBackend> from_script(const nlohmann::json& script, int max_in_flight = 1,
                                                        std::string model = "mock");

    std::vector<std::string> chat(const GenRequest& request) override;
    std::string model_name() const override { return model_; }
    bool is_mock() const override { return true; }
    BackendStats stats() const override;
    int peak_in_flight() const { return limiter_.peak(); }

private:
    Responder responder_;
    std::string model_;
    InFlightLimiter limiter_;
    std::atomic<std::uint64_t> calls_{0};
};

std::unique_ptr<ChatBackend> make_backend(const BackendConfig& cfg);

}  // namespace tailor::gateway
