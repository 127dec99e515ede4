#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "tailor/error.hpp"
#include "tailor/gateway.hpp"
#include "fixtures/fake_server.hpp"

using namespace tailor;
using namespace tailor::gateway;
using nlohmann::json;

namespace {

GenRequest request_of(const std::string& user, int n = 1) {
    GenRequest r;
    r.messages = {ChatMessage::system("be brief"), ChatMessage::user(user)};
    r.n = n;
    return r;
}

json completion(const std::vector<std::string>& texts) {
    json choices = json::array();
    for (const auto& t : texts) choices.push_back({{"index", choices.size()}, {"message", {{"role", "assistant"}, {"content", t}}}});
    return {{"choices", choices}};
}

class GatewayHttp : public ::testing::Test {
protected:
    void SetUp() override { setenv("TAILOR_TEST_KEY", "sk-test-secret-123", 1); }
    void TearDown() override { unsetenv("TAILOR_TEST_KEY"); }
};

}  // namespace

TEST(GenRequest, ValidatesFields) {
    EXPECT_NO_THROW(request_of("hi").validate());
    GenRequest r = request_of("hi");
    r.n = 0;
    EXPECT_THROW(r.validate(), DomainError);
    r = request_of("");
    EXPECT_THROW(r.validate(), DomainError);
    r = request_of("hi");
    r.temperature = -0.1;
    EXPECT_THROW(r.validate(), DomainError);
    r = request_of("hi");
    r.max_tokens = 0;
    EXPECT_THROW(r.validate(), DomainError);
    EXPECT_THROW(GenRequest{}.validate(), DomainError);
}

TEST(GenRequest, TemperatureDefaults) {
    EXPECT_DOUBLE_EQ(kTeacherTemperature, 0.5);
    EXPECT_DOUBLE_EQ(kStudentTemperature, 1.0);
    EXPECT_DOUBLE_EQ(GenRequest{}.temperature, 1.0);
}

TEST(BackendConfig, RejectsBadBounds) {
    BackendConfig c;
    c.max_in_flight = 0;
    EXPECT_THROW(c.validate(), DomainError);
    c = {};
    c.retry.max_attempts = 0;
    EXPECT_THROW(c.validate(), DomainError);
    c = {};
    c.kind = "grpc";
    EXPECT_THROW(c.validate(), DomainError);
}

TEST(RetryPolicy, BackoffIsExponential) {
    RetryPolicy p;
    EXPECT_EQ(p.delay_before(2).count(), 500);
    EXPECT_EQ(p.delay_before(3).count(), 1000);
    EXPECT_EQ(p.delay_before(4).count(), 2000);
}

TEST(Fingerprint, DependsOnContentOnly) {
    const auto a = fingerprint({ChatMessage::system("x"), ChatMessage::user("y")});
    const auto b = fingerprint({ChatMessage::user("x"), ChatMessage::user("y")});
    const auto c = fingerprint({ChatMessage::user("xy")});
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.size(), 16u);
    // Concatenated contents: splitting differently does not change the hash.
    EXPECT_EQ(a, c);
    EXPECT_NE(a, fingerprint({ChatMessage::user("yx")}));
}

TEST(MockBackend, ScriptedFingerprintRepliesForEverySample) {
    const auto req = request_of("F", 2);
    auto mock = MockChatBackend::from_script(json::array({{{"fingerprint", fingerprint(req.messages)}, {"reply", "hello"}}}));
    EXPECT_EQ(mock->chat(req), (std::vector<std::string>{"hello", "hello"}));
    EXPECT_TRUE(mock->is_mock());
    EXPECT_EQ(mock->stats().calls, 1u);
}

TEST(MockBackend, ContainsRulesApplyTopDownBeforeFingerprints) {
    const auto req = request_of("alpha beta");
    auto mock = MockChatBackend::from_script(json::array({
        {{"fingerprint", fingerprint(req.messages)}, {"reply", "by fingerprint"}},
        {{"match", {{"contains", {"alpha", "gamma"}}}}, {"reply", "first"}},
        {{"match", {{"contains", {"beta"}}}}, {"reply", "second"}},
        {{"match", {{"contains", {"alpha"}}}}, {"reply", "third"}},
    }));
    EXPECT_EQ(mock->chat(req).at(0), "second");
    EXPECT_EQ(mock->chat(request_of("gamma alpha")).at(0), "first");
}

TEST(MockBackend, UnknownFingerprintIsAnError) {
    auto mock = MockChatBackend::from_script(json::array());
    EXPECT_THROW(mock->chat(request_of("nobody scripted this")), DomainError);
}

TEST(MockBackend, MalformedScriptsAreRejected) {
    EXPECT_THROW(MockChatBackend::from_script(json::object()), DomainError);
    EXPECT_THROW(MockChatBackend::from_script(json::array({{{"reply", "x"}}})), DomainError);
    EXPECT_THROW(MockChatBackend::from_script(json::array({{{"fingerprint", "ab"}}})), DomainError);
}

TEST(MockBackend, InFlightBoundHoldsUnderConcurrency) {
    std::atomic<int> active{0}, worst{0};
    MockChatBackend mock(
        [&](const GenRequest&, int) {
            const int now = ++active;
            for (int seen = worst; now > seen && !worst.compare_exchange_weak(seen, now);) {
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
            --active;
            return std::string("ok");
        },
        3);
    std::vector<std::thread> threads;
    for (int t = 0; t < 12; ++t) {
        threads.emplace_back([&] {
            for (int i = 0; i < 5; ++i) mock.chat(request_of("x"));
        });
    }
    for (auto& t : threads) t.join();
    EXPECT_LE(worst.load(), 3);
    EXPECT_LE(mock.peak_in_flight(), 3);
    EXPECT_GE(mock.peak_in_flight(), 2);
    EXPECT_EQ(mock.stats().calls, 60u);
}

TEST(MakeBackend, MockNeedsAReadableScript) {
    BackendConfig c;
    c.kind = "mock";
    EXPECT_THROW(make_backend(c), DomainError);
    c.script = "/nonexistent/script.json";
    EXPECT_THROW(make_backend(c), DomainError);
}

TEST_F(GatewayHttp, PostsOpenAiShapedRequest) {
    json seen;
    std::string auth, path;
    fixtures::FakeServer server([&](const httplib::Request& req, httplib::Response& res) {
        seen = json::parse(req.body);
        auth = req.get_header_value("Authorization");
        path = req.path;
        res.set_content(completion({"one", "two"}).dump(), "application/json");
    });
    HttpChatBackend backend(server.config());
    auto req = request_of("question", 2);
    req.temperature = 0.5;
    req.max_tokens = 123;
    EXPECT_EQ(backend.chat(req), (std::vector<std::string>{"one", "two"}));
    EXPECT_EQ(path, "/v1/chat/completions");
    EXPECT_EQ(auth, "Bearer sk-test-secret-123");
    EXPECT_EQ(seen.at("model"), "test-model");
    EXPECT_EQ(seen.at("n"), 2);
    EXPECT_EQ(seen.at("max_tokens"), 123);
    EXPECT_DOUBLE_EQ(seen.at("temperature").get<double>(), 0.5);
    EXPECT_EQ(seen.at("messages").at(0).at("role"), "system");
    EXPECT_EQ(seen.at("messages").at(1), (json{{"role", "user"}, {"content", "question"}}));
}

TEST_F(GatewayHttp, RetriesAfter429) {
    std::atomic<int> hits{0};
    fixtures::FakeServer server([&](const httplib::Request&, httplib::Response& res) {
        if (hits++ == 0) {
            res.status = 429;
            return;
        }
        res.set_content(completion({"ok"}).dump(), "application/json");
    });
    auto cfg = server.config();
    cfg.retry.max_attempts = 3;
    HttpChatBackend backend(cfg);
    EXPECT_EQ(backend.chat(request_of("q")).at(0), "ok");
    EXPECT_EQ(hits.load(), 2);
    EXPECT_EQ(backend.stats().retries, 1u);
}

TEST_F(GatewayHttp, PersistentServerErrorSurfacesAttemptCount) {
    std::atomic<int> hits{0};
    fixtures::FakeServer server([&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 500;
    });
    auto cfg = server.config();
    cfg.retry.max_attempts = 3;
    HttpChatBackend backend(cfg);
    try {
        backend.chat(request_of("q"));
        FAIL() << "expected TransportError";
    } catch (const TransportError& e) {
        EXPECT_EQ(e.attempts(), 3);
        EXPECT_NE(std::string(e.what()).find("3 attempts"), std::string::npos);
    }
    EXPECT_EQ(hits.load(), 3);
    EXPECT_EQ(backend.stats().failures, 1u);
}

TEST_F(GatewayHttp, ClientErrorsAreNotRetried) {
    std::atomic<int> hits{0};
    fixtures::FakeServer server([&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 401;
        res.set_content("bad key sk-test-secret-123", "text/plain");
    });
    HttpChatBackend backend(server.config());
    try {
        backend.chat(request_of("q"));
        FAIL() << "expected TransportError";
    } catch (const TransportError& e) {
        EXPECT_EQ(e.attempts(), 1);
        EXPECT_EQ(std::string(e.what()).find("sk-test-secret-123"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("401"), std::string::npos);
    }
    EXPECT_EQ(hits.load(), 1);
}

TEST_F(GatewayHttp, UnreachableServerIsATransportError) {
    BackendConfig c;
    c.base_url = "http://127.0.0.1:1/v1";
    c.api_key_env = "TAILOR_TEST_KEY";
    c.retry.max_attempts = 2;
    c.retry.base_backoff = std::chrono::milliseconds(1);
    c.timeout = std::chrono::milliseconds(500);
    HttpChatBackend backend(c);
    EXPECT_THROW(backend.chat(request_of("q")), TransportError);
    EXPECT_EQ(backend.stats().retries, 1u);
}

TEST_F(GatewayHttp, MissingCredentialIsADomainError) {
    std::atomic<int> hits{0};
    fixtures::FakeServer server([&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.set_content(completion({"x"}).dump(), "application/json");
    });
    auto cfg = server.config();
    cfg.api_key_env = "TAILOR_TEST_KEY_UNSET";
    HttpChatBackend backend(cfg);
    EXPECT_THROW(backend.chat(request_of("q")), DomainError);
    EXPECT_EQ(hits.load(), 0);
    cfg.api_key_env = "";
    HttpChatBackend anonymous(cfg);
    EXPECT_EQ(anonymous.chat(request_of("q")).at(0), "x");
}

TEST_F(GatewayHttp, MalformedBodyIsATransportError) {
    fixtures::FakeServer server([&](const httplib::Request& req, httplib::Response& res) {
        if (req.body.find("broken-json") != std::string::npos) {
            res.set_content("{not json", "application/json");
        } else {
            res.set_content(R"({"choices": [{"text": "legacy"}]})", "application/json");
        }
    });
    HttpChatBackend backend(server.config());
    EXPECT_THROW(backend.chat(request_of("broken-json")), TransportError);
    EXPECT_THROW(backend.chat(request_of("legacy")), TransportError);
}

TEST_F(GatewayHttp, FallsBackToSingleCallsWhenNIsRejected) {
    std::atomic<int> multi{0}, single{0};
    fixtures::FakeServer server([&](const httplib::Request& req, httplib::Response& res) {
        if (json::parse(req.body).at("n") != 1) {
            ++multi;
            res.status = 400;
            res.set_content(R"({"error": "n must be 1"})", "application/json");
            return;
        }
        res.set_content(completion({"s" + std::to_string(single++)}).dump(), "application/json");
    });
    HttpChatBackend backend(server.config());
    EXPECT_EQ(backend.chat(request_of("q", 3)), (std::vector<std::string>{"s0", "s1", "s2"}));
    // The rejection is remembered; later calls skip the n>1 attempt.
    EXPECT_EQ(backend.chat(request_of("q", 2)).size(), 2u);
    EXPECT_EQ(multi.load(), 1);
    EXPECT_EQ(single.load(), 5);
}

TEST_F(GatewayHttp, TopsUpWhenServerIgnoresN) {
    fixtures::FakeServer server([&](const httplib::Request&, httplib::Response& res) {
        res.set_content(completion({"only"}).dump(), "application/json");
    });
    HttpChatBackend backend(server.config());
    EXPECT_EQ(backend.chat(request_of("q", 3)), (std::vector<std::string>{"only", "only", "only"}));
}

TEST_F(GatewayHttp, InFlightBoundHoldsAgainstARealServer) {
    std::atomic<int> active{0}, worst{0};
    fixtures::FakeServer server([&](const httplib::Request&, httplib::Response& res) {
        const int now = ++active;
        for (int seen = worst; now > seen && !worst.compare_exchange_weak(seen, now);) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
        --active;
        res.set_content(completion({"ok"}).dump(), "application/json");
    });
    auto cfg = server.config();
    cfg.max_in_flight = 2;
    HttpChatBackend backend(cfg);
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&] {
            for (int i = 0; i < 3; ++i) backend.chat(request_of("q"));
        });
    }
    for (auto& t : threads) t.join();
    EXPECT_LE(worst.load(), 2);
    EXPECT_EQ(backend.stats().calls, 24u);
}

TEST(HttpBackend, RequestBodyMatchesWireFormat) {
    const auto body = HttpChatBackend::request_body("m", request_of("hi", 4));
    EXPECT_EQ(body, (json{{"model", "m"},
                          {"messages", json::array({{{"role", "system"}, {"content", "be brief"}},
                                                    {{"role", "user"}, {"content", "hi"}}})},
                          {"temperature", 1.0},
                          {"n", 4},
                          {"max_tokens", 4000}}));
}

TEST(HttpBackend, BaseUrlNeedsAScheme) {
    BackendConfig c;
    c.base_url = "localhost:8000/v1";
    EXPECT_THROW(HttpChatBackend{c}, DomainError);
}
