#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "tailor/config.hpp"
#include "tailor/error.hpp"

using namespace tailor;
using nlohmann::json;

namespace {

std::string error_of(const json& j) {
    try {
        config_from_json(j);
    } catch (const DomainError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Config, EmptyObjectGivesTheDefaults) {
    const RunConfig c = config_from_json(json::object());
    EXPECT_EQ(c.pool_size, 25);
    EXPECT_DOUBLE_EQ(c.teacher_temperature, 0.5);
    EXPECT_DOUBLE_EQ(c.student_temperature, 1.0);
    EXPECT_EQ(c.sft_target, 8000);
    EXPECT_DOUBLE_EQ(c.clip.eps_low, 0.2);
    EXPECT_DOUBLE_EQ(c.clip.eps_high, 0.28);
    EXPECT_DOUBLE_EQ(c.clip.beta, 0.0);
    EXPECT_EQ(c.samples_per_query, 4);
    EXPECT_EQ(c.jobs, 1);
    EXPECT_EQ(c.embedding.dim, 4096u);
}

TEST(Config, DefaultSnapshot) {
    const json echo = config_to_json(config_from_json(json::object()));
    const json expected = json::parse(R"({
      "task": "igsm", "igsm_preset": "medium", "seed": 0,
      "sft_range": [15, 20], "rl_range": [15, 20], "seed_queries": 1000,
      "trace_queries": 64, "samples_per_query": 4, "pool_size": 25, "sft_target": 8000,
      "rejection": true, "attempt_cap": 8, "max_rounds": 4,
      "teacher_temperature": 0.5, "student_temperature": 1.0, "max_tokens": 4000, "jobs": 1,
      "distractor_ratio": 0.3, "output_dir": "tailor_run",
      "student": {"kind": "http", "base_url": "https://api.deepseek.com/v1", "model": "qwen2.5-1.5b-instruct",
                  "api_key_env": "STUDENT_API_KEY", "max_in_flight": 4, "script": "", "timeout_ms": 120000,
                  "retry": {"max_attempts": 4, "base_backoff_ms": 500, "multiplier": 2.0}},
      "teacher": {"kind": "http", "base_url": "https://api.deepseek.com/v1", "model": "deepseek-chat",
                  "api_key_env": "TEACHER_API_KEY", "max_in_flight": 4, "script": "", "timeout_ms": 120000,
                  "retry": {"max_attempts": 4, "base_backoff_ms": 500, "multiplier": 2.0}},
      "embedding": {"kind": "fallback", "dim": 4096,
                    "remote": {"kind": "http", "base_url": "https://api.deepseek.com/v1", "model": "nv-embed-v2",
                               "api_key_env": "EMBEDDING_API_KEY", "max_in_flight": 4, "script": "",
                               "timeout_ms": 120000,
                               "retry": {"max_attempts": 4, "base_backoff_ms": 500, "multiplier": 2.0}}},
      "clip": {"eps_low": 0.2, "eps_high": 0.28, "beta": 0.0}
    })");
    EXPECT_EQ(echo, expected) << echo.dump(2);
}

TEST(Config, BenchmarkRanges) {
    const auto kk = default_ranges("kk");
    EXPECT_EQ(kk.sft, (Range{4, 8}));
    EXPECT_EQ(kk.rl, (Range{7, 11}));
    EXPECT_EQ(kk.eval, (Range{7, 11}));
    EXPECT_EQ(kk.ood, (Range{12, 13}));
    const auto medium = default_ranges("igsm", "medium");
    EXPECT_EQ(medium.sft, (Range{15, 20}));
    EXPECT_EQ(medium.rl, (Range{15, 20}));
    EXPECT_EQ(medium.eval, (Range{15, 20}));
    EXPECT_EQ(medium.ood, (Range{21, 25}));
    const auto hard = default_ranges("igsm", "hard");
    EXPECT_EQ(hard.sft, (Range{15, 20}));
    EXPECT_EQ(hard.rl, (Range{25, 30}));
    EXPECT_EQ(hard.eval, (Range{25, 30}));
    EXPECT_EQ(hard.ood, (Range{31, 35}));
    EXPECT_THROW(default_ranges("chess"), DomainError);
    EXPECT_THROW(default_ranges("igsm", "extreme"), DomainError);
}

TEST(Config, TaskDependentDefaults) {
    const RunConfig kk = config_from_json({{"task", "kk"}});
    EXPECT_EQ(kk.effective_sft_range(), (Range{4, 8}));
    EXPECT_EQ(kk.effective_rl_range(), (Range{7, 11}));
    EXPECT_EQ(kk.effective_seed_queries(), 500);
    EXPECT_FALSE(kk.effective_rejection());
    const RunConfig hard = config_from_json({{"igsm_preset", "hard"}});
    EXPECT_EQ(hard.effective_rl_range(), (Range{25, 30}));
    EXPECT_TRUE(hard.effective_rejection());
}

TEST(Config, OverridesApply) {
    const RunConfig c = config_from_json(
        {{"sft_target", 64}, {"rejection", false}, {"sft_range", {5, 6}}, {"teacher", {{"retry", {{"max_attempts", 2}}}}}});
    EXPECT_EQ(c.sft_target, 64);
    EXPECT_FALSE(c.effective_rejection());
    EXPECT_EQ(c.effective_sft_range(), (Range{5, 6}));
    EXPECT_EQ(c.teacher.retry.max_attempts, 2);
    EXPECT_EQ(c.teacher.model, "deepseek-chat");
}

TEST(Config, TemperatureSweepIsAccepted) {
    for (double t : {0.4, 0.7, 1.0, 1.3, 1.6}) {
        EXPECT_DOUBLE_EQ(config_from_json({{"teacher_temperature", t}}).teacher_temperature, t);
    }
}

TEST(Config, ErrorsNameTheField) {
    EXPECT_NE(error_of({{"pool_size", 0}}).find("pool_size"), std::string::npos);
    EXPECT_EQ(error_of({{"pool_sise", 3}}), "config.pool_sise: unknown key");
    EXPECT_EQ(error_of({{"teacher", {{"retry", {{"attempts", 3}}}}}}), "config.teacher.retry.attempts: unknown key");
    EXPECT_NE(error_of({{"seed", "one"}}).find("config.seed"), std::string::npos);
    EXPECT_NE(error_of({{"seed", -1}}).find("config.seed"), std::string::npos);
    EXPECT_NE(error_of({{"sft_range", {9, 3}}}).find("config.sft_range"), std::string::npos);
    EXPECT_NE(error_of({{"sft_range", {1, 2, 3}}}).find("config.sft_range"), std::string::npos);
    EXPECT_NE(error_of({{"task", "kk"}, {"rl_range", {2, 30}}}).find("config.rl_range"), std::string::npos);
    EXPECT_NE(error_of({{"rejection", 1}}).find("config.rejection"), std::string::npos);
    EXPECT_NE(error_of({{"teacher_temperature", -0.1}}).find("teacher_temperature"), std::string::npos);
    EXPECT_NE(error_of({{"clip", {{"eps_high", 1.5}}}}).find("config.clip"), std::string::npos);
    EXPECT_NE(error_of({{"teacher", {{"max_in_flight", 0}}}}).find("config.teacher"), std::string::npos);
    EXPECT_NE(error_of({{"embedding", {{"kind", "http"}}}}).find("config.embedding.kind"), std::string::npos);
    EXPECT_NE(error_of(json::array()).find("expected an object"), std::string::npos);
}

TEST(Config, EchoCarriesNoCredentialValues) {
    setenv("TEACHER_API_KEY", "sk-teacher-very-secret", 1);
    const auto echo = config_to_json(config_from_json(json::object())).dump();
    EXPECT_EQ(echo.find("sk-teacher-very-secret"), std::string::npos);
    EXPECT_NE(echo.find("TEACHER_API_KEY"), std::string::npos);
    unsetenv("TEACHER_API_KEY");
}

TEST(Config, EchoRoundTrips) {
    const RunConfig c = config_from_json({{"task", "kk"}, {"seed", 9}, {"pool_size", 4}});
    const json echo = config_to_json(c);
    EXPECT_EQ(config_to_json(config_from_json(echo)), echo);
}

TEST(LoadConfig, MissingAndMalformedFiles) {
    EXPECT_THROW(load_config("/nonexistent/config.json"), DomainError);
    const auto path = std::filesystem::temp_directory_path() / "tailor_bad_config.json";
    std::ofstream(path) << "{ not json";
    EXPECT_THROW(load_config(path.string()), DomainError);
    std::ofstream(path) << R"({"pool_size": 7})";
    EXPECT_EQ(load_config(path.string()).pool_size, 7);
    std::filesystem::remove(path);
}
