#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "tailor/gateway.hpp"
#include "tailor/objectives.hpp"

namespace tailor {

inline constexpr const char* kToolVersion = "0.3.0";
inline constexpr int kSchemaVersion = 1;

/// Inclusive difficulty range: characters for KK, operations for iGSM.
struct Range {
    int lo = 0;
    int hi = 0;

    friend bool operator==(const Range&, const Range&) = default;
};

struct TaskRanges {
    Range sft, rl, eval, ood;
};

/// Benchmark difficulty splits. preset is "medium" or "hard" and only affects igsm.
TaskRanges default_ranges(const std::string& task, const std::string& preset = "medium");

/// Default backend settings with the given model and credential variable.
inline gateway::BackendConfig backend_for(std::string model, std::string api_key_env) {
    gateway::BackendConfig c;
    c.model = std::move(model);
    c.api_key_env = std::move(api_key_env);
    return c;
}

struct EmbeddingConfig {
    std::string kind = "fallback";  // "fallback" | "remote"
    std::size_t dim = 4096;
    gateway::BackendConfig remote = backend_for("nv-embed-v2", "EMBEDDING_API_KEY");
};

struct RunConfig {
    std::string task = "igsm";
    std::string igsm_preset = "medium";
    std::uint64_t seed = 0;
    std::optional<Range> sft_range;  // unset: preset default
    std::optional<Range> rl_range;

    std::optional<int> seed_queries;  // unset: 500 for kk, 1000 for igsm
    int trace_queries = 64;
    int samples_per_query = 4;
    int pool_size = 25;
    int sft_target = 8000;
    std::optional<bool> rejection;  // unset: on for igsm, off for kk
    int attempt_cap = 8;
    int max_rounds = 4;
    double teacher_temperature = gateway::kTeacherTemperature;
    double student_temperature = gateway::kStudentTemperature;
    int max_tokens = 4000;
    int jobs = 1;
    double distractor_ratio = 0.3;

    gateway::BackendConfig student = backend_for("qwen2.5-1.5b-instruct", "STUDENT_API_KEY");
    gateway::BackendConfig teacher = backend_for("deepseek-chat", "TEACHER_API_KEY");
    EmbeddingConfig embedding;
    objectives::ClipConfig clip;

    std::string output_dir = "tailor_run";

    Range effective_sft_range() const;
    Range effective_rl_range() const;
    int effective_seed_queries() const;
    bool effective_rejection() const;

    void validate() const;
};

/// Fills defaults; rejects unknown keys and bad values with a DomainError naming the field path.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::string& path);

/// Resolved configuration; credentials are never included, only the variable names.
nlohmann::json config_to_json(const RunConfig& c);

}  // namespace tailor
