#include "tailor/config.hpp"

#include <fstream>
#include <set>

#include "tailor/error.hpp"
#include "tailor/igsm.hpp"
#include "tailor/kk.hpp"

namespace tailor {

TaskRanges default_ranges(const std::string& task, const std::string& preset) {
    if (task == "kk") return {{4, 8}, {7, 11}, {7, 11}, {12, 13}};
    if (task != "igsm") throw DomainError("unknown task: " + task);
    if (preset == "medium") return {{15, 20}, {15, 20}, {15, 20}, {21, 25}};
    if (preset == "hard") return {{15, 20}, {25, 30}, {25, 30}, {31, 35}};
    throw DomainError("unknown igsm preset: " + preset);
}

Range RunConfig::effective_sft_range() const {
    return sft_range.value_or(default_ranges(task, igsm_preset).sft);
}

Range RunConfig::effective_rl_range() const {
    return rl_range.value_or(default_ranges(task, igsm_preset).rl);
}

int RunConfig::effective_seed_queries() const {
    return seed_queries.value_or(task == "kk" ? 500 : 1000);
}

bool RunConfig::effective_rejection() const { return rejection.value_or(task == "igsm"); }

void RunConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw DomainError("config." + field + ": " + why);
    };
    if (task != "kk" && task != "igsm") fail("task", "must be \"kk\" or \"igsm\"");
    if (igsm_preset != "medium" && igsm_preset != "hard") fail("igsm_preset", "must be \"medium\" or \"hard\"");
    const int max_difficulty = task == "kk" ? kk::kMaxPersons : igsm::kMaxOps;
    const int min_difficulty = task == "kk" ? 2 : 1;
    auto check_range = [&](const std::string& field, const Range& r) {
        if (r.lo < min_difficulty || r.hi < r.lo || r.hi > max_difficulty) {
            fail(field, "range [" + std::to_string(r.lo) + ", " + std::to_string(r.hi) + "] is empty or out of bounds");
        }
    };
    check_range("sft_range", effective_sft_range());
    check_range("rl_range", effective_rl_range());
    if (effective_seed_queries() < 1) fail("seed_queries", "must be >= 1");
    if (trace_queries < 1) fail("trace_queries", "must be >= 1");
    if (samples_per_query < 1) fail("samples_per_query", "must be >= 1");
    if (pool_size < 1) fail("pool_size", "must be >= 1");
    if (sft_target < 1) fail("sft_target", "must be >= 1");
    if (attempt_cap < 1) fail("attempt_cap", "must be >= 1");
    if (max_rounds < 1) fail("max_rounds", "must be >= 1");
    if (!(teacher_temperature >= 0.0)) fail("teacher_temperature", "must be >= 0");
    if (!(student_temperature >= 0.0)) fail("student_temperature", "must be >= 0");
    if (max_tokens < 1) fail("max_tokens", "must be >= 1");
    if (jobs < 1) fail("jobs", "must be >= 1");
    if (!(distractor_ratio >= 0.0 && distractor_ratio < 1.0)) fail("distractor_ratio", "must lie in [0, 1)");
    if (output_dir.empty()) fail("output_dir", "must be non-empty");
    if (embedding.kind != "fallback" && embedding.kind != "remote") {
        fail("embedding.kind", "must be \"fallback\" or \"remote\"");
    }
    if (embedding.dim < 2) fail("embedding.dim", "must be >= 2");
    try {
        student.validate();
    } catch (const DomainError& e) {
        fail("student", e.what());
    }
    try {
        teacher.validate();
    } catch (const DomainError& e) {
        fail("teacher", e.what());
    }
    try {
        clip.validate();
    } catch (const DomainError& e) {
        fail("clip", e.what());
    }
}

namespace {

/// Reads an object's keys, remembering which were consumed so leftovers can be rejected.
class Fields {
public:
    Fields(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw DomainError(path_ + ": expected an object");
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        const auto& v = j_.at(key);
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw DomainError("expected a boolean");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) throw DomainError("expected an integer");
                if constexpr (std::is_unsigned_v<T>) {
                    if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
                        throw DomainError("expected a non-negative integer");
                    }
                }
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number()) throw DomainError("expected a number");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw DomainError("expected a string");
            }
            out = v.get<T>();
        } catch (const DomainError& e) {
            throw DomainError(field(key) + ": " + e.what());
        } catch (const nlohmann::json::exception& e) {
            throw DomainError(field(key) + ": " + e.what());
        }
    }

    template <typename T>
    void read(const std::string& key, std::optional<T>& out) {
        seen_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) return;
        T tmp{};
        read(key, tmp);
        out = tmp;
    }

    void read(const std::string& key, std::optional<Range>& out) {
        seen_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) return;
        const auto& v = j_.at(key);
        if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer()) {
            throw DomainError(field(key) + ": expected [lo, hi]");
        }
        out = Range{v[0].get<int>(), v[1].get<int>()};
    }

    const nlohmann::json* child(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    std::string field(const std::string& key) const { return path_ + "." + key; }

    void finish() const {
        for (const auto& [key, _] : j_.items()) {
            if (!seen_.count(key)) throw DomainError(field(key) + ": unknown key");
        }
    }

private:
    const nlohmann::json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_backend(const nlohmann::json& j, const std::string& path, gateway::BackendConfig& b) {
    Fields f(j, path);
    f.read("kind", b.kind);
    f.read("base_url", b.base_url);
    f.read("model", b.model);
    f.read("api_key_env", b.api_key_env);
    f.read("max_in_flight", b.max_in_flight);
    f.read("script", b.script);
    std::int64_t timeout_ms = b.timeout.count();
    f.read("timeout_ms", timeout_ms);
    b.timeout = std::chrono::milliseconds(timeout_ms);
    if (const auto* r = f.child("retry")) {
        Fields rf(*r, path + ".retry");
        rf.read("max_attempts", b.retry.max_attempts);
        std::int64_t base_ms = b.retry.base_backoff.count();
        rf.read("base_backoff_ms", base_ms);
        b.retry.base_backoff = std::chrono::milliseconds(base_ms);
        rf.read("multiplier", b.retry.multiplier);
        rf.finish();
    }
    f.finish();
}

nlohmann::json backend_to_json(const gateway::BackendConfig& b) {
    return {
        {"kind", b.kind},
        {"base_url", b.base_url},
        {"model", b.model},
        {"api_key_env", b.api_key_env},
        {"max_in_flight", b.max_in_flight},
        {"script", b.script},
        {"timeout_ms", b.timeout.count()},
        {"retry",
         {{"max_attempts", b.retry.max_attempts},
          {"base_backoff_ms", b.retry.base_backoff.count()},
          {"multiplier", b.retry.multiplier}}},
    };
}

}  // namespace

RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig c;
    Fields f(j, "config");
    f.read("task", c.task);
    f.read("igsm_preset", c.igsm_preset);
    f.read("seed", c.seed);
    f.read("sft_range", c.sft_range);
    f.read("rl_range", c.rl_range);
    f.read("seed_queries", c.seed_queries);
    f.read("trace_queries", c.trace_queries);
    f.read("samples_per_query", c.samples_per_query);
    f.read("pool_size", c.pool_size);
    f.read("sft_target", c.sft_target);
    f.read("rejection", c.rejection);
    f.read("attempt_cap", c.attempt_cap);
    f.read("max_rounds", c.max_rounds);
    f.read("teacher_temperature", c.teacher_temperature);
    f.read("student_temperature", c.student_temperature);
    f.read("max_tokens", c.max_tokens);
    f.read("jobs", c.jobs);
    f.read("distractor_ratio", c.distractor_ratio);
    f.read("output_dir", c.output_dir);
    if (const auto* b = f.child("student")) read_backend(*b, "config.student", c.student);
    if (const auto* b = f.child("teacher")) read_backend(*b, "config.teacher", c.teacher);
    if (const auto* e = f.child("embedding")) {
        Fields ef(*e, "config.embedding");
        ef.read("kind", c.embedding.kind);
        ef.read("dim", c.embedding.dim);
        if (const auto* r = ef.child("remote")) read_backend(*r, "config.embedding.remote", c.embedding.remote);
        ef.finish();
    }
    if (const auto* k = f.child("clip")) {
        Fields kf(*k, "config.clip");
        kf.read("eps_low", c.clip.eps_low);
        kf.read("eps_high", c.clip.eps_high);
        kf.read("beta", c.clip.beta);
        kf.finish();
    }
    f.finish();
    c.validate();
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DomainError("config file " + path + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

nlohmann::json config_to_json(const RunConfig& c) {
    const Range sft = c.effective_sft_range();
    const Range rl = c.effective_rl_range();
    return {
        {"task", c.task},
        {"igsm_preset", c.igsm_preset},
        {"seed", c.seed},
        {"sft_range", {sft.lo, sft.hi}},
        {"rl_range", {rl.lo, rl.hi}},
        {"seed_queries", c.effective_seed_queries()},
        {"trace_queries", c.trace_queries},
        {"samples_per_query", c.samples_per_query},
        {"pool_size", c.pool_size},
        {"sft_target", c.sft_target},
        {"rejection", c.effective_rejection()},
        {"attempt_cap", c.attempt_cap},
        {"max_rounds", c.max_rounds},
        {"teacher_temperature", c.teacher_temperature},
        {"student_temperature", c.student_temperature},
        {"max_tokens", c.max_tokens},
        {"jobs", c.jobs},
        {"distractor_ratio", c.distractor_ratio},
        {"output_dir", c.output_dir},
        {"student", backend_to_json(c.student)},
        {"teacher", backend_to_json(c.teacher)},
        {"embedding",
         {{"kind", c.embedding.kind}, {"dim", c.embedding.dim}, {"remote", backend_to_json(c.embedding.remote)}}},
        {"clip", {{"eps_low", c.clip.eps_low}, {"eps_high", c.clip.eps_high}, {"beta", c.clip.beta}}},
    };
}

}  // namespace tailor
