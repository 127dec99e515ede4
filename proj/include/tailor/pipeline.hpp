#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tailor/config.hpp"
#include "tailor/error.hpp"
#include "tailor/gateway.hpp"
#include "tailor/rng.hpp"

namespace tailor::pipeline {

/// A benchmark query with its gold answer (name->role object for kk, integer for igsm).
struct SeedQuery {
    std::string id;
    std::string task;
    std::string text;
    nlohmann::json gold;
    int difficulty = 0;
};

/// `count` generated queries with difficulty drawn per query from `range`; query i uses
/// seed stream (seed, i) and gets id "{prefix}-{i:05}".
std::vector<SeedQuery> make_seed_queries(const std::string& task, Range range, int count, std::uint64_t seed,
                                         const std::string& prefix, double distractor_ratio = 0.3);

/// Gold answer as it would appear in a correct response ("Abigail is a knight. ..." or "936").
std::string gold_text(const SeedQuery& q);

struct TraceRecord {
    std::string query_id;
    std::string task;
    std::string query;
    nlohmann::json gold;
    std::string completion;
    int reward = 0;
    int sample_index = 0;
};

struct FailureBundle {
    std::string id;
    std::array<TraceRecord, 3> failures;
    TraceRecord success;
};

struct Primitive {
    std::string id;
    std::string instruction;
    std::string bundle_id;
    std::string teacher_model;
    std::string created_at;
};

struct SftRecord {
    std::string query_id;
    std::string query;
    std::string response;
    std::string primitive_id;
    std::optional<int> reward;
    int difficulty = 0;
    std::string task;
};

// --- demonstration trace analysis -------------------------------------------------------

/// System prompt stating the think/answer template for the task.
std::string template_instructions(const std::string& task);

struct CollectOptions {
    int samples_per_query = 4;
    double temperature = gateway::kStudentTemperature;
    int max_tokens = 4000;
    int jobs = 1;
    double max_failure_rate = 0.2;
};

struct CollectResult {
    std::vector<TraceRecord> records;              // query order, then sample index
    std::vector<std::string> failed_queries;       // "id: reason"
};

/// k labelled completions per query. Per-query backend failures are recorded; throws the
/// last TransportError when more than max_failure_rate of queries fail.
CollectResult collect_traces(const std::vector<SeedQuery>& queries, gateway::ChatBackend& student,
                             const CollectOptions& opts = {});

/// `count` bundles of 3 failures + 1 success; no repeats inside a bundle. Throws DomainError
/// naming the deficit when there are fewer than 3 failures or no success.
std::vector<FailureBundle> make_bundles(const std::vector<TraceRecord>& records, std::uint64_t seed,
                                        std::size_t count);

// --- reasoning primitive synthesis ------------------------------------------------------

/// Trace-analysis prompt with the correct case and three failure cases filled in.
std::string analysis_prompt(const FailureBundle& bundle);

struct SynthesisOptions {
    double temperature = gateway::kTeacherTemperature;
    int max_tokens = 4000;
    std::function<std::string()> clock;  // ISO-8601 UTC; defaults to wall time
};

struct Synthesis {
    Primitive primitive;
    std::string analysis;  // <prompt_think> content, kept for inspection
    std::vector<std::string> diagnostics;
};

/// Content of the first <generated_prompt> tag, trimmed. Throws DomainError when missing,
/// empty, or containing a chat-control token.
std::string parse_generated_prompt(const std::string& reply, std::vector<std::string>* diagnostics = nullptr);

Synthesis synthesize_primitive(const FailureBundle& bundle, gateway::ChatBackend& teacher,
                               const SynthesisOptions& opts = {});

struct PoolResult {
    std::vector<Primitive> pool;
    std::vector<Synthesis> syntheses;          // accepted, in pool order
    std::vector<std::string> rejections;       // "bundle-id: reason"
    std::size_t duplicates = 0;
};

/// Synthesises bundles in order until `pool_size` distinct primitives exist or bundles run out.
PoolResult synthesize_pool(const std::vector<FailureBundle>& bundles, gateway::ChatBackend& teacher,
                           std::size_t pool_size, const SynthesisOptions& opts = {}, int jobs = 1);

// --- SFT dataset curation ---------------------------------------------------------------

/// System message (primitive + template) and user message (query) for one curated trace.
std::vector<gateway::ChatMessage> curation_messages(const SeedQuery& query, const Primitive& primitive);

/// Uniform primitive index.
std::size_t sample_primitive(Rng& rng, std::size_t pool_size);

struct CurateOptions {
    bool rejection = false;
    std::size_t target = 8000;
    int attempt_cap = 8;
    int max_rounds = 4;
    double temperature = gateway::kTeacherTemperature;
    int max_tokens = 4000;
    std::uint64_t seed = 0;
    int jobs = 1;
};

struct CurateResult {
    std::vector<SftRecord> records;  // slot order
    std::uint64_t teacher_calls = 0;
    std::uint64_t rejected = 0;      // responses discarded by rejection sampling
    std::size_t format_flagged = 0;  // kept responses failing the think/answer template
    std::size_t shortfall = 0;       // target - records.size()
};

/// Slot j starts at query j mod n and draws a fresh primitive per attempt. With rejection,
/// a slot moves to the next query after attempt_cap failures, for at most max_rounds queries.
CurateResult curate_sft(const std::vector<SeedQuery>& queries, const std::vector<Primitive>& pool,
                        gateway::ChatBackend& teacher, const CurateOptions& opts);

class ShortfallError : public DomainError {
public:
    using DomainError::DomainError;
};

// --- serialisation ------------------------------------------------------------------------

nlohmann::json to_json(const SeedQuery& q);
SeedQuery seed_query_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TraceRecord& r);
TraceRecord trace_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Primitive& p);
Primitive primitive_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SftRecord& r);
SftRecord sft_from_json(const nlohmann::json& j);

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows);
void write_json(const std::filesystem::path& path, const nlohmann::json& value);

std::string utc_now();

// --- orchestration ------------------------------------------------------------------------

struct Backends {
    gateway::ChatBackend& student;
    gateway::ChatBackend& teacher;
};

struct Artifacts {
    std::filesystem::path seed_queries, traces, primitives, sft, report;
    nlohmann::json report_json;
};

struct QueryPlan {
    std::vector<SeedQuery> sft;    // curation queries, cfg.sft_range
    std::vector<SeedQuery> trace;  // demonstration-trace queries, cfg.rl_range
};

/// The queries run_pipeline generates for `cfg`.
QueryPlan plan_queries(const RunConfig& cfg);

/// Seed queries -> traces -> bundles -> primitives -> curated SFT set, all written to
/// cfg.output_dir. Stage failures are rethrown with the stage name prefixed.
Artifacts run_pipeline(const RunConfig& cfg, Backends backends);

/// Stage entry points used by the CLI's synthesize/curate subcommands.
PoolResult run_synthesis(const RunConfig& cfg, const std::vector<TraceRecord>& traces, gateway::ChatBackend& teacher);
CurateResult run_curation(const RunConfig& cfg, const std::vector<SeedQuery>& queries,
                          const std::vector<Primitive>& pool, gateway::ChatBackend& teacher);

/// Default clock: fixed epoch for mock backends (byte-reproducible artifacts), else wall time.
std::function<std::string()> clock_for(const gateway::ChatBackend& teacher);

}  // namespace tailor::pipeline
