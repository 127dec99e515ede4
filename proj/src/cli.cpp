#include "tailor/cli.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tailor/config.hpp"
#include "tailor/diversity.hpp"
#include "tailor/error.hpp"
#include "tailor/gateway.hpp"
#include "tailor/igsm.hpp"
#include "tailor/kk.hpp"
#include "tailor/objectives.hpp"
#include "tailor/pipeline.hpp"
#include "tailor/rng.hpp"
#include "tailor/verify.hpp"

namespace tailor::cli {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

json run_report(const std::string& command, json config, json timings, json counts, json artifacts) {
    return {{"tool_version", kToolVersion},
            {"schema_version", kSchemaVersion},
            {"command", command},
            {"config", std::move(config)},
            {"stage_timings_ms", std::move(timings)},
            {"counts", std::move(counts)},
            {"artifacts", std::move(artifacts)}};
}

/// Rows go to `path` when given (and a report line to stdout), else straight to stdout.
void emit_rows(const std::vector<json>& rows, const std::string& path, std::ostream& out) {
    if (path.empty()) {
        for (const auto& r : rows) out << r.dump() << '\n';
    } else {
        pipeline::write_jsonl(path, rows);
    }
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw DomainError(path + ": invalid JSON: " + e.what());
    }
}

Range resolve_range(std::optional<int> lo, std::optional<int> hi, const Range& fallback, const char* lo_flag,
                    const char* hi_flag) {
    Range r{lo.value_or(fallback.lo), hi.value_or(fallback.hi)};
    if (r.lo > r.hi) {
        throw DomainError(std::string(lo_flag) + " " + std::to_string(r.lo) + " exceeds " + hi_flag + " " +
                          std::to_string(r.hi));
    }
    return r;
}

Range split_of(const TaskRanges& t, const std::string& split) {
    if (split == "sft") return t.sft;
    if (split == "rl") return t.rl;
    if (split == "eval") return t.eval;
    return t.ood;
}

struct GenArgs {
    std::optional<int> lo, hi;
    int count = 10;
    std::uint64_t seed = 0;
    std::string out;
    std::string split = "sft";
    std::string preset = "medium";
    double distractor_ratio = 0.3;
};

int gen_kk(const GenArgs& a, std::ostream& out, std::ostream& err) {
    const Range range = resolve_range(a.lo, a.hi, split_of(default_ranges("kk"), a.split), "--n-min", "--n-max");
    if (range.lo < 2 || range.hi > kk::kMaxPersons) {
        throw DomainError("character count must lie in [2, " + std::to_string(kk::kMaxPersons) + "]");
    }
    const auto t0 = Clock::now();
    std::vector<json> rows;
    for (int i = 0; i < a.count; ++i) {
        Rng rng = Rng::stream(a.seed, static_cast<std::uint64_t>(i));
        const int n = static_cast<int>(rng.range(range.lo, range.hi));
        kk::Puzzle p = kk::generate(n, rng.next());
        p.id = "kk-" + std::to_string(i);
        rows.push_back(kk::puzzle_to_json(p));
    }
    const double gen_ms = ms_since(t0);
    emit_rows(rows, a.out, out);
    err << "gen-kk: " << rows.size() << " puzzles, " << range.lo << "-" << range.hi << " characters\n";
    if (!a.out.empty()) {
        out << run_report("gen-kk", {{"n_min", range.lo}, {"n_max", range.hi}, {"count", a.count}, {"seed", a.seed}},
                          {{"generate", gen_ms}}, {{"rows", rows.size()}}, {{"puzzles", a.out}})
                   .dump()
            << '\n';
    }
    return 0;
}

int gen_igsm(const GenArgs& a, std::ostream& out, std::ostream& err) {
    const Range range =
        resolve_range(a.lo, a.hi, split_of(default_ranges("igsm", a.preset), a.split), "--ops-min", "--ops-max");
    if (range.lo < 1) throw DomainError("--ops-min must be >= 1");
    igsm::GenOptions opts;
    opts.distractor_ratio = a.distractor_ratio;
    const auto t0 = Clock::now();
    std::vector<json> rows;
    for (int i = 0; i < a.count; ++i) {
        Rng rng = Rng::stream(a.seed, static_cast<std::uint64_t>(i));
        igsm::Problem p = igsm::generate(range.lo, range.hi, rng.next(), opts);
        p.id = "igsm-" + std::to_string(i);
        rows.push_back(igsm::problem_to_json(p));
    }
    const double gen_ms = ms_since(t0);
    emit_rows(rows, a.out, out);
    err << "gen-igsm: " << rows.size() << " problems, " << range.lo << "-" << range.hi << " operations\n";
    if (!a.out.empty()) {
        out << run_report("gen-igsm",
                          {{"ops_min", range.lo},
                           {"ops_max", range.hi},
                           {"count", a.count},
                           {"seed", a.seed},
                           {"preset", a.preset},
                           {"distractor_ratio", a.distractor_ratio}},
                          {{"generate", gen_ms}}, {{"rows", rows.size()}}, {{"problems", a.out}})
                   .dump()
            << '\n';
    }
    return 0;
}

int solve_cmd(const std::string& in, std::ostream& out, std::ostream& err) {
    std::size_t unique = 0, rows = 0;
    for (const auto& row : pipeline::read_jsonl(in)) {
        const kk::Puzzle p = kk::puzzle_from_json(row);
        std::uint64_t candidates = 0;
        const auto solutions = kk::solve(p.statements, &candidates);
        json sols = json::array();
        for (const auto& s : solutions) {
            json m = json::object();
            for (std::size_t i = 0; i < p.names.size(); ++i) m[p.names[i]] = kk::role_name(s[i]);
            sols.push_back(std::move(m));
        }
        unique += solutions.size() == 1;
        ++rows;
        out << json{{"id", p.id}, {"count", solutions.size()}, {"candidates", candidates}, {"solutions", sols}}.dump()
            << '\n';
    }
    err << "solve: " << rows << " puzzles, " << unique << " with a unique solution\n";
    return 0;
}

int verify_cmd(const std::string& task, const std::string& in, const std::string& out_path, bool require_format,
               std::ostream& out, std::ostream& err) {
    const auto t0 = Clock::now();
    std::vector<json> rows;
    std::size_t rewarded = 0, malformed = 0;
    for (const auto& row : pipeline::read_jsonl(in)) {
        if (row.contains("task") && row.at("task") != task) {
            throw DomainError("row " + row.value("id", "?") + " has task " + row.at("task").dump() +
                              ", expected \"" + task + "\"");
        }
        verify::RewardReport r = verify::reward_for(task, row.at("completion").get<std::string>(), row.at("gold"));
        if (require_format && !r.format_ok && r.reward == 1) {
            r.reward = 0;
            r.diagnostics.push_back("reward withheld: response breaks the think/answer template");
        }
        rewarded += r.reward;
        malformed += !r.format_ok;
        json j = verify::to_json(r);
        j["id"] = row.value("id", "");
        rows.push_back(std::move(j));
    }
    emit_rows(rows, out_path, out);
    err << "verify: " << rows.size() << " rows, " << rewarded << " rewarded, " << malformed
        << " outside the template\n";
    if (!out_path.empty()) {
        out << run_report("verify", {{"task", task}, {"in", in}, {"require_format", require_format}},
                          {{"verify", ms_since(t0)}},
                          {{"rows", rows.size()}, {"rewarded", rewarded}, {"format_violations", malformed}},
                          {{"rewards", out_path}})
                   .dump()
            << '\n';
    }
    return 0;
}

struct PipelineBackends {
    std::unique_ptr<gateway::ChatBackend> student, teacher;
};

int pipeline_run(const std::string& config_path, int jobs, std::ostream& out, std::ostream& err) {
    RunConfig cfg = load_config(config_path);
    if (jobs > 0) cfg.jobs = jobs;
    auto student = gateway::make_backend(cfg.student);
    auto teacher = gateway::make_backend(cfg.teacher);
    try {
        const auto art = pipeline::run_pipeline(cfg, {*student, *teacher});
        out << art.report_json.dump() << '\n';
        const auto& c = art.report_json.at("counts");
        err << "pipeline: " << c.at("primitives") << " primitives, " << c.at("sft_records") << " SFT records in "
            << cfg.output_dir << "\n";
    } catch (const pipeline::ShortfallError&) {
        // The partial report is on disk; surface it before failing.
        const auto report = std::filesystem::path(cfg.output_dir) / "report.json";
        if (std::filesystem::exists(report)) out << read_json_file(report.string()).dump() << '\n';
        throw;
    }
    return 0;
}

int pipeline_synthesize(const std::string& config_path, const std::string& traces_path, const std::string& out_path,
                        int jobs, std::ostream& out, std::ostream& err) {
    RunConfig cfg = load_config(config_path);
    if (jobs > 0) cfg.jobs = jobs;
    auto teacher = gateway::make_backend(cfg.teacher);
    const auto t0 = Clock::now();
    std::vector<pipeline::TraceRecord> traces;
    for (const auto& row : pipeline::read_jsonl(traces_path)) traces.push_back(pipeline::trace_from_json(row));
    const auto pool = pipeline::run_synthesis(cfg, traces, *teacher);
    json arr = json::array();
    for (const auto& p : pool.pool) arr.push_back(pipeline::to_json(p));
    pipeline::write_json(out_path, arr);
    err << "synthesize: " << pool.pool.size() << " primitives, " << pool.rejections.size() << " rejected, "
        << pool.duplicates << " duplicates\n";
    out << run_report("pipeline synthesize", config_to_json(cfg), {{"synthesize", ms_since(t0)}},
                      {{"traces", traces.size()},
                       {"primitives", pool.pool.size()},
                       {"primitive_rejections", pool.rejections.size()},
                       {"primitive_duplicates", pool.duplicates}},
                      {{"primitives", out_path}})
               .dump()
        << '\n';
    return 0;
}

int pipeline_curate(const std::string& config_path, const std::string& queries_path,
                    const std::string& primitives_path, const std::string& out_path,
                    const std::optional<std::string>& rejection, int jobs, std::ostream& out, std::ostream& err) {
    RunConfig cfg = load_config(config_path);
    if (jobs > 0) cfg.jobs = jobs;
    if (rejection) cfg.rejection = *rejection == "on";
    auto teacher = gateway::make_backend(cfg.teacher);
    const auto t0 = Clock::now();
    std::vector<pipeline::SeedQuery> queries;
    for (const auto& row : pipeline::read_jsonl(queries_path)) queries.push_back(pipeline::seed_query_from_json(row));
    std::vector<pipeline::Primitive> pool;
    for (const auto& p : read_json_file(primitives_path)) pool.push_back(pipeline::primitive_from_json(p));
    const auto result = pipeline::run_curation(cfg, queries, pool, *teacher);
    std::vector<json> rows;
    for (const auto& r : result.records) rows.push_back(pipeline::to_json(r));
    pipeline::write_jsonl(out_path, rows);
    out << run_report("pipeline curate", config_to_json(cfg), {{"curate", ms_since(t0)}},
                      {{"sft_records", result.records.size()},
                       {"sft_target", cfg.sft_target},
                       {"shortfall", result.shortfall},
                       {"teacher_calls", result.teacher_calls},
                       {"rejected", result.rejected},
                       {"format_flagged", result.format_flagged}},
                      {{"sft", out_path}})
               .dump()
        << '\n';
    err << "curate: " << result.records.size() << " of " << cfg.sft_target << " records\n";
    if (result.shortfall > 0) {
        throw pipeline::ShortfallError("rejection sampling produced " + std::to_string(result.records.size()) +
                                       " of " + std::to_string(cfg.sft_target) + " records");
    }
    return 0;
}

int objectives_check(const std::string& in, std::ostream& out, std::ostream& err) {
    const json result = objectives::check(read_json_file(in));
    for (const auto& g : result) out << g.dump() << '\n';
    err << "objectives: " << result.size() << " groups\n";
    return 0;
}

struct DiversityArgs {
    std::string in, out, csv, backend = "fallback", config;
    bool pooled = false;
    std::size_t dim = 4096;
};

int diversity_score(const DiversityArgs& a, std::ostream& out, std::ostream& err) {
    const auto t0 = Clock::now();
    std::vector<diversity::Record> records;
    for (const auto& row : pipeline::read_jsonl(a.in)) {
        records.push_back({row.at("query_id").get<std::string>(), row.at("response").get<std::string>()});
    }
    std::unique_ptr<diversity::Embedder> embedder;
    if (a.backend == "remote") {
        EmbeddingConfig emb;
        if (!a.config.empty()) emb = load_config(a.config).embedding;
        embedder = std::make_unique<diversity::RemoteEmbedder>(emb.remote);
    } else {
        embedder = std::make_unique<diversity::HashedTfEmbedder>(a.dim);
    }
    const auto report = diversity::group_similarity(records, *embedder, a.pooled);
    const json rj = diversity::to_json(report);
    if (a.out.empty()) {
        out << rj.dump() << '\n';
    } else {
        pipeline::write_json(a.out, rj);
    }
    if (!a.csv.empty()) {
        std::ofstream csv(a.csv, std::ios::binary | std::ios::trunc);
        if (!csv) throw DomainError("cannot write " + a.csv);
        csv << diversity::to_csv(report);
    }
    err << "diversity: " << report.groups.size() << " groups, median " << report.summary.median << "\n";
    if (!a.out.empty()) {
        json artifacts = {{"report", a.out}};
        if (!a.csv.empty()) artifacts["csv"] = a.csv;
        out << run_report("diversity score", {{"in", a.in}, {"backend", a.backend}, {"pooled", a.pooled}},
                          {{"score", ms_since(t0)}},
                          {{"records", records.size()}, {"groups", report.groups.size()}}, std::move(artifacts))
                   .dump()
            << '\n';
    }
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Warm-start SFT data pipeline: benchmarks, verification, primitive synthesis, curation"};
    app.name("tailor");
    app.require_subcommand(1);
    int jobs = 0;
    app.add_option("--jobs", jobs, "Worker threads; overrides the config value")->check(CLI::NonNegativeNumber);
    bool version = false;
    app.add_flag("--version", version, "Print tool and schema versions");

    GenArgs kk_args;
    auto* kk_cmd = app.add_subcommand("gen-kk", "Generate Knights & Knaves puzzles as JSONL");
    kk_cmd->add_option("--n-min", kk_args.lo, "Fewest characters");
    kk_cmd->add_option("--n-max", kk_args.hi, "Most characters");
    kk_cmd->add_option("--count", kk_args.count)->check(CLI::NonNegativeNumber);
    kk_cmd->add_option("--seed", kk_args.seed);
    kk_cmd->add_option("--out", kk_args.out, "Output JSONL; stdout when omitted");
    kk_cmd->add_option("--split", kk_args.split, "Default range when --n-min/--n-max are omitted")
        ->check(CLI::IsMember({"sft", "rl", "eval", "ood"}));

    GenArgs ig_args;
    auto* ig_cmd = app.add_subcommand("gen-igsm", "Generate iGSM problems as JSONL");
    ig_cmd->add_option("--ops-min", ig_args.lo, "Fewest operations");
    ig_cmd->add_option("--ops-max", ig_args.hi, "Most operations");
    ig_cmd->add_option("--count", ig_args.count)->check(CLI::NonNegativeNumber);
    ig_cmd->add_option("--seed", ig_args.seed);
    ig_cmd->add_option("--out", ig_args.out, "Output JSONL; stdout when omitted");
    ig_cmd->add_option("--preset", ig_args.preset)->check(CLI::IsMember({"medium", "hard"}));
    ig_cmd->add_option("--split", ig_args.split, "Default range when --ops-min/--ops-max are omitted")
        ->check(CLI::IsMember({"sft", "rl", "eval", "ood"}));
    ig_cmd->add_option("--distractor-ratio", ig_args.distractor_ratio)->check(CLI::Range(0.0, 1.0));

    std::string solve_in;
    auto* solve = app.add_subcommand("solve", "Enumerate every consistent assignment of KK puzzles");
    solve->add_option("--in", solve_in, "Puzzle JSONL")->required();

    std::string v_task, v_in, v_out;
    bool v_format = false;
    auto* verify = app.add_subcommand("verify", "Score completions against gold answers");
    verify->add_option("--task", v_task)->required()->check(CLI::IsMember({"kk", "igsm"}));
    verify->add_option("--in", v_in, "Trace JSONL with id, task, query, completion, gold")->required();
    verify->add_option("--out", v_out, "RewardReport JSONL; stdout when omitted");
    verify->add_flag("--require-format", v_format, "Withhold reward from responses outside the template");

    auto* pipe = app.add_subcommand("pipeline", "Trace analysis, primitive synthesis and SFT curation");
    pipe->require_subcommand(1);
    std::string p_config, p_traces, p_queries, p_primitives, p_out;
    std::optional<std::string> p_rejection;
    auto* p_run = pipe->add_subcommand("run", "Run every stage and write artifacts to output_dir");
    p_run->add_option("--config", p_config)->required();
    auto* p_syn = pipe->add_subcommand("synthesize", "Build a primitive pool from labelled traces");
    p_syn->add_option("--config", p_config)->required();
    p_syn->add_option("--traces", p_traces, "Trace JSONL")->required();
    p_syn->add_option("--out", p_out, "Primitive pool JSON")->required();
    auto* p_cur = pipe->add_subcommand("curate", "Curate an SFT dataset from seed queries and a primitive pool");
    p_cur->add_option("--config", p_config)->required();
    p_cur->add_option("--queries", p_queries, "Seed query JSONL")->required();
    p_cur->add_option("--primitives", p_primitives, "Primitive pool JSON")->required();
    p_cur->add_option("--out", p_out, "SFT JSONL")->required();
    p_cur->add_option("--rejection", p_rejection)->check(CLI::IsMember({"on", "off"}));

    auto* obj = app.add_subcommand("objectives", "Reference RL objective values");
    obj->require_subcommand(1);
    std::string o_in;
    auto* o_check = obj->add_subcommand("check", "Surrogate, advantages and NLL for groups in a JSON file");
    o_check->add_option("--in", o_in)->required();

    auto* div = app.add_subcommand("diversity", "Embedding-similarity diversity of SFT thinking text");
    div->require_subcommand(1);
    DiversityArgs d;
    auto* d_score = div->add_subcommand("score", "Per-query mean pairwise cosine similarity");
    d_score->add_option("--in", d.in, "SFT JSONL")->required();
    d_score->add_option("--backend", d.backend)->check(CLI::IsMember({"fallback", "remote"}));
    d_score->add_option("--out", d.out, "Report JSON; stdout when omitted");
    d_score->add_option("--csv", d.csv, "CSV of group means");
    d_score->add_flag("--pooled", d.pooled, "Summarise every pairwise value instead of group means");
    d_score->add_option("--dim", d.dim, "Fallback embedding dimension")->check(CLI::Range(2, 1 << 20));
    d_score->add_option("--config", d.config, "Run config providing the remote embedding backend");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    // --version alone must not trip the required-subcommand check.
    if (std::find(args.begin(), args.end(), "--version") != args.end()) {
        out << json{{"tool_version", kToolVersion}, {"schema_version", kSchemaVersion}}.dump() << '\n';
        return 0;
    }
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (*kk_cmd) return gen_kk(kk_args, out, err);
        if (*ig_cmd) return gen_igsm(ig_args, out, err);
        if (*solve) return solve_cmd(solve_in, out, err);
        if (*verify) return verify_cmd(v_task, v_in, v_out, v_format, out, err);
        if (*p_run) return pipeline_run(p_config, jobs, out, err);
        if (*p_syn) return pipeline_synthesize(p_config, p_traces, p_out, jobs, out, err);
        if (*p_cur) return pipeline_curate(p_config, p_queries, p_primitives, p_out, p_rejection, jobs, out, err);
        if (*o_check) return objectives_check(o_in, out, err);
        if (*d_score) return diversity_score(d, out, err);
    } catch (const TransportError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    err << app.help();
    return 1;
}

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace tailor::cli
