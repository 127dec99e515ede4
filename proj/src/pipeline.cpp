#include "tailor/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "tailor/igsm.hpp"
#include "tailor/kk.hpp"
#include "tailor/verify.hpp"

namespace tailor::pipeline {

namespace {

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first exception.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> workers;
    const auto count = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
    for (std::size_t w = 0; w < count; ++w) {
        workers.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mu);
                    if (!error) error = std::current_exception();
                    next = n;
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    if (error) std::rethrow_exception(error);
}

std::string hex(std::uint64_t h, int digits) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf + (16 - digits));
}

std::string padded(std::size_t i, int width) {
    std::string s = std::to_string(i);
    return std::string(s.size() < static_cast<std::size_t>(width) ? width - s.size() : 0, '0') + s;
}

std::string gold_text_of(const std::string& task, const nlohmann::json& gold) {
    if (task == "kk") {
        std::string out;
        for (const auto& [name, role] : gold.items()) {
            if (!out.empty()) out += ' ';
            out += name + " is a " + role.get<std::string>() + ".";
        }
        return out;
    }
    return gold.is_string() ? gold.get<std::string>() : gold.dump();
}

}  // namespace

std::vector<SeedQuery> make_seed_queries(const std::string& task, Range range, int count, std::uint64_t seed,
                                         const std::string& prefix, double distractor_ratio) {
    std::vector<SeedQuery> out(static_cast<std::size_t>(std::max(0, count)));
    for (std::size_t i = 0; i < out.size(); ++i) {
        Rng rng = Rng::stream(seed, i);
        SeedQuery& q = out[i];
        q.id = prefix + "-" + padded(i, 5);
        q.task = task;
        if (task == "kk") {
            const int n = static_cast<int>(rng.range(range.lo, range.hi));
            kk::Puzzle p = kk::generate(n, rng.next());
            p.id = q.id;
            q.text = kk::render_puzzle(p);
            q.gold = nlohmann::json::object();
            for (std::size_t k = 0; k < p.names.size(); ++k) q.gold[p.names[k]] = kk::role_name(p.gold[k]);
            q.difficulty = p.difficulty();
        } else if (task == "igsm") {
            igsm::GenOptions opts;
            opts.distractor_ratio = distractor_ratio;
            igsm::Problem p = igsm::generate(range.lo, range.hi, rng.next(), opts);
            q.text = igsm::render_problem(p);
            q.gold = p.gold;
            q.difficulty = p.difficulty;
        } else {
            throw DomainError("unknown task: " + task);
        }
    }
    return out;
}

std::string gold_text(const SeedQuery& q) { return gold_text_of(q.task, q.gold); }

std::string template_instructions(const std::string& task) {
    if (task == "kk") {
        return "Reason step by step inside <think> </think> tags, then give the final answer inside "
               "<answer> </answer> tags using exactly this form:\n"
               "<think>\n... Thinking process ...\n</think>\n<answer>\n"
               "Thus, the final answer is boxed{ {name} is a {role}, ...}.\n</answer>\n"
               "Here name is each character's full name and role is knight or knave. "
               "Assign a role to every character.";
    }
    return "Reason step by step inside <think> </think> tags, then give the final answer inside "
           "<answer> </answer> tags using exactly this form:\n"
           "<think>\n... Thinking process ...\n</think>\n<answer>\n"
           "The final answer is \\boxed{ {answer} }.\n</answer>\n"
           "The answer is always an integer.";
}

CollectResult collect_traces(const std::vector<SeedQuery>& queries, gateway::ChatBackend& student,
                             const CollectOptions& opts) {
    if (opts.samples_per_query < 1) throw DomainError("collect_traces: samples per query must be >= 1");
    std::vector<std::vector<TraceRecord>> per_query(queries.size());
    std::vector<std::string> errors(queries.size());
    std::vector<std::exception_ptr> causes(queries.size());

    parallel_for(queries.size(), opts.jobs, [&](std::size_t i) {
        const SeedQuery& q = queries[i];
        gateway::GenRequest req;
        req.messages = {gateway::ChatMessage::system(template_instructions(q.task)), gateway::ChatMessage::user(q.text)};
        req.temperature = opts.temperature;
        req.n = opts.samples_per_query;
        req.max_tokens = opts.max_tokens;
        std::vector<std::string> completions;
        try {
            completions = student.chat(req);
        } catch (const std::exception& e) {
            errors[i] = q.id + ": " + e.what();
            causes[i] = std::current_exception();
            return;
        }
        for (std::size_t s = 0; s < completions.size(); ++s) {
            TraceRecord r;
            r.query_id = q.id;
            r.task = q.task;
            r.query = q.text;
            r.gold = q.gold;
            r.completion = completions[s];
            r.reward = verify::reward_for(q.task, completions[s], q.gold).reward;
            r.sample_index = static_cast<int>(s);
            per_query[i].push_back(std::move(r));
        }
    });

    CollectResult out;
    std::exception_ptr last;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        if (causes[i]) {
            out.failed_queries.push_back(errors[i]);
            last = causes[i];
        }
        for (auto& r : per_query[i]) out.records.push_back(std::move(r));
    }
    if (!queries.empty() &&
        static_cast<double>(out.failed_queries.size()) > opts.max_failure_rate * static_cast<double>(queries.size())) {
        std::rethrow_exception(last);
    }
    return out;
}

std::vector<FailureBundle> make_bundles(const std::vector<TraceRecord>& records, std::uint64_t seed,
                                        std::size_t count) {
    std::vector<std::size_t> fails, wins;
    for (std::size_t i = 0; i < records.size(); ++i) (records[i].reward == 1 ? wins : fails).push_back(i);
    if (fails.size() < 3) {
        throw DomainError("insufficient incorrect traces: need 3, have " + std::to_string(fails.size()));
    }
    if (wins.empty()) throw DomainError("insufficient correct traces: need 1, have 0");

    Rng rng(seed);
    std::vector<FailureBundle> out;
    out.reserve(count);
    for (std::size_t b = 0; b < count; ++b) {
        FailureBundle bundle;
        std::vector<std::size_t> picked = fails;
        // Partial Fisher-Yates: the first three slots become a draw without replacement.
        for (std::size_t k = 0; k < 3; ++k) {
            const auto j = k + static_cast<std::size_t>(rng.index(picked.size() - k));
            std::swap(picked[k], picked[j]);
            bundle.failures[k] = records[picked[k]];
        }
        bundle.success = records[rng.pick(wins)];
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const TraceRecord* r : {&bundle.failures[0], &bundle.failures[1], &bundle.failures[2], &bundle.success}) {
            h = fnv1a64(r->query_id + "#" + std::to_string(r->sample_index) + ";", h);
        }
        bundle.id = "bundle-" + padded(b, 3) + "-" + hex(h, 8);
        out.push_back(std::move(bundle));
    }
    return out;
}

std::string analysis_prompt(const FailureBundle& bundle) {
    std::ostringstream os;
    os << "You are a large language model. Follow the instructions below carefully. Your goal is to generate "
          "instruction prompts that guide student models to produce high-quality reasoning.\n\n"
          "(1) Below is a correct demonstration generated by a student model for the given query. Analyze the "
          "reasoning process and identify which behaviors or strategies are particularly effective and beneficial "
          "for the model’s reasoning.\n\n"
          "Query (Correct Case):\n"
       << bundle.success.query << "\n\nCorrect CoT:\n"
       << bundle.success.completion
       << "\n\n(2) Below are three failure cases, each consisting of the original query, the incorrect response "
          "from the student model, and the expected ground-truth answer. Analyze why each response is incorrect by "
          "referencing specific steps or reasoning patterns that led to the failure. Based on this analysis, "
          "provide instructions on how to identify and revise the failed demonstration to arrive at the correct "
          "answer.\n\n";
    for (std::size_t i = 0; i < bundle.failures.size(); ++i) {
        const TraceRecord& f = bundle.failures[i];
        os << "Failure Case " << (i + 1) << ":\nQuery: " << f.query << "\nResponse: " << f.completion
           << "\nGround Truth: " << gold_text_of(f.task, f.gold) << "\n\n";
    }
    os << "(3) Based on the comparison between the correct and failed demonstrations, explain what kind of "
          "reasoning behavior is essential for robust and correct student model performance. You should explicitly "
          "go through each failure case one by one using the ground-truth answer, identify the correct reasoning "
          "pattern, uncover any implicit assumptions present in the correct reasoning path that lead to the correct "
          "final answers, and analyze how to correct the incorrect reasoning chains.\n\n"
          "Then, new instruction prompts are designed to: (a) preserve the reasoning pattern exhibited in the "
          "correct demonstration; (b) incorporate the reasoning strategies and implicit assumptions necessary to "
          "reach the correct answers in the failure cases; and (c) guide the language model to self-identify and "
          "self-correct when similar failure patterns arise, steering it toward the correct reasoning path.\n\n"
          "Please perform the entire thinking process described above within the <prompt_think>...</prompt_think> "
          "tag.\n\n"
          "Please output the modified instruction prompt clearly inside <generated_prompt>...</generated_prompt> "
          "tags.\n\n"
          "Please do not include any demonstration example inside <generated_prompt>...</generated_prompt>.\n\n"
          "You should be aware that every query has a valid answer. So the generated prompt must encourage the "
          "language model to conclude a valid answer.\n\n"
          "Do not include unrelated words such as <|im_start|> inside <generated_prompt>...</generated_prompt>, "
          "just instructions for solving the problem.";
    return os.str();
}

namespace {

std::string trimmed(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::optional<std::string> tag_content(const std::string& text, const std::string& tag) {
    const std::string open = "<" + tag + ">", close = "</" + tag + ">";
    const auto b = text.find(open);
    if (b == std::string::npos) return std::nullopt;
    const auto e = text.find(close, b + open.size());
    if (e == std::string::npos) return std::nullopt;
    return text.substr(b + open.size(), e - b - open.size());
}

}  // namespace

std::string parse_generated_prompt(const std::string& reply, std::vector<std::string>* diagnostics) {
    auto body = tag_content(reply, "generated_prompt");
    if (!body) throw DomainError("generated_prompt tag missing");
    if (reply.find("<generated_prompt>", reply.find("<generated_prompt>") + 1) != std::string::npos && diagnostics) {
        diagnostics->push_back("multiple generated_prompt tags; using the first");
    }
    std::string instruction = trimmed(*body);
    if (instruction.empty()) throw DomainError("generated_prompt tag empty");
    const auto open = instruction.find("<|");
    if (open != std::string::npos && instruction.find("|>", open + 2) != std::string::npos) {
        const auto close = instruction.find("|>", open + 2);
        throw DomainError("control token present: " + instruction.substr(open, close + 2 - open));
    }
    return instruction;
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::function<std::string()> clock_for(const gateway::ChatBackend& teacher) {
    if (teacher.is_mock()) return [] { return std::string("1970-01-01T00:00:00Z"); };
    return utc_now;
}

Synthesis synthesize_primitive(const FailureBundle& bundle, gateway::ChatBackend& teacher,
                               const SynthesisOptions& opts) {
    gateway::GenRequest req;
    req.messages = {gateway::ChatMessage::user(analysis_prompt(bundle))};
    req.temperature = opts.temperature;
    req.n = 1;
    req.max_tokens = opts.max_tokens;
    const std::string reply = teacher.chat(req).at(0);

    Synthesis s;
    s.primitive.instruction = parse_generated_prompt(reply, &s.diagnostics);
    s.primitive.id = "prim-" + hex(fnv1a64(s.primitive.instruction), 12);
    s.primitive.bundle_id = bundle.id;
    s.primitive.teacher_model = teacher.model_name();
    s.primitive.created_at = opts.clock ? opts.clock() : utc_now();
    s.analysis = trimmed(tag_content(reply, "prompt_think").value_or(""));
    return s;
}

PoolResult synthesize_pool(const std::vector<FailureBundle>& bundles, gateway::ChatBackend& teacher,
                           std::size_t pool_size, const SynthesisOptions& opts, int jobs) {
    PoolResult out;
    std::set<std::string> seen;
    std::size_t next = 0;
    while (out.pool.size() < pool_size && next < bundles.size()) {
        // Each wave asks for exactly the number still missing; results are taken in bundle order.
        const std::size_t wave = std::min(pool_size - out.pool.size(), bundles.size() - next);
        std::vector<std::optional<Synthesis>> results(wave);
        std::vector<std::string> errors(wave);
        parallel_for(wave, jobs, [&](std::size_t i) {
            try {
                results[i] = synthesize_primitive(bundles[next + i], teacher, opts);
            } catch (const DomainError& e) {
                errors[i] = bundles[next + i].id + ": " + e.what();
            }
        });
        for (std::size_t i = 0; i < wave; ++i) {
            if (!results[i]) {
                out.rejections.push_back(errors[i]);
                continue;
            }
            if (!seen.insert(results[i]->primitive.instruction).second) {
                ++out.duplicates;
                continue;
            }
            if (out.pool.size() < pool_size) {
                out.pool.push_back(results[i]->primitive);
                out.syntheses.push_back(std::move(*results[i]));
            }
        }
        next += wave;
    }
    return out;
}

std::vector<gateway::ChatMessage> curation_messages(const SeedQuery& query, const Primitive& primitive) {
    return {
        gateway::ChatMessage::system(primitive.instruction + "\n\n" + template_instructions(query.task)),
        gateway::ChatMessage::user(query.text),
    };
}

std::size_t sample_primitive(Rng& rng, std::size_t pool_size) {
    return static_cast<std::size_t>(rng.index(pool_size));
}

CurateResult curate_sft(const std::vector<SeedQuery>& queries, const std::vector<Primitive>& pool,
                        gateway::ChatBackend& teacher, const CurateOptions& opts) {
    if (pool.empty()) throw DomainError("curate_sft: primitive pool is empty");
    if (queries.empty()) throw DomainError("curate_sft: no seed queries");
    if (opts.target < 1) throw DomainError("curate_sft: target must be >= 1");
    if (opts.attempt_cap < 1 || opts.max_rounds < 1) throw DomainError("curate_sft: attempt cap and rounds must be >= 1");

    struct Slot {
        std::optional<SftRecord> record;
        std::uint64_t calls = 0;
        std::uint64_t rejected = 0;
    };
    std::vector<Slot> slots(opts.target);

    parallel_for(opts.target, opts.jobs, [&](std::size_t j) {
        Rng rng = Rng::stream(opts.seed, j);
        Slot& slot = slots[j];
        const int rounds = opts.rejection ? opts.max_rounds : 1;
        const int attempts = opts.rejection ? opts.attempt_cap : 1;
        for (int round = 0; round < rounds; ++round) {
            const SeedQuery& q = queries[(j + static_cast<std::size_t>(round)) % queries.size()];
            for (int a = 0; a < attempts; ++a) {
                const Primitive& z = pool[sample_primitive(rng, pool.size())];
                gateway::GenRequest req;
                req.messages = curation_messages(q, z);
                req.temperature = opts.temperature;
                req.n = 1;
                req.max_tokens = opts.max_tokens;
                std::string response = teacher.chat(req).at(0);
                ++slot.calls;
                SftRecord rec{q.id, q.text, std::move(response), z.id, std::nullopt, q.difficulty, q.task};
                if (opts.rejection) {
                    if (verify::reward_for(q.task, rec.response, q.gold).reward != 1) {
                        ++slot.rejected;
                        continue;
                    }
                    rec.reward = 1;
                }
                slot.record = std::move(rec);
                return;
            }
        }
    });

    CurateResult out;
    for (auto& s : slots) {
        out.teacher_calls += s.calls;
        out.rejected += s.rejected;
        if (!s.record) continue;
        if (!verify::check_template(s.record->response)) ++out.format_flagged;
        out.records.push_back(std::move(*s.record));
    }
    out.shortfall = opts.target - out.records.size();
    return out;
}

// --- serialisation ------------------------------------------------------------------------

nlohmann::json to_json(const SeedQuery& q) {
    return {{"id", q.id}, {"task", q.task}, {"query", q.text}, {"gold", q.gold}, {"difficulty", q.difficulty}};
}

SeedQuery seed_query_from_json(const nlohmann::json& j) {
    return {j.at("id").get<std::string>(), j.at("task").get<std::string>(), j.at("query").get<std::string>(),
            j.at("gold"), j.value("difficulty", 0)};
}

nlohmann::json to_json(const TraceRecord& r) {
    return {{"id", r.query_id}, {"task", r.task},     {"query", r.query},
            {"gold", r.gold},   {"completion", r.completion}, {"reward", r.reward},
            {"sample_index", r.sample_index}};
}

TraceRecord trace_from_json(const nlohmann::json& j) {
    TraceRecord r;
    r.query_id = j.at("id").get<std::string>();
    r.task = j.at("task").get<std::string>();
    r.query = j.value("query", "");
    r.gold = j.at("gold");
    r.completion = j.at("completion").get<std::string>();
    r.reward = j.contains("reward") ? j.at("reward").get<int>()
                                    : verify::reward_for(r.task, r.completion, r.gold).reward;
    r.sample_index = j.value("sample_index", 0);
    return r;
}

nlohmann::json to_json(const Primitive& p) {
    return {{"id", p.id},
            {"instruction", p.instruction},
            {"bundle_id", p.bundle_id},
            {"teacher_model", p.teacher_model},
            {"created_at", p.created_at}};
}

Primitive primitive_from_json(const nlohmann::json& j) {
    return {j.at("id").get<std::string>(), j.at("instruction").get<std::string>(), j.value("bundle_id", ""),
            j.value("teacher_model", ""), j.value("created_at", "")};
}

nlohmann::json to_json(const SftRecord& r) {
    return {{"query_id", r.query_id},
            {"query", r.query},
            {"response", r.response},
            {"primitive_id", r.primitive_id},
            {"reward", r.reward ? nlohmann::json(*r.reward) : nlohmann::json(nullptr)},
            {"difficulty", r.difficulty},
            {"task", r.task}};
}

SftRecord sft_from_json(const nlohmann::json& j) {
    SftRecord r;
    r.query_id = j.at("query_id").get<std::string>();
    r.query = j.value("query", "");
    r.response = j.at("response").get<std::string>();
    r.primitive_id = j.value("primitive_id", "");
    if (j.contains("reward") && !j.at("reward").is_null()) r.reward = j.at("reward").get<int>();
    r.difficulty = j.value("difficulty", 0);
    r.task = j.value("task", "");
    return r;
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open " + path.string());
    std::vector<nlohmann::json> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            rows.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::parse_error& e) {
            throw DomainError(path.string() + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
        }
    }
    return rows;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DomainError("cannot write " + path.string());
    for (const auto& r : rows) out << r.dump() << '\n';
}

void write_json(const std::filesystem::path& path, const nlohmann::json& value) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DomainError("cannot write " + path.string());
    out << value.dump(2) << '\n';
}

// --- orchestration ------------------------------------------------------------------------

namespace {

enum StageSeed : std::uint64_t { kSftQueries = 1, kTraceQueries = 2, kBundles = 3, kCuration = 4 };

std::uint64_t stage_seed(std::uint64_t seed, StageSeed stage) { return Rng::stream(seed, stage).next(); }

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const TransportError& e) {
        throw TransportError(std::string(name) + ": " + e.what(), e.attempts());
    } catch (const ShortfallError& e) {
        throw ShortfallError(std::string(name) + ": " + e.what());
    } catch (const DomainError& e) {
        throw DomainError(std::string(name) + ": " + e.what());
    }
}

void ensure_writable(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    const auto probe = dir / ".write_probe";
    std::ofstream out(probe);
    if (ec || !out) throw DomainError("config.output_dir: " + dir.string() + " is not writable");
    out.close();
    std::filesystem::remove(probe, ec);
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

PoolResult run_synthesis(const RunConfig& cfg, const std::vector<TraceRecord>& traces, gateway::ChatBackend& teacher) {
    const auto pool_size = static_cast<std::size_t>(cfg.pool_size);
    // Spare bundles cover rejected or duplicate syntheses.
    const auto bundles = make_bundles(traces, stage_seed(cfg.seed, kBundles), 2 * pool_size);
    SynthesisOptions opts;
    opts.temperature = cfg.teacher_temperature;
    opts.max_tokens = cfg.max_tokens;
    opts.clock = clock_for(teacher);
    PoolResult pool = synthesize_pool(bundles, teacher, pool_size, opts, cfg.jobs);
    if (pool.pool.empty()) throw DomainError("no primitive could be synthesised");
    return pool;
}

CurateResult run_curation(const RunConfig& cfg, const std::vector<SeedQuery>& queries,
                          const std::vector<Primitive>& pool, gateway::ChatBackend& teacher) {
    CurateOptions opts;
    opts.rejection = cfg.effective_rejection();
    opts.target = static_cast<std::size_t>(cfg.sft_target);
    opts.attempt_cap = cfg.attempt_cap;
    opts.max_rounds = cfg.max_rounds;
    opts.temperature = cfg.teacher_temperature;
    opts.max_tokens = cfg.max_tokens;
    opts.seed = stage_seed(cfg.seed, kCuration);
    opts.jobs = cfg.jobs;
    return curate_sft(queries, pool, teacher, opts);
}

QueryPlan plan_queries(const RunConfig& cfg) {
    return {make_seed_queries(cfg.task, cfg.effective_sft_range(), cfg.effective_seed_queries(),
                              stage_seed(cfg.seed, kSftQueries), "sft", cfg.distractor_ratio),
            make_seed_queries(cfg.task, cfg.effective_rl_range(), cfg.trace_queries,
                              stage_seed(cfg.seed, kTraceQueries), "rl", cfg.distractor_ratio)};
}

Artifacts run_pipeline(const RunConfig& cfg, Backends backends) {
    cfg.validate();
    const std::filesystem::path dir(cfg.output_dir);
    ensure_writable(dir);
    Artifacts art{dir / "seed_queries.jsonl", dir / "traces.jsonl", dir / "primitives.json", dir / "sft.jsonl",
                  dir / "report.json", {}};
    nlohmann::json timings = nlohmann::json::object();

    auto t0 = std::chrono::steady_clock::now();
    const auto plan = stage("generate", [&] { return plan_queries(cfg); });
    const auto& seed_queries = plan.sft;
    const auto& trace_queries = plan.trace;
    timings["generate"] = elapsed_ms(t0);

    t0 = std::chrono::steady_clock::now();
    const auto traces = stage("collect", [&] {
        CollectOptions opts;
        opts.samples_per_query = cfg.samples_per_query;
        opts.temperature = cfg.student_temperature;
        opts.max_tokens = cfg.max_tokens;
        opts.jobs = cfg.jobs;
        return collect_traces(trace_queries, backends.student, opts);
    });
    timings["collect"] = elapsed_ms(t0);

    t0 = std::chrono::steady_clock::now();
    const auto pool = stage("synthesize", [&] { return run_synthesis(cfg, traces.records, backends.teacher); });
    timings["synthesize"] = elapsed_ms(t0);

    t0 = std::chrono::steady_clock::now();
    const auto curated = stage("curate", [&] { return run_curation(cfg, seed_queries, pool.pool, backends.teacher); });
    timings["curate"] = elapsed_ms(t0);

    std::vector<nlohmann::json> rows;
    for (const auto& q : seed_queries) rows.push_back(to_json(q));
    write_jsonl(art.seed_queries, rows);
    rows.clear();
    for (const auto& r : traces.records) rows.push_back(to_json(r));
    write_jsonl(art.traces, rows);
    nlohmann::json pool_json = nlohmann::json::array();
    for (const auto& p : pool.pool) pool_json.push_back(to_json(p));
    write_json(art.primitives, pool_json);
    rows.clear();
    for (const auto& r : curated.records) rows.push_back(to_json(r));
    write_jsonl(art.sft, rows);

    std::size_t correct = 0;
    for (const auto& r : traces.records) correct += r.reward == 1;
    nlohmann::json summaries = nlohmann::json::array();
    for (const auto& s : pool.syntheses) {
        summaries.push_back({{"bundle_id", s.primitive.bundle_id},
                             {"primitive_id", s.primitive.id},
                             {"analysis", s.analysis},
                             {"diagnostics", s.diagnostics}});
    }
    const auto student_stats = backends.student.stats();
    const auto teacher_stats = backends.teacher.stats();
    art.report_json = {
        {"tool_version", kToolVersion},
        {"schema_version", kSchemaVersion},
        {"command", "pipeline run"},
        {"config", config_to_json(cfg)},
        {"stage_timings_ms", timings},
        {"counts",
         {{"seed_queries", seed_queries.size()},
          {"trace_queries", trace_queries.size()},
          {"traces", traces.records.size()},
          {"trace_query_failures", traces.failed_queries.size()},
          {"primitives", pool.pool.size()},
          {"primitive_rejections", pool.rejections.size()},
          {"primitive_duplicates", pool.duplicates},
          {"sft_records", curated.records.size()},
          {"sft_target", cfg.sft_target},
          {"shortfall", curated.shortfall},
          {"format_flagged", curated.format_flagged}}},
        {"reward_rates",
         {{"student", traces.records.empty() ? 0.0
                                             : static_cast<double>(correct) / static_cast<double>(traces.records.size())},
          {"curation_acceptance",
           curated.teacher_calls == 0 ? 0.0
                                      : static_cast<double>(curated.records.size()) /
                                            static_cast<double>(curated.teacher_calls)}}},
        {"retries",
         {{"student_transport", student_stats.retries},
          {"teacher_transport", teacher_stats.retries},
          {"curation_rejected", curated.rejected},
          {"curation_teacher_calls", curated.teacher_calls}}},
        {"failed_queries", traces.failed_queries},
        {"primitive_rejections", pool.rejections},
        {"failure_summaries", std::move(summaries)},
        {"artifacts",
         {{"seed_queries", art.seed_queries.string()},
          {"traces", art.traces.string()},
          {"primitives", art.primitives.string()},
          {"sft", art.sft.string()},
          {"report", art.report.string()}}},
    };
    write_json(art.report, art.report_json);

    if (curated.shortfall > 0) {
        throw ShortfallError("curate: rejection sampling produced " + std::to_string(curated.records.size()) + " of " +
                             std::to_string(cfg.sft_target) + " records (shortfall " +
                             std::to_string(curated.shortfall) + "); partial dataset written to " + art.sft.string());
    }
    return art;
}

}  // namespace tailor::pipeline
