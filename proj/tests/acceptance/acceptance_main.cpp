// One PASS/FAIL line per acceptance criterion; exits nonzero if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "fixtures/mock_models.hpp"
#include "fixtures/reference_cases.hpp"
#include "tailor/config.hpp"
#include "tailor/diversity.hpp"
#include "tailor/igsm.hpp"
#include "tailor/kk.hpp"
#include "tailor/objectives.hpp"
#include "tailor/pipeline.hpp"
#include "tailor/rng.hpp"
#include "tailor/verify.hpp"

using namespace tailor;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) {
            pass = false;
            detail = what;
        }
    }
};

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) { return std::chrono::duration<double, std::milli>(Clock::now() - t0).count(); }

std::string fmt(double v, const char* spec = "%.3g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

verify::KkGold gold_map(const kk::Puzzle& p) {
    verify::KkGold g;
    for (std::size_t i = 0; i < p.names.size(); ++i) g[p.names[i]] = p.gold[i];
    return g;
}

// 1. KK reference puzzle.
Outcome kk_fixture() {
    Outcome o;
    const auto t0 = Clock::now();
    const auto p = fixtures::seven_person_puzzle();
    const auto solutions = kk::solve(p.statements);
    const double ms = ms_since(t0);
    o.require(solutions.size() == 1, std::to_string(solutions.size()) + " consistent assignments");
    if (solutions.size() == 1) {
        const std::map<std::string, kk::Role> expected = {
            {"Abigail", kk::Role::Knight}, {"Aria", kk::Role::Knight}, {"Liam", kk::Role::Knight},
            {"James", kk::Role::Knight},   {"David", kk::Role::Knight}, {"Jacob", kk::Role::Knave},
            {"Amelia", kk::Role::Knave}};
        for (std::size_t i = 0; i < p.names.size(); ++i)
            o.require(solutions[0][i] == expected.at(p.names[i]), p.names[i] + " has the wrong role");
    }
    o.require(ms < 10.0, "took " + fmt(ms) + " ms");
    if (o.pass) o.detail = "1 assignment, " + fmt(ms) + " ms";
    return o;
}

// 2. iGSM reference problem.
Outcome igsm_fixture() {
    Outcome o;
    const auto t0 = Clock::now();
    const auto p = igsm::make_problem("store", fixtures::store_inventory_graph());
    const auto values = igsm::eval_graph(p.graph);
    const auto cot = igsm::rule_cot(p);
    const auto boxed = verify::extract_boxed(cot);
    const double ms = ms_since(t0);
    o.require(values.at(static_cast<std::size_t>(p.graph.query)) == 936, "query evaluates to " +
                                                                              std::to_string(values.at(p.graph.query)));
    o.require(boxed && *boxed == "936", "CoT boxes " + boxed.value_or("nothing"));
    o.require(verify::igsm_reward(cot, 936).reward == 1, "CoT not rewarded");
    o.require(ms < 10.0, "took " + fmt(ms) + " ms");
    if (o.pass) o.detail = "936, " + fmt(ms) + " ms";
    return o;
}

// 3. Generator round trip.
Outcome round_trip() {
    Outcome o;
    const auto t0 = Clock::now();
    int kk_ok = 0, ig_ok = 0;
    for (int i = 0; i < 1000; ++i) {
        const int n = 4 + i % 10;
        const auto p = kk::generate(n, static_cast<std::uint64_t>(i));
        const bool unique = kk::solve(p.statements).size() == 1;
        const bool rewarded = verify::kk_reward(kk::rule_cot(p), gold_map(p)).reward == 1;
        kk_ok += unique && rewarded;
        o.require(unique, "kk n=" + std::to_string(n) + " seed " + std::to_string(i) + " not unique");
        o.require(rewarded, "kk n=" + std::to_string(n) + " seed " + std::to_string(i) + " CoT not rewarded");
    }
    for (int i = 0; i < 1000; ++i) {
        const int ops = 1 + i % 35;
        const auto p = igsm::generate(ops, ops, static_cast<std::uint64_t>(i));
        const bool rewarded = verify::igsm_reward(igsm::rule_cot(p), p.gold).reward == 1;
        ig_ok += rewarded;
        o.require(rewarded, "igsm ops=" + std::to_string(ops) + " seed " + std::to_string(i) + " CoT not rewarded");
    }
    const double ms = ms_since(t0);
    o.require(ms < 60'000.0, "took " + fmt(ms / 1000.0) + " s");
    if (o.pass) o.detail = std::to_string(kk_ok) + "/1000 kk, " + std::to_string(ig_ok) + "/1000 igsm, " +
                           fmt(ms / 1000.0) + " s";
    return o;
}

// 4. Verifier mutations.
Outcome mutations() {
    Outcome o;
    int mutated = 0, zeroed = 0;
    for (int i = 0; i < 250; ++i) {
        const auto p = kk::generate(4 + i % 10, 10'000 + static_cast<std::uint64_t>(i));
        const auto cot = kk::rule_cot(p);
        const auto gold = gold_map(p);
        o.require(verify::kk_reward(cot, gold).reward == 1, "unmutated kk fixture not rewarded");
        const auto& name = p.names[static_cast<std::size_t>(i) % p.names.size()];
        auto flipped = gold;
        flipped[name] = kk::flip(flipped[name]);
        ++mutated;
        zeroed += verify::kk_reward(cot, flipped).reward == 0;
    }
    for (int i = 0; i < 250; ++i) {
        const auto p = igsm::generate(1 + i % 35, 1 + i % 35, 10'000 + static_cast<std::uint64_t>(i));
        const auto cot = igsm::rule_cot(p);
        o.require(verify::igsm_reward(cot, p.gold).reward == 1, "unmutated igsm fixture not rewarded");
        ++mutated;
        zeroed += verify::igsm_reward(cot, p.gold + (i % 2 ? 1 : -1)).reward == 0;
    }
    o.require(zeroed == mutated, std::to_string(mutated - zeroed) + " mutations kept reward 1");
    if (o.pass) o.detail = std::to_string(zeroed) + "/" + std::to_string(mutated) + " mutations scored 0";
    return o;
}

// 5. Objectives.
Outcome objectives_cases() {
    using namespace objectives;
    Outcome o;
    const ClipConfig cfg;  // 0.2, 0.28, beta 0
    auto one_token = [&](double rho, double a) {
        const GroupRollout g{{Response{{std::log(rho)}, {0.0}, {std::log(rho)}, 0.0}}};
        const std::vector<double> adv{a};
        return clipped_surrogate(g, cfg, std::span<const double>(adv));
    };
    double worst = 0.0;
    auto check = [&](double got, double want, const std::string& what) {
        worst = std::max(worst, std::fabs(got - want));
        o.require(std::fabs(got - want) <= 1e-9, what + ": " + fmt(got, "%.12g") + " vs " + fmt(want, "%.12g"));
    };
    check(one_token(1.0, 1.0), 1.0, "rho=1");
    check(one_token(2.0, 1.0), 1.28, "rho=2, A=1");
    check(one_token(0.5, -1.0), -0.8, "rho=0.5, A=-1");

    Rng rng(5);
    for (int t = 0; t < 20; ++t) {
        const std::size_t T = 1 + rng.index(4000);
        const std::size_t V = 2 + rng.index(150'000);
        const std::vector<double> lp(T, -std::log(static_cast<double>(V)));
        check(sft_nll(lp), static_cast<double>(T) * std::log(static_cast<double>(V)), "uniform NLL");
    }
    for (int g = 0; g < 1000; ++g) {
        std::vector<double> rewards(2 + rng.index(31));
        for (auto& r : rewards) r = rng.index(3) == 0 ? rng.unit() : static_cast<double>(rng.index(2));
        const auto adv = group_advantages(rewards);
        check(std::accumulate(adv.begin(), adv.end(), 0.0), 0.0, "advantage sum");
    }
    if (o.pass) o.detail = "max deviation " + fmt(worst, "%.2e");
    return o;
}

struct MockRun {
    std::vector<pipeline::SeedQuery> queries;
    std::vector<pipeline::Primitive> pool;
    std::shared_ptr<fixtures::QueryIndex> index;
};

MockRun shared_run;  // 25-primitive pool from criterion 6, reused by criterion 7

// 6. Pipeline end to end against mock backends.
Outcome pipeline_end_to_end() {
    Outcome o;
    const auto t0 = Clock::now();
    const auto root = fs::temp_directory_path() / "tailor_acceptance";
    fs::remove_all(root);

    // Stage by stage: 32 queries, k = 4, exactly 25 bundles.
    auto index = std::make_shared<fixtures::QueryIndex>();
    const auto queries = pipeline::make_seed_queries("igsm", {15, 20}, 32, 2024, "sft");
    index->add(queries);
    auto student = fixtures::mock_student(index, 40);
    auto teacher = fixtures::mock_teacher(index, 25);
    const auto traces = pipeline::collect_traces(queries, *student, {.samples_per_query = 4});
    o.require(traces.records.size() == 128, std::to_string(traces.records.size()) + " traces");
    const auto bundles = pipeline::make_bundles(traces.records, 7, 25);
    const auto pool = pipeline::synthesize_pool(bundles, *teacher, 25, {.clock = pipeline::clock_for(*teacher)});
    o.require(pool.pool.size() == 25, std::to_string(pool.pool.size()) + " primitives from 25 bundles");

    const auto curated =
        pipeline::curate_sft(queries, pool.pool, *teacher, {.rejection = true, .target = 64, .seed = 9});
    o.require(curated.records.size() == 64, std::to_string(curated.records.size()) + " SFT records");
    std::set<std::string> query_ids, prim_ids;
    for (const auto& q : queries) query_ids.insert(q.id);
    for (const auto& p : pool.pool) prim_ids.insert(p.id);
    std::size_t rewarded = 0;
    for (const auto& r : curated.records) {
        o.require(query_ids.count(r.query_id) == 1, "dangling query id " + r.query_id);
        o.require(prim_ids.count(r.primitive_id) == 1, "dangling primitive id " + r.primitive_id);
        const auto* q = index->find(r.query);
        o.require(q && q->id == r.query_id, "query text does not match " + r.query_id);
        const bool ok = r.reward == 1 && q && verify::reward_for("igsm", r.response, q->gold).reward == 1;
        rewarded += ok;
    }
    o.require(rewarded == curated.records.size(), "rejection kept unrewarded records");
    const double acceptance = static_cast<double>(curated.records.size()) / static_cast<double>(curated.teacher_calls);

    // Whole-pipeline runs: identical seeds give identical bytes, with one and four workers.
    std::vector<std::string> bytes;
    std::size_t run_sft = 0, run_prims = 0;
    for (int jobs : {1, 1, 4}) {
        const auto dir = root / ("run" + std::to_string(bytes.size()));
        RunConfig cfg = config_from_json({{"task", "igsm"},
                                          {"seed", 2024},
                                          {"seed_queries", 32},
                                          {"trace_queries", 32},
                                          {"samples_per_query", 4},
                                          {"pool_size", 25},
                                          {"sft_target", 64},
                                          {"jobs", jobs},
                                          {"output_dir", dir.string()}});
        const auto plan = pipeline::plan_queries(cfg);
        auto run_index = std::make_shared<fixtures::QueryIndex>();
        run_index->add(plan.sft);
        run_index->add(plan.trace);
        auto s = fixtures::mock_student(run_index, 40, jobs);
        auto t = fixtures::mock_teacher(run_index, 25, jobs);
        const auto art = pipeline::run_pipeline(cfg, {*s, *t});
        bytes.push_back(slurp(art.seed_queries) + slurp(art.traces) + slurp(art.primitives) + slurp(art.sft));
        run_sft = pipeline::read_jsonl(art.sft).size();
        run_prims = json::parse(slurp(art.primitives)).size();
    }
    o.require(run_sft == 64 && run_prims == 25, "pipeline run wrote " + std::to_string(run_prims) + " primitives, " +
                                                    std::to_string(run_sft) + " records");
    o.require(bytes[0] == bytes[1], "rerun with the same seed differs");
    o.require(bytes[0] == bytes[2], "run with 4 workers differs");
    fs::remove_all(root);

    const double ms = ms_since(t0);
    o.require(ms < 30'000.0, "took " + fmt(ms / 1000.0) + " s");
    if (o.pass) {
        o.detail = "25 primitives, 64/64 reward-1 records, teacher acceptance " + fmt(acceptance, "%.2f") +
                   ", byte-identical reruns, " + fmt(ms / 1000.0) + " s";
    }
    shared_run = {queries, pool.pool, index};
    return o;
}

// 7. Diversity ordering.
Outcome diversity_ordering() {
    Outcome o;
    if (shared_run.pool.size() < 2) {
        o.require(false, "no primitive pool from the pipeline run");
        return o;
    }
    auto score = [&](const std::vector<pipeline::Primitive>& pool) {
        auto teacher = fixtures::mock_teacher(shared_run.index, 25);
        const auto curated =
            pipeline::curate_sft(shared_run.queries, pool, *teacher, {.rejection = false, .target = 128, .seed = 4});
        std::vector<diversity::Record> records;
        for (const auto& r : curated.records) records.push_back({r.query_id, r.response});
        diversity::HashedTfEmbedder embedder;
        return diversity::group_similarity(records, embedder).summary.median;
    };
    const double many = score(shared_run.pool);
    const double one = score({shared_run.pool.front()});
    o.require(many < one, "median " + fmt(many, "%.6f") + " (25 primitives) is not below " + fmt(one, "%.6f"));

    diversity::HashedTfEmbedder embedder;
    const std::string text = "<think>\nAdd the parts, then multiply.\n</think>\n<answer>\nboxed{3}\n</answer>";
    const auto same = diversity::group_similarity({{"q", text}, {"q", text}, {"q", text}}, embedder);
    o.require(same.groups.size() == 1 && same.groups[0].mean == 1.0,
              "identical group scored " + fmt(same.groups.empty() ? 0.0 : same.groups[0].mean, "%.17g"));
    if (o.pass) o.detail = "median " + fmt(many, "%.4f") + " (25 primitives) < " + fmt(one, "%.4f") + " (1 primitive)";
    return o;
}

// 8. Configuration defaults.
Outcome config_defaults() {
    Outcome o;
    const RunConfig c = config_from_json(json::object());
    o.require(c.teacher_temperature == 0.5, "teacher temperature");
    o.require(c.pool_size == 25, "pool size");
    o.require(c.sft_target == 8000, "SFT target");
    o.require(config_from_json({{"sft_target", 64}}).sft_target == 64, "SFT target not overridable");
    o.require(c.clip.eps_low == 0.2 && c.clip.eps_high == 0.28 && c.clip.beta == 0.0, "clip");
    const auto kk = default_ranges("kk");
    o.require(kk.sft == Range{4, 8} && kk.rl == Range{7, 11} && kk.ood == Range{12, 13}, "kk ranges");
    const auto medium = default_ranges("igsm", "medium");
    o.require(medium.sft == Range{15, 20} && medium.ood == Range{21, 25}, "igsm medium ranges");
    const auto hard = default_ranges("igsm", "hard");
    o.require(hard.rl == Range{25, 30} && hard.ood == Range{31, 35}, "igsm hard ranges");
    o.require(c.effective_sft_range() == Range{15, 20}, "default task range");
    if (o.pass) o.detail = "defaults match";
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"1 kk oracle fixture", kk_fixture},
        {"2 igsm oracle fixture", igsm_fixture},
        {"3 generator round trip", round_trip},
        {"4 verifier mutations", mutations},
        {"5 objectives", objectives_cases},
        {"6 pipeline end to end", pipeline_end_to_end},
        {"7 diversity ordering", diversity_ordering},
        {"8 configuration defaults", config_defaults},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s  %-26s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
