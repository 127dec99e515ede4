#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tailor/error.hpp"

namespace tailor::igsm {

inline constexpr std::int64_t kValueBound = 1'000'000;
inline constexpr const char* kAggregate = "Product";
/// Largest op count the generator accepts; beyond it rejection sampling gets slow.
inline constexpr int kMaxOps = 40;

/// "each {entity}'s {attribute}". attribute is an item, a sub-entity, or "Product".
struct ParamId {
    std::string entity;
    std::string attribute;

    bool is_aggregate() const { return attribute == kAggregate; }
    std::string describe() const { return "each " + entity + "'s " + attribute; }

    friend auto operator<=>(const ParamId&, const ParamId&) = default;
};

struct Expr {
    enum class Kind : std::uint8_t { Const, Sum, ConstPlus, ConstPlusDiff, Scale, DotSum };

    Kind kind = Kind::Const;
    std::int64_t k = 0;
    /// Node indices. Sum: members; ConstPlus/Scale: one; ConstPlusDiff: minuend, subtrahend;
    /// DotSum: flattened (count, per-unit) pairs.
    std::vector<int> refs;

    static Expr constant(std::int64_t k) { return {Kind::Const, k, {}}; }
    static Expr sum(std::vector<int> members) { return {Kind::Sum, 0, std::move(members)}; }
    static Expr plus(std::int64_t k, int a) { return {Kind::ConstPlus, k, {a}}; }
    static Expr plus_diff(std::int64_t k, int a, int b) { return {Kind::ConstPlusDiff, k, {a, b}}; }
    static Expr scale(std::int64_t k, int a) { return {Kind::Scale, k, {a}}; }
    static Expr dot_sum(std::vector<int> pairs) { return {Kind::DotSum, 0, std::move(pairs)}; }

    /// Arithmetic operations this definition contributes to difficulty.
    int ops() const;

    friend bool operator==(const Expr&, const Expr&) = default;
};

struct Node {
    ParamId id;
    Expr expr;
};

/// Nodes are stored in a topological order: every reference points to an earlier node.
struct ProblemGraph {
    std::vector<Node> nodes;
    int query = 0;

    int find(const ParamId& id) const;  // -1 when absent
};

struct Problem {
    std::string id;
    ProblemGraph graph;
    std::int64_t gold = 0;
    int difficulty = 0;
    std::uint64_t seed = 0;  // drives sentence shuffling and CoT naming
};

class EvalOverflow : public DomainError {
public:
    using DomainError::DomainError;
};

/// Values of all nodes, by index. Throws EvalOverflow on a negative or out-of-bound value,
/// DomainError on a forward or dangling reference.
std::vector<std::int64_t> eval_graph(const ProblemGraph& g);

/// Query plus all its transitive dependencies, ascending index order.
std::vector<int> ancestor_closure(const ProblemGraph& g, int query);

int op_count(const ProblemGraph& g, int query);
int op_count(const ProblemGraph& g, const ParamId& query);

struct GenOptions {
    int max_attempts = 20'000;
    double distractor_ratio = 0.3;
};

/// Problem whose query needs between lo and hi operations; deterministic in (range, seed).
Problem generate(int lo, int hi, std::uint64_t seed, const GenOptions& opts = {});

/// Builds a Problem from a hand-written graph, filling gold and difficulty.
Problem make_problem(std::string id, ProblemGraph g, std::uint64_t seed = 0);

std::string sentence(const ProblemGraph& g, int node);
std::string render_problem(const Problem& p);
std::string rule_cot(const Problem& p);

nlohmann::json graph_to_json(const ProblemGraph& g);
ProblemGraph graph_from_json(const nlohmann::json& j);

/// JSONL row: id, difficulty, query, gold, graph, rule_cot (+ seed).
nlohmann::json problem_to_json(const Problem& p);
Problem problem_from_json(const nlohmann::json& j);

}  // namespace tailor::igsm
