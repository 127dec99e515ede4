#include "tailor/igsm.hpp"

#include <algorithm>
#include <map>
#include <optional>

#include "tailor/rng.hpp"

namespace tailor::igsm {

int Expr::ops() const {
    const int m = static_cast<int>(refs.size());
    switch (kind) {
        case Kind::Const: return 0;
        case Kind::Sum: return m - 1;
        case Kind::ConstPlus: return 1;
        case Kind::ConstPlusDiff: return 2;
        case Kind::Scale: return 1;
        case Kind::DotSum: return 2 * (m / 2) - 1;
    }
    return 0;
}

int ProblemGraph::find(const ParamId& id) const {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].id == id) return static_cast<int>(i);
    }
    return -1;
}

namespace {

void check_refs(const ProblemGraph& g, std::size_t i) {
    const Expr& e = g.nodes[i].expr;
    for (int r : e.refs) {
        if (r < 0 || static_cast<std::size_t>(r) >= i) {
            throw DomainError("node " + g.nodes[i].id.describe() + " references an undefined or later node");
        }
    }
    const auto m = e.refs.size();
    bool arity_ok = true;
    switch (e.kind) {
        case Expr::Kind::Const: arity_ok = m == 0; break;
        case Expr::Kind::Sum: arity_ok = m >= 2; break;
        case Expr::Kind::ConstPlus:
        case Expr::Kind::Scale: arity_ok = m == 1; break;
        case Expr::Kind::ConstPlusDiff: arity_ok = m == 2; break;
        case Expr::Kind::DotSum: arity_ok = m >= 2 && m % 2 == 0; break;
    }
    if (!arity_ok) throw DomainError("node " + g.nodes[i].id.describe() + " has malformed operands");
}

std::int64_t eval_expr(const Expr& e, const std::vector<std::int64_t>& v) {
    auto at = [&](int r) { return v[static_cast<std::size_t>(r)]; };
    switch (e.kind) {
        case Expr::Kind::Const: return e.k;
        case Expr::Kind::Sum: {
            std::int64_t s = 0;
            for (int r : e.refs) s += at(r);
            return s;
        }
        case Expr::Kind::ConstPlus: return e.k + at(e.refs[0]);
        case Expr::Kind::ConstPlusDiff: return e.k + (at(e.refs[0]) - at(e.refs[1]));
        case Expr::Kind::Scale: return e.k * at(e.refs[0]);
        case Expr::Kind::DotSum: {
            std::int64_t s = 0;
            for (std::size_t i = 0; i + 1 < e.refs.size(); i += 2) s += at(e.refs[i]) * at(e.refs[i + 1]);
            return s;
        }
    }
    return 0;
}

bool in_bounds(std::int64_t x) { return x >= 0 && x <= kValueBound; }

}  // namespace

std::vector<std::int64_t> eval_graph(const ProblemGraph& g) {
    std::vector<std::int64_t> values;
    values.reserve(g.nodes.size());
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        check_refs(g, i);
        // Operands are bounded by 10^6, so products stay far below int64 overflow.
        const std::int64_t x = eval_expr(g.nodes[i].expr, values);
        if (!in_bounds(x)) {
            throw EvalOverflow("value of " + g.nodes[i].id.describe() + " = " + std::to_string(x) +
                               " outside [0, " + std::to_string(kValueBound) + "]");
        }
        values.push_back(x);
    }
    return values;
}

std::vector<int> ancestor_closure(const ProblemGraph& g, int query) {
    if (query < 0 || static_cast<std::size_t>(query) >= g.nodes.size()) {
        throw DomainError("unknown query node " + std::to_string(query));
    }
    std::vector<bool> in(g.nodes.size(), false);
    in[static_cast<std::size_t>(query)] = true;
    // References always point backwards, so one reverse sweep suffices.
    for (int i = query; i >= 0; --i) {
        if (!in[static_cast<std::size_t>(i)]) continue;
        for (int r : g.nodes[static_cast<std::size_t>(i)].expr.refs) in[static_cast<std::size_t>(r)] = true;
    }
    std::vector<int> out;
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in[i]) out.push_back(static_cast<int>(i));
    }
    return out;
}

int op_count(const ProblemGraph& g, int query) {
    int total = 0;
    for (int i : ancestor_closure(g, query)) total += g.nodes[static_cast<std::size_t>(i)].expr.ops();
    return total;
}

int op_count(const ProblemGraph& g, const ParamId& query) {
    const int idx = g.find(query);
    if (idx < 0) throw DomainError("unknown query parameter: " + query.describe());
    return op_count(g, idx);
}

Problem make_problem(std::string id, ProblemGraph g, std::uint64_t seed) {
    Problem p;
    p.id = std::move(id);
    const auto values = eval_graph(g);
    p.difficulty = op_count(g, g.query);
    p.gold = values.at(static_cast<std::size_t>(g.query));
    p.graph = std::move(g);
    p.seed = seed;
    return p;
}

// ---------------------------------------------------------------------------
// Generation

namespace {

const std::vector<std::string> kDistricts = {
    "Colonial Quarter",      "Vintage Architecture District", "Riverside Ward",   "Old Market District",
    "Harbor District",       "University Quarter",            "Garden District",  "Financial District",
    "Arts District",         "Lakeside Borough",              "Hillcrest Quarter", "Mill Town District",
};

const std::vector<std::string> kStores = {
    "QuickMart",   "Grab & Go Store", "Corner Grocery", "FreshWay",     "Daily Pantry",  "Budget Bazaar",
    "Value Depot", "Green Grocer",    "Market Basket",  "Family Mart",  "Sunrise Store", "Village Shop",
};

const std::vector<std::string> kItems = {
    "Canned Peaches", "Corned Beef",  "Baked Beans",   "Canned Tuna",  "Tomato Soup", "Sweet Corn",
    "Chickpeas",      "Condensed Milk", "Green Peas",  "Sardines",     "Black Beans", "Pineapple Rings",
    "Mushroom Soup",  "Apple Sauce",  "Kidney Beans",  "Coconut Milk",
};

std::vector<std::string> draw(const std::vector<std::string>& vocab, std::size_t count, Rng& rng) {
    std::vector<std::string> pool = vocab;
    rng.shuffle(pool);
    pool.resize(std::min(count, pool.size()));
    return pool;
}

std::vector<int> draw_indices(int n, int count, Rng& rng) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    rng.shuffle(idx);
    idx.resize(static_cast<std::size_t>(std::min(n, count)));
    return idx;
}

struct Candidate {
    ProblemGraph graph;
    std::vector<std::int64_t> values;
};

/// A pending node: instance parameters are always ready; aggregates wait on prerequisites.
struct Pending {
    ParamId id;
    std::vector<ParamId> needs;        // aggregate prerequisites
    std::vector<ParamId> dot_pairs;    // district aggregates: count, per-unit, count, per-unit...
};

Expr random_instance_expr(int defined, const std::vector<std::int64_t>& values, Rng& rng) {
    if (defined == 0) return Expr::constant(rng.range(0, 9));
    for (int tries = 0; tries < 8; ++tries) {
        Expr e;
        const double u = rng.unit();
        if (u < 0.18) {
            e = Expr::constant(rng.range(0, 9));
        } else if (u < 0.42 && defined >= 2) {
            const int m = defined >= 3 && rng.chance(0.4) ? 3 : 2;
            e = Expr::sum(draw_indices(defined, m, rng));
        } else if (u < 0.64) {
            e = Expr::plus(rng.range(0, 9), static_cast<int>(rng.index(static_cast<std::uint64_t>(defined))));
        } else if (u < 0.82 && defined >= 2) {
            auto ab = draw_indices(defined, 2, rng);
            if (values[static_cast<std::size_t>(ab[0])] < values[static_cast<std::size_t>(ab[1])]) {
                std::swap(ab[0], ab[1]);
            }
            e = Expr::plus_diff(rng.range(0, 9), ab[0], ab[1]);
        } else {
            e = Expr::scale(rng.range(0, 9), static_cast<int>(rng.index(static_cast<std::uint64_t>(defined))));
        }
        if (in_bounds(eval_expr(e, values))) return e;
    }
    return Expr::constant(rng.range(0, 9));
}

/// Random hierarchy and dependency order; nullopt when an aggregate leaves the value bound.
std::optional<Candidate> build_candidate(int target_ops, Rng& rng) {
    // Rough sizing: ~1.2 ops per instance node, and the query reaches a fraction of the graph.
    const int want_params = std::max(3, static_cast<int>(target_ops * (1.0 + rng.unit())));
    const int n_stores = static_cast<int>(std::clamp<std::int64_t>(rng.range(1, 1 + want_params / 5), 1, 8));
    const int n_districts = static_cast<int>(std::clamp<std::int64_t>(rng.range(0, 1 + want_params / 8), 0, 6));
    const auto districts = draw(kDistricts, static_cast<std::size_t>(n_districts), rng);
    const auto stores = draw(kStores, static_cast<std::size_t>(n_stores), rng);

    std::vector<Pending> pending;
    std::vector<ParamId> instances;
    for (const auto& s : stores) {
        const auto items = draw(kItems, static_cast<std::size_t>(rng.range(2, 3)), rng);
        Pending agg{{s, kAggregate}, {}, {}};
        for (const auto& it : items) {
            instances.push_back({s, it});
            agg.needs.push_back({s, it});
        }
        pending.push_back(std::move(agg));
    }
    for (const auto& d : districts) {
        Pending agg{{d, kAggregate}, {}, {}};
        for (int si : draw_indices(n_stores, static_cast<int>(rng.range(1, 2)), rng)) {
            const auto& s = stores[static_cast<std::size_t>(si)];
            instances.push_back({d, s});
            agg.needs.push_back({d, s});
            agg.needs.push_back({s, kAggregate});
            agg.dot_pairs.push_back({d, s});
            agg.dot_pairs.push_back({s, kAggregate});
        }
        pending.push_back(std::move(agg));
    }
    rng.shuffle(instances);

    Candidate c;
    std::map<ParamId, int> index;
    auto ready = [&](const Pending& p) {
        return std::all_of(p.needs.begin(), p.needs.end(), [&](const ParamId& id) { return index.count(id) > 0; });
    };
    auto place_aggregate = [&](std::size_t pi) -> bool {
        const Pending& p = pending[pi];
        Expr e;
        if (p.dot_pairs.empty()) {
            std::vector<int> members;
            for (const auto& id : p.needs) members.push_back(index.at(id));
            e = Expr::sum(std::move(members));
        } else {
            std::vector<int> pairs;
            for (const auto& id : p.dot_pairs) pairs.push_back(index.at(id));
            e = Expr::dot_sum(std::move(pairs));
        }
        const std::int64_t x = eval_expr(e, c.values);
        if (!in_bounds(x)) return false;
        index[p.id] = static_cast<int>(c.graph.nodes.size());
        c.graph.nodes.push_back({p.id, std::move(e)});
        c.values.push_back(x);
        pending.erase(pending.begin() + static_cast<std::ptrdiff_t>(pi));
        return true;
    };

    std::size_t next_instance = 0;
    while (next_instance < instances.size() || !pending.empty()) {
        std::vector<std::size_t> ready_aggs;
        for (std::size_t i = 0; i < pending.size(); ++i) {
            if (ready(pending[i])) ready_aggs.push_back(i);
        }
        const bool take_agg =
            !ready_aggs.empty() && (next_instance == instances.size() || rng.chance(0.5));
        if (take_agg) {
            if (!place_aggregate(ready_aggs[static_cast<std::size_t>(rng.index(ready_aggs.size()))])) {
                return std::nullopt;
            }
            continue;
        }
        if (next_instance == instances.size()) return std::nullopt;  // unreachable: aggregates stuck
        const ParamId& id = instances[next_instance++];
        Expr e = random_instance_expr(static_cast<int>(c.graph.nodes.size()), c.values, rng);
        index[id] = static_cast<int>(c.graph.nodes.size());
        c.values.push_back(eval_expr(e, c.values));
        c.graph.nodes.push_back({id, std::move(e)});
    }
    return c;
}

/// Keeps the flagged nodes, re-indexing references.
ProblemGraph compact(const ProblemGraph& g, const std::vector<bool>& keep) {
    std::vector<int> remap(g.nodes.size(), -1);
    ProblemGraph out;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        if (!keep[i]) continue;
        remap[i] = static_cast<int>(out.nodes.size());
        Node n = g.nodes[i];
        for (int& r : n.expr.refs) r = remap[static_cast<std::size_t>(r)];
        out.nodes.push_back(std::move(n));
    }
    out.query = remap[static_cast<std::size_t>(g.query)];
    return out;
}

}  // namespace

Problem generate(int lo, int hi, std::uint64_t seed, const GenOptions& opts) {
    if (lo < 1 || hi < lo || hi > kMaxOps) {
        throw DomainError("generate_igsm: op range [" + std::to_string(lo) + ", " + std::to_string(hi) +
                          "] must satisfy 1 <= lo <= hi <= " + std::to_string(kMaxOps));
    }
    Rng rng(seed);
    for (int attempt = 0; attempt < opts.max_attempts; ++attempt) {
        auto cand = build_candidate(static_cast<int>(rng.range(lo, hi)), rng);
        if (!cand) continue;
        ProblemGraph& g = cand->graph;

        std::vector<int> aggregates, instances;
        for (std::size_t i = 0; i < g.nodes.size(); ++i) {
            if (g.nodes[i].expr.kind == Expr::Kind::Const) continue;
            const int ops = op_count(g, static_cast<int>(i));
            if (ops < lo || ops > hi) continue;
            (g.nodes[i].id.is_aggregate() ? aggregates : instances).push_back(static_cast<int>(i));
        }
        if (aggregates.empty() && instances.empty()) continue;
        const bool use_agg = !aggregates.empty() && (instances.empty() || rng.chance(0.75));
        g.query = use_agg ? rng.pick(aggregates) : rng.pick(instances);

        const auto closure = ancestor_closure(g, g.query);
        std::vector<bool> needed(g.nodes.size(), false);
        for (int i : closure) needed[static_cast<std::size_t>(i)] = true;

        // Anything depending on the query goes, so the query is maximal.
        std::vector<bool> keep(g.nodes.size(), true);
        std::vector<bool> downstream(g.nodes.size(), false);
        downstream[static_cast<std::size_t>(g.query)] = true;
        for (std::size_t i = static_cast<std::size_t>(g.query) + 1; i < g.nodes.size(); ++i) {
            for (int r : g.nodes[i].expr.refs) {
                if (downstream[static_cast<std::size_t>(r)]) downstream[i] = true;
            }
            if (downstream[i]) keep[i] = false;
        }

        // Trim unneeded nodes toward the distractor ratio, always removing a node nobody uses.
        const double ratio = std::clamp(opts.distractor_ratio, 0.0, 0.95);
        const auto wanted = static_cast<std::size_t>(ratio / (1.0 - ratio) * static_cast<double>(closure.size()) + 0.5);
        auto distractor_count = [&] {
            std::size_t n = 0;
            for (std::size_t i = 0; i < g.nodes.size(); ++i) n += keep[i] && !needed[i];
            return n;
        };
        while (distractor_count() > wanted) {
            std::vector<bool> used(g.nodes.size(), false);
            for (std::size_t i = 0; i < g.nodes.size(); ++i) {
                if (!keep[i]) continue;
                for (int r : g.nodes[i].expr.refs) used[static_cast<std::size_t>(r)] = true;
            }
            std::vector<int> removable;
            for (std::size_t i = 0; i < g.nodes.size(); ++i) {
                if (keep[i] && !needed[i] && !used[i]) removable.push_back(static_cast<int>(i));
            }
            keep[static_cast<std::size_t>(rng.pick(removable))] = false;
        }

        ProblemGraph trimmed = compact(g, keep);
        Problem p = make_problem("", std::move(trimmed), rng.next());
        if (p.difficulty < lo || p.difficulty > hi) continue;  // cannot happen; closure is preserved
        return p;
    }
    throw DomainError("generate_igsm: no problem with op count in [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "] within " + std::to_string(opts.max_attempts) + " attempts");
}

nlohmann::json graph_to_json(const ProblemGraph& g) {
    static const char* kNames[] = {"const", "sum", "const_plus", "const_plus_diff", "scale", "dot_sum"};
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : g.nodes) {
        nodes.push_back({
            {"entity", n.id.entity},
            {"attribute", n.id.attribute},
            {"op", kNames[static_cast<int>(n.expr.kind)]},
            {"k", n.expr.k},
            {"refs", n.expr.refs},
        });
    }
    return {{"nodes", std::move(nodes)}, {"query", g.query}};
}

ProblemGraph graph_from_json(const nlohmann::json& j) {
    static const std::map<std::string, Expr::Kind> kKinds = {
        {"const", Expr::Kind::Const},         {"sum", Expr::Kind::Sum},     {"const_plus", Expr::Kind::ConstPlus},
        {"const_plus_diff", Expr::Kind::ConstPlusDiff}, {"scale", Expr::Kind::Scale}, {"dot_sum", Expr::Kind::DotSum},
    };
    ProblemGraph g;
    for (const auto& n : j.at("nodes")) {
        const auto op = n.at("op").get<std::string>();
        auto it = kKinds.find(op);
        if (it == kKinds.end()) throw DomainError("unknown expression op: " + op);
        Node node;
        node.id = {n.at("entity").get<std::string>(), n.at("attribute").get<std::string>()};
        node.expr.kind = it->second;
        node.expr.k = n.value("k", std::int64_t{0});
        node.expr.refs = n.value("refs", std::vector<int>{});
        g.nodes.push_back(std::move(node));
    }
    g.query = j.at("query").get<int>();
    return g;
}

nlohmann::json problem_to_json(const Problem& p) {
    return {
        {"id", p.id},
        {"difficulty", p.difficulty},
        {"query", render_problem(p)},
        {"gold", p.gold},
        {"graph", graph_to_json(p.graph)},
        {"seed", p.seed},
        {"rule_cot", rule_cot(p)},
    };
}

Problem problem_from_json(const nlohmann::json& j) {
    Problem p = make_problem(j.value("id", ""), graph_from_json(j.at("graph")), j.value("seed", std::uint64_t{0}));
    if (j.contains("gold") && j.at("gold").get<std::int64_t>() != p.gold) {
        throw DomainError("problem " + p.id + ": stored gold disagrees with graph evaluation");
    }
    return p;
}

}  // namespace tailor::igsm
