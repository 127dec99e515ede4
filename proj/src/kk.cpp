#include "tailor/kk.hpp"

#include <algorithm>
#include <stdexcept>

#include "tailor/error.hpp"
#include "tailor/rng.hpp"

namespace tailor::kk {

std::string_view role_name(Role r) { return r == Role::Knight ? "knight" : "knave"; }

Role parse_role(std::string_view s) {
    std::string lower(s);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "knight") return Role::Knight;
    if (lower == "knave") return Role::Knave;
    throw DomainError("unknown role: " + std::string(s));
}

Stmt Stmt::atom(int person, Role role) {
    Stmt s;
    s.kind = Kind::Atom;
    s.person = person;
    s.role = role;
    return s;
}

Stmt Stmt::negate(Stmt inner) {
    Stmt s;
    s.kind = Kind::Not;
    s.args.push_back(std::move(inner));
    return s;
}

Stmt Stmt::binary(Kind kind, Stmt lhs, Stmt rhs) {
    if (kind == Kind::Atom || kind == Kind::Not) throw std::invalid_argument("Stmt::binary: not a binary connective");
    Stmt s;
    s.kind = kind;
    s.args.push_back(std::move(lhs));
    s.args.push_back(std::move(rhs));
    return s;
}

int Stmt::depth() const {
    int d = 0;
    for (const auto& a : args) d = std::max(d, a.depth());
    return d + 1;
}

namespace {

void collect_mentions(const Stmt& s, std::vector<int>& out) {
    if (s.kind == Stmt::Kind::Atom) {
        if (std::find(out.begin(), out.end(), s.person) == out.end()) out.push_back(s.person);
        return;
    }
    for (const auto& a : s.args) collect_mentions(a, out);
}

}  // namespace

std::vector<int> Stmt::mentions() const {
    std::vector<int> out;
    collect_mentions(*this, out);
    return out;
}

bool eval_stmt(const Stmt& stmt, const Assignment& asg) {
    switch (stmt.kind) {
        case Stmt::Kind::Atom:
            return asg.at(static_cast<std::size_t>(stmt.person)) == stmt.role;
        case Stmt::Kind::Not:
            return !eval_stmt(stmt.args[0], asg);
        case Stmt::Kind::And:
            return eval_stmt(stmt.args[0], asg) && eval_stmt(stmt.args[1], asg);
        case Stmt::Kind::Or:
            return eval_stmt(stmt.args[0], asg) || eval_stmt(stmt.args[1], asg);
        case Stmt::Kind::Implies:
            return !eval_stmt(stmt.args[0], asg) || eval_stmt(stmt.args[1], asg);
        case Stmt::Kind::Iff:
            return eval_stmt(stmt.args[0], asg) == eval_stmt(stmt.args[1], asg);
    }
    return false;
}

bool is_consistent(std::span<const Stmt> statements, const Assignment& asg) {
    if (statements.size() != asg.size()) {
        throw DomainError("is_consistent: " + std::to_string(statements.size()) + " statements but " +
                          std::to_string(asg.size()) + " roles");
    }
    for (std::size_t i = 0; i < statements.size(); ++i) {
        if ((asg[i] == Role::Knight) != eval_stmt(statements[i], asg)) return false;
    }
    return true;
}

std::vector<Assignment> solve(std::span<const Stmt> statements, std::uint64_t* candidates) {
    const std::size_t n = statements.size();
    if (n > static_cast<std::size_t>(kMaxPersons)) {
        throw DomainError("solve: " + std::to_string(n) + " persons exceeds enumeration bound of " +
                          std::to_string(kMaxPersons));
    }
    std::vector<Assignment> out;
    Assignment asg(n);
    const std::uint64_t total = std::uint64_t{1} << n;
    // Bit (n-1-i) of `code` is person i's role, so counting up walks lexicographic order.
    for (std::uint64_t code = 0; code < total; ++code) {
        for (std::size_t i = 0; i < n; ++i) {
            asg[i] = ((code >> (n - 1 - i)) & 1U) ? Role::Knave : Role::Knight;
        }
        if (is_consistent(statements, asg)) out.push_back(asg);
    }
    if (candidates) *candidates = total;
    return out;
}

const std::vector<std::string>& name_vocabulary() {
    static const std::vector<std::string> names = {
        "Abigail", "Aria",     "Jacob",    "Liam",     "James",    "Amelia",   "David",
        "Emma",    "Olivia",   "Noah",     "Sophia",   "Mason",    "Isabella", "William",
        "Mia",     "Ethan",    "Charlotte","Alexander","Harper",   "Michael",  "Evelyn",
        "Benjamin","Emily",    "Elijah",   "Elizabeth","Daniel",   "Avery",    "Matthew",
        "Sofia",   "Logan",    "Ella",     "Jackson",  "Scarlett", "Sebastian","Grace",
        "Jack",    "Chloe",    "Aiden",    "Victoria", "Owen",     "Riley",    "Samuel",
        "Lily",    "Joseph",   "Aubrey",   "Henry",    "Zoey",     "Wyatt",    "Penelope",
        "Carter",  "Hannah",   "Luke",     "Nora",     "Gabriel",  "Layla",    "Isaac",
        "Lucas",   "Zoe",      "Oliver",   "Ava",      "Leo",      "Ruby",     "Caleb",
        "Stella",  "Hudson",   "Violet",   "Jaxon",    "Aurora",   "Dylan",    "Hazel",
    };
    return names;
}

namespace {

Stmt random_atom(int n, Rng& rng) {
    return Stmt::atom(static_cast<int>(rng.index(static_cast<std::uint64_t>(n))),
                      rng.chance(0.5) ? Role::Knight : Role::Knave);
}

Stmt random_statement(int n, Rng& rng) {
    static constexpr Stmt::Kind kShapes[] = {Stmt::Kind::Atom, Stmt::Kind::Not,     Stmt::Kind::And,
                                             Stmt::Kind::Or,   Stmt::Kind::Implies, Stmt::Kind::Iff};
    const Stmt::Kind kind = kShapes[rng.index(6)];
    if (kind == Stmt::Kind::Atom) return random_atom(n, rng);
    if (kind == Stmt::Kind::Not) return Stmt::negate(random_atom(n, rng));
    Stmt lhs = random_atom(n, rng);
    Stmt rhs = random_atom(n, rng);
    while (rhs.person == lhs.person) rhs.person = static_cast<int>(rng.index(static_cast<std::uint64_t>(n)));
    return Stmt::binary(kind, std::move(lhs), std::move(rhs));
}

}  // namespace

Puzzle generate(int n, std::uint64_t seed, const GenOptions& opts) {
    if (n < 2 || n > kMaxPersons) {
        throw DomainError("generate_kk: person count " + std::to_string(n) + " outside [2, " +
                          std::to_string(kMaxPersons) + "]");
    }
    Rng rng(seed);
    Puzzle p;
    std::vector<std::string> pool = name_vocabulary();
    rng.shuffle(pool);
    p.names.assign(pool.begin(), pool.begin() + n);
    p.style_offset = static_cast<int>(rng.index(6));

    for (int attempt = 0; attempt < opts.max_attempts; ++attempt) {
        std::vector<Stmt> stmts;
        stmts.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) stmts.push_back(random_statement(n, rng));
        auto sols = solve(stmts);
        if (sols.size() == 1) {
            p.statements = std::move(stmts);
            p.gold = std::move(sols.front());
            return p;
        }
    }
    throw DomainError("generate_kk: no unique-solution puzzle with " + std::to_string(n) +
                      " persons within " + std::to_string(opts.max_attempts) + " attempts");
}

nlohmann::json stmt_to_json(const Stmt& s) {
    using nlohmann::json;
    switch (s.kind) {
        case Stmt::Kind::Atom:
            return json{{"op", "atom"}, {"person", s.person}, {"role", role_name(s.role)}};
        case Stmt::Kind::Not:
            return json{{"op", "not"}, {"arg", stmt_to_json(s.args[0])}};
        default:
            break;
    }
    const char* op = s.kind == Stmt::Kind::And ? "and"
                     : s.kind == Stmt::Kind::Or ? "or"
                     : s.kind == Stmt::Kind::Implies ? "implies"
                                                     : "iff";
    return json{{"op", op}, {"lhs", stmt_to_json(s.args[0])}, {"rhs", stmt_to_json(s.args[1])}};
}

Stmt stmt_from_json(const nlohmann::json& j) {
    const std::string op = j.at("op").get<std::string>();
    if (op == "atom") return Stmt::atom(j.at("person").get<int>(), parse_role(j.at("role").get<std::string>()));
    if (op == "not") return Stmt::negate(stmt_from_json(j.at("arg")));
    Stmt::Kind kind;
    if (op == "and") kind = Stmt::Kind::And;
    else if (op == "or") kind = Stmt::Kind::Or;
    else if (op == "implies") kind = Stmt::Kind::Implies;
    else if (op == "iff") kind = Stmt::Kind::Iff;
    else throw DomainError("unknown statement op: " + op);
    return Stmt::binary(kind, stmt_from_json(j.at("lhs")), stmt_from_json(j.at("rhs")));
}

nlohmann::json puzzle_to_json(const Puzzle& p) {
    nlohmann::json stmts = nlohmann::json::array();
    for (const auto& s : p.statements) stmts.push_back(stmt_to_json(s));
    nlohmann::json gold = nlohmann::json::object();
    for (std::size_t i = 0; i < p.names.size(); ++i) gold[p.names[i]] = role_name(p.gold.at(i));
    return {
        {"id", p.id},
        {"difficulty", p.difficulty()},
        {"names", p.names},
        {"statements", std::move(stmts)},
        {"gold", std::move(gold)},
        {"style_offset", p.style_offset},
        {"query", render_puzzle(p)},
        {"rule_cot", rule_cot(p)},
    };
}

Puzzle puzzle_from_json(const nlohmann::json& j) {
    Puzzle p;
    p.id = j.value("id", "");
    p.style_offset = j.value("style_offset", 0);
    p.names = j.at("names").get<std::vector<std::string>>();
    for (const auto& s : j.at("statements")) p.statements.push_back(stmt_from_json(s));
    const auto& gold = j.at("gold");
    for (const auto& name : p.names) p.gold.push_back(parse_role(gold.at(name).get<std::string>()));
    if (p.statements.size() != p.names.size()) throw DomainError("puzzle " + p.id + ": statement count != name count");
    for (const auto& s : p.statements) {
        for (int m : s.mentions()) {
            if (m < 0 || m >= p.difficulty()) throw DomainError("puzzle " + p.id + ": person index out of range");
        }
    }
    return p;
}

}  // namespace tailor::kk
