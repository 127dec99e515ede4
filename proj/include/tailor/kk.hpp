#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace tailor::kk {

enum class Role : std::uint8_t { Knight, Knave };

std::string_view role_name(Role r);  // "knight" / "knave"
Role parse_role(std::string_view s);
inline Role flip(Role r) { return r == Role::Knight ? Role::Knave : Role::Knight; }

/// A claim made by one inhabitant: an atom or one connective over atoms.
struct Stmt {
    enum class Kind : std::uint8_t { Atom, Not, And, Or, Implies, Iff };

    Kind kind = Kind::Atom;
    int person = 0;             // Atom only
    Role role = Role::Knight;   // Atom only
    std::vector<Stmt> args;     // Not: 1, binary: 2

    static Stmt atom(int person, Role role);
    static Stmt negate(Stmt inner);
    static Stmt binary(Kind kind, Stmt lhs, Stmt rhs);

    int depth() const;
    /// Persons referenced, in order of first mention.
    std::vector<int> mentions() const;

    friend bool operator==(const Stmt&, const Stmt&) = default;
};

using Assignment = std::vector<Role>;

struct Puzzle {
    std::string id;
    std::vector<std::string> names;
    std::vector<Stmt> statements;  // statements[i] is said by names[i]
    Assignment gold;
    int style_offset = 0;          // rotates speech templates in render_puzzle

    int difficulty() const { return static_cast<int>(names.size()); }
};

inline constexpr int kMaxPersons = 20;

bool eval_stmt(const Stmt& stmt, const Assignment& asg);

/// Knights say true things, knaves false ones. Throws DomainError on length mismatch.
bool is_consistent(std::span<const Stmt> statements, const Assignment& asg);

/// Every consistent assignment, lexicographic (Knight < Knave, person 0 most
/// significant). `candidates`, when given, receives the number of assignments tried.
std::vector<Assignment> solve(std::span<const Stmt> statements,
                              std::uint64_t* candidates = nullptr);

struct GenOptions {
    int max_attempts = 10'000;
};

/// Random unique-solution puzzle with n inhabitants; deterministic in (n, seed).
Puzzle generate(int n, std::uint64_t seed, const GenOptions& opts = {});

const std::vector<std::string>& name_vocabulary();

/// Claim text as spoken, e.g. "David is a knight if and only if Liam is a knight".
std::string claim_text(const Stmt& stmt, std::span<const std::string> names);

std::string render_puzzle(const Puzzle& p);

/// Order in which rule_cot visits inhabitants.
std::vector<int> exploration_order(const Puzzle& p);

/// Backtracking narration in think/answer form. Throws DomainError unless the
/// puzzle has exactly one solution.
std::string rule_cot(const Puzzle& p);

/// "Abigail is a knight. David is a knight. ..." in the given order.
std::string answer_text(const Puzzle& p, std::span<const int> order);

nlohmann::json stmt_to_json(const Stmt& s);
Stmt stmt_from_json(const nlohmann::json& j);

/// Full JSONL row: id, difficulty, names, statements, gold, query, rule_cot.
nlohmann::json puzzle_to_json(const Puzzle& p);
Puzzle puzzle_from_json(const nlohmann::json& j);

}  // namespace tailor::kk
