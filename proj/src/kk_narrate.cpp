#include <algorithm>
#include <optional>
#include <sstream>

#include "tailor/error.hpp"
#include "tailor/kk.hpp"

namespace tailor::kk {

namespace {

std::string atom_text(const Stmt& atom, std::span<const std::string> names, bool negated) {
    std::string out = names[static_cast<std::size_t>(atom.person)];
    out += negated ? " is not a " : " is a ";
    out += role_name(atom.role);
    return out;
}

}  // namespace

std::string claim_text(const Stmt& stmt, std::span<const std::string> names) {
    switch (stmt.kind) {
        case Stmt::Kind::Atom:
            return atom_text(stmt, names, false);
        case Stmt::Kind::Not:
            if (stmt.args[0].kind == Stmt::Kind::Atom) return atom_text(stmt.args[0], names, true);
            return "it is not the case that " + claim_text(stmt.args[0], names);
        case Stmt::Kind::And:
            return claim_text(stmt.args[0], names) + " and " + claim_text(stmt.args[1], names);
        case Stmt::Kind::Or:
            return claim_text(stmt.args[0], names) + " or " + claim_text(stmt.args[1], names);
        case Stmt::Kind::Implies:
            return "If " + claim_text(stmt.args[0], names) + " then " + claim_text(stmt.args[1], names);
        case Stmt::Kind::Iff:
            return claim_text(stmt.args[0], names) + " if and only if " + claim_text(stmt.args[1], names);
    }
    return {};
}

std::string render_puzzle(const Puzzle& p) {
    const auto n = p.names.size();
    std::ostringstream os;
    os << "A very special island is inhabited only by knights and knaves. "
          "Knights always tell the truth, and knaves always lie. You meet "
       << n << " inhabitants: ";
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) os << (n > 2 ? ", " : " ");
        if (i + 1 == n && n > 1) os << "and ";
        os << p.names[i];
    }
    os << ".";
    for (std::size_t i = 0; i < n; ++i) {
        const std::string& who = p.names[i];
        const std::string claim = claim_text(p.statements[i], p.names);
        os << ' ';
        switch ((static_cast<std::size_t>(p.style_offset) + i) % 6) {
            case 0: os << "In " << who << "'s words: \"" << claim << "\"."; break;
            case 1: os << who << " noted, \"" << claim << "\"."; break;
            case 2: os << '"' << claim << "\" - " << who << '.'; break;
            case 3: os << "As " << who << " put it, \"" << claim << "\"."; break;
            case 4: os << '"' << claim << ",\" " << who << " claimed."; break;
            default: os << who << " said that " << claim << '.'; break;
        }
    }
    os << " So who is a knight and who is a knave?";
    return os.str();
}

namespace {

void visit(const Puzzle& p, int person, std::vector<bool>& seen, std::vector<int>& order) {
    seen[static_cast<std::size_t>(person)] = true;
    order.push_back(person);
    for (int m : p.statements[static_cast<std::size_t>(person)].mentions()) {
        if (!seen[static_cast<std::size_t>(m)]) visit(p, m, seen, order);
    }
}

}  // namespace

std::vector<int> exploration_order(const Puzzle& p) {
    const auto n = p.names.size();
    std::vector<bool> seen(n, false);
    std::vector<int> order;
    order.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!seen[i]) visit(p, static_cast<int>(i), seen, order);
    }
    return order;
}

std::string answer_text(const Puzzle& p, std::span<const int> order) {
    std::string out;
    for (int person : order) {
        if (!out.empty()) out += ' ';
        out += p.names[static_cast<std::size_t>(person)];
        out += " is a ";
        out += role_name(p.gold[static_cast<std::size_t>(person)]);
        out += '.';
    }
    return out;
}

namespace {

class Narrator {
public:
    explicit Narrator(const Puzzle& p)
        : p_(p), order_(exploration_order(p)), assigned_(p.names.size(), false), asg_(p.names.size(), Role::Knight) {}

    /// Returns the person at which the subtree failed, or nullopt on success.
    std::optional<int> search(std::size_t pos) {
        if (pos == order_.size()) return std::nullopt;
        const int person = order_[pos];
        const auto idx = static_cast<std::size_t>(person);
        assigned_[idx] = true;
        for (Role role : {Role::Knight, Role::Knave}) {
            asg_[idx] = role;
            if (auto speaker = violated_statement(person)) {
                lines_.push_back(name(person) + " cannot be a " + std::string(role_name(role)) +
                                 ", because this would contradict " + claim_owner(person, *speaker) +
                                 " that " + claim(*speaker) + ".");
                continue;
            }
            lines_.push_back("Assume " + name(person) + " is a " + std::string(role_name(role)) +
                             ". No contradiction is found in their " + (role == Role::Knave ? "false " : "") +
                             "claim that " + claim(person) + ".");
            auto failed = search(pos + 1);
            if (!failed) return std::nullopt;
            lines_.push_back(name(person) + " cannot be a " + std::string(role_name(role)) +
                             ", because no role for " + name(*failed) + " would then be consistent.");
        }
        assigned_[idx] = false;
        return person;
    }

    const std::vector<std::string>& lines() const { return lines_; }
    const std::vector<int>& order() const { return order_; }
    const Assignment& assignment() const { return asg_; }

private:
    const std::string& name(int person) const { return p_.names[static_cast<std::size_t>(person)]; }
    std::string claim(int speaker) const {
        return claim_text(p_.statements[static_cast<std::size_t>(speaker)], p_.names);
    }

    std::string claim_owner(int person, int speaker) const {
        const bool knave = asg_[static_cast<std::size_t>(speaker)] == Role::Knave;
        std::string out = knave ? "the false claim of " : "the claim of ";
        out += speaker == person ? "their own" : name(speaker);
        return out;
    }

    bool decided(int speaker) const {
        if (!assigned_[static_cast<std::size_t>(speaker)]) return false;
        for (int m : p_.statements[static_cast<std::size_t>(speaker)].mentions()) {
            if (!assigned_[static_cast<std::size_t>(m)]) return false;
        }
        return true;
    }

    bool holds(int speaker) const {
        const auto idx = static_cast<std::size_t>(speaker);
        return (asg_[idx] == Role::Knight) == eval_stmt(p_.statements[idx], asg_);
    }

    bool involves(int speaker, int person) const {
        if (speaker == person) return true;
        const auto ms = p_.statements[static_cast<std::size_t>(speaker)].mentions();
        return std::find(ms.begin(), ms.end(), person) != ms.end();
    }

    /// First fully-decided statement touching `person` that fails; the person's own claim first.
    std::optional<int> violated_statement(int person) const {
        if (decided(person) && !holds(person)) return person;
        for (int speaker : order_) {
            if (speaker == person || !involves(speaker, person)) continue;
            if (decided(speaker) && !holds(speaker)) return speaker;
        }
        return std::nullopt;
    }

    const Puzzle& p_;
    std::vector<int> order_;
    std::vector<bool> assigned_;
    Assignment asg_;
    std::vector<std::string> lines_;
};

}  // namespace

std::string rule_cot(const Puzzle& p) {
    const auto sols = solve(p.statements);
    if (sols.size() != 1) {
        throw DomainError("rule_cot: puzzle " + p.id + " has " + std::to_string(sols.size()) +
                          " solutions, expected exactly one");
    }
    if (sols.front() != p.gold) throw DomainError("rule_cot: puzzle " + p.id + " gold does not solve it");

    Narrator narrator(p);
    if (narrator.search(0) || narrator.assignment() != p.gold) {
        throw DomainError("rule_cot: backtracking search disagrees with enumeration");
    }
    std::ostringstream os;
    os << "<think>\n";
    for (const auto& line : narrator.lines()) os << line << '\n';
    os << "</think>\n<answer>\nThus, the final answer is boxed{" << answer_text(p, narrator.order())
       << "}\n</answer>";
    return os.str();
}

}  // namespace tailor::kk
