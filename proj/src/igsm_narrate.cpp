#include <sstream>

#include "tailor/igsm.hpp"
#include "tailor/rng.hpp"

namespace tailor::igsm {

namespace {

std::string operand(const ProblemGraph& g, int ref) {
    return g.nodes[static_cast<std::size_t>(ref)].id.describe();
}

std::string join_list(const std::vector<std::string>& parts) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) out += (i + 1 == parts.size()) ? " and " : ", ";
        out += parts[i];
    }
    return out;
}

}  // namespace

std::string sentence(const ProblemGraph& g, int node) {
    const Node& n = g.nodes.at(static_cast<std::size_t>(node));
    const Expr& e = n.expr;
    std::string rhs;
    switch (e.kind) {
        case Expr::Kind::Const:
            rhs = std::to_string(e.k);
            break;
        case Expr::Kind::Sum: {
            std::vector<std::string> parts;
            for (int r : e.refs) parts.push_back(operand(g, r));
            rhs = "the sum of " + join_list(parts);
            break;
        }
        case Expr::Kind::ConstPlus:
            rhs = std::to_string(e.k) + " more than " + operand(g, e.refs[0]);
            break;
        case Expr::Kind::ConstPlusDiff:
            rhs = std::to_string(e.k) + " more than the difference of " + operand(g, e.refs[0]) + " and " +
                  operand(g, e.refs[1]);
            break;
        case Expr::Kind::Scale:
            rhs = std::to_string(e.k) + " times " + operand(g, e.refs[0]);
            break;
        case Expr::Kind::DotSum: {
            std::vector<std::string> parts;
            for (std::size_t i = 0; i + 1 < e.refs.size(); i += 2) {
                parts.push_back(operand(g, e.refs[i]) + " times " + operand(g, e.refs[i + 1]));
            }
            rhs = "the sum of " + join_list(parts);
            break;
        }
    }
    return "The number of " + n.id.describe() + " equals " + rhs + ".";
}

std::string render_problem(const Problem& p) {
    const ProblemGraph& g = p.graph;
    std::vector<int> order;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        // Aggregates follow from the hierarchy and are left implicit.
        if (!g.nodes[i].id.is_aggregate()) order.push_back(static_cast<int>(i));
    }
    Rng rng = Rng::stream(p.seed, 1);
    rng.shuffle(order);
    std::ostringstream os;
    for (int i : order) os << sentence(g, i) << '\n';
    const ParamId& q = g.nodes.at(static_cast<std::size_t>(g.query)).id;
    os << "How many " << q.attribute << " does each " << q.entity << " have?";
    return os.str();
}

namespace {

std::vector<std::string> letter_names(std::size_t count, std::uint64_t seed) {
    std::vector<std::string> letters;
    for (char c = 'a'; c <= 'z'; ++c) letters.emplace_back(1, c);
    for (char c = 'A'; c <= 'Z'; ++c) letters.emplace_back(1, c);
    Rng rng = Rng::stream(seed, 2);
    rng.shuffle(letters);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(letters[i % letters.size()] +
                      (i < letters.size() ? std::string() : std::to_string(i / letters.size())));
    }
    return out;
}

}  // namespace

std::string rule_cot(const Problem& p) {
    const ProblemGraph& g = p.graph;
    const auto values = eval_graph(g);
    const auto closure = ancestor_closure(g, g.query);
    const auto names = letter_names(closure.size(), p.seed);
    std::vector<std::string> name_of(g.nodes.size());
    for (std::size_t i = 0; i < closure.size(); ++i) name_of[static_cast<std::size_t>(closure[i])] = names[i];

    auto sym = [&](int r) { return name_of[static_cast<std::size_t>(r)]; };
    auto val = [&](int r) { return std::to_string(values[static_cast<std::size_t>(r)]); };

    Rng rng = Rng::stream(p.seed, 3);
    std::ostringstream os;
    os << "<think>\nLet's compute the answer step by step.\n";
    for (int idx : closure) {
        const Node& n = g.nodes[static_cast<std::size_t>(idx)];
        const std::string& name = name_of[static_cast<std::size_t>(idx)];
        const std::string what = "the number of " + n.id.describe();
        const Expr& e = n.expr;
        if (e.kind == Expr::Kind::Const) {
            os << "- According to the information given, " << what << " is " << e.k << ". Let's call it " << name
               << ". So " << name << " = " << e.k << ".\n";
            continue;
        }
        switch (rng.index(5)) {
            case 0: os << "- Now, we can find " << what << ". Let's call it " << name << ". "; break;
            case 1: os << "- We can then calculate " << what << ". Let's call it " << name << ". "; break;
            case 2: os << "- Then, let's denote " << what << " as " << name << ". "; break;
            case 3: os << "- Now, we can find " << what << ". Let it be " << name << ". "; break;
            default: os << "- Now, we can find " << what << ". Let's denote it as " << name << ". "; break;
        }
        std::string symbolic, substituted;
        switch (e.kind) {
            case Expr::Kind::Sum:
                for (std::size_t i = 0; i < e.refs.size(); ++i) {
                    if (i > 0) {
                        symbolic += " + ";
                        substituted += " + ";
                    }
                    symbolic += sym(e.refs[i]);
                    substituted += val(e.refs[i]);
                }
                break;
            case Expr::Kind::ConstPlus:
                symbolic = std::to_string(e.k) + " + " + sym(e.refs[0]);
                substituted = std::to_string(e.k) + " + " + val(e.refs[0]);
                break;
            case Expr::Kind::ConstPlusDiff:
                symbolic = std::to_string(e.k) + " + (" + sym(e.refs[0]) + " - " + sym(e.refs[1]) + ")";
                substituted = std::to_string(e.k) + " + (" + val(e.refs[0]) + " - " + val(e.refs[1]) + ")";
                break;
            case Expr::Kind::Scale:
                symbolic = std::to_string(e.k) + " * " + sym(e.refs[0]);
                substituted = std::to_string(e.k) + " * " + val(e.refs[0]);
                break;
            case Expr::Kind::DotSum:
                for (std::size_t i = 0; i + 1 < e.refs.size(); i += 2) {
                    if (i > 0) {
                        symbolic += " + ";
                        substituted += " + ";
                    }
                    symbolic += sym(e.refs[i]) + " * " + sym(e.refs[i + 1]);
                    substituted += val(e.refs[i]) + " * " + val(e.refs[i + 1]);
                }
                break;
            case Expr::Kind::Const:
                break;
        }
        os << "Then " << name << " = " << symbolic << " = " << substituted << " = " << val(idx) << ".\n";
    }
    const std::int64_t answer = values[static_cast<std::size_t>(g.query)];
    os << "Thus, the answer is " << answer << ".\n</think>\n<answer>\nThe final answer is \\boxed{" << answer
       << "}.\n</answer>";
    return os.str();
}

}  // namespace tailor::igsm
