#include "tailor/verify.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "tailor/error.hpp"

namespace tailor::verify {

namespace {

bool only_space(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::size_t count_of(std::string_view text, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size())) {
        ++n;
    }
    return n;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

}  // namespace

bool check_template(std::string_view text) {
    static constexpr std::string_view kTags[] = {"<think>", "</think>", "<answer>", "</answer>"};
    for (auto tag : kTags) {
        if (count_of(text, tag) != 1) return false;
    }
    const auto t0 = text.find("<think>");
    const auto t1 = text.find("</think>");
    const auto a0 = text.find("<answer>");
    const auto a1 = text.find("</answer>");
    if (!(t0 < t1 && t1 < a0 && a0 < a1)) return false;
    return only_space(text.substr(0, t0)) &&
           only_space(text.substr(t1 + 8, a0 - (t1 + 8))) &&
           only_space(text.substr(a1 + 9));
}

std::optional<std::string> extract_boxed(std::string_view text) {
    static constexpr std::string_view kOpen = "boxed{";
    auto pos = text.rfind(kOpen);
    while (pos != std::string_view::npos) {
        const std::size_t start = pos + kOpen.size();
        int depth = 1;
        for (std::size_t i = start; i < text.size(); ++i) {
            if (text[i] == '{') ++depth;
            else if (text[i] == '}' && --depth == 0) return std::string(text.substr(start, i - start));
        }
        // Unbalanced: fall back to an earlier occurrence.
        if (pos == 0) break;
        pos = text.rfind(kOpen, pos - 1);
    }
    return std::nullopt;
}

std::optional<std::string> extract_answer_block(std::string_view text) {
    const auto open = text.rfind("<answer>");
    if (open == std::string_view::npos) return std::nullopt;
    const auto close = text.find("</answer>", open);
    if (close == std::string_view::npos) return std::nullopt;
    return std::string(text.substr(open + 8, close - open - 8));
}

RewardReport kk_reward(std::string_view text, const KkGold& gold) {
    RewardReport rep;
    rep.format_ok = check_template(text);
    std::string region;
    if (auto boxed = extract_boxed(text)) {
        region = *boxed;
    } else if (auto block = extract_answer_block(text)) {
        region = *block;
        rep.diagnostics.push_back("no boxed answer; scanned <answer> block");
    } else {
        region = std::string(text);
        rep.diagnostics.push_back("no boxed answer or <answer> block; scanned full text");
    }
    const std::string hay = lower(region);

    // Every "<word> is a knight|knave" claim in the region, keyed by lowercase name.
    std::map<std::string, std::vector<kk::Role>> claims;
    for (kk::Role role : {kk::Role::Knight, kk::Role::Knave}) {
        const std::string tail = " is a " + std::string(kk::role_name(role));
        for (auto pos = hay.find(tail); pos != std::string::npos; pos = hay.find(tail, pos + 1)) {
            const std::size_t end = pos + tail.size();
            if (end < hay.size() && is_word_char(hay[end])) continue;
            std::size_t begin = pos;
            while (begin > 0 && is_word_char(hay[begin - 1])) --begin;
            if (begin == pos) continue;
            claims[hay.substr(begin, pos - begin)].push_back(role);
        }
    }

    bool all_ok = true;
    std::string parsed;
    for (const auto& [name, role] : gold) {
        auto it = claims.find(lower(name));
        const bool has_gold = it != claims.end() &&
                              std::find(it->second.begin(), it->second.end(), role) != it->second.end();
        const bool has_flip = it != claims.end() &&
                              std::find(it->second.begin(), it->second.end(), kk::flip(role)) != it->second.end();
        if (!has_gold) {
            all_ok = false;
            rep.diagnostics.push_back(name + (it == claims.end() ? ": missing" : ": wrong role"));
        } else if (has_flip) {
            all_ok = false;
            rep.diagnostics.push_back(name + ": assigned both roles");
        }
    }
    for (const auto& [name, roles] : claims) {
        const bool known = std::any_of(gold.begin(), gold.end(), [&](const auto& g) { return lower(g.first) == name; });
        if (!known) rep.diagnostics.push_back("ignored non-gold name: " + name);
        for (kk::Role r : roles) {
            if (!parsed.empty()) parsed += "; ";
            parsed += name + "=" + std::string(kk::role_name(r));
        }
    }
    if (!claims.empty()) rep.parsed_answer = parsed;
    rep.reward = (all_ok && !gold.empty() && rep.parsed_answer) ? 1 : 0;
    return rep;
}

RewardReport igsm_reward(std::string_view text, std::int64_t gold) {
    RewardReport rep;
    rep.format_ok = check_template(text);
    auto boxed = extract_boxed(text);
    if (!boxed) {
        rep.diagnostics.push_back("no boxed answer");
        return rep;
    }
    std::string_view body = trim(*boxed);
    std::string_view digits = body;
    if (!digits.empty() && digits.front() == '+') digits.remove_prefix(1);
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (digits.empty() || ec != std::errc() || ptr != digits.data() + digits.size()) {
        rep.diagnostics.push_back("boxed content is not an integer: " + std::string(body));
        return rep;
    }
    rep.parsed_answer = std::to_string(value);
    rep.reward = value == gold ? 1 : 0;
    return rep;
}

KkGold kk_gold_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.empty()) throw DomainError("kk gold must be a non-empty name->role object");
    KkGold gold;
    for (const auto& [name, role] : j.items()) gold.emplace(name, kk::parse_role(role.get<std::string>()));
    return gold;
}

nlohmann::json kk_gold_to_json(const KkGold& gold) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, role] : gold) j[name] = kk::role_name(role);
    return j;
}

RewardReport reward_for(std::string_view task, std::string_view text, const nlohmann::json& gold) {
    if (task == "kk") return kk_reward(text, kk_gold_from_json(gold));
    if (task == "igsm") {
        if (gold.is_number_integer()) return igsm_reward(text, gold.get<std::int64_t>());
        if (gold.is_string()) {
            const auto s = gold.get<std::string>();
            std::int64_t v = 0;
            auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec == std::errc() && ptr == s.data() + s.size() && !s.empty()) return igsm_reward(text, v);
        }
        throw DomainError("igsm gold must be an integer, got " + gold.dump());
    }
    throw DomainError("unknown task: " + std::string(task));
}

nlohmann::json to_json(const RewardReport& r) {
    return {
        {"reward", r.reward},
        {"format_ok", r.format_ok},
        {"parsed_answer", r.parsed_answer ? nlohmann::json(*r.parsed_answer) : nlohmann::json(nullptr)},
        {"diagnostics", r.diagnostics},
    };
}

}  // namespace tailor::verify
