#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tailor/kk.hpp"

namespace tailor::verify {

struct RewardReport {
    int reward = 0;                          // 0 or 1
    bool format_ok = false;
    std::optional<std::string> parsed_answer;
    std::vector<std::string> diagnostics;
};

/// Exactly one <think>...</think> followed by exactly one <answer>...</answer>,
/// with nothing but whitespace around and between them.
bool check_template(std::string_view text);

/// Content of the last `boxed{...}` (with or without a leading backslash), brace-balanced.
std::optional<std::string> extract_boxed(std::string_view text);

/// Content of the last <answer>...</answer> block, if any.
std::optional<std::string> extract_answer_block(std::string_view text);

using KkGold = std::map<std::string, kk::Role>;

RewardReport kk_reward(std::string_view text, const KkGold& gold);
RewardReport igsm_reward(std::string_view text, std::int64_t gold);

/// Task-dispatching reward. `gold` is a name->role object for "kk", an integer for "igsm".
RewardReport reward_for(std::string_view task, std::string_view text, const nlohmann::json& gold);

KkGold kk_gold_from_json(const nlohmann::json& j);
nlohmann::json kk_gold_to_json(const KkGold& gold);

nlohmann::json to_json(const RewardReport& r);

}  // namespace tailor::verify
