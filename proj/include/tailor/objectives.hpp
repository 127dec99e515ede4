#pragma once

#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace tailor::objectives {

/// Per-token log-probabilities of one response under one policy.
using TokenLogProbs = std::vector<double>;

/// One response with aligned log-prob views under the current, behaviour and reference policies.
struct Response {
    TokenLogProbs new_lp;
    TokenLogProbs old_lp;
    TokenLogProbs ref_lp;
    double reward = 0.0;
};

struct GroupRollout {
    std::vector<Response> responses;
};

enum class Averaging {
    Token,     // one mean over every token of every response
    Sequence,  // mean over tokens within a response, then over responses
};

struct ClipConfig {
    double eps_low = 0.2;
    double eps_high = 0.28;
    double beta = 0.0;
    Averaging averaging = Averaging::Token;

    void validate() const;
};

/// (r - mean) / (std + 1e-8), population std. Throws DomainError when fewer than two rewards.
std::vector<double> group_advantages(std::span<const double> rewards);

/// exp(ref - new) - (ref - new) - 1; zero iff ref == new, positive otherwise.
double kl_estimate(double new_lp, double ref_lp);

/// KL-regularised clipped surrogate. Advantages come from rewards unless supplied.
double clipped_surrogate(const GroupRollout& group, const ClipConfig& cfg,
                         std::optional<std::span<const double>> advantages = std::nullopt);

/// Negated sum of the log-probs. Throws DomainError on an empty sequence.
double sft_nll(std::span<const double> log_probs);

/// Sum of per-step rewards.
double trajectory_return(std::span<const double> step_rewards);

/// Input: {"groups": [{"rewards": [...], "new_lp": [[...]], "old_lp": [[...]], "ref_lp": [[...]]}],
///         optional "clip": {"eps_low", "eps_high", "beta"}}.
/// Output per group: surrogate, advantages, and the NLL of each response under new_lp.
nlohmann::json check(const nlohmann::json& input);

}  // namespace tailor::objectives
