#include "tailor/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tailor/error.hpp"

namespace tailor::objectives {

void ClipConfig::validate() const {
    if (!(eps_low > 0.0 && eps_low < 1.0)) throw DomainError("eps_low must lie in (0, 1)");
    if (!(eps_high > 0.0 && eps_high < 1.0)) throw DomainError("eps_high must lie in (0, 1)");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw DomainError("beta must be finite and >= 0");
}

std::vector<double> group_advantages(std::span<const double> rewards) {
    const auto n = rewards.size();
    if (n < 2) throw DomainError("group_advantages: need at least 2 rewards, got " + std::to_string(n));
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    std::vector<double> out;
    out.reserve(n);
    for (double r : rewards) out.push_back((r - mean) / (sd + 1e-8));
    return out;
}

double kl_estimate(double new_lp, double ref_lp) {
    const double d = ref_lp - new_lp;
    return std::expm1(d) - d;
}

double clipped_surrogate(const GroupRollout& group, const ClipConfig& cfg,
                         std::optional<std::span<const double>> advantages) {
    cfg.validate();
    const auto& rs = group.responses;
    if (rs.empty()) throw DomainError("clipped_surrogate: empty group");

    std::vector<double> adv;
    if (advantages) {
        if (advantages->size() != rs.size()) throw DomainError("clipped_surrogate: advantage count != response count");
        adv.assign(advantages->begin(), advantages->end());
    } else {
        std::vector<double> rewards;
        for (const auto& r : rs) rewards.push_back(r.reward);
        adv = group_advantages(rewards);
    }

    double total = 0.0;
    std::size_t tokens = 0;
    double seq_total = 0.0;
    for (std::size_t i = 0; i < rs.size(); ++i) {
        const Response& r = rs[i];
        if (r.new_lp.size() != r.old_lp.size() || r.new_lp.size() != r.ref_lp.size()) {
            throw DomainError("clipped_surrogate: log-prob length mismatch in response " + std::to_string(i));
        }
        if (r.new_lp.empty()) throw DomainError("clipped_surrogate: empty response " + std::to_string(i));
        if (!std::isfinite(adv[i])) throw DomainError("clipped_surrogate: non-finite advantage");
        double resp = 0.0;
        for (std::size_t t = 0; t < r.new_lp.size(); ++t) {
            const double nl = r.new_lp[t], ol = r.old_lp[t], fl = r.ref_lp[t];
            if (!std::isfinite(nl) || !std::isfinite(ol) || !std::isfinite(fl)) {
                throw DomainError("clipped_surrogate: non-finite log-prob in response " + std::to_string(i));
            }
            const double ratio = std::exp(nl - ol);
            const double clipped = std::clamp(ratio, 1.0 - cfg.eps_low, 1.0 + cfg.eps_high);
            const double term = std::min(ratio * adv[i], clipped * adv[i]) - cfg.beta * kl_estimate(nl, fl);
            resp += term;
        }
        total += resp;
        tokens += r.new_lp.size();
        seq_total += resp / static_cast<double>(r.new_lp.size());
    }
    if (cfg.averaging == Averaging::Sequence) return seq_total / static_cast<double>(rs.size());
    return total / static_cast<double>(tokens);
}

double sft_nll(std::span<const double> log_probs) {
    if (log_probs.empty()) throw DomainError("sft_nll: empty sequence");
    // Neumaier summation: long sequences would otherwise drift by ~1e-9.
    double s = 0.0, c = 0.0;
    for (double lp : log_probs) {
        if (!std::isfinite(lp)) throw DomainError("sft_nll: non-finite log-prob");
        const double t = s + lp;
        c += std::abs(s) >= std::abs(lp) ? (s - t) + lp : (lp - t) + s;
        s = t;
    }
    return -(s + c);
}

double trajectory_return(std::span<const double> step_rewards) {
    return std::accumulate(step_rewards.begin(), step_rewards.end(), 0.0);
}

nlohmann::json check(const nlohmann::json& input) {
    ClipConfig cfg;
    if (input.contains("clip")) {
        const auto& c = input["clip"];
        cfg.eps_low = c.value("eps_low", cfg.eps_low);
        cfg.eps_high = c.value("eps_high", cfg.eps_high);
        cfg.beta = c.value("beta", cfg.beta);
    }
    nlohmann::json out = nlohmann::json::array();
    const auto& groups = input.at("groups");
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const auto& g = groups[gi];
        const auto rewards = g.at("rewards").get<std::vector<double>>();
        const auto new_lp = g.at("new_lp").get<std::vector<TokenLogProbs>>();
        const auto old_lp = g.at("old_lp").get<std::vector<TokenLogProbs>>();
        const auto ref_lp = g.contains("ref_lp") ? g.at("ref_lp").get<std::vector<TokenLogProbs>>() : new_lp;
        if (new_lp.size() != rewards.size() || old_lp.size() != rewards.size() || ref_lp.size() != rewards.size()) {
            throw DomainError("objectives check: group " + std::to_string(gi) + " has mismatched response counts");
        }
        GroupRollout rollout;
        for (std::size_t i = 0; i < rewards.size(); ++i) {
            rollout.responses.push_back({new_lp[i], old_lp[i], ref_lp[i], rewards[i]});
        }
        nlohmann::json nll = nlohmann::json::array();
        for (const auto& lp : new_lp) nll.push_back(sft_nll(lp));
        out.push_back({
            {"group", gi},
            {"advantages", group_advantages(rewards)},
            {"surrogate", clipped_surrogate(rollout, cfg)},
            {"nll", std::move(nll)},
        });
    }
    return out;
}

}  // namespace tailor::objectives
