#include <map>

#include "tailor/error.hpp"
#include "tailor/gateway.hpp"

namespace tailor::gateway {

MockChatBackend::MockChatBackend(Responder responder, int max_in_flight, std::string model)
    : responder_(std::move(responder)), model_(std::move(model)), limiter_(max_in_flight) {}

std::unique_ptr<MockChatBackend> MockChatBackend::from_script(const nlohmann::json& script, int max_in_flight,
                                                              std::string model) {
    struct Rule {
        std::vector<std::string> contains;
        std::string reply;
    };
    if (!script.is_array()) throw DomainError("mock script must be a JSON array");
    std::vector<Rule> rules;
    std::map<std::string, std::string> by_fingerprint;
    for (std::size_t i = 0; i < script.size(); ++i) {
        const auto& entry = script[i];
        const std::string where = "mock script entry " + std::to_string(i);
        if (!entry.is_object() || !entry.contains("reply") || !entry["reply"].is_string()) {
            throw DomainError(where + ": needs a string \"reply\"");
        }
        if (entry.contains("match")) {
            rules.push_back({entry["match"].at("contains").get<std::vector<std::string>>(),
                             entry["reply"].get<std::string>()});
        } else if (entry.contains("fingerprint")) {
            by_fingerprint[entry["fingerprint"].get<std::string>()] = entry["reply"].get<std::string>();
        } else {
            throw DomainError(where + ": needs \"match\" or \"fingerprint\"");
        }
    }
    auto responder = [rules = std::move(rules), by_fingerprint = std::move(by_fingerprint)](const GenRequest& req, int) {
        std::string all;
        for (const auto& m : req.messages) all += m.content;
        for (const auto& rule : rules) {
            bool hit = true;
            for (const auto& needle : rule.contains) {
                if (all.find(needle) == std::string::npos) {
                    hit = false;
                    break;
                }
            }
            if (hit) return rule.reply;
        }
        const std::string fp = fingerprint(req.messages);
        auto it = by_fingerprint.find(fp);
        if (it == by_fingerprint.end()) throw DomainError("mock backend: unknown fingerprint " + fp);
        return it->second;
    };
    return std::make_unique<MockChatBackend>(std::move(responder), max_in_flight, std::move(model));
}

std::vector<std::string> MockChatBackend::chat(const GenRequest& request) {
    request.validate();
    InFlightLimiter::Permit permit(limiter_);
    ++calls_;
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(request.n));
    for (int i = 0; i < request.n; ++i) out.push_back(responder_(request, i));
    return out;
}

BackendStats MockChatBackend::stats() const {
    BackendStats s;
    s.calls = calls_.load();
    return s;
}

}  // namespace tailor::gateway
