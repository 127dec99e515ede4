#include "tailor/diversity.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

#include "tailor/error.hpp"
#include "tailor/rng.hpp"

namespace tailor::diversity {

Thinking extract_thinking(std::string_view text) {
    const auto open = text.find("<think>");
    const auto close = open == std::string_view::npos ? std::string_view::npos : text.find("</think>", open);
    if (close == std::string_view::npos) return {std::string(text), true};
    std::string_view body = text.substr(open + 7, close - open - 7);
    while (!body.empty() && std::isspace(static_cast<unsigned char>(body.front()))) body.remove_prefix(1);
    while (!body.empty() && std::isspace(static_cast<unsigned char>(body.back()))) body.remove_suffix(1);
    return {std::string(body), body.empty()};
}

void normalize(Vec& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    const double norm = std::sqrt(s);
    if (norm == 0.0) throw DomainError("cannot normalise a zero vector");
    for (double& x : v) x /= norm;
}

double cosine(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw DomainError("cosine: dimension mismatch");
    if (a == b && std::any_of(a.begin(), a.end(), [](double x) { return x != 0.0; })) return 1.0;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw DomainError("cosine: zero vector");
    return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

HashedTfEmbedder::HashedTfEmbedder(std::size_t dim) : dim_(dim) {
    if (dim < 2) throw DomainError("embedding dimension must be >= 2");
}

std::vector<std::string> HashedTfEmbedder::tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

std::size_t HashedTfEmbedder::bucket(std::string_view token) const {
    return static_cast<std::size_t>(fnv1a64(token) % (dim_ - 1));
}

std::vector<Vec> HashedTfEmbedder::embed(const std::vector<std::string>& texts) {
    std::vector<Vec> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        Vec v(dim_, 0.0);
        const auto tokens = tokenize(t);
        if (tokens.empty()) {
            v[dim_ - 1] = 1.0;
        } else {
            for (const auto& tok : tokens) v[bucket(tok)] += 1.0;
            normalize(v);
        }
        out.push_back(std::move(v));
    }
    return out;
}

RemoteEmbedder::RemoteEmbedder(gateway::BackendConfig cfg, std::size_t batch)
    : transport_(std::move(cfg)), batch_(std::max<std::size_t>(1, batch)) {}

std::vector<Vec> RemoteEmbedder::embed(const std::vector<std::string>& texts) {
    std::vector<Vec> out;
    for (std::size_t start = 0; start < texts.size(); start += batch_) {
        const auto end = std::min(texts.size(), start + batch_);
        nlohmann::json input = nlohmann::json::array();
        for (std::size_t i = start; i < end; ++i) input.push_back(texts[i].empty() ? std::string(" ") : texts[i]);
        const auto body = transport_.post("/embeddings", {{"model", transport_.config().model}, {"input", input}});
        try {
            const auto& data = body.at("data");
            if (data.size() != end - start) throw TransportError("embedding response has wrong item count");
            for (const auto& item : data) {
                Vec v = item.at("embedding").get<Vec>();
                normalize(v);
                out.push_back(std::move(v));
            }
        } catch (const nlohmann::json::exception&) {
            throw TransportError("malformed embedding response: missing data[*].embedding");
        }
    }
    if (!out.empty()) {
        const auto dim = out.front().size();
        for (const auto& v : out) {
            if (v.size() != dim) throw TransportError("embedding endpoint returned mixed dimensions");
        }
    }
    return out;
}

double mean_pairwise_cosine(const std::vector<Vec>& vectors) {
    const auto m = vectors.size();
    if (m < 2) throw DomainError("mean_pairwise_cosine: need at least 2 vectors");
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) s += cosine(vectors[i], vectors[j]);
    }
    return s / static_cast<double>(m * (m - 1) / 2);
}

Summary summarize(std::vector<double> values) {
    Summary s;
    s.n = values.size();
    if (values.empty()) return s;
    std::sort(values.begin(), values.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, values.size() - 1);
        return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
    };
    s.min = values.front();
    s.q1 = quantile(0.25);
    s.median = quantile(0.5);
    s.q3 = quantile(0.75);
    s.max = values.back();
    return s;
}

Report group_similarity(const std::vector<Record>& records, Embedder& embedder, bool pooled) {
    Report rep;
    rep.pooled = pooled;
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::string>> groups;
    std::size_t flagged = 0;
    for (const auto& r : records) {
        auto [it, inserted] = groups.try_emplace(r.query_id);
        if (inserted) order.push_back(r.query_id);
        Thinking th = extract_thinking(r.response);
        flagged += th.fallback;
        it->second.push_back(std::move(th.text));
    }
    if (flagged > 0) rep.diagnostics.push_back(std::to_string(flagged) + " responses without a usable <think> block");

    std::vector<double> summary_values;
    for (const auto& id : order) {
        const auto& texts = groups[id];
        if (texts.size() < 2) {
            rep.diagnostics.push_back("skipped singleton group " + id);
            continue;
        }
        const auto vecs = embedder.embed(texts);
        GroupSimilarity g{id, texts.size(), mean_pairwise_cosine(vecs)};
        if (pooled) {
            for (std::size_t i = 0; i < vecs.size(); ++i) {
                for (std::size_t j = i + 1; j < vecs.size(); ++j) summary_values.push_back(cosine(vecs[i], vecs[j]));
            }
        } else {
            summary_values.push_back(g.mean);
        }
        rep.groups.push_back(std::move(g));
    }
    rep.summary = summarize(std::move(summary_values));
    return rep;
}

nlohmann::json to_json(const Report& r) {
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : r.groups) groups.push_back({{"query_id", g.query_id}, {"count", g.count}, {"mean", g.mean}});
    return {
        {"groups", std::move(groups)},
        {"summary",
         {{"n", r.summary.n},
          {"pooled", r.pooled},
          {"min", r.summary.min},
          {"q1", r.summary.q1},
          {"median", r.summary.median},
          {"q3", r.summary.q3},
          {"max", r.summary.max}}},
        {"diagnostics", r.diagnostics},
    };
}

std::string to_csv(const Report& r) {
    std::ostringstream os;
    os.precision(17);
    os << "query_id,count,mean\n";
    for (const auto& g : r.groups) {
        std::string id = g.query_id;
        if (id.find_first_of(",\"") != std::string::npos) {
            std::string quoted = "\"";
            for (char c : id) quoted += (c == '"') ? std::string("\"\"") : std::string(1, c);
            id = quoted + "\"";
        }
        os << id << ',' << g.count << ',' << g.mean << '\n';
    }
    return os.str();
}

}  // namespace tailor::diversity
