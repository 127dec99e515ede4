#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tailor/gateway.hpp"

namespace tailor::diversity {

using Vec = std::vector<double>;

struct Thinking {
    std::string text;
    bool fallback = false;  // no usable <think> block; text is the whole input or empty
};

/// Content of the <think> block; the whole text (flagged) when there is none.
Thinking extract_thinking(std::string_view text);

class Embedder {
public:
    virtual ~Embedder() = default;
    /// One L2-normalised vector per text, all of the same dimension.
    virtual std::vector<Vec> embed(const std::vector<std::string>& texts) = 0;
};

/// Hashed bag-of-tokens term frequencies. Tokens are lowercase alphanumeric runs hashed
/// into buckets [0, dim-1); bucket dim-1 is reserved for empty texts.
class HashedTfEmbedder final : public Embedder {
public:
    explicit HashedTfEmbedder(std::size_t dim = 4096);
    std::vector<Vec> embed(const std::vector<std::string>& texts) override;

    std::size_t bucket(std::string_view token) const;
    static std::vector<std::string> tokenize(std::string_view text);

private:
    std::size_t dim_;
};

/// OpenAI-compatible /embeddings endpoint.
class RemoteEmbedder final : public Embedder {
public:
    explicit RemoteEmbedder(gateway::BackendConfig cfg, std::size_t batch = 64);
    std::vector<Vec> embed(const std::vector<std::string>& texts) override;

private:
    gateway::HttpTransport transport_;
    std::size_t batch_;
};

void normalize(Vec& v);
double cosine(const Vec& a, const Vec& b);

/// Mean cosine over all m(m-1)/2 unordered pairs. Throws DomainError when m < 2.
double mean_pairwise_cosine(const std::vector<Vec>& vectors);

struct GroupSimilarity {
    std::string query_id;
    std::size_t count = 0;
    double mean = 0.0;
};

struct Summary {
    std::size_t n = 0;
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

/// Quartiles by linear interpolation between order statistics.
Summary summarize(std::vector<double> values);

struct Report {
    std::vector<GroupSimilarity> groups;
    Summary summary;
    bool pooled = false;  // summary over every pairwise value instead of group means
    std::vector<std::string> diagnostics;
};

struct Record {
    std::string query_id;
    std::string response;
};

/// Groups by query id (first-appearance order), embeds thinking text, scores each group.
Report group_similarity(const std::vector<Record>& records, Embedder& embedder, bool pooled = false);

nlohmann::json to_json(const Report& r);
std::string to_csv(const Report& r);

}  // namespace tailor::diversity
