#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dyadloop {

/// Dense sentence embedding: non-empty, all components finite.
class EmbeddingVector {
public:
    EmbeddingVector() = default;
    /// Throws ContractError when empty or non-finite.
    explicit EmbeddingVector(std::vector<double> values);

    std::size_t dim() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }

    bool operator==(const EmbeddingVector&) const = default;

private:
    std::vector<double> values_;
};

/// 1 - cos(s1, s2), in [0, 2].
///
/// Two zero vectors are at distance 0; a zero vector against a non-zero one
/// is at distance 1. Throws ContractError on a dimension mismatch.
double cosine_distance(const EmbeddingVector& s1, const EmbeddingVector& s2);

/// Feature-hashed bag of tokens: each token adds +-1 to one of `dim`
/// buckets; the result is L2-normalized unless it is all zeros.
EmbeddingVector hash_embed(std::string_view text, std::size_t dim);

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string name() const = 0;
    virtual std::size_t dim() const = 0;
    virtual EmbeddingVector embed(std::string_view text) const = 0;
};

class HashEmbedder final : public EmbeddingProvider {
public:
    static constexpr std::size_t kDefaultDim = 768;

    explicit HashEmbedder(std::size_t dim = kDefaultDim);
    std::string name() const override { return "hash"; }
    std::size_t dim() const override { return dim_; }
    EmbeddingVector embed(std::string_view text) const override { return hash_embed(text, dim_); }

private:
    std::size_t dim_;
};

struct RemoteEmbedOptions {
    std::string token;
    std::chrono::milliseconds timeout{30000};
    /// When set, a response of any other length is a ContractError.
    std::optional<std::size_t> expected_dim;
};

/// One embeddings request: {"model", "input": [text]} -> data[0].embedding.
EmbeddingVector remote_embed(std::string_view text, const std::string& endpoint, const std::string& model,
                             const RemoteEmbedOptions& options = {});

/// Remote provider with a per-instance memo table; safe to share across threads.
class RemoteEmbedder final : public EmbeddingProvider {
public:
    RemoteEmbedder(std::string endpoint, std::string model, std::size_t dim, RemoteEmbedOptions options = {});

    /// Endpoint from DYADLOOP_EMBED_URL and token from DYADLOOP_EMBED_TOKEN.
    static std::unique_ptr<RemoteEmbedder> from_env(std::string model, std::size_t dim);

    std::string name() const override { return "remote:" + model_; }
    std::size_t dim() const override { return dim_; }
    EmbeddingVector embed(std::string_view text) const override;

private:
    std::string endpoint_;
    std::string model_;
    std::size_t dim_;
    RemoteEmbedOptions options_;
    mutable std::mutex memo_mutex_;
    mutable std::map<std::string, EmbeddingVector, std::less<>> memo_;
};

} // namespace dyadloop
