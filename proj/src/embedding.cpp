#include "dyadloop/embedding.hpp"

#include "dyadloop/error.hpp"
#include "dyadloop/hashing.hpp"
#include "dyadloop/kernels.hpp"
#include "dyadloop/textmetrics.hpp"
#include "http_json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace dyadloop {

namespace {

constexpr std::uint64_t kHashEmbedSeed = 0x64796164'6c6f6f70ULL;

} // namespace

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) {
        throw ContractError("embedding vector must have dim > 0");
    }
    for (double v : values_) {
        if (!std::isfinite(v)) {
            throw ContractError("embedding vector contains a non-finite value");
        }
    }
}

double cosine_distance(const EmbeddingVector& s1, const EmbeddingVector& s2) {
    if (s1.dim() != s2.dim()) {
        throw ContractError("cosine distance between vectors of dim " + std::to_string(s1.dim()) + " and " +
                            std::to_string(s2.dim()));
    }
    const auto t = kernels::dot_triple(s1.values(), s2.values());
    const bool zero1 = t.xx == 0.0;
    const bool zero2 = t.yy == 0.0;
    if (zero1 && zero2) {
        return 0.0;
    }
    if (zero1 || zero2) {
        return 1.0;
    }
    // sqrt(xx * xx) == xx exactly, so identical vectors give exactly 0.
    const double sim = t.xy / std::sqrt(t.xx * t.yy);
    return 1.0 - std::clamp(sim, -1.0, 1.0);
}

EmbeddingVector hash_embed(std::string_view text, std::size_t dim) {
    if (dim == 0) {
        throw ContractError("hash_embed dim must be >= 1");
    }
    std::vector<long double> acc(dim, 0.0L);
    for (const auto& token : tokenize(text)) {
        const std::uint64_t h = mix64(fnv1a64(token) ^ kHashEmbedSeed);
        const std::size_t bucket = static_cast<std::size_t>(h % dim);
        acc[bucket] += (h >> 63) != 0 ? -1.0L : 1.0L;
    }
    long double norm2 = 0.0L;
    for (long double v : acc) {
        norm2 += v * v;
    }
    std::vector<double> out(dim, 0.0);
    if (norm2 > 0.0L) {
        const long double norm = std::sqrt(norm2);
        for (std::size_t i = 0; i < dim; ++i) {
            out[i] = static_cast<double>(acc[i] / norm);
        }
    }
    return EmbeddingVector(std::move(out));
}

HashEmbedder::HashEmbedder(std::size_t dim) : dim_(dim) {
    if (dim_ == 0) {
        throw ContractError("hash embedder dim must be >= 1");
    }
}

EmbeddingVector remote_embed(std::string_view text, const std::string& endpoint, const std::string& model,
                             const RemoteEmbedOptions& options) {
    const auto ep = detail::parse_endpoint(endpoint);
    const nlohmann::json body = {{"model", model}, {"input", nlohmann::json::array({std::string(text)})}};
    const auto res = detail::post_json(ep, body, options.token, options.timeout);
    std::vector<double> values;
    try {
        values = res.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("embeddings response lacks data[0].embedding: " + detail::excerpt(res.dump()));
    }
    if (options.expected_dim && values.size() != *options.expected_dim) {
        throw ContractError("embeddings response has dim " + std::to_string(values.size()) + ", declared " +
                            std::to_string(*options.expected_dim));
    }
    return EmbeddingVector(std::move(values));
}

RemoteEmbedder::RemoteEmbedder(std::string endpoint, std::string model, std::size_t dim, RemoteEmbedOptions options)
    : endpoint_(std::move(endpoint)), model_(std::move(model)), dim_(dim), options_(std::move(options)) {
    options_.expected_dim = dim_;
    detail::parse_endpoint(endpoint_);
}

std::unique_ptr<RemoteEmbedder> RemoteEmbedder::from_env(std::string model, std::size_t dim) {
    const char* url = std::getenv("DYADLOOP_EMBED_URL");
    if (url == nullptr || *url == '\0') {
        throw ContractError("DYADLOOP_EMBED_URL is not set");
    }
    RemoteEmbedOptions options;
    if (const char* token = std::getenv("DYADLOOP_EMBED_TOKEN")) {
        options.token = token;
    }
    return std::make_unique<RemoteEmbedder>(url, std::move(model), dim, std::move(options));
}

EmbeddingVector RemoteEmbedder::embed(std::string_view text) const {
    {
        std::lock_guard lock(memo_mutex_);
        if (auto it = memo_.find(text); it != memo_.end()) {
            return it->second;
        }
    }
    auto v = remote_embed(text, endpoint_, model_, options_);
    std::lock_guard lock(memo_mutex_);
    memo_.emplace(std::string(text), v);
    return v;
}

} // namespace dyadloop
