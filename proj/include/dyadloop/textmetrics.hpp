#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace dyadloop {

/// Lowercase word tokens; never contains an empty token.
class TokenList {
public:
    TokenList() = default;
    /// Throws ContractError if any token is empty.
    explicit TokenList(std::vector<std::string> tokens);
    TokenList(std::initializer_list<std::string> tokens);

    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    std::size_t size() const noexcept { return tokens_.size(); }
    bool empty() const noexcept { return tokens_.empty(); }
    const std::string& operator[](std::size_t i) const { return tokens_[i]; }
    auto begin() const noexcept { return tokens_.begin(); }
    auto end() const noexcept { return tokens_.end(); }

    bool operator==(const TokenList&) const = default;

private:
    std::vector<std::string> tokens_;
};

/// Byte range [begin, end) of one token in the original UTF-8 text.
struct TokenSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// Maximal runs of Unicode letters/digits. Invalid UTF-8 bytes act as separators.
std::vector<TokenSpan> token_spans(std::string_view text);

/// token_spans, lowercased.
TokenList tokenize(std::string_view text);

/// 1 - |A n B| / |A u B| over the distinct tokens of each list.
/// Both empty gives 0; exactly one empty gives 1.
double jaccard_distance(const TokenList& a, const TokenList& b);

struct NgramPrecision {
    std::size_t clipped = 0;
    std::size_t total = 0;
};

/// Candidate n-gram matches clipped by the reference counts. A candidate
/// shorter than n yields {0, 0}.
NgramPrecision modified_precision(const TokenList& candidate, const TokenList& reference, int n);

struct BleuConfig {
    int max_order = 4;
    /// Per-order weights; empty means uniform 1/max_order.
    std::vector<double> weights;
    /// Replace zero clipped counts by kSmoothingEpsilon instead of zeroing BLEU.
    bool smoothing = false;

    static constexpr double kSmoothingEpsilon = 1e-9;

    std::vector<double> resolved_weights() const;
    void validate() const;
};

/// Brevity penalty: 1 when candidate_len >= reference_len, else exp(1 - r/c).
double brevity_penalty(std::size_t candidate_len, std::size_t reference_len);

/// Sentence BLEU against a single reference.
///
/// The usable order is min(max_order, |candidate|, |reference|); weights of
/// the usable orders are renormalized to sum to 1 (uniform over them if they
/// sum to 0). Without smoothing any usable order with zero matches gives 0.
double bleu(const TokenList& candidate, const TokenList& reference, const BleuConfig& cfg = {});

/// 1 - bleu. Exactly one empty side gives 1; both empty gives 0.
double bleu_distance(const TokenList& candidate, const TokenList& reference, const BleuConfig& cfg = {});

} // namespace dyadloop
