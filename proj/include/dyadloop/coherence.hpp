#pragma once

#include "dyadloop/core.hpp"
#include "dyadloop/detection_types.hpp"

#include <cstddef>
#include <map>
#include <string>
#include <utility>

namespace dyadloop {

/// Unigram and within-text bigram counts used to estimate NPMI.
struct CorpusStats {
    std::map<std::string, std::size_t, std::less<>> unigram_counts;
    std::map<std::pair<std::string, std::string>, std::size_t> bigram_counts;
    std::size_t total_unigrams = 0;
    std::size_t total_bigrams = 0;
    double smoothing_alpha = 1.0;

    std::size_t vocabulary_size() const noexcept { return unigram_counts.size(); }

    /// Adds one text's tokens. Bigrams never span two texts.
    void add_text(std::string_view text);
};

/// Counts over the seed and every step of the round.
CorpusStats build_stats(const Round& round, double smoothing_alpha = 1.0);

/// Normalized PMI of the bigram (w1, w2), clamped to [-1, 1].
///
/// p(w) = (c(w) + a) / (U + a V) and p(w1, w2) = (c(w1, w2) + a) / (B + a V^2),
/// with V the vocabulary size. p(w1, w2) = 1 gives 1; p(w1, w2) = 0 gives -1.
/// Throws ContractError when B + a V^2 is 0.
double npmi(std::string_view w1, std::string_view w2, const CorpusStats& stats);

/// Mean NPMI over adjacent bigrams of tokenize(input) followed by
/// tokenize(response); 0 when fewer than two tokens in total.
double coherence_score(std::string_view input_text, std::string_view response_text, const CorpusStats& stats);

/// Per-step coherence C_t with input = previous text (seed for step 1) and
/// response = step t, using round-local stats.
std::vector<double> step_coherence(const Round& round, double smoothing_alpha = 1.0);

/// |C_{t+1} - C_t| for t = 1..N-1. Throws ContractError on fewer than 2 steps.
MetricSeries coherence_delta_series(const Round& round, double smoothing_alpha = 1.0);

} // namespace dyadloop
