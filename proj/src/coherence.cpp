#include "dyadloop/coherence.hpp"

#include "dyadloop/error.hpp"
#include "dyadloop/textmetrics.hpp"

#include <algorithm>
#include <cmath>

namespace dyadloop {

void CorpusStats::add_text(std::string_view text) {
    const auto tokens = tokenize(text);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (auto it = unigram_counts.find(tokens[i]); it != unigram_counts.end()) {
            ++it->second;
        } else {
            unigram_counts.emplace(tokens[i], 1);
        }
        ++total_unigrams;
        if (i + 1 < tokens.size()) {
            ++bigram_counts[{tokens[i], tokens[i + 1]}];
            ++total_bigrams;
        }
    }
}

CorpusStats build_stats(const Round& round, double smoothing_alpha) {
    if (smoothing_alpha < 0.0) {
        throw ContractError("smoothing alpha must be >= 0");
    }
    CorpusStats stats;
    stats.smoothing_alpha = smoothing_alpha;
    stats.add_text(round.seed().text);
    for (const auto& step : round.steps()) {
        stats.add_text(step.text);
    }
    return stats;
}

double npmi(std::string_view w1, std::string_view w2, const CorpusStats& stats) {
    const double alpha = stats.smoothing_alpha;
    const double v = static_cast<double>(stats.vocabulary_size());
    const double bigram_mass = static_cast<double>(stats.total_bigrams) + alpha * v * v;
    if (!(bigram_mass > 0.0)) {
        throw ContractError("NPMI needs at least one bigram or a positive smoothing alpha");
    }
    const double unigram_mass = static_cast<double>(stats.total_unigrams) + alpha * v;

    auto unigram = [&](std::string_view w) {
        auto it = stats.unigram_counts.find(w);
        return it == stats.unigram_counts.end() ? 0.0 : static_cast<double>(it->second);
    };
    double c12 = 0.0;
    if (auto it = stats.bigram_counts.find({std::string(w1), std::string(w2)}); it != stats.bigram_counts.end()) {
        c12 = static_cast<double>(it->second);
    }

    const double p12 = (c12 + alpha) / bigram_mass;
    if (p12 <= 0.0) {
        return -1.0;
    }
    if (p12 >= 1.0) {
        return 1.0;
    }
    const double p1 = (unigram(w1) + alpha) / unigram_mass;
    const double p2 = (unigram(w2) + alpha) / unigram_mass;
    if (!(p1 > 0.0) || !(p2 > 0.0)) {
        // Only reachable with alpha = 0 and a token missing from the corpus.
        return -1.0;
    }
    const double pmi = std::log(p12 / (p1 * p2));
    return std::clamp(pmi / -std::log(p12), -1.0, 1.0);
}

double coherence_score(std::string_view input_text, std::string_view response_text, const CorpusStats& stats) {
    std::vector<std::string> tokens = tokenize(input_text).tokens();
    const auto response = tokenize(response_text);
    tokens.insert(tokens.end(), response.begin(), response.end());
    if (tokens.size() < 2) {
        return 0.0;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
        sum += npmi(tokens[i], tokens[i + 1], stats);
    }
    return sum / static_cast<double>(tokens.size() - 1);
}

std::vector<double> step_coherence(const Round& round, double smoothing_alpha) {
    const auto stats = build_stats(round, smoothing_alpha);
    std::vector<double> c;
    c.reserve(round.steps().size());
    for (const auto& step : round.steps()) {
        c.push_back(coherence_score(round.input_of(step.index), step.text, stats));
    }
    return c;
}

MetricSeries coherence_delta_series(const Round& round, double smoothing_alpha) {
    if (round.steps().size() < 2) {
        throw ContractError("coherence delta needs at least 2 steps");
    }
    const auto c = step_coherence(round, smoothing_alpha);
    MetricSeries series{Metric::CoherenceDelta, {}, round.id()};
    series.values.reserve(c.size() - 1);
    for (std::size_t t = 0; t + 1 < c.size(); ++t) {
        series.values.push_back(std::abs(c[t + 1] - c[t]));
    }
    return series;
}

} // namespace dyadloop
