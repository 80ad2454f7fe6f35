#include "dyadloop/detection.hpp"

#include "dyadloop/coherence.hpp"
#include "dyadloop/error.hpp"

#include <algorithm>
#include <array>

namespace dyadloop {

namespace {

constexpr std::array<std::string_view, 4> kMetricNames = {"cosine", "jaccard", "bleu", "coherence"};

void require_pairs(const Round& round) {
    if (round.steps().size() < 2) {
        throw ContractError("round " + std::to_string(round.id()) + " has fewer than 2 steps");
    }
}

std::vector<EmbeddingVector> embed_steps(const Round& round, const EmbeddingProvider& provider) {
    std::vector<EmbeddingVector> out;
    out.reserve(round.steps().size());
    for (const auto& step : round.steps()) {
        try {
            out.push_back(provider.embed(step.text));
        } catch (const std::exception& e) {
            const int k = step.index;
            const std::string pairs = k == 1 ? "pair 1"
                                             : k == static_cast<int>(round.steps().size())
                                                   ? "pair " + std::to_string(k - 1)
                                                   : "pairs " + std::to_string(k - 1) + " and " + std::to_string(k);
            throw Error("round " + std::to_string(round.id()) + ": embedding step " + std::to_string(k) + " for " +
                        pairs + " failed: " + e.what());
        }
    }
    return out;
}

MetricSeries lexical_series(const Round& round, Metric metric, const SeriesOptions& options) {
    MetricSeries series{metric, {}, round.id()};
    std::vector<TokenList> tokens;
    tokens.reserve(round.steps().size());
    for (const auto& step : round.steps()) {
        tokens.push_back(tokenize(step.text));
    }
    for (std::size_t k = 0; k + 1 < tokens.size(); ++k) {
        series.values.push_back(metric == Metric::Jaccard ? jaccard_distance(tokens[k], tokens[k + 1])
                                                          : bleu_distance(tokens[k + 1], tokens[k], options.bleu));
    }
    return series;
}

MetricSeries cosine_series(const Round& round, const std::vector<EmbeddingVector>& emb) {
    MetricSeries series{Metric::Cosine, {}, round.id()};
    for (std::size_t k = 0; k + 1 < emb.size(); ++k) {
        series.values.push_back(cosine_distance(emb[k], emb[k + 1]));
    }
    return series;
}

} // namespace

std::string_view metric_name(Metric metric) noexcept { return kMetricNames[static_cast<std::size_t>(metric)]; }

std::optional<Metric> parse_metric_name(std::string_view name) {
    for (std::size_t i = 0; i < kMetricNames.size(); ++i) {
        if (name == kMetricNames[i]) {
            return static_cast<Metric>(i);
        }
    }
    return std::nullopt;
}

MetricSeries metric_series(const Round& round, Metric metric, const EmbeddingProvider& provider,
                           const SeriesOptions& options) {
    require_pairs(round);
    switch (metric) {
    case Metric::Cosine: return cosine_series(round, embed_steps(round, provider));
    case Metric::Jaccard:
    case Metric::BleuDist: return lexical_series(round, metric, options);
    case Metric::CoherenceDelta: return coherence_delta_series(round, options.coherence_alpha);
    }
    throw ContractError("unknown metric");
}

std::vector<MetricSeries> all_metric_series(const Round& round, const EmbeddingProvider& provider,
                                            const SeriesOptions& options) {
    std::vector<MetricSeries> out;
    for (Metric m : kAllMetrics) {
        out.push_back(metric_series(round, m, provider, options));
    }
    return out;
}

std::optional<int> CollapseVerdict::onset_turn() const {
    if (!onset_pair) {
        return std::nullopt;
    }
    return (*onset_pair + 1) / 2;
}

CollapseVerdict detect_collapse(const MetricSeries& series, double cutoff, int window) {
    if (window < 1) {
        throw ContractError("collapse window must be >= 1");
    }
    if (cutoff < 0.0) {
        throw ContractError("collapse cutoff must be >= 0");
    }
    CollapseVerdict v;
    v.metric = series.metric;
    v.cutoff = cutoff;
    v.window = window;

    const auto& x = series.values;
    const auto w = static_cast<std::size_t>(window);
    std::size_t run = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        run = x[k] < cutoff ? run + 1 : 0;
        if (run == w && !v.converged) {
            v.converged = true;
            v.onset_pair = static_cast<int>(k + 2 - w);
        }
    }
    v.persists_to_end = v.converged && run >= w;
    return v;
}

double verdict_f1(std::span<const LabeledSeries> runs, double cutoff, int window) {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    for (const auto& run : runs) {
        const bool predicted = detect_collapse(run.series, cutoff, window).converged;
        if (predicted && run.converged) {
            ++tp;
        } else if (predicted) {
            ++fp;
        } else if (run.converged) {
            ++fn;
        }
    }
    if (tp + fp + fn == 0) {
        return 1.0;
    }
    return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

Calibration calibrate_cutoff(std::span<const LabeledSeries> runs, int window, std::span<const double> grid) {
    if (grid.empty()) {
        throw ContractError("calibration grid is empty");
    }
    if (runs.empty()) {
        throw ContractError("calibration needs at least one labeled run");
    }
    std::vector<double> sorted(grid.begin(), grid.end());
    std::sort(sorted.begin(), sorted.end());
    Calibration best{sorted.front(), -1.0};
    for (double cutoff : sorted) {
        const double f1 = verdict_f1(runs, cutoff, window);
        if (f1 > best.f1) {
            best = {cutoff, f1};
        }
    }
    return best;
}

} // namespace dyadloop
