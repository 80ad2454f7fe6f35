#pragma once

#include "dyadloop/core.hpp"
#include "dyadloop/detection_types.hpp"
#include "dyadloop/embedding.hpp"
#include "dyadloop/textmetrics.hpp"

#include <optional>
#include <span>
#include <vector>

namespace dyadloop {

struct SeriesOptions {
    BleuConfig bleu;
    double coherence_alpha = 1.0;
};

/// values[k-1] = distance(step k, step k+1) for k = 1..N-1. BLEU uses step k
/// as reference and step k+1 as candidate; cosine embeds with `provider`.
/// Throws ContractError on fewer than 2 steps.
MetricSeries metric_series(const Round& round, Metric metric, const EmbeddingProvider& provider,
                           const SeriesOptions& options = {});

/// All four series, in kAllMetrics order.
std::vector<MetricSeries> all_metric_series(const Round& round, const EmbeddingProvider& provider,
                                            const SeriesOptions& options = {});

struct CollapseVerdict {
    bool converged = false;
    /// 1-based index of the first pair of the earliest qualifying window.
    std::optional<int> onset_pair;
    Metric metric = Metric::Cosine;
    double cutoff = 0.0;
    int window = 3;
    /// The run of sub-cutoff values that ends the series is at least
    /// `window` long, i.e. the conversation never left the collapsed regime.
    bool persists_to_end = false;

    /// Turn containing the onset pair: ceil(onset_pair / 2).
    std::optional<int> onset_turn() const;
};

/// Converged iff some `window` consecutive values are all strictly below
/// `cutoff`; the onset is the earliest such window. A window longer than the
/// series is simply not converged.
CollapseVerdict detect_collapse(const MetricSeries& series, double cutoff, int window = 3);

struct LabeledSeries {
    MetricSeries series;
    bool converged = false;
};

struct Calibration {
    double cutoff = 0.0;
    double f1 = 0.0;
};

/// F1 of detect_collapse verdicts against labels. With no positive labels
/// and no positive verdicts the agreement is perfect and F1 is 1.
double verdict_f1(std::span<const LabeledSeries> runs, double cutoff, int window);

/// Grid cutoff with the highest F1; ties go to the smaller cutoff.
/// Throws ContractError on an empty grid or no runs.
Calibration calibrate_cutoff(std::span<const LabeledSeries> runs, int window, std::span<const double> grid);

} // namespace dyadloop
