#pragma once

#include <optional>
#include <string_view>
#include <vector>

namespace dyadloop {

enum class Metric { Cosine, Jaccard, BleuDist, CoherenceDelta };

inline constexpr Metric kAllMetrics[] = {Metric::Cosine, Metric::Jaccard, Metric::BleuDist, Metric::CoherenceDelta};

/// cosine, jaccard, bleu, coherence
std::string_view metric_name(Metric metric) noexcept;
std::optional<Metric> parse_metric_name(std::string_view name);

/// Distances between consecutive steps of one round; values[k] compares
/// step k+1 with step k+2 (pair indices are 1-based in reports).
struct MetricSeries {
    Metric metric = Metric::Cosine;
    std::vector<double> values;
    int round_id = 0;
};

} // namespace dyadloop
