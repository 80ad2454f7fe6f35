#pragma once

#include "dyadloop/core.hpp"
#include "dyadloop/detection.hpp"
#include "dyadloop/projection.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dyadloop {

/// Shortest decimal form that round-trips (std::to_chars).
std::string format_number(double value);

inline constexpr std::string_view kMetricsHeader = "round_id,metric,pair_index,left_author,right_author,value";
inline constexpr std::string_view kVerdictsHeader =
    "round_id,metric,converged,onset_pair,onset_turn,cutoff,window,persists_to_end";
inline constexpr std::string_view kTsneHeader = "round_id,step_index,author,x,y";
inline constexpr std::string_view kSummaryHeader = "source,metric,rounds,converged";

struct MetricRow {
    int round_id = 0;
    Metric metric = Metric::Cosine;
    int pair_index = 1;
    Author left = Author::AgentA;
    Author right = Author::AgentB;
    double value = 0.0;
};

struct VerdictRow {
    int round_id = 0;
    CollapseVerdict verdict;
};

/// Rows of one series; pair k compares step k with step k+1.
std::vector<MetricRow> metric_rows(const MetricSeries& series);

std::string format_metrics_csv(std::span<const MetricRow> rows);
std::string format_verdicts_csv(std::span<const VerdictRow> rows);

/// Throws ParseError naming the 1-based line of the offending row.
/// An empty file or a header-only file yields no rows.
std::vector<MetricRow> parse_metrics_csv(std::string_view text);
std::vector<VerdictRow> parse_verdicts_csv(std::string_view text);

struct SourceSummary {
    SeedSource source = SeedSource::PromptGenerated;
    Metric metric = Metric::Cosine;
    int rounds = 0;
    int converged = 0;
};

/// One entry per (source, metric) in declaration order, including empty ones.
std::vector<SourceSummary> summarize(std::span<const VerdictRow> verdicts, std::span<const Round> rounds);
std::string format_summary_csv(std::span<const SourceSummary> summary);
/// Fixed-width table: a row per source, a converged/rounds column per metric.
std::string format_summary_table(std::span<const SourceSummary> summary);

/// Line chart of one distance series. Each value is a `<circle class="point">`
/// coloured by its left step's author. With a verdict, a `line.cutoff` is
/// drawn, plus a `line.onset` marker when converged.
std::string render_series_svg(int round_id, Metric metric, std::span<const double> values,
                              const std::optional<CollapseVerdict>& verdict);

/// Scatter of projected outputs. Seeds are hollow `circle.seed` markers;
/// outputs are filled and coloured by author.
std::string render_scatter_svg(std::string_view title, std::span<const ProjectionPoint> points);

std::string format_tsne_csv(std::span<const ProjectionPoint> points);

} // namespace dyadloop
