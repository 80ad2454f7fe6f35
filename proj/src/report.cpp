#include "dyadloop/report.hpp"

#include "dyadloop/error.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

namespace dyadloop {

namespace {

constexpr std::string_view kColorA = "#1f77b4";
constexpr std::string_view kColorB = "#ff7f0e";
constexpr double kWidth = 640.0;
constexpr double kHeight = 360.0;
constexpr double kMargin = 40.0;

std::string_view author_color(Author a) { return a == Author::AgentA ? kColorA : kColorB; }

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

std::vector<std::pair<std::size_t, std::string_view>> data_lines(std::string_view text, std::string_view header) {
    std::vector<std::pair<std::size_t, std::string_view>> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            nl = text.size();
        }
        auto line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line.empty()) {
            continue;
        }
        if (line_no == 1) {
            if (line != header) {
                throw ParseError("unexpected header '" + std::string(line) + "'", line_no);
            }
            continue;
        }
        out.emplace_back(line_no, line);
    }
    return out;
}

template <typename T>
T parse_field(std::string_view field, std::string_view what, std::size_t line_no) {
    T v{};
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || ptr != field.data() + field.size()) {
        throw ParseError("bad " + std::string(what) + " '" + std::string(field) + "'", line_no);
    }
    return v;
}

Metric parse_metric_field(std::string_view field, std::size_t line_no) {
    const auto m = parse_metric_name(field);
    if (!m) {
        throw ParseError("unknown metric '" + std::string(field) + "'", line_no);
    }
    return *m;
}

Author parse_author_field(std::string_view field, std::size_t line_no) {
    const auto a = parse_author_tag(field);
    if (!a) {
        throw ParseError("bad author '" + std::string(field) + "'", line_no);
    }
    return *a;
}

bool parse_bool_field(std::string_view field, std::size_t line_no) {
    if (field == "true") {
        return true;
    }
    if (field == "false") {
        return false;
    }
    throw ParseError("bad boolean '" + std::string(field) + "'", line_no);
}

std::string escape_xml(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

// Fixed two-decimal coordinates keep SVGs short and stable.
std::string coord(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 2);
    return ec == std::errc{} ? std::string(buf, ptr) : std::string("0");
}

std::string svg_open(std::string_view title) {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
       << "<title>" << escape_xml(title) << "</title>\n"
       << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n"
       << "<text x=\"" << kMargin << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" << escape_xml(title)
       << "</text>\n";
    return os.str();
}

} // namespace

std::string format_number(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc{}) {
        throw ContractError("cannot format number");
    }
    return std::string(buf, ptr);
}

std::vector<MetricRow> metric_rows(const MetricSeries& series) {
    std::vector<MetricRow> rows;
    rows.reserve(series.values.size());
    for (std::size_t k = 0; k < series.values.size(); ++k) {
        const int pair = static_cast<int>(k) + 1;
        rows.push_back({series.round_id, series.metric, pair, author_for_step(pair), author_for_step(pair + 1),
                        series.values[k]});
    }
    return rows;
}

std::string format_metrics_csv(std::span<const MetricRow> rows) {
    std::string out(kMetricsHeader);
    out += '\n';
    for (const auto& r : rows) {
        out += std::to_string(r.round_id) + ',' + std::string(metric_name(r.metric)) + ',' +
               std::to_string(r.pair_index) + ',' + std::string(author_tag(r.left)) + ',' +
               std::string(author_tag(r.right)) + ',' + format_number(r.value) + '\n';
    }
    return out;
}

std::string format_verdicts_csv(std::span<const VerdictRow> rows) {
    std::string out(kVerdictsHeader);
    out += '\n';
    for (const auto& r : rows) {
        const auto& v = r.verdict;
        out += std::to_string(r.round_id) + ',' + std::string(metric_name(v.metric)) + ',' +
               (v.converged ? "true" : "false") + ',' + (v.onset_pair ? std::to_string(*v.onset_pair) : "") + ',' +
               (v.onset_turn() ? std::to_string(*v.onset_turn()) : "") + ',' + format_number(v.cutoff) + ',' +
               std::to_string(v.window) + ',' + (v.persists_to_end ? "true" : "false") + '\n';
    }
    return out;
}

std::vector<MetricRow> parse_metrics_csv(std::string_view text) {
    std::vector<MetricRow> rows;
    for (const auto& [line_no, line] : data_lines(text, kMetricsHeader)) {
        const auto f = split_fields(line);
        if (f.size() != 6) {
            throw ParseError("expected 6 fields, got " + std::to_string(f.size()), line_no);
        }
        MetricRow r;
        r.round_id = parse_field<int>(f[0], "round_id", line_no);
        r.metric = parse_metric_field(f[1], line_no);
        r.pair_index = parse_field<int>(f[2], "pair_index", line_no);
        r.left = parse_author_field(f[3], line_no);
        r.right = parse_author_field(f[4], line_no);
        r.value = parse_field<double>(f[5], "value", line_no);
        if (r.pair_index < 1) {
            throw ParseError("pair_index must be >= 1", line_no);
        }
        rows.push_back(r);
    }
    return rows;
}

std::vector<VerdictRow> parse_verdicts_csv(std::string_view text) {
    std::vector<VerdictRow> rows;
    for (const auto& [line_no, line] : data_lines(text, kVerdictsHeader)) {
        const auto f = split_fields(line);
        if (f.size() != 8) {
            throw ParseError("expected 8 fields, got " + std::to_string(f.size()), line_no);
        }
        VerdictRow r;
        r.round_id = parse_field<int>(f[0], "round_id", line_no);
        auto& v = r.verdict;
        v.metric = parse_metric_field(f[1], line_no);
        v.converged = parse_bool_field(f[2], line_no);
        if (!f[3].empty()) {
            v.onset_pair = parse_field<int>(f[3], "onset_pair", line_no);
        }
        v.cutoff = parse_field<double>(f[5], "cutoff", line_no);
        v.window = parse_field<int>(f[6], "window", line_no);
        v.persists_to_end = parse_bool_field(f[7], line_no);
        if (v.converged != v.onset_pair.has_value()) {
            throw ParseError("onset_pair must be present exactly when converged", line_no);
        }
        rows.push_back(r);
    }
    return rows;
}

std::vector<SourceSummary> summarize(std::span<const VerdictRow> verdicts, std::span<const Round> rounds) {
    std::map<int, SeedSource> source_of;
    for (const auto& r : rounds) {
        source_of[r.id()] = r.seed().source;
    }
    std::vector<SourceSummary> out;
    for (SeedSource s : kAllSeedSources) {
        for (Metric m : kAllMetrics) {
            out.push_back({s, m, 0, 0});
        }
    }
    for (const auto& row : verdicts) {
        const auto it = source_of.find(row.round_id);
        if (it == source_of.end()) {
            throw ContractError("verdict for unknown round " + std::to_string(row.round_id));
        }
        auto& cell = out[static_cast<std::size_t>(it->second) * std::size(kAllMetrics) +
                         static_cast<std::size_t>(row.verdict.metric)];
        ++cell.rounds;
        cell.converged += row.verdict.converged ? 1 : 0;
    }
    return out;
}

std::string format_summary_csv(std::span<const SourceSummary> summary) {
    std::string out(kSummaryHeader);
    out += '\n';
    for (const auto& s : summary) {
        out += std::string(source_tag(s.source)) + ',' + std::string(metric_name(s.metric)) + ',' +
               std::to_string(s.rounds) + ',' + std::to_string(s.converged) + '\n';
    }
    return out;
}

std::string format_summary_table(std::span<const SourceSummary> summary) {
    std::ostringstream os;
    auto pad = [&](std::string_view s, std::size_t w) {
        os << s;
        for (std::size_t i = s.size(); i < w; ++i) {
            os << ' ';
        }
    };
    pad("source", 12);
    for (Metric m : kAllMetrics) {
        pad(metric_name(m), 12);
    }
    os << '\n';
    std::array<int, 4> total_conv{};
    std::array<int, 4> total_rounds{};
    for (SeedSource s : kAllSeedSources) {
        pad(source_tag(s), 12);
        for (const auto& cell : summary) {
            if (cell.source != s) {
                continue;
            }
            pad(std::to_string(cell.converged) + "/" + std::to_string(cell.rounds), 12);
            total_conv[static_cast<std::size_t>(cell.metric)] += cell.converged;
            total_rounds[static_cast<std::size_t>(cell.metric)] += cell.rounds;
        }
        os << '\n';
    }
    pad("total", 12);
    for (std::size_t m = 0; m < 4; ++m) {
        pad(std::to_string(total_conv[m]) + "/" + std::to_string(total_rounds[m]), 12);
    }
    os << '\n';
    return os.str();
}

std::string render_series_svg(int round_id, Metric metric, std::span<const double> values,
                              const std::optional<CollapseVerdict>& verdict) {
    const std::string title = "round " + std::to_string(round_id) + " " + std::string(metric_name(metric));
    std::ostringstream os;
    os << svg_open(title);

    double y_max = 1.0;
    for (double v : values) {
        if (std::isfinite(v)) {
            y_max = std::max(y_max, v);
        }
    }
    double y_min = 0.0;
    for (double v : values) {
        if (std::isfinite(v)) {
            y_min = std::min(y_min, v);
        }
    }
    const double plot_w = kWidth - 2 * kMargin;
    const double plot_h = kHeight - 2 * kMargin;
    const std::size_t n = values.size();
    auto px = [&](std::size_t k) {
        return kMargin + (n <= 1 ? plot_w / 2 : plot_w * static_cast<double>(k) / static_cast<double>(n - 1));
    };
    auto py = [&](double v) { return kMargin + plot_h * (y_max - v) / (y_max - y_min); };

    os << "<line class=\"axis\" x1=\"" << coord(kMargin) << "\" y1=\"" << coord(py(y_min)) << "\" x2=\""
       << coord(kWidth - kMargin) << "\" y2=\"" << coord(py(y_min)) << "\" stroke=\"black\"/>\n";
    os << "<line class=\"axis\" x1=\"" << coord(kMargin) << "\" y1=\"" << coord(kMargin) << "\" x2=\""
       << coord(kMargin) << "\" y2=\"" << coord(py(y_min)) << "\" stroke=\"black\"/>\n";

    if (n > 1) {
        os << "<polyline class=\"series\" fill=\"none\" stroke=\"#999999\" points=\"";
        for (std::size_t k = 0; k < n; ++k) {
            os << (k ? " " : "") << coord(px(k)) << ',' << coord(py(values[k]));
        }
        os << "\"/>\n";
    }
    if (verdict) {
        os << "<line class=\"cutoff\" x1=\"" << coord(kMargin) << "\" y1=\"" << coord(py(verdict->cutoff))
           << "\" x2=\"" << coord(kWidth - kMargin) << "\" y2=\"" << coord(py(verdict->cutoff))
           << "\" stroke=\"#d62728\" stroke-dasharray=\"4 3\"/>\n";
        if (verdict->converged && verdict->onset_pair && *verdict->onset_pair >= 1 &&
            static_cast<std::size_t>(*verdict->onset_pair) <= n) {
            const double x = px(static_cast<std::size_t>(*verdict->onset_pair - 1));
            os << "<line class=\"onset\" x1=\"" << coord(x) << "\" y1=\"" << coord(kMargin) << "\" x2=\""
               << coord(x) << "\" y2=\"" << coord(py(y_min)) << "\" stroke=\"#2ca02c\"/>\n";
        }
    }
    for (std::size_t k = 0; k < n; ++k) {
        const Author left = author_for_step(static_cast<int>(k) + 1);
        os << "<circle class=\"point " << author_tag(left) << "\" cx=\"" << coord(px(k)) << "\" cy=\""
           << coord(py(values[k])) << "\" r=\"3\" fill=\"" << author_color(left) << "\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::string render_scatter_svg(std::string_view title, std::span<const ProjectionPoint> points) {
    std::ostringstream os;
    os << svg_open(title);
    double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
    if (!points.empty()) {
        x_min = x_max = points[0].x;
        y_min = y_max = points[0].y;
        for (const auto& p : points) {
            x_min = std::min(x_min, p.x);
            x_max = std::max(x_max, p.x);
            y_min = std::min(y_min, p.y);
            y_max = std::max(y_max, p.y);
        }
    }
    const double sx = x_max > x_min ? x_max - x_min : 1.0;
    const double sy = y_max > y_min ? y_max - y_min : 1.0;
    auto px = [&](double v) { return kMargin + (kWidth - 2 * kMargin) * (v - x_min) / sx; };
    auto py = [&](double v) { return kMargin + (kHeight - 2 * kMargin) * (y_max - v) / sy; };

    for (const auto& p : points) {
        if (!p.author) {
            continue;
        }
        os << "<circle class=\"point " << author_tag(*p.author) << "\" cx=\"" << coord(px(p.x)) << "\" cy=\""
           << coord(py(p.y)) << "\" r=\"3\" fill=\"" << author_color(*p.author) << "\"><title>round "
           << p.round_id << " step " << p.step_index << "</title></circle>\n";
    }
    // Seeds last so they sit on top.
    for (const auto& p : points) {
        if (p.author) {
            continue;
        }
        os << "<circle class=\"seed\" cx=\"" << coord(px(p.x)) << "\" cy=\"" << coord(py(p.y))
           << "\" r=\"7\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"><title>round " << p.round_id
           << " seed</title></circle>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::string format_tsne_csv(std::span<const ProjectionPoint> points) {
    std::string out(kTsneHeader);
    out += '\n';
    for (const auto& p : points) {
        out += std::to_string(p.round_id) + ',' + std::to_string(p.step_index) + ',' +
               (p.author ? std::string(author_tag(*p.author)) : std::string("seed")) + ',' + format_number(p.x) +
               ',' + format_number(p.y) + '\n';
    }
    return out;
}

} // namespace dyadloop
