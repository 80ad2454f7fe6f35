#include <doctest.h>

#include "dyadloop/error.hpp"
#include "dyadloop/report.hpp"

#include <random>
#include <regex>
#include <string>

using namespace dyadloop;

namespace {

std::size_t count_of(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + needle.size())) {
        ++n;
    }
    return n;
}

std::size_t line_count(const std::string& s) { return count_of(s, "\n"); }

std::size_t parse_error_line(auto&& fn) {
    try {
        fn();
    } catch (const ParseError& e) {
        return e.line();
    }
    return 0;
}

Round round_with_source(int id, SeedSource source) {
    GenerationParams params;
    params.turns = 1;
    Round r(id, make_seed("seed text", source), params);
    return r;
}

} // namespace

TEST_CASE("format_number round-trips") {
    std::mt19937_64 rng(71);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 2000; ++i) {
        const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 12) - 6);
        CHECK(std::stod(format_number(v)) == v);
    }
    CHECK(format_number(0.5) == "0.5");
    CHECK(format_number(0.0) == "0");
}

TEST_CASE("metric rows label pairs with their authors") {
    MetricSeries s;
    s.metric = Metric::Jaccard;
    s.round_id = 4;
    s.values = {0.1, 0.2, 0.3, 0.4, 0.5};
    const auto rows = metric_rows(s);
    REQUIRE(rows.size() == 5);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        CHECK(rows[k].round_id == 4);
        CHECK(rows[k].metric == Metric::Jaccard);
        CHECK(rows[k].pair_index == static_cast<int>(k) + 1);
        CHECK(rows[k].value == s.values[k]);
        CHECK(rows[k].left == (k % 2 == 0 ? Author::AgentA : Author::AgentB));
        CHECK(rows[k].right != rows[k].left);
    }
}

TEST_CASE("metrics CSV round-trips exactly") {
    std::mt19937_64 rng(73);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<MetricRow> rows;
    for (int r = 1; r <= 6; ++r) {
        for (Metric m : kAllMetrics) {
            MetricSeries s;
            s.metric = m;
            s.round_id = r;
            for (int k = 0; k < 49; ++k) {
                s.values.push_back(m == Metric::CoherenceDelta ? u(rng) * 1e-3 : u(rng));
            }
            const auto part = metric_rows(s);
            rows.insert(rows.end(), part.begin(), part.end());
        }
    }
    const std::string text = format_metrics_csv(rows);
    CHECK(text.starts_with(std::string(kMetricsHeader) + "\n"));
    CHECK(line_count(text) == rows.size() + 1);
    const auto back = parse_metrics_csv(text);
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].round_id == rows[i].round_id);
        CHECK(back[i].metric == rows[i].metric);
        CHECK(back[i].pair_index == rows[i].pair_index);
        CHECK(back[i].left == rows[i].left);
        CHECK(back[i].right == rows[i].right);
        CHECK(back[i].value == rows[i].value);
    }
    CHECK(format_metrics_csv(back) == text);
}

TEST_CASE("verdicts CSV round-trips, empty onset included") {
    std::vector<VerdictRow> rows;
    for (int r = 1; r <= 5; ++r) {
        for (Metric m : kAllMetrics) {
            CollapseVerdict v;
            v.metric = m;
            v.cutoff = 0.01 * r;
            v.window = 3;
            v.converged = (r + static_cast<int>(m)) % 2 == 0;
            if (v.converged) {
                v.onset_pair = r * 3;
                v.persists_to_end = r > 2;
            }
            rows.push_back({r, v});
        }
    }
    const std::string text = format_verdicts_csv(rows);
    CHECK(text.starts_with(std::string(kVerdictsHeader) + "\n"));
    CHECK(text.find(",false,,,") != std::string::npos);
    const auto back = parse_verdicts_csv(text);
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].round_id == rows[i].round_id);
        CHECK(back[i].verdict.metric == rows[i].verdict.metric);
        CHECK(back[i].verdict.converged == rows[i].verdict.converged);
        CHECK(back[i].verdict.onset_pair == rows[i].verdict.onset_pair);
        CHECK(back[i].verdict.cutoff == rows[i].verdict.cutoff);
        CHECK(back[i].verdict.window == rows[i].verdict.window);
        CHECK(back[i].verdict.persists_to_end == rows[i].verdict.persists_to_end);
    }
    CHECK(format_verdicts_csv(back) == text);
}

TEST_CASE("CSV parsers name the offending line") {
    const std::string header(kMetricsHeader);
    CHECK(parse_metrics_csv("").empty());
    CHECK(parse_metrics_csv(header + "\n").empty());
    CHECK(parse_error_line([] { parse_metrics_csv("round,metric\n"); }) == 1);
    CHECK(parse_error_line([&] { parse_metrics_csv(header + "\n1,cosine,1,A,B,0.5\n1,cosine,2,B,A,oops\n"); }) == 3);
    CHECK(parse_error_line([&] { parse_metrics_csv(header + "\n1,cosine,1,A,B\n"); }) == 2);
    CHECK(parse_error_line([&] { parse_metrics_csv(header + "\n1,euclid,1,A,B,0.5\n"); }) == 2);
    CHECK(parse_error_line([&] { parse_metrics_csv(header + "\n1,cosine,0,A,B,0.5\n"); }) == 2);
    CHECK(parse_error_line([&] { parse_metrics_csv(header + "\n1,cosine,1,C,B,0.5\n"); }) == 2);

    const std::string vh(kVerdictsHeader);
    CHECK(parse_verdicts_csv(vh + "\n").empty());
    CHECK(parse_error_line([&] { parse_verdicts_csv(vh + "\n1,cosine,maybe,,,0.1,3,false\n"); }) == 2);
    // An onset without convergence is inconsistent.
    CHECK(parse_error_line([&] { parse_verdicts_csv(vh + "\n1,cosine,false,4,2,0.1,3,false\n"); }) == 2);
    CHECK(parse_error_line([&] { parse_verdicts_csv(vh + "\n1,cosine,true,,,0.1,3,false\n"); }) == 2);
}

TEST_CASE("summary counts every verdict once") {
    std::vector<Round> rounds;
    std::vector<VerdictRow> verdicts;
    std::mt19937_64 rng(79);
    for (int id = 1; id <= 23; ++id) {
        rounds.push_back(round_with_source(id, kAllSeedSources[rng() % 5]));
        for (Metric m : kAllMetrics) {
            CollapseVerdict v;
            v.metric = m;
            v.converged = rng() % 3 == 0;
            if (v.converged) {
                v.onset_pair = 1;
            }
            verdicts.push_back({id, v});
        }
    }
    const auto summary = summarize(verdicts, rounds);
    REQUIRE(summary.size() == 20);
    int total = 0;
    for (const auto& cell : summary) {
        CHECK(cell.converged <= cell.rounds);
        int expected_rounds = 0;
        int expected_conv = 0;
        for (const auto& v : verdicts) {
            if (rounds[static_cast<std::size_t>(v.round_id - 1)].seed().source == cell.source &&
                v.verdict.metric == cell.metric) {
                ++expected_rounds;
                expected_conv += v.verdict.converged ? 1 : 0;
            }
        }
        CHECK(cell.rounds == expected_rounds);
        CHECK(cell.converged == expected_conv);
        total += cell.rounds;
    }
    CHECK(total == 23 * 4);

    const std::string csv = format_summary_csv(summary);
    CHECK(csv.starts_with(std::string(kSummaryHeader) + "\n"));
    CHECK(line_count(csv) == 21);
    const std::string table = format_summary_table(summary);
    CHECK(line_count(table) == 1 + 5 + 1);
    CHECK(table.find("total") != std::string::npos);
    CHECK(table.find("/23") != std::string::npos);

    verdicts.push_back({99, CollapseVerdict{}});
    CHECK_THROWS_AS(summarize(verdicts, rounds), ContractError);
}

TEST_CASE("series SVG marks points, cutoff and onset") {
    std::vector<double> values(49);
    for (std::size_t k = 0; k < values.size(); ++k) {
        values[k] = k < 20 ? 0.6 : 0.01;
    }
    CollapseVerdict v;
    v.converged = true;
    v.onset_pair = 21;
    v.cutoff = 0.05;
    v.metric = Metric::Cosine;
    const std::string svg = render_series_svg(7, Metric::Cosine, values, v);
    CHECK(svg.starts_with("<svg"));
    CHECK(svg.ends_with("</svg>\n"));
    CHECK(count_of(svg, "<circle class=\"point ") == 49);
    CHECK(count_of(svg, "<circle class=\"point A\"") == 25);
    CHECK(count_of(svg, "<circle class=\"point B\"") == 24);
    CHECK(count_of(svg, "class=\"cutoff\"") == 1);
    CHECK(count_of(svg, "class=\"onset\"") == 1);
    CHECK(svg.find("round 7 cosine") != std::string::npos);

    v.converged = false;
    v.onset_pair.reset();
    const std::string quiet = render_series_svg(7, Metric::Cosine, values, v);
    CHECK(count_of(quiet, "class=\"cutoff\"") == 1);
    CHECK(count_of(quiet, "class=\"onset\"") == 0);

    const std::string bare = render_series_svg(7, Metric::Cosine, values, std::nullopt);
    CHECK(count_of(bare, "class=\"cutoff\"") == 0);
    CHECK(count_of(bare, "<circle class=\"point ") == 49);

    // Coordinates stay inside the canvas even for constant or empty series.
    const std::vector<double> flat(10, 0.3);
    const std::string f = render_series_svg(1, Metric::Jaccard, flat, std::nullopt);
    CHECK(f.find("nan") == std::string::npos);
    CHECK(f.find("inf") == std::string::npos);
    CHECK(count_of(render_series_svg(1, Metric::Jaccard, {}, std::nullopt), "<circle") == 0);
}

TEST_CASE("scatter SVG draws one hollow seed per round") {
    std::vector<ProjectionPoint> pts;
    for (int r = 1; r <= 2; ++r) {
        pts.push_back({0.0, 0.0, 0, std::nullopt, r});
        for (int s = 1; s <= 50; ++s) {
            pts.push_back({std::cos(s), std::sin(s) * r, s, author_for_step(s), r});
        }
    }
    const std::string svg = render_scatter_svg("group <1> & co", pts);
    CHECK(count_of(svg, "<circle class=\"seed\"") == 2);
    CHECK(count_of(svg, "fill=\"none\"") == 2);
    CHECK(count_of(svg, "<circle class=\"point A\"") == 50);
    CHECK(count_of(svg, "<circle class=\"point B\"") == 50);
    CHECK(svg.find("group &lt;1&gt; &amp; co") != std::string::npos);
    CHECK(svg.find("group <1>") == std::string::npos);

    const std::string csv = format_tsne_csv(pts);
    CHECK(csv.starts_with(std::string(kTsneHeader) + "\n"));
    CHECK(line_count(csv) == 103);
    CHECK(count_of(csv, ",seed,") == 2);
    const std::regex row(R"(^\d+,\d+,(A|B|seed),[-0-9.e]+,[-0-9.e]+$)");
    std::size_t start = csv.find('\n') + 1;
    while (start < csv.size()) {
        const auto end = csv.find('\n', start);
        CHECK(std::regex_match(csv.substr(start, end - start), row));
        start = end + 1;
    }
}
