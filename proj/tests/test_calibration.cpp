#include <doctest.h>

#include "dyadloop/calibration.hpp"
#include "dyadloop/cli.hpp"
#include "dyadloop/config.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <map>
#include <sstream>

using namespace dyadloop;

namespace {

std::vector<std::string> tokens_of(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string w; in >> w;) {
        out.push_back(w);
    }
    return out;
}

/// Transcript and provenance hashes; wall-clock timestamps are excluded.
bool same_transcript(const Round& a, const Round& b) {
    if (!(a.seed() == b.seed()) || a.steps().size() != b.steps().size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.steps().size(); ++i) {
        const auto& x = a.steps()[i];
        const auto& y = b.steps()[i];
        if (x.text != y.text || x.author != y.author || x.trace.input_hash != y.trace.input_hash ||
            x.trace.output_hash != y.trace.output_hash) {
            return false;
        }
    }
    return true;
}

} // namespace

TEST_CASE("labeled suite has four balanced families of full-length rounds") {
    SuiteOptions opts;
    opts.rounds_per_family = 4;
    opts.turns = 12;
    const auto suite = synthetic_labeled_suite(opts);
    REQUIRE(suite.size() == 16);
    std::map<std::string, int> count;
    std::map<std::string, bool> label;
    std::vector<int> ids;
    for (const auto& lr : suite) {
        ++count[lr.family];
        label[lr.family] = lr.converged;
        CHECK(lr.round.steps().size() == 24);
        CHECK(lr.round.is_complete());
        ids.push_back(lr.round.id());
    }
    CHECK(count.size() == 4);
    for (const auto& [family, n] : count) {
        CHECK(n == 4);
    }
    CHECK(label.at("parrot"));
    CHECK(label.at("late-collapse"));
    CHECK_FALSE(label.at("random"));
    CHECK_FALSE(label.at("markov-parrot"));
    std::sort(ids.begin(), ids.end());
    CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
}

TEST_CASE("labeled suite is deterministic in its seed") {
    SuiteOptions opts;
    opts.rounds_per_family = 3;
    const auto a = synthetic_labeled_suite(opts);
    const auto b = synthetic_labeled_suite(opts);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(same_transcript(a[i].round, b[i].round));
        CHECK(a[i].family == b[i].family);
    }
    opts.rng_seed += 1;
    const auto c = synthetic_labeled_suite(opts);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        differs = differs || !same_transcript(a[i].round, c[i].round);
    }
    CHECK(differs);
}

TEST_CASE("family shapes match their labels") {
    SuiteOptions opts;
    opts.rounds_per_family = 3;
    for (const auto& lr : synthetic_labeled_suite(opts)) {
        const auto& steps = lr.round.steps();
        std::vector<double> jac;
        for (std::size_t k = 0; k + 1 < steps.size(); ++k) {
            jac.push_back(oracle::jaccard(tokens_of(steps[k].text), tokens_of(steps[k + 1].text)));
        }
        if (lr.family == "parrot") {
            for (double v : jac) {
                CHECK(v == 0.0);
            }
        } else if (lr.family == "markov-parrot") {
            // Agent B echoes agent A, so pairs (A, B) match and (B, A) do not;
            // every window of three holds a nonzero pair.
            double min_odd = 1.0;
            for (std::size_t k = 0; k < jac.size(); ++k) {
                if (k % 2 == 0) {
                    CHECK(jac[k] == 0.0);
                } else {
                    min_odd = std::min(min_odd, jac[k]);
                }
            }
            CHECK(min_odd > 0.0);
            CHECK(oracle::onset(jac, min_odd, 3) == 0);
        } else if (lr.family == "random") {
            CHECK(oracle::onset(jac, 0.5, 3) == 0);
        } else {
            REQUIRE(lr.family == "late-collapse");
            // Fixed text with one word swapped per step: the tail stays close.
            const int on = oracle::onset(jac, 0.5, 3);
            REQUIRE(on >= 10);
            for (std::size_t k = static_cast<std::size_t>(on) - 1; k < jac.size(); ++k) {
                CHECK(jac[k] < 0.5);
            }
        }
    }
}

TEST_CASE("default cutoff grid") {
    const auto grid = default_cutoff_grid();
    REQUIRE(!grid.empty());
    CHECK(std::is_sorted(grid.begin(), grid.end()));
    CHECK(std::adjacent_find(grid.begin(), grid.end()) == grid.end());
    CHECK(grid.front() == doctest::Approx(0.0001));
    CHECK(grid.back() == doctest::Approx(0.5));
    CHECK(grid.size() == 99 + 50);
    CHECK(std::count_if(grid.begin(), grid.end(), [](double g) { return g < 0.01; }) == 99);
    for (double g : grid) {
        CHECK(g > 0.0);
    }
}

TEST_CASE("formatted calibration parses back to the same cutoffs") {
    SuiteOptions opts;
    opts.rounds_per_family = 3;
    const auto suite = synthetic_labeled_suite(opts);
    const HashEmbedder provider(64);
    const auto grid = default_cutoff_grid();
    const auto results = calibrate_metrics(suite, provider, 3, grid);
    REQUIRE(results.size() == 4);
    const std::string text = format_calibration(results, opts, provider.name(), 3);

    std::istringstream in(text);
    RunConfig cfg;
    for (const auto& [k, v] : parse_key_values(in)) {
        cfg.set(k, v);
    }
    for (const auto& r : results) {
        REQUIRE(cfg.cutoff(r.metric).has_value());
        CHECK(*cfg.cutoff(r.metric) == r.cutoff);
        CHECK(std::find(grid.begin(), grid.end(), r.cutoff) != grid.end());
        CHECK(r.f1 >= 0.0);
        CHECK(r.f1 <= 1.0);
    }
    CHECK(text.find("hash") != std::string::npos);
}

TEST_CASE("shipped config cutoffs equal a fresh calibration") {
    RunConfig cfg;
    cfg.load(testing_support::source_dir() + "/config/dyadloop.conf");
    const auto provider = make_embedding_provider(cfg);
    const auto results = calibrate_metrics(synthetic_labeled_suite(), *provider, cfg.window, default_cutoff_grid(),
                                           SeriesOptions{cfg.bleu, cfg.coherence_alpha});
    for (const auto& r : results) {
        INFO(metric_name(r.metric));
        REQUIRE(cfg.cutoff(r.metric).has_value());
        CHECK(*cfg.cutoff(r.metric) == r.cutoff);
    }
}
