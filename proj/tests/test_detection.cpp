#include <doctest.h>

#include "dyadloop/coherence.hpp"
#include "dyadloop/detection.hpp"
#include "dyadloop/error.hpp"
#include "dyadloop/orchestrator.hpp"
#include "oracles.hpp"

#include <random>

using namespace dyadloop;

namespace {

MetricSeries series(std::vector<double> v, Metric m = Metric::Cosine) { return MetricSeries{m, std::move(v), 1}; }

Round round_of(const std::vector<std::string>& steps, const std::string& seed = "seed text here") {
    Round r(7, make_seed(seed, SeedSource::News),
            GenerationParams{.turns = static_cast<int>((steps.size() + 1) / 2)});
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const int idx = static_cast<int>(i) + 1;
        r.append(Step{idx, author_for_step(idx), steps[i], {}});
    }
    return r;
}

std::vector<double> random_series(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> len(0, 30);
    std::uniform_real_distribution<double> val(0.0, 0.3);
    std::vector<double> v(static_cast<std::size_t>(len(rng)));
    for (auto& x : v) {
        x = val(rng);
    }
    return v;
}

} // namespace

TEST_CASE("metric names round trip") {
    for (Metric m : kAllMetrics) {
        CHECK(parse_metric_name(metric_name(m)) == m);
    }
    CHECK_FALSE(parse_metric_name("entropy").has_value());
}

TEST_CASE("detector rule examples") {
    auto v = detect_collapse(series({0.9, 0.05, 0.04, 0.03, 0.9}), 0.1, 3);
    CHECK(v.converged);
    CHECK(v.onset_pair == 2);
    CHECK(v.onset_turn() == 1);
    CHECK_FALSE(v.persists_to_end);

    v = detect_collapse(series({0.5, 0.6, 0.7}), 0.1, 3);
    CHECK_FALSE(v.converged);
    CHECK_FALSE(v.onset_pair.has_value());
    CHECK_FALSE(v.onset_turn().has_value());

    CHECK_FALSE(detect_collapse(series({0.05, 0.05}), 0.1, 3).converged);
    // Strictly below: values equal to the cutoff do not count.
    CHECK_FALSE(detect_collapse(series({0.1, 0.1, 0.1}), 0.1, 3).converged);

    v = detect_collapse(series({0.9, 0.9, 0.0, 0.0, 0.0, 0.0}), 0.1, 3);
    CHECK(v.onset_pair == 3);
    CHECK(v.onset_turn() == 2);
    CHECK(v.persists_to_end);
    CHECK_THROWS_AS(detect_collapse(series({0.1}), 0.1, 0), ContractError);
    CHECK_THROWS_AS(detect_collapse(series({0.1}), -1.0, 3), ContractError);
}

TEST_CASE("detector agrees with the window oracle") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> cut(0.0, 0.3);
    for (int i = 0; i < 2000; ++i) {
        const auto v = random_series(rng);
        const double c = cut(rng);
        const int w = 1 + static_cast<int>(rng() % 5);
        const auto verdict = detect_collapse(series(v), c, w);
        const int want = oracle::onset(v, c, w);
        CHECK(verdict.converged == (want != 0));
        if (want != 0) {
            CHECK(*verdict.onset_pair == want);
            CHECK(*verdict.onset_pair + w - 1 <= static_cast<int>(v.size()));
        }
    }
}

TEST_CASE("lower cutoffs never give an earlier onset") {
    std::mt19937_64 rng(37);
    std::uniform_real_distribution<double> cut(0.0, 0.3);
    for (int i = 0; i < 1000; ++i) {
        const auto v = random_series(rng);
        double hi = cut(rng);
        double lo = cut(rng);
        if (lo > hi) {
            std::swap(lo, hi);
        }
        const auto vh = detect_collapse(series(v), hi, 3);
        const auto vl = detect_collapse(series(v), lo, 3);
        if (vl.converged) {
            REQUIRE(vh.converged);
            CHECK(*vl.onset_pair >= *vh.onset_pair);
        }
    }
}

TEST_CASE("onset depends only on the prefix") {
    std::mt19937_64 rng(41);
    for (int i = 0; i < 300; ++i) {
        auto v = random_series(rng);
        const auto before = detect_collapse(series(v), 0.1, 3);
        if (!before.converged) {
            continue;
        }
        v.push_back(0.9);
        v.push_back(0.01);
        CHECK(detect_collapse(series(v), 0.1, 3).onset_pair == before.onset_pair);
    }
}

TEST_CASE("metric series shape and pairwise values") {
    HashEmbedder emb;
    const std::vector<std::string> steps{"the cat sat", "a dog ran far", "the cat sat down"};
    const auto r = round_of(steps);
    const auto all = all_metric_series(r, emb);
    REQUIRE(all.size() == 4);
    for (std::size_t m = 0; m < 4; ++m) {
        CHECK(all[m].metric == kAllMetrics[m]);
        CHECK(all[m].values.size() == 2);
        CHECK(all[m].round_id == 7);
    }
    for (std::size_t k = 0; k < 2; ++k) {
        const auto a = tokenize(steps[k]).tokens();
        const auto b = tokenize(steps[k + 1]).tokens();
        CHECK(all[0].values[k] == cosine_distance(emb.embed(steps[k]), emb.embed(steps[k + 1])));
        CHECK(all[1].values[k] == doctest::Approx(oracle::jaccard(a, b)).epsilon(1e-12));
        // Later step is the candidate, earlier step the reference.
        CHECK(all[2].values[k] == doctest::Approx(oracle::bleu_distance(b, a)).epsilon(1e-12));
    }
    CHECK(all[3].values == coherence_delta_series(r).values);
    CHECK_THROWS_AS(metric_series(round_of({"x"}), Metric::Cosine, emb), ContractError);
}

TEST_CASE("identical steps give zero series, and 50 steps give 49 values") {
    HashEmbedder emb;
    const auto r = round_of(std::vector<std::string>(50, "the same sentence again"), "the same sentence again");
    for (const auto& s : all_metric_series(r, emb)) {
        CHECK(s.values.size() == 49);
        for (double v : s.values) {
            CHECK(v == 0.0);
        }
    }
}

TEST_CASE("embedding failures name the pair") {
    class Broken final : public EmbeddingProvider {
    public:
        std::string name() const override { return "broken"; }
        std::size_t dim() const override { return 4; }
        EmbeddingVector embed(std::string_view text) const override {
            if (text == "bad") {
                throw TransportError("unreachable");
            }
            return hash_embed(text, 4);
        }
    } broken;
    try {
        metric_series(round_of({"ok", "ok", "bad"}), Metric::Cosine, broken);
        FAIL("expected an error");
    } catch (const Error& e) {
        const std::string what = e.what();
        CHECK(what.find("step 3") != std::string::npos);
        CHECK(what.find("round 7") != std::string::npos);
    }
}

TEST_CASE("F1 and calibration") {
    std::vector<LabeledSeries> runs{{series({0.5, 0.15, 0.15, 0.15}), true}, {series({0.5, 0.19, 0.18, 0.17}), true}};
    const std::vector<double> grid{0.05, 0.1, 0.2, 0.3, 0.4};
    auto cal = calibrate_cutoff(runs, 3, grid);
    CHECK(cal.cutoff == 0.2);
    CHECK(cal.f1 == 1.0);
    // Exhaustive oracle: no grid value beats the returned one, and no smaller one ties it.
    for (double c : grid) {
        const double f = verdict_f1(runs, c, 3);
        CHECK(f <= cal.f1);
        if (c < cal.cutoff) {
            CHECK(f < cal.f1);
        }
    }

    std::vector<LabeledSeries> negative{{series({0.9, 0.9, 0.9}), false}};
    cal = calibrate_cutoff(negative, 3, grid);
    CHECK(cal.cutoff == 0.05);
    CHECK(cal.f1 == 1.0);

    CHECK_THROWS_AS(calibrate_cutoff(runs, 3, std::vector<double>{}), ContractError);
    CHECK_THROWS_AS(calibrate_cutoff(std::vector<LabeledSeries>{}, 3, grid), ContractError);

    std::vector<LabeledSeries> mixed{{series({0.01, 0.01, 0.01}), true},
                                     {series({0.02, 0.02, 0.02}), false},
                                     {series({0.9, 0.9, 0.9}), true}};
    // At 0.015: TP 1, FP 0, FN 1 -> 2/3. At 0.05: TP 1, FP 1, FN 1 -> 1/2.
    CHECK(verdict_f1(mixed, 0.015, 3) == doctest::Approx(2.0 / 3.0));
    CHECK(verdict_f1(mixed, 0.05, 3) == doctest::Approx(0.5));
}

TEST_CASE("parrot rounds converge at once under every metric") {
    HashEmbedder emb;
    ParrotAgent p;
    const auto r = run_round(make_seed("Some seed sentence to echo.", SeedSource::News), p, p, GenerationParams{},
                             ExchangeProtocol{}, 3);
    for (const auto& s : all_metric_series(r, emb)) {
        for (double cutoff : {1e-9, 0.001, 0.1, 0.5}) {
            const auto v = detect_collapse(s, cutoff, 3);
            CHECK(v.converged);
            CHECK(*v.onset_pair <= 2);
            CHECK(v.persists_to_end);
        }
    }
}
