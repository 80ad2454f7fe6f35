#include "dyadloop/calibration.hpp"

#include "dyadloop/generation.hpp"
#include "dyadloop/hashing.hpp"
#include "dyadloop/orchestrator.hpp"

#include <charconv>
#include <random>

namespace dyadloop {

namespace {

std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed);
    return std::string(buf, end);
}

Step synthetic_step(const Round& round, int index, std::string text) {
    Step s;
    s.index = index;
    s.author = author_for_step(index);
    s.trace.input_hash = fnv1a64(round.input_of(index));
    s.trace.output_hash = fnv1a64(text);
    s.text = std::move(text);
    return s;
}

std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += w;
    }
    return out;
}

} // namespace

std::vector<LabeledRound> synthetic_labeled_suite(const SuiteOptions& options) {
    GenerationParams params;
    params.turns = options.turns;
    const ExchangeProtocol protocol;
    const ParrotAgent parrot;
    const RandomWordsAgent random;
    const MarkovAgent markov;

    std::vector<LabeledRound> suite;
    int id = 0;
    for (int k = 0; k < options.rounds_per_family; ++k) {
        const std::uint64_t base = mix64(options.rng_seed + static_cast<std::uint64_t>(k));
        GenerationParams seed_params = params;
        seed_params.max_new_tokens = 20;
        const SeedSentence seed{markov.generate("", seed_params, base), SeedSource::PromptGenerated};

        suite.push_back({run_round(seed, parrot, parrot, params, protocol, base, {++id}), true, "parrot"});
        suite.push_back({run_round(seed, random, random, params, protocol, base ^ 1, {++id}), false, "random"});
        suite.push_back(
            {run_round(seed, markov, parrot, params, protocol, base ^ 2, {++id}), false, "markov-parrot"});

        // late-collapse
        std::mt19937_64 rng(base ^ 3);
        const auto& vocab = random.vocabulary();
        const int steps = params.step_count();
        const int onset = 10 + static_cast<int>(draw_index(rng, static_cast<std::size_t>(std::max(1, steps - 18))));
        std::vector<std::string> fixed;
        for (int w = 0; w < params.max_new_tokens; ++w) {
            fixed.push_back(vocab[draw_index(rng, vocab.size())]);
        }
        Round late(++id, seed, params);
        for (int i = 1; i <= steps; ++i) {
            std::string text;
            if (i < onset) {
                text = random.generate("", params, derive_step_seed(base ^ 3, i));
            } else {
                auto words = fixed;
                words[draw_index(rng, words.size())] = vocab[draw_index(rng, vocab.size())];
                text = join(words);
            }
            late.append(synthetic_step(late, i, std::move(text)));
        }
        suite.push_back({std::move(late), true, "late-collapse"});
    }
    return suite;
}

std::vector<double> default_cutoff_grid() {
    std::vector<double> grid;
    // Coherence deltas live well below 0.01, so the low end is finer.
    for (int k = 1; k <= 99; ++k) {
        grid.push_back(k / 10000.0);
    }
    for (int k = 1; k <= 50; ++k) {
        grid.push_back(k / 100.0);
    }
    return grid;
}

std::vector<MetricCalibration> calibrate_metrics(const std::vector<LabeledRound>& suite,
                                                 const EmbeddingProvider& provider, int window,
                                                 std::span<const double> grid, const SeriesOptions& series) {
    std::vector<std::vector<LabeledSeries>> per_metric(std::size(kAllMetrics));
    for (const auto& lr : suite) {
        auto all = all_metric_series(lr.round, provider, series);
        for (std::size_t m = 0; m < all.size(); ++m) {
            per_metric[m].push_back({std::move(all[m]), lr.converged});
        }
    }
    std::vector<MetricCalibration> out;
    for (std::size_t m = 0; m < per_metric.size(); ++m) {
        const auto cal = calibrate_cutoff(per_metric[m], window, grid);
        out.push_back({kAllMetrics[m], cal.cutoff, cal.f1});
    }
    return out;
}

std::string format_calibration(const std::vector<MetricCalibration>& results, const SuiteOptions& suite,
                               const std::string& provider_name, int window) {
    std::string out;
    out += "# Collapse cutoffs produced by `dyadloop calibrate`.\n";
    out += "# Labeled synthetic suite: families parrot(+), random(-), markov-parrot(-), late-collapse(+);\n";
    out += "#   rounds_per_family = " + std::to_string(suite.rounds_per_family) +
           ", turns = " + std::to_string(suite.turns) + ", rng_seed = " + std::to_string(suite.rng_seed) + "\n";
    out += "# Embedding provider: " + provider_name + "; window = " + std::to_string(window) +
           "; grid = 0.0001..0.0099, 0.01..0.50; F1-maximizing, ties to the smaller cutoff.\n";
    for (const auto& r : results) {
        out += "# " + std::string(metric_name(r.metric)) + ": F1 = " + format_double(r.f1) + "\n";
    }
    for (const auto& r : results) {
        out += "cutoff." + std::string(metric_name(r.metric)) + " = " + format_double(r.cutoff) + "\n";
    }
    return out;
}

} // namespace dyadloop
