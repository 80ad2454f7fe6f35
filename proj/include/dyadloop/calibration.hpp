#pragma once

// Labeled synthetic transcripts used to choose collapse cutoffs.
//
// Four families, each generated deterministically from a seed:
//   parrot        both agents echo; converged
//   random        independent random words every step; not converged
//   markov-parrot Markov text echoed back, so every other pair is identical;
//                 not converged (no run of `window` low pairs)
//   late-collapse random words, then one-word variations of a fixed text
//                 from a random step onwards; converged

#include "dyadloop/core.hpp"
#include "dyadloop/detection.hpp"
#include "dyadloop/embedding.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dyadloop {

struct SuiteOptions {
    int rounds_per_family = 10;
    int turns = 25;
    std::uint64_t rng_seed = 0x5eedca1bULL;
};

struct LabeledRound {
    Round round;
    bool converged = false;
    std::string family;
};

std::vector<LabeledRound> synthetic_labeled_suite(const SuiteOptions& options = {});

/// 0.0001..0.0099 by 0.0001, then 0.01..0.50 by 0.01.
std::vector<double> default_cutoff_grid();

struct MetricCalibration {
    Metric metric = Metric::Cosine;
    double cutoff = 0.0;
    double f1 = 0.0;
};

/// Calibrates every metric against the suite, in kAllMetrics order.
std::vector<MetricCalibration> calibrate_metrics(const std::vector<LabeledRound>& suite,
                                                 const EmbeddingProvider& provider, int window,
                                                 std::span<const double> grid, const SeriesOptions& series = {});

/// Config-file text with one `cutoff.<metric> = value` line per metric,
/// preceded by comments recording how the values were produced.
std::string format_calibration(const std::vector<MetricCalibration>& results, const SuiteOptions& suite,
                               const std::string& provider_name, int window);

} // namespace dyadloop
