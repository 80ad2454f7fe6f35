#pragma once

#include "dyadloop/config.hpp"
#include "dyadloop/embedding.hpp"

#include <array>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace dyadloop {

/// Stable exit statuses.
inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitConfig = 2;

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const RunConfig& config);

/// Configured cutoffs, with unset ones taken from the built-in calibration
/// suite scored by `provider`.
std::array<double, 4> resolve_cutoffs(const RunConfig& config, const EmbeddingProvider& provider);

int cmd_run(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Writes metrics.csv, verdicts.csv and summary.csv to `out_dir` (the rounds
/// directory when empty) and prints the per-source table.
int cmd_analyze(const std::filesystem::path& rounds_dir, const std::filesystem::path& out_dir,
                const RunConfig& config, std::ostream& out, std::ostream& err);

/// One SVG per (round, metric). Cutoff and onset come from verdicts.csv next
/// to `metrics_csv` when it exists.
int cmd_plot(const std::filesystem::path& metrics_csv, const std::filesystem::path& out_dir, std::ostream& out,
             std::ostream& err);

/// tsne_<scope>.csv and tsne_<scope>.svg per scope (round_<iii> or group_<iii>).
int cmd_tsne(const std::filesystem::path& rounds_dir, const std::filesystem::path& out_dir, const RunConfig& config,
             std::ostream& out, std::ostream& err);

/// Writes the `cutoff.*` config snippet to `out_file`, or to `out` when empty.
int cmd_calibrate(const RunConfig& config, const std::filesystem::path& out_file, std::ostream& out,
                  std::ostream& err);

/// Full command line, argv[0] excluded.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace dyadloop
