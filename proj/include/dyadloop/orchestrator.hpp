#pragma once

#include "dyadloop/core.hpp"
#include "dyadloop/generation.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dyadloop {

enum class ExchangeMode { InProcess, FileSignal };

/// What each agent reads: the previous output only, or the whole transcript.
enum class ContextMode { Last, Full };

std::string_view exchange_mode_name(ExchangeMode mode) noexcept;
std::optional<ExchangeMode> parse_exchange_mode(std::string_view name);
std::string_view context_mode_name(ContextMode mode) noexcept;
std::optional<ContextMode> parse_context_mode(std::string_view name);

struct ExchangeProtocol {
    ExchangeMode mode = ExchangeMode::InProcess;
    /// FileSignal only: where the two processes exchange step files.
    std::filesystem::path exchange_dir;
    std::chrono::milliseconds poll_interval{50};
    /// Per-step bound on waiting for (or producing) the next step.
    std::chrono::milliseconds timeout{120000};

    void validate() const;
};

/// Per-step RNG seed: any step can be replayed without running the others.
std::uint64_t derive_step_seed(std::uint64_t rng_seed, int step_index);

/// Input text for `step_index` given the steps recorded so far.
/// Full mode joins the seed and every earlier step with '\n'.
std::string step_context(const Round& round, int step_index, ContextMode mode);

/// Blocks until `path` exists, polling every poll_interval. Throws
/// TimeoutError naming the path once protocol.timeout has elapsed.
void await_file(const std::filesystem::path& path, const ExchangeProtocol& protocol);

struct RoundOptions {
    int round_id = 1;
    ContextMode context = ContextMode::Last;
};

/// Runs 2 * params.turns alternating steps, agent A first, from the seed.
///
/// InProcess runs both agents on the calling thread. FileSignal forks one
/// process per agent; they communicate only through atomically published
/// step files in protocol.exchange_dir, which must be empty or absent.
/// Agent failures and timeouts do not throw: the partial round is returned
/// with status Failed or Timeout.
Round run_round(const SeedSentence& seed, const GeneratorAgent& agent_a, const GeneratorAgent& agent_b,
                const GenerationParams& params, const ExchangeProtocol& protocol, std::uint64_t rng_seed,
                const RoundOptions& options = {});

struct ChainReport {
    bool ok = true;
    std::string detail;
};

/// Every step's recorded input hash matches the text it should have read
/// (in Last mode: the previous step's output hash) and its output hash
/// matches its stored text.
ChainReport verify_chain(const Round& round, ContextMode mode = ContextMode::Last);

/// Steps do not overlap in time: each step starts no earlier than the
/// previous one finished.
ChainReport verify_no_overlap(const Round& round);

struct CampaignOptions {
    std::uint64_t rng_seed = 0;
    ContextMode context = ContextMode::Last;
    /// Rounds run concurrently; steps within a round never do.
    int max_parallel_rounds = 1;
    /// Called after each round is persisted; may run on a worker thread.
    std::function<void(const Round&)> on_round_done;
};

/// `round_001`
std::string round_dir_name(int round_id);

/// Runs one round per seed, persisting each to out_dir/round_<iii> and
/// writing out_dir/manifest.json. Round ids follow seed order from 1.
/// In FileSignal mode each round gets a fresh exchange_dir/round_<iii>
/// (default out_dir/exchange), removed once the round is persisted.
std::vector<Round> run_campaign(const std::vector<SeedSentence>& seeds, const GeneratorAgent& agent_a,
                                const GeneratorAgent& agent_b, const GenerationParams& params,
                                const ExchangeProtocol& protocol, const std::filesystem::path& out_dir,
                                const CampaignOptions& options = {});

} // namespace dyadloop
