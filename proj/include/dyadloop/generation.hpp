#pragma once

#include "dyadloop/core.hpp"

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dyadloop {

enum class GeneratorKind { Parrot, MarkovStub, RandomWords, RemoteCompletion };

/// parrot, markov, random, remote
std::string_view generator_kind_name(GeneratorKind kind) noexcept;
std::optional<GeneratorKind> parse_generator_kind(std::string_view name);

/// A text generator taking part in a conversation. `generate` returns only
/// the new continuation. Stub agents are pure functions of their arguments.
class GeneratorAgent {
public:
    virtual ~GeneratorAgent() = default;
    virtual std::string name() const = 0;
    virtual GeneratorKind kind() const = 0;
    virtual std::string generate(std::string_view context, const GenerationParams& params,
                                 std::uint64_t rng_seed) const = 0;
};

/// Uniform index in [0, n) from one or more 64-bit draws, by rejection of
/// the top partial block. Used by every stub so sampling is identical across
/// standard libraries.
std::size_t draw_index(std::mt19937_64& rng, std::size_t n);

/// Prefix of `text` ending at the last byte of its `max_tokens`-th token;
/// `text` unchanged when it has no more tokens than that.
std::string truncate_to_tokens(std::string_view text, int max_tokens);

/// Removes `prompt` when `full_output` starts with it exactly.
std::string strip_echo(std::string_view full_output, std::string_view prompt);

/// Returns the context truncated to max_new_tokens.
class ParrotAgent final : public GeneratorAgent {
public:
    explicit ParrotAgent(std::string name = "parrot") : name_(std::move(name)) {}
    std::string name() const override { return name_; }
    GeneratorKind kind() const override { return GeneratorKind::Parrot; }
    std::string generate(std::string_view context, const GenerationParams& params,
                         std::uint64_t rng_seed) const override;

private:
    std::string name_;
};

/// Emits max_new_tokens words drawn uniformly from a synthetic vocabulary,
/// ignoring the context.
class RandomWordsAgent final : public GeneratorAgent {
public:
    static constexpr std::size_t kDefaultVocabulary = 1000;

    explicit RandomWordsAgent(std::size_t vocabulary_size = kDefaultVocabulary, std::string name = "random");
    std::string name() const override { return name_; }
    GeneratorKind kind() const override { return GeneratorKind::RandomWords; }
    std::string generate(std::string_view context, const GenerationParams& params,
                         std::uint64_t rng_seed) const override;

    const std::vector<std::string>& vocabulary() const noexcept { return vocabulary_; }

private:
    std::string name_;
    std::vector<std::string> vocabulary_;
};

/// Distinct lowercase pseudo-words built from consonant-vowel syllables.
std::vector<std::string> synthetic_vocabulary(std::size_t size);

/// Order-2 word Markov chain with order-1 and uniform back-off.
///
/// The walk starts from the last two context tokens. At each step it draws
/// uniformly (draw_index) from the successor list of the current bigram in
/// corpus order; if there is none, from the successors of the last word; if
/// there are none either, from all corpus tokens. Output words are joined
/// by single spaces.
class MarkovAgent final : public GeneratorAgent {
public:
    /// Trains on the built-in corpus.
    MarkovAgent();
    explicit MarkovAgent(std::string_view corpus, std::string name = "markov");

    std::string name() const override { return name_; }
    GeneratorKind kind() const override { return GeneratorKind::MarkovStub; }
    std::string generate(std::string_view context, const GenerationParams& params,
                         std::uint64_t rng_seed) const override;

    static std::string_view builtin_corpus() noexcept;

private:
    std::string name_;
    std::vector<std::string> tokens_;
    std::map<std::pair<std::string, std::string>, std::vector<std::string>> order2_;
    std::map<std::string, std::vector<std::string>, std::less<>> order1_;
};

struct RemoteCompletionOptions {
    std::string token;
    std::chrono::milliseconds timeout{120000};
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{500};
};

/// POSTs {"model", "prompt", "max_tokens", "temperature", "top_p"} and
/// returns choices[0].text. 5xx responses and transport failures are retried
/// with doubling backoff up to max_attempts in total.
std::string remote_complete(std::string_view context, const GenerationParams& params, const std::string& endpoint,
                            const std::string& model, const RemoteCompletionOptions& options = {});

class RemoteCompletionAgent final : public GeneratorAgent {
public:
    RemoteCompletionAgent(std::string endpoint, std::string model, RemoteCompletionOptions options = {});

    /// Endpoint from DYADLOOP_GEN_URL and token from DYADLOOP_GEN_TOKEN.
    static std::unique_ptr<RemoteCompletionAgent> from_env(std::string model);

    std::string name() const override { return "remote:" + model_; }
    GeneratorKind kind() const override { return GeneratorKind::RemoteCompletion; }
    /// remote_complete followed by strip_echo. The seed is not sent.
    std::string generate(std::string_view context, const GenerationParams& params,
                         std::uint64_t rng_seed) const override;

private:
    std::string endpoint_;
    std::string model_;
    RemoteCompletionOptions options_;
};

struct AgentSpec {
    GeneratorKind kind = GeneratorKind::Parrot;
    std::string endpoint;
    std::string model;
    std::string corpus_path;
    std::size_t vocabulary_size = RandomWordsAgent::kDefaultVocabulary;
};

/// Builds an agent from its spec. Remote agents fall back to DYADLOOP_GEN_URL
/// when no endpoint is given.
std::unique_ptr<GeneratorAgent> make_agent(const AgentSpec& spec, std::string name);

} // namespace dyadloop
