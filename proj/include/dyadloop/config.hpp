#pragma once

#include "dyadloop/core.hpp"
#include "dyadloop/detection_types.hpp"
#include "dyadloop/generation.hpp"
#include "dyadloop/orchestrator.hpp"
#include "dyadloop/projection.hpp"
#include "dyadloop/textmetrics.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dyadloop {

/// Parses `key = value` lines. `#` starts a comment line; blank lines are
/// ignored; surrounding whitespace is trimmed. Later keys override earlier ones.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::istream& in);

enum class EmbeddingKind { Hash, Remote };
enum class TsneScope { Round, Group };

struct RunConfig {
    AgentSpec agent_a;
    AgentSpec agent_b;
    GenerationParams params;
    ExchangeProtocol protocol;
    ContextMode context = ContextMode::Last;

    std::filesystem::path seeds;
    std::filesystem::path out_dir = "runs";
    std::uint64_t rng_seed = 0;
    int max_parallel_rounds = 1;

    /// Unset cutoffs are filled from the built-in calibration suite.
    std::array<std::optional<double>, 4> cutoffs;
    int window = 3;
    BleuConfig bleu;
    double coherence_alpha = 1.0;

    EmbeddingKind embedding = EmbeddingKind::Hash;
    std::size_t embedding_dim = 768;
    std::string embedding_endpoint;
    std::string embedding_model = "all-mpnet-base-v2";

    TsneOptions tsne;
    TsneScope tsne_scope = TsneScope::Group;
    int tsne_group_size = 5;

    std::optional<double>& cutoff(Metric m) { return cutoffs[static_cast<std::size_t>(m)]; }
    const std::optional<double>& cutoff(Metric m) const { return cutoffs[static_cast<std::size_t>(m)]; }

    /// Sets one field from its config key. Throws ContractError for an
    /// unknown key or a value that does not parse.
    void set(std::string_view key, std::string_view value);

    /// Applies a config file; errors carry the file's line number.
    void load(const std::filesystem::path& path);

    /// Range checks plus, when `need_seeds`, that the seed file exists.
    void validate(bool need_seeds) const;
};

struct ConfigKey {
    std::string_view key;
    std::string_view help;
};

/// Every accepted key, in documentation order.
const std::vector<ConfigKey>& config_keys();

} // namespace dyadloop
