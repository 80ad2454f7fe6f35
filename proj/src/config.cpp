#include "dyadloop/config.hpp"

#include "dyadloop/error.hpp"

#include <charconv>
#include <fstream>
#include <istream>

namespace dyadloop {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
    throw ContractError("config key '" + std::string(key) + "': '" + std::string(value) + "' is not " +
                        std::string(expected));
}

double to_double(std::string_view key, std::string_view value) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || ptr != value.data() + value.size()) {
        bad_value(key, value, "a number");
    }
    return v;
}

template <typename Int>
Int to_int(std::string_view key, std::string_view value) {
    Int v{};
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || ptr != value.data() + value.size()) {
        bad_value(key, value, "an integer");
    }
    return v;
}

bool to_bool(std::string_view key, std::string_view value) {
    if (value == "true" || value == "1" || value == "yes") {
        return true;
    }
    if (value == "false" || value == "0" || value == "no") {
        return false;
    }
    bad_value(key, value, "a boolean");
}

bool set_agent(AgentSpec& agent, std::string_view field, std::string_view key, std::string_view value) {
    if (field == "kind") {
        const auto kind = parse_generator_kind(value);
        if (!kind) {
            bad_value(key, value, "one of parrot, markov, random, remote");
        }
        agent.kind = *kind;
    } else if (field == "endpoint") {
        agent.endpoint = value;
    } else if (field == "model") {
        agent.model = value;
    } else if (field == "corpus") {
        agent.corpus_path = value;
    } else if (field == "vocabulary") {
        agent.vocabulary_size = to_int<std::size_t>(key, value);
    } else {
        return false;
    }
    return true;
}

} // namespace

namespace {

struct Entry {
    std::string key;
    std::string value;
    std::size_t line = 0;
};

/// Throws {message, line} so callers can attach a file name.
struct EntryError {
    std::string message;
    std::size_t line;
};

std::vector<Entry> parse_entries(std::istream& in) {
    std::vector<Entry> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') {
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string_view::npos) {
            throw EntryError{"expected 'key = value'", line_no};
        }
        const auto key = trim(t.substr(0, eq));
        if (key.empty()) {
            throw EntryError{"empty key", line_no};
        }
        out.push_back({std::string(key), std::string(trim(t.substr(eq + 1))), line_no});
    }
    return out;
}

} // namespace

std::vector<std::pair<std::string, std::string>> parse_key_values(std::istream& in) {
    std::vector<std::pair<std::string, std::string>> out;
    try {
        for (auto& e : parse_entries(in)) {
            out.emplace_back(std::move(e.key), std::move(e.value));
        }
    } catch (const EntryError& e) {
        throw ParseError(e.message, e.line);
    }
    return out;
}

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
        {"agent_a.kind", "agent A generator: parrot|markov|random|remote"},
        {"agent_a.endpoint", "agent A completions URL (remote)"},
        {"agent_a.model", "agent A model name (remote)"},
        {"agent_a.corpus", "agent A training text file (markov)"},
        {"agent_a.vocabulary", "agent A vocabulary size (random)"},
        {"agent_b.kind", "agent B generator: parrot|markov|random|remote"},
        {"agent_b.endpoint", "agent B completions URL (remote)"},
        {"agent_b.model", "agent B model name (remote)"},
        {"agent_b.corpus", "agent B training text file (markov)"},
        {"agent_b.vocabulary", "agent B vocabulary size (random)"},
        {"top_p", "nucleus sampling mass"},
        {"temperature", "sampling temperature"},
        {"max_new_tokens", "generation cap per step"},
        {"turns", "turns per round (two steps each)"},
        {"protocol", "inprocess|filesignal"},
        {"exchange_dir", "step-file exchange directory (filesignal)"},
        {"poll_interval_ms", "file polling interval"},
        {"timeout_ms", "per-step timeout"},
        {"context", "last|full: what each agent reads"},
        {"seeds", "seed sentence file"},
        {"out_dir", "campaign output directory"},
        {"rng_seed", "campaign RNG seed"},
        {"max_parallel_rounds", "rounds run concurrently"},
        {"cutoff.cosine", "collapse cutoff for cosine distance"},
        {"cutoff.jaccard", "collapse cutoff for Jaccard distance"},
        {"cutoff.bleu", "collapse cutoff for BLEU distance"},
        {"cutoff.coherence", "collapse cutoff for coherence delta"},
        {"window", "consecutive low pairs required"},
        {"bleu.max_order", "BLEU n-gram order"},
        {"bleu.smoothing", "add-epsilon BLEU smoothing"},
        {"coherence.alpha", "NPMI add-alpha smoothing"},
        {"embedding", "hash|remote"},
        {"embedding.dim", "embedding dimension"},
        {"embedding.endpoint", "embeddings URL (remote)"},
        {"embedding.model", "embeddings model name (remote)"},
        {"tsne.perplexity", "t-SNE perplexity"},
        {"tsne.iterations", "t-SNE iterations"},
        {"tsne.learning_rate", "t-SNE learning rate"},
        {"tsne.seed", "t-SNE initialization seed"},
        {"tsne.scope", "round|group"},
        {"tsne.group_size", "rounds per group scope"},
    };
    return keys;
}

void RunConfig::set(std::string_view key, std::string_view value) {
    if (key.starts_with("agent_a.") && set_agent(agent_a, key.substr(8), key, value)) {
        return;
    }
    if (key.starts_with("agent_b.") && set_agent(agent_b, key.substr(8), key, value)) {
        return;
    }
    if (key.starts_with("cutoff.")) {
        if (const auto m = parse_metric_name(key.substr(7))) {
            cutoff(*m) = to_double(key, value);
            return;
        }
    }

    if (key == "top_p") {
        params.top_p = to_double(key, value);
    } else if (key == "temperature") {
        params.temperature = to_double(key, value);
    } else if (key == "max_new_tokens") {
        params.max_new_tokens = to_int<int>(key, value);
    } else if (key == "turns") {
        params.turns = to_int<int>(key, value);
    } else if (key == "protocol") {
        const auto mode = parse_exchange_mode(value);
        if (!mode) {
            bad_value(key, value, "inprocess or filesignal");
        }
        protocol.mode = *mode;
    } else if (key == "exchange_dir") {
        protocol.exchange_dir = value;
    } else if (key == "poll_interval_ms") {
        protocol.poll_interval = std::chrono::milliseconds(to_int<long>(key, value));
    } else if (key == "timeout_ms") {
        protocol.timeout = std::chrono::milliseconds(to_int<long>(key, value));
    } else if (key == "context") {
        const auto mode = parse_context_mode(value);
        if (!mode) {
            bad_value(key, value, "last or full");
        }
        context = *mode;
    } else if (key == "seeds") {
        seeds = value;
    } else if (key == "out_dir") {
        out_dir = value;
    } else if (key == "rng_seed") {
        rng_seed = to_int<std::uint64_t>(key, value);
    } else if (key == "max_parallel_rounds") {
        max_parallel_rounds = to_int<int>(key, value);
    } else if (key == "window") {
        window = to_int<int>(key, value);
    } else if (key == "bleu.max_order") {
        bleu.max_order = to_int<int>(key, value);
    } else if (key == "bleu.smoothing") {
        bleu.smoothing = to_bool(key, value);
    } else if (key == "coherence.alpha") {
        coherence_alpha = to_double(key, value);
    } else if (key == "embedding") {
        if (value == "hash") {
            embedding = EmbeddingKind::Hash;
        } else if (value == "remote") {
            embedding = EmbeddingKind::Remote;
        } else {
            bad_value(key, value, "hash or remote");
        }
    } else if (key == "embedding.dim") {
        embedding_dim = to_int<std::size_t>(key, value);
    } else if (key == "embedding.endpoint") {
        embedding_endpoint = value;
    } else if (key == "embedding.model") {
        embedding_model = value;
    } else if (key == "tsne.perplexity") {
        tsne.perplexity = to_double(key, value);
    } else if (key == "tsne.iterations") {
        tsne.iterations = to_int<int>(key, value);
    } else if (key == "tsne.learning_rate") {
        tsne.learning_rate = to_double(key, value);
    } else if (key == "tsne.seed") {
        tsne.seed = to_int<std::uint64_t>(key, value);
    } else if (key == "tsne.scope") {
        if (value == "round") {
            tsne_scope = TsneScope::Round;
        } else if (value == "group") {
            tsne_scope = TsneScope::Group;
        } else {
            bad_value(key, value, "round or group");
        }
    } else if (key == "tsne.group_size") {
        tsne_group_size = to_int<int>(key, value);
    } else {
        throw ContractError("unknown config key '" + std::string(key) + "'");
    }
}

void RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config file", path);
    }
    std::vector<Entry> entries;
    try {
        entries = parse_entries(in);
    } catch (const EntryError& e) {
        throw ParseError(path, e.message, e.line);
    }
    // Relative paths inside a config file resolve against its directory.
    const auto base = path.parent_path();
    for (auto& [key, value, line] : entries) {
        try {
            if ((key == "seeds" || key == "agent_a.corpus" || key == "agent_b.corpus") && !value.empty() &&
                std::filesystem::path(value).is_relative()) {
                value = (base / value).lexically_normal().string();
            }
            set(key, value);
        } catch (const ContractError& e) {
            throw ParseError(path, e.what(), line);
        }
    }
}

void RunConfig::validate(bool need_seeds) const {
    params.validate();
    protocol.validate();
    bleu.validate();
    if (max_parallel_rounds < 1) {
        throw ContractError("max_parallel_rounds must be >= 1");
    }
    if (window < 1) {
        throw ContractError("window must be >= 1");
    }
    for (Metric m : kAllMetrics) {
        if (cutoff(m) && !(*cutoff(m) > 0.0)) {
            throw ContractError("cutoff." + std::string(metric_name(m)) + " must be > 0");
        }
    }
    if (coherence_alpha < 0.0) {
        throw ContractError("coherence.alpha must be >= 0");
    }
    if (embedding_dim == 0) {
        throw ContractError("embedding.dim must be >= 1");
    }
    if (!(tsne.perplexity > 1.0) || tsne.iterations < 0 || !(tsne.learning_rate > 0.0) || tsne_group_size < 1) {
        throw ContractError("t-SNE options out of range");
    }
    for (const AgentSpec* a : {&agent_a, &agent_b}) {
        if (a->kind == GeneratorKind::MarkovStub && !a->corpus_path.empty() &&
            !std::filesystem::is_regular_file(a->corpus_path)) {
            throw ContractError("markov corpus not found: " + a->corpus_path);
        }
        if (a->kind == GeneratorKind::RandomWords && a->vocabulary_size == 0) {
            throw ContractError("random agent vocabulary must be >= 1");
        }
    }
    if (need_seeds) {
        if (seeds.empty()) {
            throw ContractError("no seed file configured");
        }
        if (!std::filesystem::is_regular_file(seeds)) {
            throw ContractError("seed file not found: " + seeds.string());
        }
    }
}

} // namespace dyadloop
