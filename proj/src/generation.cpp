#include "dyadloop/generation.hpp"

#include "dyadloop/error.hpp"
#include "dyadloop/textmetrics.hpp"
#include "http_json.hpp"

#include <array>
#include <cstdlib>
#include <limits>
#include <thread>

namespace dyadloop {

namespace {

constexpr std::array<std::string_view, 4> kKindNames = {"parrot", "markov", "random", "remote"};

// About two hundred words of plain prose with enough repeated bigrams for
// the chain to branch and occasionally cycle.
constexpr std::string_view kBuiltinCorpus =
    "the river runs past the old mill and the mill turns the stone and the stone grinds the grain. "
    "the miller said that the river was older than the town and the town was older than the road. "
    "in the morning the light comes over the hill and the hill throws a long shadow on the water. "
    "the water is cold in the spring and warm in the late summer when the children swim near the mill. "
    "people in the town say the river remembers every boat that ever crossed it and every boat that sank. "
    "the old road follows the river to the sea and the sea takes whatever the river gives. "
    "when the rain comes the river rises and the road is closed and the town waits for the water to fall. "
    "the miller keeps a book of every flood and the book is older than the miller himself. "
    "some say the book was written by the first miller and some say it was written by the river. "
    "in the evening the light goes down behind the hill and the water turns dark and the mill is quiet. "
    "the town sleeps and the river runs on past the mill and the stone and the road to the sea.";

std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i != 0) {
            out.push_back(' ');
        }
        out += words[i];
    }
    return out;
}

std::string env_or_empty(const char* name) {
    const char* v = std::getenv(name);
    return v == nullptr ? std::string() : std::string(v);
}

} // namespace

std::string_view generator_kind_name(GeneratorKind kind) noexcept {
    return kKindNames[static_cast<std::size_t>(kind)];
}

std::optional<GeneratorKind> parse_generator_kind(std::string_view name) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i) {
        if (name == kKindNames[i]) {
            return static_cast<GeneratorKind>(i);
        }
    }
    return std::nullopt;
}

std::size_t draw_index(std::mt19937_64& rng, std::size_t n) {
    if (n == 0) {
        throw ContractError("draw_index over an empty range");
    }
    const std::uint64_t range = n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                (std::numeric_limits<std::uint64_t>::max() % range + 1) % range;
    std::uint64_t x = rng();
    while (x > limit) {
        x = rng();
    }
    return static_cast<std::size_t>(x % range);
}

std::string truncate_to_tokens(std::string_view text, int max_tokens) {
    const auto spans = token_spans(text);
    if (max_tokens < 0 || spans.size() <= static_cast<std::size_t>(max_tokens)) {
        return std::string(text);
    }
    if (max_tokens == 0) {
        return {};
    }
    return std::string(text.substr(0, spans[static_cast<std::size_t>(max_tokens) - 1].end));
}

std::string strip_echo(std::string_view full_output, std::string_view prompt) {
    if (full_output.starts_with(prompt)) {
        return std::string(full_output.substr(prompt.size()));
    }
    return std::string(full_output);
}

std::string ParrotAgent::generate(std::string_view context, const GenerationParams& params, std::uint64_t) const {
    return truncate_to_tokens(context, params.max_new_tokens);
}

std::vector<std::string> synthetic_vocabulary(std::size_t size) {
    static constexpr std::string_view consonants = "bdfgklmnprstvz";
    static constexpr std::string_view vowels = "aeiou";
    const std::size_t syllables = consonants.size() * vowels.size();
    std::vector<std::string> words;
    words.reserve(size);
    for (std::size_t i = 0; i < size; ++i) {
        std::string w;
        std::size_t v = i;
        // Three syllables cover 70^3 distinct words; larger indices grow longer.
        for (int k = 0; k < 3 || v > 0; ++k) {
            const std::size_t s = v % syllables;
            v /= syllables;
            w.push_back(consonants[s / vowels.size()]);
            w.push_back(vowels[s % vowels.size()]);
        }
        words.push_back(std::move(w));
    }
    return words;
}

RandomWordsAgent::RandomWordsAgent(std::size_t vocabulary_size, std::string name)
    : name_(std::move(name)), vocabulary_(synthetic_vocabulary(vocabulary_size)) {
    if (vocabulary_size == 0) {
        throw ContractError("random-words vocabulary must be non-empty");
    }
}

std::string RandomWordsAgent::generate(std::string_view, const GenerationParams& params,
                                       std::uint64_t rng_seed) const {
    std::mt19937_64 rng(rng_seed);
    std::vector<std::string> words;
    words.reserve(static_cast<std::size_t>(params.max_new_tokens));
    for (int i = 0; i < params.max_new_tokens; ++i) {
        words.push_back(vocabulary_[draw_index(rng, vocabulary_.size())]);
    }
    return join_words(words);
}

MarkovAgent::MarkovAgent() : MarkovAgent(kBuiltinCorpus) {}

MarkovAgent::MarkovAgent(std::string_view corpus, std::string name) : name_(std::move(name)) {
    tokens_ = tokenize(corpus).tokens();
    if (tokens_.empty()) {
        throw ContractError("markov corpus has no tokens");
    }
    for (std::size_t i = 0; i + 1 < tokens_.size(); ++i) {
        order1_[tokens_[i]].push_back(tokens_[i + 1]);
        if (i + 2 < tokens_.size()) {
            order2_[{tokens_[i], tokens_[i + 1]}].push_back(tokens_[i + 2]);
        }
    }
}

std::string_view MarkovAgent::builtin_corpus() noexcept { return kBuiltinCorpus; }

std::string MarkovAgent::generate(std::string_view context, const GenerationParams& params,
                                  std::uint64_t rng_seed) const {
    const auto ctx = tokenize(context);
    std::string prev = ctx.size() >= 2 ? ctx[ctx.size() - 2] : std::string();
    std::string last = ctx.empty() ? std::string() : ctx[ctx.size() - 1];

    std::mt19937_64 rng(rng_seed);
    std::vector<std::string> words;
    for (int i = 0; i < params.max_new_tokens; ++i) {
        const std::vector<std::string>* choices = &tokens_;
        if (auto it = order2_.find({prev, last}); it != order2_.end()) {
            choices = &it->second;
        } else if (auto it1 = order1_.find(last); it1 != order1_.end()) {
            choices = &it1->second;
        }
        std::string next = (*choices)[draw_index(rng, choices->size())];
        prev = std::move(last);
        last = next;
        words.push_back(std::move(next));
    }
    return join_words(words);
}

std::string remote_complete(std::string_view context, const GenerationParams& params, const std::string& endpoint,
                            const std::string& model, const RemoteCompletionOptions& options) {
    const auto ep = detail::parse_endpoint(endpoint);
    const nlohmann::json body = {{"model", model},
                                 {"prompt", std::string(context)},
                                 {"max_tokens", params.max_new_tokens},
                                 {"temperature", params.temperature},
                                 {"top_p", params.top_p}};
    auto backoff = options.initial_backoff;
    const int attempts = std::max(options.max_attempts, 1);
    for (int attempt = 1;; ++attempt) {
        try {
            const auto res = detail::post_json(ep, body, options.token, options.timeout);
            try {
                return res.at("choices").at(0).at("text").get<std::string>();
            } catch (const nlohmann::json::exception&) {
                throw ParseError("completions response lacks choices[0].text: " + detail::excerpt(res.dump()));
            }
        } catch (const HttpError& e) {
            if (e.status() < 500 || attempt >= attempts) {
                throw;
            }
        } catch (const TransportError&) {
            if (attempt >= attempts) {
                throw;
            }
        }
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
    }
}

RemoteCompletionAgent::RemoteCompletionAgent(std::string endpoint, std::string model, RemoteCompletionOptions options)
    : endpoint_(std::move(endpoint)), model_(std::move(model)), options_(std::move(options)) {
    detail::parse_endpoint(endpoint_);
}

std::unique_ptr<RemoteCompletionAgent> RemoteCompletionAgent::from_env(std::string model) {
    const std::string url = env_or_empty("DYADLOOP_GEN_URL");
    if (url.empty()) {
        throw ContractError("DYADLOOP_GEN_URL is not set");
    }
    RemoteCompletionOptions options;
    options.token = env_or_empty("DYADLOOP_GEN_TOKEN");
    return std::make_unique<RemoteCompletionAgent>(url, std::move(model), std::move(options));
}

std::string RemoteCompletionAgent::generate(std::string_view context, const GenerationParams& params,
                                            std::uint64_t) const {
    return strip_echo(remote_complete(context, params, endpoint_, model_, options_), context);
}

std::unique_ptr<GeneratorAgent> make_agent(const AgentSpec& spec, std::string name) {
    switch (spec.kind) {
    case GeneratorKind::Parrot:
        return std::make_unique<ParrotAgent>(std::move(name));
    case GeneratorKind::RandomWords:
        return std::make_unique<RandomWordsAgent>(spec.vocabulary_size, std::move(name));
    case GeneratorKind::MarkovStub:
        if (spec.corpus_path.empty()) {
            return std::make_unique<MarkovAgent>(MarkovAgent::builtin_corpus(), std::move(name));
        }
        return std::make_unique<MarkovAgent>(read_file(spec.corpus_path), std::move(name));
    case GeneratorKind::RemoteCompletion: {
        RemoteCompletionOptions options;
        options.token = env_or_empty("DYADLOOP_GEN_TOKEN");
        std::string endpoint = spec.endpoint.empty() ? env_or_empty("DYADLOOP_GEN_URL") : spec.endpoint;
        if (endpoint.empty()) {
            throw ContractError("remote agent needs an endpoint or DYADLOOP_GEN_URL");
        }
        if (spec.model.empty()) {
            throw ContractError("remote agent needs a model name");
        }
        return std::make_unique<RemoteCompletionAgent>(std::move(endpoint), spec.model, std::move(options));
    }
    }
    throw ContractError("unknown generator kind");
}

} // namespace dyadloop
