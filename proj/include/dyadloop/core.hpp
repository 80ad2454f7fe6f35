#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dyadloop {

enum class SeedSource { PromptGenerated, Wikipedia, News, ScientificPaper, Novel };

inline constexpr SeedSource kAllSeedSources[] = {
    SeedSource::PromptGenerated, SeedSource::Wikipedia, SeedSource::News,
    SeedSource::ScientificPaper, SeedSource::Novel};

/// File tag: prompt, wikipedia, news, scipaper, novel.
std::string_view source_tag(SeedSource source) noexcept;
/// Case-insensitive inverse of source_tag.
std::optional<SeedSource> parse_source_tag(std::string_view tag);

enum class Author { AgentA, AgentB };

/// "A" or "B".
std::string_view author_tag(Author author) noexcept;
std::optional<Author> parse_author_tag(std::string_view tag);
/// Odd step indices belong to agent A, even ones to agent B.
Author author_for_step(int index);

struct SeedSentence {
    std::string text;
    SeedSource source = SeedSource::PromptGenerated;

    bool operator==(const SeedSentence&) const = default;
};

/// Throws ContractError when the text is blank.
SeedSentence make_seed(std::string text, SeedSource source);

struct GenerationParams {
    double top_p = 0.95;
    double temperature = 0.7;
    int max_new_tokens = 50;
    int turns = 25;

    int step_count() const noexcept { return 2 * turns; }
    void validate() const;
    bool operator==(const GenerationParams&) const = default;
};

/// Provenance recorded alongside each step; not part of the transcript text.
struct StepTrace {
    std::uint64_t input_hash = 0;
    std::uint64_t output_hash = 0;
    std::int64_t started_us = 0;
    std::int64_t finished_us = 0;

    bool operator==(const StepTrace&) const = default;
};

struct Step {
    int index = 1;
    Author author = Author::AgentA;
    std::string text;
    StepTrace trace;

    bool operator==(const Step&) const = default;
};

enum class RoundStatus { Complete, Timeout, Failed };

std::string_view status_tag(RoundStatus status) noexcept;
std::optional<RoundStatus> parse_status_tag(std::string_view tag);

/// One conversation grown from a seed. Steps are contiguous from 1 and
/// alternate authors starting with agent A; `append` enforces both.
class Round {
public:
    Round() = default;
    Round(int id, SeedSentence seed, GenerationParams params);

    int id() const noexcept { return id_; }
    const SeedSentence& seed() const noexcept { return seed_; }
    const GenerationParams& params() const noexcept { return params_; }
    const std::vector<Step>& steps() const noexcept { return steps_; }
    RoundStatus status() const noexcept { return status_; }
    const std::string& status_message() const noexcept { return status_message_; }

    /// True when the transcript has every step the params call for.
    bool is_complete() const noexcept {
        return status_ == RoundStatus::Complete && static_cast<int>(steps_.size()) == params_.step_count();
    }

    /// Throws ContractError on a non-contiguous index or wrong author.
    void append(Step step);
    void set_status(RoundStatus status, std::string message = {});

    /// Text the given step read: the seed for step 1, else the previous output.
    const std::string& input_of(int step_index) const;

    bool operator==(const Round&) const = default;

private:
    int id_ = 0;
    SeedSentence seed_;
    GenerationParams params_;
    std::vector<Step> steps_;
    RoundStatus status_ = RoundStatus::Complete;
    std::string status_message_;
};

/// One `<source-tag>\t<sentence>` per line; blank lines and lines starting
/// with '#' are skipped. Throws ParseError with the line number.
std::vector<SeedSentence> parse_seeds(std::istream& in);
std::vector<SeedSentence> load_seeds(const std::filesystem::path& path);
void write_seeds(const std::filesystem::path& path, const std::vector<SeedSentence>& seeds);

/// `step_007_A.txt`
std::string step_file_name(int index, Author author);

/// Writes seed.txt, step_<iii>_<A|B>.txt per step and round.meta into `dir`,
/// creating it if needed. Text is written byte-for-byte.
void persist_round(const Round& round, const std::filesystem::path& dir);
Round load_round(const std::filesystem::path& dir);

std::string read_file(const std::filesystem::path& path);
/// Writes via a `.tmp-` sibling and rename, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

} // namespace dyadloop
