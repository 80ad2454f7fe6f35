#include "dyadloop/core.hpp"

#include "dyadloop/error.hpp"
#include "dyadloop/hashing.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace dyadloop {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 5> kSourceTags = {"prompt", "wikipedia", "news", "scipaper", "novel"};

std::string lower_ascii(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

} // namespace

std::string_view source_tag(SeedSource source) noexcept {
    return kSourceTags[static_cast<std::size_t>(source)];
}

std::optional<SeedSource> parse_source_tag(std::string_view tag) {
    const std::string lowered = lower_ascii(tag);
    for (std::size_t i = 0; i < kSourceTags.size(); ++i) {
        if (lowered == kSourceTags[i]) {
            return static_cast<SeedSource>(i);
        }
    }
    return std::nullopt;
}

std::string_view author_tag(Author author) noexcept { return author == Author::AgentA ? "A" : "B"; }

std::optional<Author> parse_author_tag(std::string_view tag) {
    if (tag == "A") {
        return Author::AgentA;
    }
    if (tag == "B") {
        return Author::AgentB;
    }
    return std::nullopt;
}

Author author_for_step(int index) { return index % 2 == 1 ? Author::AgentA : Author::AgentB; }

SeedSentence make_seed(std::string text, SeedSource source) {
    if (is_blank(text)) {
        throw ContractError("seed sentence is empty");
    }
    return SeedSentence{std::move(text), source};
}

void GenerationParams::validate() const {
    if (!(top_p > 0.0 && top_p <= 1.0)) {
        throw ContractError("top_p must be in (0, 1]");
    }
    if (!(temperature > 0.0)) {
        throw ContractError("temperature must be > 0");
    }
    if (max_new_tokens < 1) {
        throw ContractError("max_new_tokens must be >= 1");
    }
    if (turns < 1) {
        throw ContractError("turns must be >= 1");
    }
}

std::string_view status_tag(RoundStatus status) noexcept {
    switch (status) {
    case RoundStatus::Complete: return "complete";
    case RoundStatus::Timeout: return "timeout";
    case RoundStatus::Failed: return "failed";
    }
    return "failed";
}

std::optional<RoundStatus> parse_status_tag(std::string_view tag) {
    for (RoundStatus s : {RoundStatus::Complete, RoundStatus::Timeout, RoundStatus::Failed}) {
        if (tag == status_tag(s)) {
            return s;
        }
    }
    return std::nullopt;
}

Round::Round(int id, SeedSentence seed, GenerationParams params)
    : id_(id), seed_(std::move(seed)), params_(params) {}

void Round::append(Step step) {
    const int expected = static_cast<int>(steps_.size()) + 1;
    if (step.index != expected) {
        throw ContractError("step index " + std::to_string(step.index) + " out of sequence, expected " +
                            std::to_string(expected));
    }
    if (step.author != author_for_step(step.index)) {
        throw ContractError("step " + std::to_string(step.index) + " must be authored by agent " +
                            std::string(author_tag(author_for_step(step.index))));
    }
    steps_.push_back(std::move(step));
}

void Round::set_status(RoundStatus status, std::string message) {
    status_ = status;
    status_message_ = std::move(message);
}

const std::string& Round::input_of(int step_index) const {
    if (step_index < 1 || step_index > static_cast<int>(steps_.size()) + 1) {
        throw ContractError("no input recorded for step " + std::to_string(step_index));
    }
    return step_index == 1 ? seed_.text : steps_[static_cast<std::size_t>(step_index - 2)].text;
}

std::vector<SeedSentence> parse_seeds(std::istream& in) {
    std::vector<SeedSentence> seeds;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line.front() == '#') {
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ParseError("expected '<source-tag>\\t<sentence>'", line_no);
        }
        const std::string_view tag(line.data(), tab);
        const auto source = parse_source_tag(tag);
        if (!source) {
            throw ParseError("unknown source tag '" + std::string(tag) + "'", line_no);
        }
        std::string text = line.substr(tab + 1);
        if (is_blank(text)) {
            throw ParseError("empty seed sentence", line_no);
        }
        seeds.push_back(SeedSentence{std::move(text), *source});
    }
    return seeds;
}

std::vector<SeedSentence> load_seeds(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open seed file", path);
    }
    return parse_seeds(in);
}

void write_seeds(const fs::path& path, const std::vector<SeedSentence>& seeds) {
    std::string out;
    for (const auto& seed : seeds) {
        if (seed.text.find_first_of("\n\r") != std::string::npos) {
            throw ContractError("seed sentence contains a line break");
        }
        if (is_blank(seed.text)) {
            throw ContractError("seed sentence is empty");
        }
        out.append(source_tag(seed.source));
        out.push_back('\t');
        out.append(seed.text);
        out.push_back('\n');
    }
    write_file_atomic(path, out);
}

std::string step_file_name(int index, Author author) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "step_%03d_%s.txt", index, author == Author::AgentA ? "A" : "B");
    return buf;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open file", path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) {
        throw IoError("read failed", path);
    }
    return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
    static std::atomic<unsigned> counter{0};
    const fs::path tmp = path.parent_path() /
                         (".tmp-" + path.filename().string() + "-" + std::to_string(::getpid()) + "-" +
                          std::to_string(counter.fetch_add(1)));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open for writing", tmp);
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            throw IoError("write failed", tmp);
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot publish file", path);
    }
}

void persist_round(const Round& round, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError("cannot create round directory (" + ec.message() + ")", dir);
    }

    write_file_atomic(dir / "seed.txt", round.seed().text);
    json steps = json::array();
    for (const auto& step : round.steps()) {
        write_file_atomic(dir / step_file_name(step.index, step.author), step.text);
        steps.push_back({{"index", step.index},
                         {"author", author_tag(step.author)},
                         {"input_hash", to_hex(step.trace.input_hash)},
                         {"output_hash", to_hex(step.trace.output_hash)},
                         {"started_us", step.trace.started_us},
                         {"finished_us", step.trace.finished_us}});
    }
    const auto& p = round.params();
    json meta = {{"format", 1},
                 {"round_id", round.id()},
                 {"seed_source", source_tag(round.seed().source)},
                 {"params",
                  {{"top_p", p.top_p},
                   {"temperature", p.temperature},
                   {"max_new_tokens", p.max_new_tokens},
                   {"turns", p.turns}}},
                 {"status", status_tag(round.status())},
                 {"status_message", round.status_message()},
                 {"step_count", round.steps().size()},
                 {"steps", std::move(steps)}};
    write_file_atomic(dir / "round.meta", meta.dump(2) + "\n");
}

Round load_round(const fs::path& dir) {
    json meta;
    try {
        meta = json::parse(read_file(dir / "round.meta"));
    } catch (const json::exception& e) {
        throw ParseError("round.meta in " + dir.string() + ": " + e.what());
    }
    try {
        const auto source = parse_source_tag(meta.at("seed_source").get<std::string>());
        if (!source) {
            throw ParseError("round.meta in " + dir.string() + ": unknown seed source");
        }
        GenerationParams params;
        const auto& jp = meta.at("params");
        params.top_p = jp.at("top_p").get<double>();
        params.temperature = jp.at("temperature").get<double>();
        params.max_new_tokens = jp.at("max_new_tokens").get<int>();
        params.turns = jp.at("turns").get<int>();

        Round round(meta.at("round_id").get<int>(), SeedSentence{read_file(dir / "seed.txt"), *source}, params);
        for (const auto& js : meta.at("steps")) {
            Step step;
            step.index = js.at("index").get<int>();
            const auto author = parse_author_tag(js.at("author").get<std::string>());
            if (!author) {
                throw ParseError("round.meta in " + dir.string() + ": bad author tag");
            }
            step.author = *author;
            step.text = read_file(dir / step_file_name(step.index, step.author));
            step.trace.input_hash = from_hex(js.at("input_hash").get<std::string>());
            step.trace.output_hash = from_hex(js.at("output_hash").get<std::string>());
            step.trace.started_us = js.at("started_us").get<std::int64_t>();
            step.trace.finished_us = js.at("finished_us").get<std::int64_t>();
            round.append(std::move(step));
        }
        if (meta.at("step_count").get<std::size_t>() != round.steps().size()) {
            throw ParseError("round.meta in " + dir.string() + ": step_count disagrees with steps");
        }
        const auto status = parse_status_tag(meta.at("status").get<std::string>());
        if (!status) {
            throw ParseError("round.meta in " + dir.string() + ": unknown status");
        }
        round.set_status(*status, meta.at("status_message").get<std::string>());
        return round;
    } catch (const json::exception& e) {
        throw ParseError("round.meta in " + dir.string() + ": " + e.what());
    }
}

} // namespace dyadloop
