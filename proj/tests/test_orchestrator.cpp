#include <doctest.h>

#include "dyadloop/error.hpp"
#include "dyadloop/hashing.hpp"
#include "dyadloop/orchestrator.hpp"
#include "helpers.hpp"

#include <json.hpp>

#include <chrono>
#include <thread>

using namespace dyadloop;
using testing_support::TempDir;
using Clock = std::chrono::steady_clock;
using namespace std::chrono_literals;

namespace {

std::vector<std::string> texts(const Round& r) {
    std::vector<std::string> out;
    for (const auto& s : r.steps()) {
        out.push_back(s.text);
    }
    return out;
}

ExchangeProtocol file_signal(const std::filesystem::path& dir) {
    ExchangeProtocol p;
    p.mode = ExchangeMode::FileSignal;
    p.exchange_dir = dir;
    p.poll_interval = 1ms;
    p.timeout = 10s;
    return p;
}

// Throws on a chosen step, or on every step whose context contains `marker`.
class FailingAgent final : public GeneratorAgent {
public:
    FailingAgent(int fail_step, std::string marker = {}) : fail_step_(fail_step), marker_(std::move(marker)) {}
    std::string name() const override { return "failing"; }
    GeneratorKind kind() const override { return GeneratorKind::Parrot; }
    std::string generate(std::string_view context, const GenerationParams& params,
                         std::uint64_t seed) const override {
        if (!marker_.empty() && context.find(marker_) != std::string_view::npos) {
            throw std::runtime_error("refusing marked context");
        }
        if (marker_.empty() && ++calls_ == fail_step_) {
            throw std::runtime_error("boom");
        }
        return ParrotAgent().generate(context, params, seed);
    }

private:
    int fail_step_;
    std::string marker_;
    mutable int calls_ = 0;
};

class SlowAgent final : public GeneratorAgent {
public:
    explicit SlowAgent(std::chrono::milliseconds delay) : delay_(delay) {}
    std::string name() const override { return "slow"; }
    GeneratorKind kind() const override { return GeneratorKind::Parrot; }
    std::string generate(std::string_view context, const GenerationParams&, std::uint64_t) const override {
        std::this_thread::sleep_for(delay_);
        return std::string(context);
    }

private:
    std::chrono::milliseconds delay_;
};

} // namespace

TEST_CASE("protocol validation and mode names") {
    ExchangeProtocol p;
    CHECK_NOTHROW(p.validate());
    p.poll_interval = p.timeout;
    CHECK_THROWS_AS(p.validate(), ContractError);
    p.poll_interval = 0ms;
    CHECK_THROWS_AS(p.validate(), ContractError);
    CHECK(parse_exchange_mode(exchange_mode_name(ExchangeMode::FileSignal)) == ExchangeMode::FileSignal);
    CHECK(parse_context_mode("full") == ContextMode::Full);
    CHECK_FALSE(parse_context_mode("some").has_value());
}

TEST_CASE("step seeds are distinct and reproducible") {
    CHECK(derive_step_seed(1, 1) == derive_step_seed(1, 1));
    CHECK(derive_step_seed(1, 1) != derive_step_seed(1, 2));
    CHECK(derive_step_seed(1, 1) != derive_step_seed(2, 1));
}

TEST_CASE("a 25-turn round has 50 alternating steps chained to the seed") {
    MarkovAgent a;
    RandomWordsAgent b;
    const auto r = run_round(make_seed("the river", SeedSource::Novel), a, b, GenerationParams{}, ExchangeProtocol{}, 5);
    REQUIRE(r.steps().size() == 50);
    CHECK(r.is_complete());
    CHECK(r.steps()[0].trace.input_hash == fnv1a64("the river"));
    for (int i = 1; i <= 50; ++i) {
        CHECK(r.steps()[static_cast<std::size_t>(i - 1)].author == author_for_step(i));
    }
    CHECK(verify_chain(r).ok);
    CHECK(verify_no_overlap(r).ok);
}

TEST_CASE("parrot pair reaches its fixed point at once") {
    ParrotAgent p;
    const auto r = run_round(make_seed("hello", SeedSource::News), p, p, GenerationParams{.turns = 1},
                             ExchangeProtocol{}, 0);
    CHECK(texts(r) == std::vector<std::string>{"hello", "hello"});
}

TEST_CASE("in-process runs are deterministic") {
    MarkovAgent a;
    RandomWordsAgent b;
    const auto seed = make_seed("the mill", SeedSource::Wikipedia);
    const auto r1 = run_round(seed, a, b, GenerationParams{}, ExchangeProtocol{}, 99);
    const auto r2 = run_round(seed, a, b, GenerationParams{}, ExchangeProtocol{}, 99);
    const auto r3 = run_round(seed, a, b, GenerationParams{}, ExchangeProtocol{}, 100);
    CHECK(texts(r1) == texts(r2));
    CHECK(texts(r1) != texts(r3));
}

TEST_CASE("full context mode feeds the whole transcript") {
    ParrotAgent p;
    GenerationParams params{.max_new_tokens = 100, .turns = 1};
    RoundOptions full{1, ContextMode::Full};
    const auto r = run_round(make_seed("a b", SeedSource::News), p, p, params, ExchangeProtocol{}, 0, full);
    CHECK(r.steps()[0].text == "a b");
    CHECK(r.steps()[1].text == "a b\na b");
    CHECK(verify_chain(r, ContextMode::Full).ok);
    CHECK_FALSE(verify_chain(r, ContextMode::Last).ok);
}

TEST_CASE("file-signal mode reproduces the in-process transcript") {
    TempDir dir;
    MarkovAgent a;
    MarkovAgent b(MarkovAgent::builtin_corpus(), "other");
    const auto seed = make_seed("the road to the sea", SeedSource::Novel);
    const auto inproc = run_round(seed, a, b, GenerationParams{}, ExchangeProtocol{}, 42);
    const auto fsig = run_round(seed, a, b, GenerationParams{}, file_signal(dir / "x"), 42);
    CHECK(fsig.status() == RoundStatus::Complete);
    CHECK(texts(fsig) == texts(inproc));
    CHECK(verify_chain(fsig).ok);
    const auto overlap = verify_no_overlap(fsig);
    CHECK_MESSAGE(overlap.ok, overlap.detail);
    for (std::size_t i = 0; i < fsig.steps().size(); ++i) {
        CHECK(fsig.steps()[i].trace.input_hash == inproc.steps()[i].trace.input_hash);
        CHECK(fsig.steps()[i].trace.output_hash == inproc.steps()[i].trace.output_hash);
    }
}

TEST_CASE("file-signal mode refuses a non-empty exchange directory") {
    TempDir dir;
    std::filesystem::create_directories(dir / "x");
    write_file_atomic(dir / "x" / "stale.txt", "old");
    ParrotAgent p;
    CHECK_THROWS_AS(run_round(make_seed("s", SeedSource::News), p, p, GenerationParams{.turns = 1},
                              file_signal(dir / "x"), 0),
                    IoError);
}

TEST_CASE("agent failures end the round with a partial transcript") {
    ParrotAgent p;
    FailingAgent f(2);
    auto r = run_round(make_seed("s", SeedSource::News), p, f, GenerationParams{.turns = 3}, ExchangeProtocol{}, 0);
    CHECK(r.status() == RoundStatus::Failed);
    CHECK(r.steps().size() == 3);
    CHECK(r.status_message().find("step 4") != std::string::npos);

    TempDir dir;
    FailingAgent f2(2);
    r = run_round(make_seed("s", SeedSource::News), p, f2, GenerationParams{.turns = 3}, file_signal(dir / "x"), 0);
    CHECK(r.status() == RoundStatus::Failed);
    CHECK(r.steps().size() == 3);
    CHECK(verify_chain(r).ok);
}

TEST_CASE("step timeouts end the round") {
    ParrotAgent p;
    SlowAgent slow(60ms);
    ExchangeProtocol quick;
    quick.timeout = 20ms;
    quick.poll_interval = 1ms;
    auto r = run_round(make_seed("s", SeedSource::News), p, slow, GenerationParams{.turns = 2}, quick, 0);
    CHECK(r.status() == RoundStatus::Timeout);
    CHECK(r.steps().size() == 1);

    TempDir dir;
    auto fs_protocol = file_signal(dir / "x");
    fs_protocol.timeout = 20ms;
    r = run_round(make_seed("s", SeedSource::News), p, slow, GenerationParams{.turns = 2}, fs_protocol, 0);
    CHECK(r.status() == RoundStatus::Timeout);
    CHECK(r.steps().size() <= 1);
}

TEST_CASE("await_file timing") {
    TempDir dir;
    ExchangeProtocol p;
    p.poll_interval = 10ms;
    p.timeout = 2s;

    write_file_atomic(dir / "ready.txt", "x");
    auto t0 = Clock::now();
    await_file(dir / "ready.txt", p);
    CHECK(Clock::now() - t0 < 10ms);

    std::thread writer([&] {
        std::this_thread::sleep_for(200ms);
        write_file_atomic(dir / "late.txt", "x");
    });
    t0 = Clock::now();
    await_file(dir / "late.txt", p);
    const auto waited = Clock::now() - t0;
    writer.join();
    CHECK(waited >= 190ms);
    CHECK(waited <= 200ms + p.poll_interval + 40ms);

    p.timeout = 150ms;
    t0 = Clock::now();
    try {
        await_file(dir / "never.txt", p);
        FAIL("expected a timeout");
    } catch (const TimeoutError& e) {
        CHECK(std::string(e.what()).find("never.txt") != std::string::npos);
    }
    const auto elapsed = Clock::now() - t0;
    CHECK(elapsed >= 150ms - p.poll_interval);
    CHECK(elapsed <= 150ms + p.poll_interval + 40ms);
}

TEST_CASE("verify_chain detects tampering") {
    ParrotAgent p;
    auto r = run_round(make_seed("abc", SeedSource::News), p, p, GenerationParams{.turns = 2}, ExchangeProtocol{}, 0);
    CHECK(verify_chain(r).ok);
    Round tampered(r.id(), r.seed(), r.params());
    for (auto s : r.steps()) {
        if (s.index == 3) {
            s.text = "changed";
        }
        tampered.append(s);
    }
    const auto report = verify_chain(tampered);
    CHECK_FALSE(report.ok);
    CHECK(report.detail.find("3") != std::string::npos);
}

TEST_CASE("campaign with no seeds writes an empty manifest") {
    TempDir dir;
    ParrotAgent p;
    const auto rounds = run_campaign({}, p, p, GenerationParams{}, ExchangeProtocol{}, dir / "out");
    CHECK(rounds.empty());
    CHECK(nlohmann::json::parse(read_file(dir / "out" / "manifest.json")).empty());
    CHECK_FALSE(std::filesystem::exists(dir / "out" / "round_001"));
}

TEST_CASE("a failing round is isolated within the campaign") {
    TempDir dir;
    std::vector<SeedSentence> seeds;
    for (int i = 1; i <= 50; ++i) {
        seeds.push_back(make_seed(i == 3 ? "poison seed" : "seed number " + std::to_string(i), SeedSource::News));
    }
    ParrotAgent p;
    FailingAgent f(0, "poison");
    CampaignOptions options;
    options.max_parallel_rounds = 3;
    int callbacks = 0;
    options.on_round_done = [&](const Round&) { ++callbacks; };
    const auto rounds =
        run_campaign(seeds, p, f, GenerationParams{.turns = 2}, ExchangeProtocol{}, dir / "out", options);
    CHECK(callbacks == 50);
    REQUIRE(rounds.size() == 50);
    int complete = 0;
    for (const auto& r : rounds) {
        complete += r.is_complete() ? 1 : 0;
    }
    CHECK(complete == 49);
    CHECK(rounds[2].status() == RoundStatus::Failed);
    const auto manifest = nlohmann::json::parse(read_file(dir / "out" / "manifest.json"));
    CHECK(manifest.size() == 50);
    CHECK(manifest["3"]["status"] == "failed");
    CHECK(manifest["3"]["seed"] == "poison seed");
    CHECK(manifest["4"]["status"] == "complete");
    CHECK(load_round(dir / "out" / "round_003") == rounds[2]);
}

TEST_CASE("file-signal campaign matches the in-process campaign and can be re-run") {
    TempDir dir;
    std::vector<SeedSentence> seeds{make_seed("the mill", SeedSource::News), make_seed("the sea", SeedSource::Novel)};
    MarkovAgent a;
    RandomWordsAgent b;
    CampaignOptions options;
    options.rng_seed = 8;
    const auto in = run_campaign(seeds, a, b, GenerationParams{.turns = 3}, ExchangeProtocol{}, dir / "in", options);
    ExchangeProtocol fsp = file_signal({});
    for (int pass = 0; pass < 2; ++pass) {
        const auto out = run_campaign(seeds, a, b, GenerationParams{.turns = 3}, fsp, dir / "fs", options);
        REQUIRE(out.size() == 2);
        CHECK(texts(out[0]) == texts(in[0]));
        CHECK(texts(out[1]) == texts(in[1]));
    }
    CHECK_FALSE(std::filesystem::exists(dir / "fs" / "exchange"));
}
