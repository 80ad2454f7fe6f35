#include "dyadloop/orchestrator.hpp"

#include "dyadloop/error.hpp"
#include "dyadloop/hashing.hpp"

#include <json.hpp>

#include <atomic>
#include <csignal>
#include <mutex>
#include <thread>

#include <sys/wait.h>
#include <unistd.h>

namespace dyadloop {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

std::int64_t now_us() {
    return std::chrono::duration_cast<std::chrono::microseconds>(Clock::now().time_since_epoch()).count();
}

Step make_step(int index, std::string_view input, std::string text, std::int64_t started, std::int64_t finished) {
    Step step;
    step.index = index;
    step.author = author_for_step(index);
    step.trace.input_hash = fnv1a64(input);
    step.trace.output_hash = fnv1a64(text);
    step.trace.started_us = started;
    step.trace.finished_us = finished;
    step.text = std::move(text);
    return step;
}

const GeneratorAgent& agent_for(int index, const GeneratorAgent& a, const GeneratorAgent& b) {
    return author_for_step(index) == Author::AgentA ? a : b;
}

std::string fail_message(int index, const std::string& what) {
    return "agent " + std::string(author_tag(author_for_step(index))) + " failed at step " + std::to_string(index) +
           ": " + what;
}

Round run_in_process(const SeedSentence& seed, const GeneratorAgent& agent_a, const GeneratorAgent& agent_b,
                     const GenerationParams& params, const ExchangeProtocol& protocol, std::uint64_t rng_seed,
                     const RoundOptions& options) {
    Round round(options.round_id, seed, params);
    for (int i = 1; i <= params.step_count(); ++i) {
        const std::string input = step_context(round, i, options.context);
        const auto started = now_us();
        std::string text;
        try {
            text = agent_for(i, agent_a, agent_b).generate(input, params, derive_step_seed(rng_seed, i));
        } catch (const std::exception& e) {
            round.set_status(RoundStatus::Failed, fail_message(i, e.what()));
            return round;
        }
        const auto finished = now_us();
        // A blocking call cannot be interrupted in-process, so an overrun is
        // detected after the fact and the late output is discarded.
        if (std::chrono::microseconds(finished - started) > protocol.timeout) {
            round.set_status(RoundStatus::Timeout, "step " + std::to_string(i) + " exceeded the step timeout");
            return round;
        }
        round.append(make_step(i, input, std::move(text), started, finished));
    }
    return round;
}

// ---- FileSignal -----------------------------------------------------------

fs::path abort_marker(const fs::path& dir, Author author) {
    return dir / ("abort_" + std::string(author_tag(author)) + ".json");
}

fs::path step_meta_path(const fs::path& dir, int index) {
    auto name = step_file_name(index, author_for_step(index));
    name.replace(name.size() - 4, 4, ".meta");
    return dir / name;
}

fs::path input_path(const fs::path& dir, int index) {
    return index == 1 ? dir / "seed.txt" : dir / step_file_name(index - 1, author_for_step(index - 1));
}

enum class WaitResult { Ready, PeerAborted };

WaitResult await_or_peer_abort(const fs::path& path, const fs::path& peer_abort, const ExchangeProtocol& protocol) {
    const auto deadline = Clock::now() + protocol.timeout;
    for (;;) {
        if (fs::exists(path)) {
            return WaitResult::Ready;
        }
        if (fs::exists(peer_abort)) {
            return WaitResult::PeerAborted;
        }
        if (Clock::now() >= deadline) {
            throw TimeoutError("timed out waiting for " + path.string());
        }
        std::this_thread::sleep_for(protocol.poll_interval);
    }
}

// Rebuilds the transcript a participant has access to from the exchange dir.
Round read_exchange(const fs::path& dir, const SeedSentence& seed, const GenerationParams& params, int round_id,
                    int upto) {
    Round round(round_id, SeedSentence{read_file(dir / "seed.txt"), seed.source}, params);
    for (int i = 1; i <= upto; ++i) {
        const auto text_path = dir / step_file_name(i, author_for_step(i));
        if (!fs::exists(text_path)) {
            break;
        }
        const auto meta = json::parse(read_file(step_meta_path(dir, i)));
        Step step;
        step.index = i;
        step.author = author_for_step(i);
        step.text = read_file(text_path);
        step.trace.input_hash = from_hex(meta.at("input_hash").get<std::string>());
        step.trace.output_hash = from_hex(meta.at("output_hash").get<std::string>());
        step.trace.started_us = meta.at("started_us").get<std::int64_t>();
        step.trace.finished_us = meta.at("finished_us").get<std::int64_t>();
        round.append(std::move(step));
    }
    return round;
}

void write_abort(const fs::path& dir, Author author, std::string_view kind, const std::string& message) {
    const json j = {{"kind", kind}, {"message", message}};
    write_file_atomic(abort_marker(dir, author), j.dump());
}

// Body of one agent's process. Each step: wait for the peer's output,
// generate, publish the sidecar then the step file. After its last step a
// participant waits for the final file so both exit together.
int participate(Author self, const GeneratorAgent& agent, const SeedSentence& seed, const GenerationParams& params,
                const ExchangeProtocol& protocol, std::uint64_t rng_seed, const RoundOptions& options) {
    const fs::path& dir = protocol.exchange_dir;
    const Author peer = self == Author::AgentA ? Author::AgentB : Author::AgentA;
    const int total = params.step_count();
    int i = self == Author::AgentA ? 1 : 2;
    try {
        for (; i <= total; i += 2) {
            if (await_or_peer_abort(input_path(dir, i), abort_marker(dir, peer), protocol) ==
                WaitResult::PeerAborted) {
                return 0;
            }
            const Round seen = read_exchange(dir, seed, params, options.round_id, i - 1);
            const std::string input = step_context(seen, i, options.context);
            const auto started = now_us();
            std::string text = agent.generate(input, params, derive_step_seed(rng_seed, i));
            const auto finished = now_us();
            if (std::chrono::microseconds(finished - started) > protocol.timeout) {
                write_abort(dir, self, "timeout", "step " + std::to_string(i) + " exceeded the step timeout");
                return 3;
            }
            const Step step = make_step(i, input, std::move(text), started, finished);
            const json meta = {{"input_hash", to_hex(step.trace.input_hash)},
                               {"output_hash", to_hex(step.trace.output_hash)},
                               {"started_us", step.trace.started_us},
                               {"finished_us", step.trace.finished_us}};
            write_file_atomic(step_meta_path(dir, i), meta.dump());
            write_file_atomic(dir / step_file_name(i, self), step.text);
        }
        if (author_for_step(total) != self) {
            await_or_peer_abort(dir / step_file_name(total, peer), abort_marker(dir, peer), protocol);
        }
        return 0;
    } catch (const TimeoutError& e) {
        write_abort(dir, self, "timeout", e.what());
        return 3;
    } catch (const std::exception& e) {
        write_abort(dir, self, "error", fail_message(i, e.what()));
        return 4;
    }
}

Round run_file_signal(const SeedSentence& seed, const GeneratorAgent& agent_a, const GeneratorAgent& agent_b,
                      const GenerationParams& params, const ExchangeProtocol& protocol, std::uint64_t rng_seed,
                      const RoundOptions& options) {
    const fs::path& dir = protocol.exchange_dir;
    if (dir.empty()) {
        throw ContractError("FileSignal mode needs an exchange directory");
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_empty(dir)) {
        throw IoError("exchange directory must be empty", dir);
    }
    write_file_atomic(dir / "seed.txt", seed.text);

    pid_t children[2] = {-1, -1};
    for (int k = 0; k < 2; ++k) {
        const Author self = k == 0 ? Author::AgentA : Author::AgentB;
        const pid_t pid = ::fork();
        if (pid < 0) {
            for (int j = 0; j < k; ++j) {
                ::kill(children[j], SIGKILL);
                ::waitpid(children[j], nullptr, 0);
            }
            throw Error("fork failed");
        }
        if (pid == 0) {
            const int code = participate(self, k == 0 ? agent_a : agent_b, seed, params, protocol, rng_seed, options);
            ::_exit(code);
        }
        children[k] = pid;
    }

    // Watchdog: children enforce per-step timeouts themselves; this only
    // guards against a participant that never returns from generate().
    const auto deadline = Clock::now() + protocol.timeout * (params.step_count() + 2);
    int statuses[2] = {0, 0};
    bool done[2] = {false, false};
    bool killed = false;
    while (!done[0] || !done[1]) {
        for (int k = 0; k < 2; ++k) {
            if (!done[k] && ::waitpid(children[k], &statuses[k], WNOHANG) == children[k]) {
                done[k] = true;
            }
        }
        if (done[0] && done[1]) {
            break;
        }
        if (Clock::now() >= deadline) {
            for (int k = 0; k < 2; ++k) {
                if (!done[k]) {
                    ::kill(children[k], SIGKILL);
                    ::waitpid(children[k], &statuses[k], 0);
                    done[k] = true;
                }
            }
            killed = true;
            break;
        }
        std::this_thread::sleep_for(std::min(protocol.poll_interval, std::chrono::milliseconds(10)));
    }

    Round round = read_exchange(dir, seed, params, options.round_id, params.step_count());
    for (Author who : {Author::AgentA, Author::AgentB}) {
        if (fs::exists(abort_marker(dir, who))) {
            const auto j = json::parse(read_file(abort_marker(dir, who)));
            const auto kind = j.at("kind").get<std::string>();
            round.set_status(kind == "timeout" ? RoundStatus::Timeout : RoundStatus::Failed,
                             j.at("message").get<std::string>());
            return round;
        }
    }
    if (killed) {
        round.set_status(RoundStatus::Timeout, "round exceeded its overall deadline");
    } else if (static_cast<int>(round.steps().size()) != params.step_count()) {
        round.set_status(RoundStatus::Failed, "participant exited before the round finished");
    } else {
        for (int k = 0; k < 2; ++k) {
            if (!WIFEXITED(statuses[k]) || WEXITSTATUS(statuses[k]) != 0) {
                round.set_status(RoundStatus::Failed, "participant exited abnormally");
            }
        }
    }
    return round;
}

} // namespace

std::string_view exchange_mode_name(ExchangeMode mode) noexcept {
    return mode == ExchangeMode::InProcess ? "inprocess" : "filesignal";
}

std::optional<ExchangeMode> parse_exchange_mode(std::string_view name) {
    if (name == "inprocess") {
        return ExchangeMode::InProcess;
    }
    if (name == "filesignal") {
        return ExchangeMode::FileSignal;
    }
    return std::nullopt;
}

std::string_view context_mode_name(ContextMode mode) noexcept { return mode == ContextMode::Last ? "last" : "full"; }

std::optional<ContextMode> parse_context_mode(std::string_view name) {
    if (name == "last") {
        return ContextMode::Last;
    }
    if (name == "full") {
        return ContextMode::Full;
    }
    return std::nullopt;
}

void ExchangeProtocol::validate() const {
    if (poll_interval.count() <= 0) {
        throw ContractError("poll interval must be positive");
    }
    if (!(poll_interval < timeout)) {
        throw ContractError("poll interval must be shorter than the timeout");
    }
}

std::uint64_t derive_step_seed(std::uint64_t rng_seed, int step_index) {
    return mix64(rng_seed ^ mix64(static_cast<std::uint64_t>(step_index)));
}

std::string step_context(const Round& round, int step_index, ContextMode mode) {
    if (mode == ContextMode::Last) {
        return round.input_of(step_index);
    }
    if (step_index < 1 || step_index > static_cast<int>(round.steps().size()) + 1) {
        throw ContractError("no input recorded for step " + std::to_string(step_index));
    }
    std::string ctx = round.seed().text;
    for (int k = 1; k < step_index; ++k) {
        ctx.push_back('\n');
        ctx += round.steps()[static_cast<std::size_t>(k - 1)].text;
    }
    return ctx;
}

void await_file(const fs::path& path, const ExchangeProtocol& protocol) {
    const auto deadline = Clock::now() + protocol.timeout;
    for (;;) {
        if (fs::exists(path)) {
            return;
        }
        if (Clock::now() >= deadline) {
            throw TimeoutError("timed out waiting for " + path.string());
        }
        std::this_thread::sleep_for(protocol.poll_interval);
    }
}

Round run_round(const SeedSentence& seed, const GeneratorAgent& agent_a, const GeneratorAgent& agent_b,
                const GenerationParams& params, const ExchangeProtocol& protocol, std::uint64_t rng_seed,
                const RoundOptions& options) {
    params.validate();
    protocol.validate();
    if (protocol.mode == ExchangeMode::InProcess) {
        return run_in_process(seed, agent_a, agent_b, params, protocol, rng_seed, options);
    }
    return run_file_signal(seed, agent_a, agent_b, params, protocol, rng_seed, options);
}

ChainReport verify_chain(const Round& round, ContextMode mode) {
    const auto& steps = round.steps();
    for (std::size_t k = 0; k < steps.size(); ++k) {
        const Step& s = steps[k];
        if (s.trace.output_hash != fnv1a64(s.text)) {
            return {false, "step " + std::to_string(s.index) + ": output hash does not match stored text"};
        }
        const std::uint64_t expected_input =
            mode == ContextMode::Last && k > 0 ? steps[k - 1].trace.output_hash
                                               : fnv1a64(step_context(round, s.index, mode));
        if (s.trace.input_hash != expected_input) {
            return {false, "step " + std::to_string(s.index) + ": input hash does not match the previous output"};
        }
    }
    return {};
}

ChainReport verify_no_overlap(const Round& round) {
    const auto& steps = round.steps();
    for (std::size_t k = 0; k < steps.size(); ++k) {
        if (steps[k].trace.finished_us < steps[k].trace.started_us) {
            return {false, "step " + std::to_string(steps[k].index) + " finished before it started"};
        }
        if (k > 0 && steps[k].trace.started_us < steps[k - 1].trace.finished_us) {
            return {false, "step " + std::to_string(steps[k].index) + " started before step " +
                               std::to_string(steps[k - 1].index) + " finished"};
        }
    }
    return {};
}

std::string round_dir_name(int round_id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "round_%03d", round_id);
    return buf;
}

std::vector<Round> run_campaign(const std::vector<SeedSentence>& seeds, const GeneratorAgent& agent_a,
                                const GeneratorAgent& agent_b, const GenerationParams& params,
                                const ExchangeProtocol& protocol, const fs::path& out_dir,
                                const CampaignOptions& options) {
    params.validate();
    protocol.validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) {
        throw IoError("cannot create campaign directory", out_dir);
    }
    const fs::path exchange_root = protocol.exchange_dir.empty() ? out_dir / "exchange" : protocol.exchange_dir;

    std::vector<Round> rounds(seeds.size());
    std::atomic<std::size_t> next{0};
    std::mutex callback_mutex;
    std::exception_ptr first_error;

    auto work = [&] {
        for (std::size_t k = next.fetch_add(1); k < seeds.size(); k = next.fetch_add(1)) {
            const int id = static_cast<int>(k) + 1;
            ExchangeProtocol round_protocol = protocol;
            round_protocol.exchange_dir = exchange_root / round_dir_name(id);
            RoundOptions ro{id, options.context};
            Round round;
            const bool owns_exchange = protocol.mode == ExchangeMode::FileSignal;
            if (owns_exchange) {
                fs::remove_all(round_protocol.exchange_dir);
            }
            try {
                round = run_round(seeds[k], agent_a, agent_b, params, round_protocol,
                                  mix64(options.rng_seed + static_cast<std::uint64_t>(id)), ro);
            } catch (const std::exception& e) {
                round = Round(id, seeds[k], params);
                round.set_status(RoundStatus::Failed, e.what());
            }
            persist_round(round, out_dir / round_dir_name(id));
            if (owns_exchange) {
                fs::remove_all(round_protocol.exchange_dir);
            }
            if (options.on_round_done) {
                std::lock_guard lock(callback_mutex);
                options.on_round_done(round);
            }
            rounds[k] = std::move(round);
        }
    };
    auto worker = [&] {
        try {
            work();
        } catch (...) {
            std::lock_guard lock(callback_mutex);
            if (!first_error) {
                first_error = std::current_exception();
            }
            next.store(seeds.size());
        }
    };

    const int workers = std::max(1, std::min<int>(options.max_parallel_rounds, static_cast<int>(seeds.size())));
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
    if (protocol.mode == ExchangeMode::FileSignal && protocol.exchange_dir.empty()) {
        fs::remove(exchange_root, ec);
    }

    json manifest = json::object();
    for (const auto& round : rounds) {
        manifest[std::to_string(round.id())] = {{"seed", round.seed().text},
                                                {"source", source_tag(round.seed().source)},
                                                {"status", status_tag(round.status())},
                                                {"step_count", round.steps().size()},
                                                {"dir", round_dir_name(round.id())},
                                                {"message", round.status_message()}};
    }
    write_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
    return rounds;
}

} // namespace dyadloop
