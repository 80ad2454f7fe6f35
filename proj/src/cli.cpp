#include "dyadloop/cli.hpp"

#include "dyadloop/calibration.hpp"
#include "dyadloop/detection.hpp"
#include "dyadloop/error.hpp"
#include "dyadloop/orchestrator.hpp"
#include "dyadloop/projection.hpp"
#include "dyadloop/report.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>

namespace fs = std::filesystem;

namespace dyadloop {

namespace {

// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads. The
// first exception stops further work and is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::size_t workers =
        std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        while (!stop) {
            const std::size_t i = next++;
            if (i >= n) {
                return;
            }
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) {
                    first_error = std::current_exception();
                }
                stop = true;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < workers; ++t) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
}

std::vector<fs::path> round_dirs(const fs::path& rounds_dir) {
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(rounds_dir)) {
        if (entry.is_directory() && entry.path().filename().string().starts_with("round_")) {
            dirs.push_back(entry.path());
        }
    }
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

struct LoadedRounds {
    std::vector<Round> rounds;
    std::vector<std::string> skipped;
};

LoadedRounds load_rounds(const fs::path& rounds_dir, std::ostream& err) {
    const auto dirs = round_dirs(rounds_dir);
    std::vector<std::optional<Round>> slots(dirs.size());
    std::vector<std::string> errors(dirs.size());
    parallel_for(dirs.size(), [&](std::size_t i) {
        try {
            slots[i] = load_round(dirs[i]);
        } catch (const Error& e) {
            errors[i] = e.what();
        }
    });
    LoadedRounds out;
    for (std::size_t i = 0; i < dirs.size(); ++i) {
        if (slots[i]) {
            out.rounds.push_back(std::move(*slots[i]));
        } else {
            const std::string note = dirs[i].filename().string() + ": " + errors[i];
            err << "warning: skipping " << note << '\n';
            out.skipped.push_back(note);
        }
    }
    return out;
}

bool require_dir(const fs::path& dir, std::ostream& err) {
    if (!fs::is_directory(dir)) {
        err << "error: not a directory: " << dir.string() << '\n';
        return false;
    }
    return true;
}

std::string env_or_empty(const char* name) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string();
}

std::string flag_for_key(std::string_view key) {
    std::string flag = "--";
    for (char c : key) {
        flag += (c == '.' || c == '_') ? '-' : c;
    }
    return flag;
}

std::string three_digits(int v) {
    std::string s = std::to_string(v);
    return s.size() < 3 ? std::string(3 - s.size(), '0') + s : s;
}

} // namespace

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const RunConfig& config) {
    if (config.embedding == EmbeddingKind::Hash) {
        return std::make_unique<HashEmbedder>(config.embedding_dim);
    }
    RemoteEmbedOptions options;
    options.token = env_or_empty("DYADLOOP_EMBED_TOKEN");
    options.expected_dim = config.embedding_dim;
    std::string endpoint =
        config.embedding_endpoint.empty() ? env_or_empty("DYADLOOP_EMBED_URL") : config.embedding_endpoint;
    if (endpoint.empty()) {
        throw ContractError("remote embedding needs embedding.endpoint or DYADLOOP_EMBED_URL");
    }
    return std::make_unique<RemoteEmbedder>(std::move(endpoint), config.embedding_model, config.embedding_dim,
                                            std::move(options));
}

std::array<double, 4> resolve_cutoffs(const RunConfig& config, const EmbeddingProvider& provider) {
    std::array<double, 4> out{};
    bool missing = false;
    for (Metric m : kAllMetrics) {
        missing = missing || !config.cutoff(m);
    }
    std::vector<MetricCalibration> calibrated;
    if (missing) {
        const auto suite = synthetic_labeled_suite();
        const auto grid = default_cutoff_grid();
        calibrated = calibrate_metrics(suite, provider, config.window, grid,
                                       SeriesOptions{config.bleu, config.coherence_alpha});
    }
    for (Metric m : kAllMetrics) {
        const auto i = static_cast<std::size_t>(m);
        out[i] = config.cutoff(m) ? *config.cutoff(m) : calibrated[i].cutoff;
    }
    return out;
}

int cmd_run(const RunConfig& config, std::ostream& out, std::ostream& err) {
    std::vector<SeedSentence> seeds;
    std::unique_ptr<GeneratorAgent> agent_a;
    std::unique_ptr<GeneratorAgent> agent_b;
    try {
        config.validate(true);
        seeds = load_seeds(config.seeds);
        if (seeds.empty()) {
            throw ContractError("seed file has no seeds: " + config.seeds.string());
        }
        agent_a = make_agent(config.agent_a, "agent_a");
        agent_b = make_agent(config.agent_b, "agent_b");
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    std::mutex out_mutex;
    const std::size_t total = seeds.size();
    CampaignOptions options;
    options.rng_seed = config.rng_seed;
    options.context = config.context;
    options.max_parallel_rounds = config.max_parallel_rounds;
    options.on_round_done = [&](const Round& round) {
        std::lock_guard lock(out_mutex);
        out << "round " << round.id() << '/' << total << " [" << source_tag(round.seed().source) << "] "
            << status_tag(round.status()) << ", " << round.steps().size() << " steps";
        if (!round.status_message().empty()) {
            out << ": " << round.status_message();
        }
        out << '\n' << std::flush;
    };

    std::vector<Round> rounds;
    try {
        rounds = run_campaign(seeds, *agent_a, *agent_b, config.params, config.protocol, config.out_dir, options);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitPartial;
    }
    const auto failed = std::count_if(rounds.begin(), rounds.end(), [](const Round& r) { return !r.is_complete(); });
    out << rounds.size() - static_cast<std::size_t>(failed) << '/' << rounds.size() << " rounds complete in "
        << config.out_dir.string() << '\n';
    return failed == 0 ? kExitOk : kExitPartial;
}

int cmd_analyze(const fs::path& rounds_dir, const fs::path& out_dir, const RunConfig& config, std::ostream& out,
                std::ostream& err) {
    std::unique_ptr<EmbeddingProvider> provider;
    try {
        config.validate(false);
        provider = make_embedding_provider(config);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    if (!require_dir(rounds_dir, err)) {
        return kExitConfig;
    }
    const fs::path target = out_dir.empty() ? rounds_dir : out_dir;

    auto loaded = load_rounds(rounds_dir, err);
    const auto cutoffs = resolve_cutoffs(config, *provider);
    const SeriesOptions series_options{config.bleu, config.coherence_alpha};

    struct Analysis {
        std::vector<MetricSeries> series;
        std::string error;
    };
    std::vector<Analysis> results(loaded.rounds.size());
    parallel_for(loaded.rounds.size(), [&](std::size_t i) {
        try {
            results[i].series = all_metric_series(loaded.rounds[i], *provider, series_options);
        } catch (const Error& e) {
            results[i].error = e.what();
        }
    });

    std::vector<MetricRow> metric_rows_all;
    std::vector<VerdictRow> verdict_rows;
    std::vector<Round> analyzed;
    for (std::size_t i = 0; i < loaded.rounds.size(); ++i) {
        const Round& round = loaded.rounds[i];
        if (!results[i].error.empty()) {
            const std::string note = round_dir_name(round.id()) + ": " + results[i].error;
            err << "warning: skipping " << note << '\n';
            loaded.skipped.push_back(note);
            continue;
        }
        for (const auto& series : results[i].series) {
            const auto rows = metric_rows(series);
            metric_rows_all.insert(metric_rows_all.end(), rows.begin(), rows.end());
            verdict_rows.push_back(
                {round.id(), detect_collapse(series, cutoffs[static_cast<std::size_t>(series.metric)],
                                             config.window)});
        }
        analyzed.push_back(round);
    }

    const auto summary = summarize(verdict_rows, analyzed);
    try {
        fs::create_directories(target);
        write_file_atomic(target / "metrics.csv", format_metrics_csv(metric_rows_all));
        write_file_atomic(target / "verdicts.csv", format_verdicts_csv(verdict_rows));
        write_file_atomic(target / "summary.csv", format_summary_csv(summary));
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitPartial;
    }

    out << "cutoffs:";
    for (Metric m : kAllMetrics) {
        out << ' ' << metric_name(m) << '=' << format_number(cutoffs[static_cast<std::size_t>(m)]);
    }
    out << " window=" << config.window << '\n';
    out << format_summary_table(summary);
    out << analyzed.size() << " rounds analyzed, " << loaded.skipped.size() << " skipped\n";
    for (const auto& note : loaded.skipped) {
        out << "  skipped " << note << '\n';
    }
    if (analyzed.empty()) {
        err << "error: no analyzable rounds in " << rounds_dir.string() << '\n';
        return kExitPartial;
    }
    return loaded.skipped.empty() ? kExitOk : kExitPartial;
}

int cmd_plot(const fs::path& metrics_csv, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
    if (!fs::is_regular_file(metrics_csv)) {
        err << "error: metrics file not found: " << metrics_csv.string() << '\n';
        return kExitConfig;
    }
    std::vector<MetricRow> rows;
    std::map<std::pair<int, Metric>, CollapseVerdict> verdicts;
    const fs::path verdicts_csv = metrics_csv.parent_path() / "verdicts.csv";
    try {
        rows = parse_metrics_csv(read_file(metrics_csv));
        if (fs::is_regular_file(verdicts_csv)) {
            for (const auto& v : parse_verdicts_csv(read_file(verdicts_csv))) {
                verdicts[{v.round_id, v.verdict.metric}] = v.verdict;
            }
        }
    } catch (const ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitPartial;
    }
    if (rows.empty()) {
        err << "warning: " << metrics_csv.string() << " has no rows; nothing to plot\n";
        return kExitOk;
    }

    std::map<std::pair<int, Metric>, std::vector<MetricRow>> groups;
    for (const auto& r : rows) {
        groups[{r.round_id, r.metric}].push_back(r);
    }
    std::vector<std::pair<std::pair<int, Metric>, std::vector<double>>> charts;
    for (auto& [key, group] : groups) {
        std::sort(group.begin(), group.end(),
                  [](const MetricRow& a, const MetricRow& b) { return a.pair_index < b.pair_index; });
        std::vector<double> values;
        for (std::size_t k = 0; k < group.size(); ++k) {
            if (group[k].pair_index != static_cast<int>(k) + 1) {
                err << "error: round " << key.first << ' ' << metric_name(key.second)
                    << ": pair indices are not contiguous from 1\n";
                return kExitPartial;
            }
            values.push_back(group[k].value);
        }
        charts.emplace_back(key, std::move(values));
    }

    const fs::path target = out_dir.empty() ? metrics_csv.parent_path() : out_dir;
    fs::create_directories(target);
    parallel_for(charts.size(), [&](std::size_t i) {
        const auto& [key, values] = charts[i];
        std::optional<CollapseVerdict> verdict;
        if (const auto it = verdicts.find(key); it != verdicts.end()) {
            verdict = it->second;
        }
        const std::string name =
            round_dir_name(key.first) + "_" + std::string(metric_name(key.second)) + ".svg";
        write_file_atomic(target / name, render_series_svg(key.first, key.second, values, verdict));
    });
    out << charts.size() << " charts written to " << target.string() << '\n';
    return kExitOk;
}

int cmd_tsne(const fs::path& rounds_dir, const fs::path& out_dir, const RunConfig& config, std::ostream& out,
             std::ostream& err) {
    std::unique_ptr<EmbeddingProvider> provider;
    try {
        config.validate(false);
        provider = make_embedding_provider(config);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    if (!require_dir(rounds_dir, err)) {
        return kExitConfig;
    }
    const fs::path target = out_dir.empty() ? rounds_dir : out_dir;
    auto loaded = load_rounds(rounds_dir, err);

    std::map<std::string, std::vector<const Round*>> scopes;
    for (const auto& r : loaded.rounds) {
        const std::string name = config.tsne_scope == TsneScope::Round
                                     ? round_dir_name(r.id())
                                     : "group_" + three_digits((r.id() - 1) / config.tsne_group_size + 1);
        scopes[name].push_back(&r);
    }
    std::vector<std::pair<std::string, std::vector<const Round*>>> work(scopes.begin(), scopes.end());

    std::vector<std::string> skipped_scopes(work.size());
    try {
        fs::create_directories(target);
        parallel_for(work.size(), [&](std::size_t s) {
            const auto& [name, rounds] = work[s];
            std::vector<ProjectionPoint> points;
            std::vector<EmbeddingVector> vectors;
            for (const Round* r : rounds) {
                auto embed = [&](std::string_view text, int step) {
                    try {
                        vectors.push_back(provider->embed(text));
                    } catch (const Error& e) {
                        throw Error("round " + std::to_string(r->id()) + " step " + std::to_string(step) +
                                    ": embedding failed: " + e.what());
                    }
                };
                embed(r->seed().text, 0);
                points.push_back({0.0, 0.0, 0, std::nullopt, r->id()});
                for (const auto& step : r->steps()) {
                    embed(step.text, step.index);
                    points.push_back({0.0, 0.0, step.index, step.author, r->id()});
                }
            }
            if (static_cast<double>(points.size()) <= config.tsne.perplexity || points.size() < 4) {
                skipped_scopes[s] = name + ": " + std::to_string(points.size()) + " points is too few for perplexity " +
                                    format_number(config.tsne.perplexity);
                return;
            }
            const auto result = tsne(vectors, config.tsne);
            for (std::size_t i = 0; i < points.size(); ++i) {
                points[i].x = result.x[i];
                points[i].y = result.y[i];
            }
            write_file_atomic(target / ("tsne_" + name + ".csv"), format_tsne_csv(points));
            write_file_atomic(target / ("tsne_" + name + ".svg"), render_scatter_svg("t-SNE " + name, points));
        });
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitPartial;
    }

    std::size_t written = 0;
    for (std::size_t s = 0; s < work.size(); ++s) {
        if (skipped_scopes[s].empty()) {
            ++written;
        } else {
            err << "warning: skipping scope " << skipped_scopes[s] << '\n';
            loaded.skipped.push_back(skipped_scopes[s]);
        }
    }
    out << written << " projections written to " << target.string() << '\n';
    if (written == 0) {
        err << "error: nothing to project in " << rounds_dir.string() << '\n';
        return kExitPartial;
    }
    return loaded.skipped.empty() ? kExitOk : kExitPartial;
}

int cmd_calibrate(const RunConfig& config, const fs::path& out_file, std::ostream& out, std::ostream& err) {
    std::unique_ptr<EmbeddingProvider> provider;
    try {
        config.validate(false);
        provider = make_embedding_provider(config);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    const SuiteOptions suite_options;
    std::string text;
    try {
        const auto suite = synthetic_labeled_suite(suite_options);
        const auto grid = default_cutoff_grid();
        const auto results = calibrate_metrics(suite, *provider, config.window, grid,
                                               SeriesOptions{config.bleu, config.coherence_alpha});
        text = format_calibration(results, suite_options, provider->name(), config.window);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitPartial;
    }
    if (out_file.empty()) {
        out << text;
    } else {
        write_file_atomic(out_file, text);
        out << "calibration written to " << out_file.string() << '\n';
    }
    return kExitOk;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Two-agent conversation loop harness and collapse analysis"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    app.add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);

    std::vector<std::pair<std::string_view, std::string>> overrides;
    overrides.reserve(config_keys().size());
    for (const auto& key : config_keys()) {
        overrides.emplace_back(key.key, std::string());
        app.add_option(flag_for_key(key.key), overrides.back().second, std::string(key.help));
    }

    std::string rounds_dir;
    std::string metrics_csv;
    std::string out_path;

    auto* run = app.add_subcommand("run", "run one conversation round per seed");
    auto* analyze = app.add_subcommand("analyze", "distance series, collapse verdicts and per-source summary");
    analyze->add_option("rounds_dir", rounds_dir, "campaign directory")->required();
    analyze->add_option("--out", out_path, "output directory (default: rounds_dir)");
    auto* plot = app.add_subcommand("plot", "SVG chart per round and metric");
    plot->add_option("metrics_csv", metrics_csv, "metrics.csv from analyze")->required();
    plot->add_option("--out", out_path, "output directory (default: alongside metrics_csv)");
    auto* tsne_cmd = app.add_subcommand("tsne", "2-D projection of every output");
    tsne_cmd->add_option("rounds_dir", rounds_dir, "campaign directory")->required();
    tsne_cmd->add_option("--out", out_path, "output directory (default: rounds_dir)");
    auto* calibrate = app.add_subcommand("calibrate", "choose cutoffs on the built-in labeled suite");
    calibrate->add_option("--out", out_path, "write the config snippet here instead of stdout");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(std::move(reversed));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    RunConfig config;
    try {
        if (!config_path.empty()) {
            config.load(config_path);
        }
        for (const auto& key : config_keys()) {
            const auto* opt = app.get_option(flag_for_key(key.key));
            if (opt->count() > 0) {
                const auto it = std::find_if(overrides.begin(), overrides.end(),
                                             [&](const auto& o) { return o.first == key.key; });
                config.set(key.key, it->second);
            }
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    if (run->parsed()) {
        return cmd_run(config, out, err);
    }
    if (analyze->parsed()) {
        return cmd_analyze(rounds_dir, out_path, config, out, err);
    }
    if (plot->parsed()) {
        return cmd_plot(metrics_csv, out_path, out, err);
    }
    if (tsne_cmd->parsed()) {
        return cmd_tsne(rounds_dir, out_path, config, out, err);
    }
    return cmd_calibrate(config, out_path, out, err);
}

} // namespace dyadloop
