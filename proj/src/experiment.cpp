#include "esc51/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "esc51/agents.hpp"
#include "esc51/envs.hpp"
#include "esc51/statistics.hpp"

namespace esc51 {

namespace fs = std::filesystem;
using nlohmann::json;

RunRecord run_training(const RunConfig& config, std::uint64_t seed) {
    AgentConfig agent = config.agent;
    agent.seed = seed;
    auto env = make_environment(config.env, seed, config.sticky);
    RunRecord record;
    try {
        record = train_loop(agent, *env);
    } catch (const DivergedRun& e) {
        record = e.partial();
    }
    record.env = config.env;
    record.sticky = config.sticky;
    return record;
}

RunRecord load_or_run(const RunConfig& config, std::uint64_t seed, const fs::path& root, std::ostream* log) {
    static std::mutex log_mutex;
    const fs::path dir = run_directory(root, config, seed);
    if (fs::exists(dir / "summary.json")) return read_run(dir);

    if (log) {
        std::lock_guard lock(log_mutex);
        *log << "training " << config.env << ' ' << to_string(config.agent.algorithm) << " seed " << seed << '\n';
    }
    RunRecord record = run_training(config, seed);
    write_run(record, dir);
    if (log) {
        std::lock_guard lock(log_mutex);
        *log << "finished " << config.env << ' ' << to_string(config.agent.algorithm) << " seed " << seed << " in "
             << record.duration_seconds << " s";
        if (!record.episodes.empty()) *log << ", final-decile mean " << final_decile_mean(record);
        if (record.diverged_at) *log << ", DIVERGED at " << *record.diverged_at;
        *log << '\n';
    }
    return record;
}

namespace {

std::map<std::uint64_t, const RunRecord*> by_seed(std::span<const RunRecord> records, const char* side) {
    std::map<std::uint64_t, const RunRecord*> out;
    for (const auto& r : records)
        if (!out.emplace(r.seed(), &r).second)
            throw std::invalid_argument(std::string("duplicate seed in ") + side + " runs");
    return out;
}

}  // namespace

ComparisonReport compare_records(const std::string& env, std::span<const RunRecord> ql, std::span<const RunRecord> es) {
    const auto ql_runs = by_seed(ql, "ql-c51");
    const auto es_runs = by_seed(es, "es-c51");
    if (ql_runs.size() != es_runs.size()) throw std::invalid_argument("seed count differs between algorithms");
    if (ql_runs.size() < 2) throw std::invalid_argument("a comparison needs at least two seeds");

    ComparisonReport report;
    report.env = env;
    for (const auto& [seed, ql_run] : ql_runs) {
        const auto it = es_runs.find(seed);
        if (it == es_runs.end()) throw std::invalid_argument("seed " + std::to_string(seed) + " missing from es-c51 runs");
        for (const RunRecord* run : {ql_run, it->second}) {
            if (run->episodes.empty())
                throw std::invalid_argument("run " + std::string(to_string(run->algorithm())) + "/seed" +
                                            std::to_string(seed) + " has no completed episodes");
            if (run->diverged_at)
                report.diverged.push_back(std::string(to_string(run->algorithm())) + "/seed" + std::to_string(seed) +
                                          "@" + std::to_string(*run->diverged_at));
        }
        report.seeds.push_back(seed);
        report.ql_final.push_back(final_decile_mean(*ql_run));
        report.es_final.push_back(final_decile_mean(*it->second));
    }
    if (!ql.empty()) report.config_hash = config_hash(RunConfig{env, ql.front().sticky, ql.front().config});

    report.ql_mean = mean(report.ql_final);
    report.ql_std = stddev(report.ql_final);
    report.es_mean = mean(report.es_final);
    report.es_std = stddev(report.es_final);
    report.improvement_pct = improvement_pct(report.ql_mean, report.es_mean);
    report.p_value = wilcoxon_signed_rank(report.es_final, report.ql_final);
    report.significant = report.p_value < kSignificanceLevel;
    report.winner = report.es_mean > report.ql_mean ? "es-c51" : report.es_mean < report.ql_mean ? "ql-c51" : "tie";

    // smallest attainable exact two-sided p is 2 / 2^n
    const double min_p = std::ldexp(2.0, -static_cast<int>(report.seeds.size()));
    if (min_p >= kSignificanceLevel)
        report.warning = "low power: with " + std::to_string(report.seeds.size()) +
                         " seeds the smallest attainable p-value is " + std::to_string(min_p);
    return report;
}

json to_json(const ComparisonReport& r) {
    json j{{"format_version", kFormatVersion},
           {"env", r.env},
           {"config_hash", r.config_hash},
           {"seeds", r.seeds},
           {"ql_c51_final_decile", r.ql_final},
           {"es_c51_final_decile", r.es_final},
           {"ql_c51_mean", r.ql_mean},
           {"ql_c51_std", r.ql_std},
           {"es_c51_mean", r.es_mean},
           {"es_c51_std", r.es_std},
           {"improvement_pct", r.improvement_pct},
           {"p_value", r.p_value},
           {"significant", r.significant},
           {"alpha", kSignificanceLevel},
           {"winner", r.winner},
           {"diverged", r.diverged}};
    j["warning"] = r.warning ? json(*r.warning) : json(nullptr);
    return j;
}

ComparisonReport compare(const RunConfig& base, std::span<const std::uint64_t> seeds, const fs::path& root, int jobs,
                         std::ostream* log) {
    if (seeds.size() < 2) throw std::invalid_argument("a comparison needs at least two seeds");
    struct Task {
        RunConfig config;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (Algorithm algo : {Algorithm::ql_c51, Algorithm::es_c51}) {
        for (std::uint64_t seed : seeds) {
            RunConfig cfg = base;
            cfg.agent.algorithm = algo;
            cfg.agent.seed = seed;
            tasks.push_back({cfg, seed});
        }
    }

    std::vector<RunRecord> results(tasks.size());
    std::vector<std::exception_ptr> errors(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            try {
                results[i] = load_or_run(tasks[i].config, tasks[i].seed, root, log);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int n_workers = std::clamp(jobs, 1, static_cast<int>(tasks.size()));
    std::vector<std::thread> pool;
    for (int w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    const std::size_t half = seeds.size();
    std::span<const RunRecord> all(results);
    ComparisonReport report = compare_records(base.env, all.first(half), all.subspan(half));

    fs::create_directories(root);
    const std::string stem = base.env + "_" + report.config_hash;
    {
        std::ofstream out(root / ("report_" + stem + ".json"));
        out << to_json(report).dump(2) << '\n';
    }
    PlotOptions options;
    const auto series = emit_plot_data(results, options);
    std::ofstream out(root / ("plot_" + stem + ".tsv"));
    write_plot_data(series, options, out);
    return report;
}

// ---------------------------------------------------------------------------
// Plot data

namespace {

struct SmoothedCurve {
    std::vector<std::int64_t> timesteps;
    std::vector<double> values;
};

SmoothedCurve smooth(const RunRecord& run, std::size_t window) {
    SmoothedCurve c;
    double running = 0.0;
    const auto& eps = run.episodes;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        running += eps[i].ret;
        if (i >= window) running -= eps[i - window].ret;
        const std::size_t count = std::min(i + 1, window);
        c.timesteps.push_back(eps[i].timestep);
        c.values.push_back(running / static_cast<double>(count));
    }
    return c;
}

}  // namespace

std::vector<PlotSeries> emit_plot_data(std::span<const RunRecord> records, const PlotOptions& options) {
    if (records.empty()) throw std::invalid_argument("no runs to plot");
    if (options.window < 1) throw std::invalid_argument("smoothing window must be at least one episode");

    std::int64_t horizon = 0;
    for (const auto& r : records) horizon = std::max(horizon, r.config.total_timesteps);
    const std::int64_t step = options.grid_step > 0 ? options.grid_step : std::max<std::int64_t>(1, horizon / 500);

    std::vector<PlotSeries> out;
    for (Algorithm algo : {Algorithm::ql_c51, Algorithm::es_c51}) {
        std::vector<SmoothedCurve> curves;
        for (const auto& r : records) {
            if (r.algorithm() != algo) continue;
            if (r.episodes.empty()) throw std::invalid_argument("cannot plot a run without episodes");
            curves.push_back(smooth(r, options.window));
        }
        if (curves.empty()) continue;

        PlotSeries s;
        s.label = std::string(to_string(algo));
        s.n_seeds = curves.size();
        std::int64_t first = 0, last = std::numeric_limits<std::int64_t>::max();
        for (const auto& c : curves) {
            first = std::max(first, c.timesteps.front());
            last = std::min(last, c.timesteps.back());
        }
        std::vector<std::size_t> cursor(curves.size(), 0);
        std::vector<double> at(curves.size());
        for (std::int64_t t = ((first + step - 1) / step) * step; t <= last; t += step) {
            for (std::size_t k = 0; k < curves.size(); ++k) {
                const auto& ts = curves[k].timesteps;
                while (cursor[k] + 1 < ts.size() && ts[cursor[k] + 1] <= t) ++cursor[k];
                at[k] = curves[k].values[cursor[k]];
            }
            s.timesteps.push_back(t);
            s.mean.push_back(mean(at));
            s.stddev.push_back(stddev(at));
        }
        out.push_back(std::move(s));
    }
    return out;
}

void write_plot_data(std::span<const PlotSeries> series, const PlotOptions& options, std::ostream& out) {
    out << "# format_version=" << kFormatVersion << '\n';
    out << "# window=" << options.window << " band=mean+-1std across seeds\n";
    out << "algo\ttimestep\tmean\tstd\tlower\tupper\tn_seeds\n";
    const auto old_precision = out.precision(10);
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.timesteps.size(); ++i)
            out << s.label << '\t' << s.timesteps[i] << '\t' << s.mean[i] << '\t' << s.stddev[i] << '\t'
                << s.mean[i] - s.stddev[i] << '\t' << s.mean[i] + s.stddev[i] << '\t' << s.n_seeds << '\n';
    out.precision(old_precision);
}

}  // namespace esc51
