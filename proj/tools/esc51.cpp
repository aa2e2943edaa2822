// esc51 command line: train single runs, run seed-sweep comparisons and
// rebuild reports from cached runs.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "esc51/experiment.hpp"
#include "esc51/statistics.hpp"

namespace fs = std::filesystem;
using namespace esc51;

namespace {

struct Hyper {
    std::string env = "cartpole";
    AgentConfig agent;
    double sticky = 0.0;
};

void add_hyper_options(CLI::App& cmd, Hyper& h) {
    cmd.add_option("--env", h.env, "Environment: cartpole, acrobot, equal-mean")
        ->check(CLI::IsMember({"cartpole", "acrobot", "equal-mean"}))
        ->required();
    cmd.add_option("--total-timesteps", h.agent.total_timesteps)->capture_default_str();
    cmd.add_option("--n-atoms", h.agent.n_atoms)->capture_default_str();
    cmd.add_option("--v-min", h.agent.v_min)->capture_default_str();
    cmd.add_option("--v-max", h.agent.v_max)->capture_default_str();
    cmd.add_option("--tau-start", h.agent.tau_start)->capture_default_str();
    cmd.add_option("--tau-floor", h.agent.tau_floor)->capture_default_str();
    cmd.add_option("--tau-fraction", h.agent.tau_fraction, "Fraction of the run over which tau decays")
        ->capture_default_str();
    cmd.add_option("--gamma", h.agent.gamma)->capture_default_str();
    cmd.add_option("--batch-size", h.agent.batch_size)->capture_default_str();
    cmd.add_option("--learning-starts", h.agent.learning_starts)->capture_default_str();
    cmd.add_option("--train-frequency", h.agent.train_frequency)->capture_default_str();
    cmd.add_option("--target-update", h.agent.target_update_interval)->capture_default_str();
    cmd.add_option("--learning-rate", h.agent.adam.learning_rate)->capture_default_str();
    cmd.add_option("--adam-epsilon", h.agent.adam.epsilon)->capture_default_str();
    cmd.add_option("--buffer-size", h.agent.buffer_capacity)->capture_default_str();
    cmd.add_option("--hidden", h.agent.hidden, "Hidden layer widths")->capture_default_str()->delimiter(',');
    cmd.add_option("--sticky", h.sticky, "Sticky-action repeat probability")->check(CLI::Range(0.0, 0.999999));
    cmd.add_flag("--track-churn", h.agent.track_churn, "Log policy churn on a fixed probe set");
    cmd.add_option("--churn-probe", h.agent.churn_probe_size, "Probe set size")->capture_default_str();
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        const auto dash = item.find('-');
        if (dash == std::string::npos) {
            seeds.push_back(std::stoull(item));
        } else {
            const auto lo = std::stoull(item.substr(0, dash)), hi = std::stoull(item.substr(dash + 1));
            if (hi < lo) throw std::invalid_argument("bad seed range " + item);
            for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
        }
    }
    if (seeds.empty()) throw std::invalid_argument("no seeds given");
    return seeds;
}

void print_report(const ComparisonReport& r, std::ostream& out) {
    out << std::fixed << std::setprecision(2);
    out << "env " << r.env << " (config " << r.config_hash << "), " << r.seeds.size() << " seeds\n";
    out << "  QL-C51  " << r.ql_mean << " +- " << r.ql_std << '\n';
    out << "  ES-C51  " << r.es_mean << " +- " << r.es_std << '\n';
    out << "  winner " << r.winner << ", improvement " << r.improvement_pct << " %, Wilcoxon p = " << std::setprecision(4)
        << r.p_value << (r.significant ? " (significant)" : " (not significant)") << '\n';
    if (r.warning) out << "  warning: " << *r.warning << '\n';
    for (const auto& d : r.diverged) out << "  diverged: " << d << '\n';
    out.unsetf(std::ios::floatfield);
}

int cmd_report(const fs::path& in, std::size_t window) {
    std::map<std::pair<std::string, std::string>, std::vector<RunRecord>> groups;
    if (!fs::exists(in / "runs")) throw std::runtime_error("no runs/ directory under " + in.string());
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(in / "runs"))
        if (fs::exists(entry.path() / "summary.json")) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
        RunRecord run = read_run(dir);
        groups[{run.env, config_hash(RunConfig{run.env, run.sticky, run.config})}].push_back(std::move(run));
    }
    int reported = 0;
    for (const auto& [key, runs] : groups) {
        std::vector<RunRecord> ql, es;
        for (const auto& r : runs) (r.algorithm() == Algorithm::ql_c51 ? ql : es).push_back(r);
        // keep only seeds present for both algorithms
        auto has_seed = [](const std::vector<RunRecord>& v, std::uint64_t s) {
            return std::any_of(v.begin(), v.end(), [&](const RunRecord& r) { return r.seed() == s; });
        };
        std::erase_if(ql, [&](const RunRecord& r) { return !has_seed(es, r.seed()); });
        std::erase_if(es, [&](const RunRecord& r) { return !has_seed(ql, r.seed()); });
        if (ql.size() < 2) {
            std::cout << "skipping " << key.first << " (config " << key.second << "): fewer than two paired seeds\n";
            continue;
        }
        const auto report = compare_records(key.first, ql, es);
        print_report(report, std::cout);
        const std::string stem = key.first + "_" + key.second;
        std::ofstream(in / ("report_" + stem + ".json")) << to_json(report).dump(2) << '\n';
        PlotOptions options;
        options.window = window;
        std::vector<RunRecord> all = ql;
        all.insert(all.end(), es.begin(), es.end());
        std::ofstream plot(in / ("plot_" + stem + ".tsv"));
        write_plot_data(emit_plot_data(all, options), options, plot);
        ++reported;
    }
    if (reported == 0) std::cout << "no complete comparisons found\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Categorical distributional RL: QL-C51 vs ES-C51"};
    app.require_subcommand(1);

    Hyper train_h;
    std::string algo = "es-c51";
    std::uint64_t seed = 1;
    fs::path train_out = "results";
    auto* train = app.add_subcommand("train", "Run one training run and write its logs");
    add_hyper_options(*train, train_h);
    train->add_option("--algo", algo, "ql-c51 or es-c51")->check(CLI::IsMember({"ql-c51", "es-c51"}))->required();
    train->add_option("--seed", seed)->capture_default_str();
    train->add_option("--out", train_out, "Results root")->capture_default_str();

    Hyper cmp_h;
    std::string seeds_text = "1-10";
    fs::path cmp_out = "results";
    int jobs = 1;
    auto* cmp = app.add_subcommand("compare", "Seed sweep of both algorithms with statistical comparison");
    add_hyper_options(*cmp, cmp_h);
    cmp->add_option("--seeds", seeds_text, "Seed list, e.g. 1-10 or 1,2,5")->capture_default_str();
    cmp->add_option("--out", cmp_out, "Results root (runs are cached here)")->capture_default_str();
    cmp->add_option("--jobs", jobs, "Concurrent runs")->capture_default_str();

    fs::path report_in = "results";
    std::size_t window = 20;
    auto* rep = app.add_subcommand("report", "Rebuild comparison reports from cached runs");
    rep->add_option("--in", report_in, "Results root")->required();
    rep->add_option("--window", window, "Smoothing window in episodes")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            RunConfig cfg{train_h.env, train_h.sticky, train_h.agent};
            cfg.agent.algorithm = parse_algorithm(algo);
            cfg.agent.seed = seed;
            cfg.agent.validate();
            const RunRecord run = run_training(cfg, seed);
            const fs::path dir = run_directory(train_out, cfg, seed);
            write_run(run, dir);
            std::cout << "wrote " << dir.string() << '\n'
                      << "episodes " << run.episodes.size() << ", duration " << run.duration_seconds << " s\n";
            if (!run.episodes.empty()) std::cout << "final-decile mean " << final_decile_mean(run) << '\n';
            if (run.diverged_at) {
                std::cerr << "run diverged at timestep " << *run.diverged_at << ": " << run.diverged_message << '\n';
                return 2;
            }
        } else if (*cmp) {
            RunConfig cfg{cmp_h.env, cmp_h.sticky, cmp_h.agent};
            cfg.agent.validate();
            const auto seeds = parse_seeds(seeds_text);
            const auto report = compare(cfg, seeds, cmp_out, jobs, &std::cerr);
            print_report(report, std::cout);
        } else if (*rep) {
            return cmd_report(report_in, window);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
