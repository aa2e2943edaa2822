#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "esc51/run_record.hpp"

namespace esc51 {

/// Everything that defines a run apart from the seed.
struct RunConfig {
    std::string env = "cartpole";
    double sticky = 0.0;
    AgentConfig agent;
};

inline constexpr int kFormatVersion = 1;

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const AgentConfig& config);
AgentConfig agent_config_from_json(const nlohmann::json& j);

/// 16 hex digits (FNV-1a 64) over the canonical JSON of the configuration
/// with algorithm and seed removed, so the two algorithms of a comparison
/// share one hash.
std::string config_hash(const RunConfig& config);

/// `timestep,episode,return,length`, one header line, one row per episode.
void write_episodes_csv(const RunRecord& run, std::ostream& out);
std::vector<EpisodeLog> read_episodes_csv(std::istream& in);
/// `timestep,loss,tau,churn`; churn is empty when not tracked.
void write_training_csv(const RunRecord& run, std::ostream& out);
std::vector<TrainingLog> read_training_csv(std::istream& in);

nlohmann::json run_summary(const RunRecord& run);

/// <root>/runs/<env>_<algo>_seed<seed>_<hash>
std::filesystem::path run_directory(const std::filesystem::path& root, const RunConfig& config, std::uint64_t seed);

/// Writes episodes.csv, training.csv and summary.json into dir.
void write_run(const RunRecord& run, const std::filesystem::path& dir);
RunRecord read_run(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Runs and comparisons

/// One training run; a divergence is recorded in the result instead of thrown.
RunRecord run_training(const RunConfig& config, std::uint64_t seed);

/// Loads the cached run under root if present, otherwise trains and caches it.
RunRecord load_or_run(const RunConfig& config, std::uint64_t seed, const std::filesystem::path& root,
                      std::ostream* log = nullptr);

struct ComparisonReport {
    std::string env;
    std::string config_hash;
    std::vector<std::uint64_t> seeds;
    std::vector<double> ql_final;  // per seed, same order as seeds
    std::vector<double> es_final;
    double ql_mean = 0.0;
    double ql_std = 0.0;
    double es_mean = 0.0;
    double es_std = 0.0;
    double improvement_pct = 0.0;
    double p_value = 1.0;
    bool significant = false;
    std::string winner;
    std::optional<std::string> warning;
    std::vector<std::string> diverged;  // "<algo>/seed<k>@<timestep>"
};

inline constexpr double kSignificanceLevel = 0.05;

/// Pure aggregation over finished runs, paired by seed.
ComparisonReport compare_records(const std::string& env, std::span<const RunRecord> ql, std::span<const RunRecord> es);

/// Trains (or loads) both algorithms for every seed under root, then writes
/// report_<env>_<hash>.json and plot_<env>_<hash>.tsv into root.
ComparisonReport compare(const RunConfig& base, std::span<const std::uint64_t> seeds, const std::filesystem::path& root,
                         int jobs = 1, std::ostream* log = nullptr);

nlohmann::json to_json(const ComparisonReport& report);

// ---------------------------------------------------------------------------
// Plot data

struct PlotOptions {
    std::size_t window = 20;     // trailing moving average, in episodes
    std::int64_t grid_step = 0;  // timesteps between grid points; 0 picks total/500
};

/// Across-seed curve for one algorithm.
struct PlotSeries {
    std::string label;
    std::size_t n_seeds = 0;
    std::vector<std::int64_t> timesteps;
    std::vector<double> mean;
    std::vector<double> stddev;  // band is mean +/- stddev
};

/// One series per algorithm present in records. A grid point appears once
/// every seed has finished an episode; each seed contributes the smoothed
/// return of its latest episode ending at or before that timestep.
std::vector<PlotSeries> emit_plot_data(std::span<const RunRecord> records, const PlotOptions& options = {});
void write_plot_data(std::span<const PlotSeries> series, const PlotOptions& options, std::ostream& out);

}  // namespace esc51
