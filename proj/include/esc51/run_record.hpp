#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "esc51/categorical.hpp"
#include "esc51/policy.hpp"
#include "esc51/value_network.hpp"

namespace esc51 {

enum class Algorithm { ql_c51, es_c51 };

/// "ql-c51" / "es-c51"
std::string_view to_string(Algorithm algorithm);
Algorithm parse_algorithm(std::string_view text);

/// Defaults follow the common classic-control C51 setup.
struct AgentConfig {
    Algorithm algorithm = Algorithm::es_c51;
    double gamma = 0.99;
    int batch_size = 128;
    std::int64_t train_frequency = 10;
    std::int64_t learning_starts = 10'000;
    std::int64_t target_update_interval = 500;
    std::int64_t total_timesteps = 500'000;

    int n_atoms = 101;
    double v_min = -100.0;
    double v_max = 100.0;

    double tau_start = 1.0;
    double tau_floor = 0.01;
    double tau_fraction = 0.75;

    std::vector<int> hidden{120, 84};
    AdamConfig adam;
    std::size_t buffer_capacity = 10'000;

    int churn_probe_size = 256;
    bool track_churn = false;

    std::uint64_t seed = 1;

    void validate() const;
    Support support() const { return make_support(n_atoms, v_min, v_max); }
    TemperatureSchedule schedule() const { return {tau_start, tau_floor, tau_fraction, total_timesteps}; }
};

struct EpisodeLog {
    std::int64_t timestep = 0;  // global steps taken when the episode ended
    std::int64_t episode = 0;   // 1-based
    double ret = 0.0;
    std::int64_t length = 0;
};

struct TrainingLog {
    std::int64_t timestep = 0;
    double loss = 0.0;
    double tau = 0.0;
    std::optional<double> churn;
};

struct RunRecord {
    std::string env;
    double sticky = 0.0;
    AgentConfig config;
    std::vector<EpisodeLog> episodes;
    std::vector<TrainingLog> training;
    double duration_seconds = 0.0;
    std::optional<std::int64_t> diverged_at;
    std::string diverged_message;

    std::uint64_t seed() const { return config.seed; }
    Algorithm algorithm() const { return config.algorithm; }
};

}  // namespace esc51
