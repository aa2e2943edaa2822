#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "esc51/experiment.hpp"
#include "esc51/statistics.hpp"

namespace esc51 {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Shortest representation that round-trips.
std::string format_number(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

double parse_double(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::runtime_error("bad number '" + s + "'");
    return v;
}

std::int64_t parse_int(const std::string& s) {
    std::int64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::runtime_error("bad integer '" + s + "'");
    return v;
}

constexpr const char* kEpisodesHeader = "timestep,episode,return,length";
constexpr const char* kTrainingHeader = "timestep,loss,tau,churn";

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace

json to_json(const AgentConfig& c) {
    return json{{"algorithm", to_string(c.algorithm)},
                {"gamma", c.gamma},
                {"batch_size", c.batch_size},
                {"train_frequency", c.train_frequency},
                {"learning_starts", c.learning_starts},
                {"target_update_interval", c.target_update_interval},
                {"total_timesteps", c.total_timesteps},
                {"n_atoms", c.n_atoms},
                {"v_min", c.v_min},
                {"v_max", c.v_max},
                {"tau_start", c.tau_start},
                {"tau_floor", c.tau_floor},
                {"tau_fraction", c.tau_fraction},
                {"hidden", c.hidden},
                {"learning_rate", c.adam.learning_rate},
                {"adam_beta1", c.adam.beta1},
                {"adam_beta2", c.adam.beta2},
                {"adam_epsilon", c.adam.epsilon},
                {"buffer_capacity", c.buffer_capacity},
                {"churn_probe_size", c.churn_probe_size},
                {"track_churn", c.track_churn},
                {"seed", c.seed}};
}

AgentConfig agent_config_from_json(const json& j) {
    AgentConfig c;
    c.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
    j.at("gamma").get_to(c.gamma);
    j.at("batch_size").get_to(c.batch_size);
    j.at("train_frequency").get_to(c.train_frequency);
    j.at("learning_starts").get_to(c.learning_starts);
    j.at("target_update_interval").get_to(c.target_update_interval);
    j.at("total_timesteps").get_to(c.total_timesteps);
    j.at("n_atoms").get_to(c.n_atoms);
    j.at("v_min").get_to(c.v_min);
    j.at("v_max").get_to(c.v_max);
    j.at("tau_start").get_to(c.tau_start);
    j.at("tau_floor").get_to(c.tau_floor);
    j.at("tau_fraction").get_to(c.tau_fraction);
    j.at("hidden").get_to(c.hidden);
    j.at("learning_rate").get_to(c.adam.learning_rate);
    j.at("adam_beta1").get_to(c.adam.beta1);
    j.at("adam_beta2").get_to(c.adam.beta2);
    j.at("adam_epsilon").get_to(c.adam.epsilon);
    j.at("buffer_capacity").get_to(c.buffer_capacity);
    j.at("churn_probe_size").get_to(c.churn_probe_size);
    j.at("track_churn").get_to(c.track_churn);
    j.at("seed").get_to(c.seed);
    return c;
}

std::string config_hash(const RunConfig& config) {
    json j = to_json(config.agent);
    j.erase("algorithm");
    j.erase("seed");
    j["env"] = config.env;
    j["sticky"] = config.sticky;
    char buf[17];
    const auto res = std::to_chars(buf, buf + 16, fnv1a(j.dump()), 16);
    std::string hex(buf, res.ptr);
    return std::string(16 - hex.size(), '0') + hex;
}

void write_episodes_csv(const RunRecord& run, std::ostream& out) {
    out << kEpisodesHeader << '\n';
    for (const auto& e : run.episodes)
        out << e.timestep << ',' << e.episode << ',' << format_number(e.ret) << ',' << e.length << '\n';
}

std::vector<EpisodeLog> read_episodes_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kEpisodesHeader) throw std::runtime_error("episodes CSV: bad header");
    std::vector<EpisodeLog> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 4) throw std::runtime_error("episodes CSV: expected 4 fields in '" + line + "'");
        out.push_back({parse_int(f[0]), parse_int(f[1]), parse_double(f[2]), parse_int(f[3])});
    }
    return out;
}

void write_training_csv(const RunRecord& run, std::ostream& out) {
    out << kTrainingHeader << '\n';
    for (const auto& t : run.training) {
        out << t.timestep << ',' << format_number(t.loss) << ',' << format_number(t.tau) << ',';
        if (t.churn) out << format_number(*t.churn);
        out << '\n';
    }
}

std::vector<TrainingLog> read_training_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kTrainingHeader) throw std::runtime_error("training CSV: bad header");
    std::vector<TrainingLog> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 4) throw std::runtime_error("training CSV: expected 4 fields in '" + line + "'");
        TrainingLog t{parse_int(f[0]), parse_double(f[1]), parse_double(f[2]), std::nullopt};
        if (!f[3].empty()) t.churn = parse_double(f[3]);
        out.push_back(t);
    }
    return out;
}

json run_summary(const RunRecord& run) {
    json j{{"format_version", kFormatVersion},
           {"env", run.env},
           {"sticky", run.sticky},
           {"algorithm", to_string(run.algorithm())},
           {"seed", run.seed()},
           {"config_hash", config_hash(RunConfig{run.env, run.sticky, run.config})},
           {"config", to_json(run.config)},
           {"episodes", run.episodes.size()},
           {"training_events", run.training.size()},
           {"duration_seconds", run.duration_seconds},
           {"episodes_file", "episodes.csv"},
           {"training_file", "training.csv"}};
    j["final_decile_mean"] = run.episodes.empty() ? json(nullptr) : json(final_decile_mean(run));
    j["diverged_at"] = run.diverged_at ? json(*run.diverged_at) : json(nullptr);
    j["diverged_message"] = run.diverged_message;
    return j;
}

fs::path run_directory(const fs::path& root, const RunConfig& config, std::uint64_t seed) {
    return root / "runs" /
           (config.env + "_" + std::string(to_string(config.agent.algorithm)) + "_seed" + std::to_string(seed) + "_" +
            config_hash(config));
}

void write_run(const RunRecord& run, const fs::path& dir) {
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "episodes.csv", std::ios::binary);
        write_episodes_csv(run, out);
        if (!out) throw std::runtime_error("failed to write " + (dir / "episodes.csv").string());
    }
    {
        std::ofstream out(dir / "training.csv", std::ios::binary);
        write_training_csv(run, out);
        if (!out) throw std::runtime_error("failed to write " + (dir / "training.csv").string());
    }
    // summary last: its presence marks a complete run
    std::ofstream out(dir / "summary.json", std::ios::binary);
    out << run_summary(run).dump(2) << '\n';
    if (!out) throw std::runtime_error("failed to write " + (dir / "summary.json").string());
}

RunRecord read_run(const fs::path& dir) {
    std::ifstream summary_in(dir / "summary.json");
    if (!summary_in) throw std::runtime_error("missing run summary in " + dir.string());
    const json summary = json::parse(summary_in);
    if (summary.at("format_version").get<int>() != kFormatVersion)
        throw std::runtime_error("unsupported run format in " + dir.string());

    RunRecord run;
    run.env = summary.at("env").get<std::string>();
    run.sticky = summary.at("sticky").get<double>();
    run.config = agent_config_from_json(summary.at("config"));
    run.duration_seconds = summary.at("duration_seconds").get<double>();
    if (!summary.at("diverged_at").is_null()) run.diverged_at = summary.at("diverged_at").get<std::int64_t>();
    run.diverged_message = summary.value("diverged_message", "");

    std::ifstream episodes_in(dir / summary.at("episodes_file").get<std::string>(), std::ios::binary);
    if (!episodes_in) throw std::runtime_error("missing episodes file in " + dir.string());
    run.episodes = read_episodes_csv(episodes_in);
    std::ifstream training_in(dir / summary.at("training_file").get<std::string>(), std::ios::binary);
    if (training_in) run.training = read_training_csv(training_in);
    return run;
}

}  // namespace esc51
