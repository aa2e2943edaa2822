#include "esc51/agents.hpp"

#include <chrono>
#include <cmath>
#include <string>

namespace esc51 {

std::string_view to_string(Algorithm algorithm) {
    return algorithm == Algorithm::ql_c51 ? "ql-c51" : "es-c51";
}

Algorithm parse_algorithm(std::string_view text) {
    if (text == "ql-c51" || text == "ql_c51") return Algorithm::ql_c51;
    if (text == "es-c51" || text == "es_c51") return Algorithm::es_c51;
    throw std::invalid_argument("unknown algorithm '" + std::string(text) + "' (expected ql-c51 or es-c51)");
}

void AgentConfig::validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (train_frequency < 1 || target_update_interval < 1) throw std::invalid_argument("intervals must be >= 1");
    if (total_timesteps < 1) throw std::invalid_argument("total_timesteps must be >= 1");
    if (learning_starts < 0) throw std::invalid_argument("learning_starts must be >= 0");
    if (buffer_capacity < 1) throw std::invalid_argument("buffer capacity must be >= 1");
    if (churn_probe_size < 1) throw std::invalid_argument("churn probe size must be >= 1");
    (void)support();
    schedule().validate();
}

// ---------------------------------------------------------------------------
// Targets

CategoricalDistribution greedy_backup(std::span<const CategoricalDistribution> next_pmfs, const Support& support,
                                      double reward, double gamma, bool done) {
    const int best = greedy_action(q_values(next_pmfs, support));
    return shift_and_project(next_pmfs[static_cast<std::size_t>(best)], support, reward, gamma, done);
}

CategoricalDistribution expected_next_distribution(std::span<const CategoricalDistribution> next_pmfs,
                                                   const Support& support, double tau) {
    const Eigen::VectorXd weights = softmax_probs(q_values(next_pmfs, support), tau);
    return mix(next_pmfs, std::span<const double>(weights.data(), static_cast<std::size_t>(weights.size())));
}

CategoricalDistribution expected_sarsa_backup(std::span<const CategoricalDistribution> next_pmfs,
                                              const Support& support, double reward, double gamma, bool done,
                                              double tau) {
    return shift_and_project(expected_next_distribution(next_pmfs, support, tau), support, reward, gamma, done);
}

template <typename Scalar>
std::vector<CategoricalDistribution> split_actions(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& predicted,
                                                   Eigen::Index col, int n_actions, int n_atoms) {
    std::vector<CategoricalDistribution> out;
    out.reserve(static_cast<std::size_t>(n_actions));
    for (int a = 0; a < n_actions; ++a)
        out.push_back(CategoricalDistribution::normalized(
            predicted.col(col).segment(static_cast<Eigen::Index>(a) * n_atoms, n_atoms).template cast<double>()));
    return out;
}

namespace {

template <typename Scalar, typename Backup>
std::vector<CategoricalDistribution> build_targets(std::span<const Transition> batch,
                                                   const ValueNetwork<Scalar>& target_net, Backup&& backup) {
    if (batch.empty()) throw std::invalid_argument("cannot build targets for an empty batch");
    typename ValueNetwork<Scalar>::Matrix next_obs(target_net.observation_dim(), static_cast<Eigen::Index>(batch.size()));
    for (std::size_t j = 0; j < batch.size(); ++j)
        next_obs.col(static_cast<Eigen::Index>(j)) = batch[j].next_obs.template cast<Scalar>();
    const auto predicted = target_net.predict(next_obs);

    std::vector<CategoricalDistribution> targets;
    targets.reserve(batch.size());
    for (std::size_t j = 0; j < batch.size(); ++j) {
        const auto pmfs =
            split_actions<Scalar>(predicted, static_cast<Eigen::Index>(j), target_net.n_actions(), target_net.n_atoms());
        targets.push_back(backup(pmfs, batch[j]));
    }
    return targets;
}

}  // namespace

template <typename Scalar>
std::vector<CategoricalDistribution> build_target_ql(std::span<const Transition> batch,
                                                     const ValueNetwork<Scalar>& target_net, const Support& support,
                                                     double gamma) {
    return build_targets(batch, target_net, [&](const auto& pmfs, const Transition& tr) {
        return greedy_backup(pmfs, support, tr.reward, gamma, tr.done);
    });
}

template <typename Scalar>
std::vector<CategoricalDistribution> build_target_es(std::span<const Transition> batch,
                                                     const ValueNetwork<Scalar>& target_net, const Support& support,
                                                     double gamma, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
    return build_targets(batch, target_net, [&](const auto& pmfs, const Transition& tr) {
        return expected_sarsa_backup(pmfs, support, tr.reward, gamma, tr.done, tau);
    });
}

// ---------------------------------------------------------------------------
// Churn

template <typename Scalar>
ChurnProbe<Scalar>::ChurnProbe(std::vector<Eigen::VectorXd> states, const ValueNetwork<Scalar>& net,
                               const Support& support)
    : support_(support) {
    if (states.empty()) throw std::invalid_argument("churn probe needs at least one state");
    states_.resize(net.observation_dim(), static_cast<Eigen::Index>(states.size()));
    for (std::size_t i = 0; i < states.size(); ++i) states_.col(static_cast<Eigen::Index>(i)) = states[i].template cast<Scalar>();
    previous_greedy_ = greedy(net);
}

template <typename Scalar>
std::vector<int> ChurnProbe<Scalar>::greedy(const ValueNetwork<Scalar>& net) const {
    const Eigen::MatrixXd q = esc51::q_values<Scalar>(net.predict(states_), support_, net.n_actions());
    std::vector<int> out(static_cast<std::size_t>(q.cols()));
    for (Eigen::Index j = 0; j < q.cols(); ++j) out[static_cast<std::size_t>(j)] = greedy_action(q.col(j));
    return out;
}

template <typename Scalar>
double ChurnProbe<Scalar>::churn_rate(const ValueNetwork<Scalar>& net) {
    auto current = greedy(net);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < current.size(); ++i) changed += current[i] != previous_greedy_[i];
    previous_greedy_ = std::move(current);
    return static_cast<double>(changed) / static_cast<double>(previous_greedy_.size());
}

// ---------------------------------------------------------------------------
// Agent

namespace {

enum RngStream : std::uint32_t { kInitStream = 1, kActionStream = 2, kReplayStream = 3, kProbeStream = 4 };

NetworkShape network_shape(const AgentConfig& config, const EnvSpec& env) {
    return NetworkShape{env.observation_dim, config.hidden, env.action_count, config.n_atoms};
}

Agent::Network initial_network(const AgentConfig& config, const EnvSpec& env) {
    config.validate();
    Rng rng = derive_rng(config.seed, kInitStream);
    return Agent::Network(network_shape(config, env), rng);
}

}  // namespace

Agent::Agent(AgentConfig config, const EnvSpec& env)
    : config_(std::move(config)),
      env_spec_(env),
      support_(config_.support()),
      schedule_(config_.schedule()),
      online_(initial_network(config_, env)),
      target_(online_),
      optimizer_(online_, config_.adam),
      buffer_(config_.buffer_capacity) {}

Eigen::VectorXd Agent::q_values(const Eigen::VectorXd& obs) const {
    const auto predicted = online_.predict(obs.cast<Scalar>());
    return esc51::q_values<Scalar>(predicted, support_, online_.n_actions()).col(0);
}

int Agent::act(const Eigen::VectorXd& obs, std::int64_t t, Rng& rng) const {
    return sample_action(softmax_probs(q_values(obs), tau_at(schedule_, t)), rng);
}

std::vector<CategoricalDistribution> Agent::build_targets(std::span<const Transition> batch, double tau) const {
    if (config_.algorithm == Algorithm::ql_c51) return build_target_ql(batch, target_, support_, config_.gamma);
    return build_target_es(batch, target_, support_, config_.gamma, tau);
}

double Agent::train_step(std::int64_t t, Rng& rng) {
    const auto batch = buffer_.sample_uniform(static_cast<std::size_t>(config_.batch_size), rng);
    const auto targets = build_targets(batch, tau_at(schedule_, t));

    const auto cols = static_cast<Eigen::Index>(batch.size());
    Network::Matrix obs(online_.observation_dim(), cols);
    Network::Matrix target_matrix(support_.size(), cols);
    std::vector<int> actions(batch.size());
    for (Eigen::Index j = 0; j < cols; ++j) {
        const auto& tr = batch[static_cast<std::size_t>(j)];
        obs.col(j) = tr.obs.cast<Scalar>();
        actions[static_cast<std::size_t>(j)] = tr.action;
        target_matrix.col(j) = targets[static_cast<std::size_t>(j)].probs().cast<Scalar>();
    }
    const auto result = loss_and_gradients(online_, obs, actions, target_matrix);
    apply_update(online_, result.gradients, optimizer_);
    return result.loss;
}

RunRecord Agent::run(Environment& env, const TrainHooks& hooks) {
    const auto started = std::chrono::steady_clock::now();
    RunRecord record;
    record.env = env.spec().name;
    record.config = config_;

    Rng action_rng = derive_rng(config_.seed, kActionStream);
    Rng replay_rng = derive_rng(config_.seed, kReplayStream);
    std::optional<ChurnProbe<Scalar>> probe;

    Eigen::VectorXd obs = env.reset();
    double episode_return = 0.0;
    std::int64_t episode_length = 0;

    for (std::int64_t t = 0; t < config_.total_timesteps; ++t) {
        const int action = act(obs, t, action_rng);
        StepResult step = env.step(action);
        episode_return += step.reward;
        ++episode_length;
        buffer_.push(Transition{std::move(obs), action, step.reward, step.obs, step.terminated});
        obs = std::move(step.obs);

        if (step.terminated || step.truncated) {
            EpisodeLog log{t + 1, static_cast<std::int64_t>(record.episodes.size()) + 1, episode_return, episode_length};
            record.episodes.push_back(log);
            if (hooks.on_episode) hooks.on_episode(log);
            obs = env.reset();
            episode_return = 0.0;
            episode_length = 0;
        }

        if (t <= config_.learning_starts) continue;

        if (t % config_.train_frequency == 0) {
            if (config_.track_churn && !probe) {
                Rng probe_rng = derive_rng(config_.seed, kProbeStream);
                std::vector<Eigen::VectorXd> states;
                for (std::size_t i : buffer_.sample_indices(static_cast<std::size_t>(config_.churn_probe_size), probe_rng))
                    states.push_back(buffer_[i].obs);
                probe.emplace(std::move(states), online_, support_);
            }
            TrainingLog log{t, 0.0, tau_at(schedule_, t), std::nullopt};
            try {
                log.loss = train_step(t, replay_rng);
            } catch (const NonFiniteError& e) {
                record.duration_seconds =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
                record.diverged_at = t;
                record.diverged_message = e.what();
                throw DivergedRun(t, "run diverged at timestep " + std::to_string(t) + ": " + e.what(), record);
            }
            if (probe) log.churn = probe->churn_rate(online_);
            record.training.push_back(log);
            if (hooks.on_train_step) hooks.on_train_step(log);
        }
        if (t % config_.target_update_interval == 0) sync_target();
    }

    record.duration_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return record;
}

RunRecord train_loop(const AgentConfig& config, Environment& env, const TrainHooks& hooks) {
    Agent agent(config, env.spec());
    return agent.run(env, hooks);
}

template std::vector<CategoricalDistribution> split_actions<float>(const Eigen::MatrixXf&, Eigen::Index, int, int);
template std::vector<CategoricalDistribution> split_actions<double>(const Eigen::MatrixXd&, Eigen::Index, int, int);
template std::vector<CategoricalDistribution> build_target_ql<float>(std::span<const Transition>,
                                                                     const ValueNetwork<float>&, const Support&, double);
template std::vector<CategoricalDistribution> build_target_ql<double>(std::span<const Transition>,
                                                                      const ValueNetwork<double>&, const Support&,
                                                                      double);
template std::vector<CategoricalDistribution> build_target_es<float>(std::span<const Transition>,
                                                                     const ValueNetwork<float>&, const Support&, double,
                                                                     double);
template std::vector<CategoricalDistribution> build_target_es<double>(std::span<const Transition>,
                                                                      const ValueNetwork<double>&, const Support&,
                                                                      double, double);
template class ChurnProbe<float>;
template class ChurnProbe<double>;

}  // namespace esc51
