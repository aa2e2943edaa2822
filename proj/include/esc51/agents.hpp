#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "esc51/categorical.hpp"
#include "esc51/envs.hpp"
#include "esc51/policy.hpp"
#include "esc51/replay_buffer.hpp"
#include "esc51/rng.hpp"
#include "esc51/run_record.hpp"
#include "esc51/value_network.hpp"

namespace esc51 {

// ---------------------------------------------------------------------------
// Target construction

/// Greedy backup: project the next-state distribution of argmax_a E[Z(s', a)].
CategoricalDistribution greedy_backup(std::span<const CategoricalDistribution> next_pmfs, const Support& support,
                                      double reward, double gamma, bool done);

/// Softmax mixture sum_a pi_tau(a | s') Z(s', a) of the next-state distributions.
CategoricalDistribution expected_next_distribution(std::span<const CategoricalDistribution> next_pmfs,
                                                   const Support& support, double tau);

/// Expected-Sarsa backup: project the softmax mixture of next-state distributions.
CategoricalDistribution expected_sarsa_backup(std::span<const CategoricalDistribution> next_pmfs,
                                              const Support& support, double reward, double gamma, bool done,
                                              double tau);

/// Per-action distributions of predict() column `col`.
template <typename Scalar>
std::vector<CategoricalDistribution> split_actions(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& predicted,
                                                   Eigen::Index col, int n_actions, int n_atoms);

template <typename Scalar>
std::vector<CategoricalDistribution> build_target_ql(std::span<const Transition> batch,
                                                     const ValueNetwork<Scalar>& target_net, const Support& support,
                                                     double gamma);

template <typename Scalar>
std::vector<CategoricalDistribution> build_target_es(std::span<const Transition> batch,
                                                     const ValueNetwork<Scalar>& target_net, const Support& support,
                                                     double gamma, double tau);

// ---------------------------------------------------------------------------
// Policy churn

/// Fraction of a fixed probe set whose greedy action changes between calls.
template <typename Scalar>
class ChurnProbe {
public:
    ChurnProbe(std::vector<Eigen::VectorXd> states, const ValueNetwork<Scalar>& net, const Support& support);

    std::size_t size() const { return previous_greedy_.size(); }
    const std::vector<int>& previous_greedy() const { return previous_greedy_; }

    /// Compares against the stored greedy actions, then stores the new ones.
    double churn_rate(const ValueNetwork<Scalar>& net);

private:
    std::vector<int> greedy(const ValueNetwork<Scalar>& net) const;

    typename ValueNetwork<Scalar>::Matrix states_;
    Support support_;
    std::vector<int> previous_greedy_;
};

template <typename Scalar>
double churn_rate(ChurnProbe<Scalar>& probe, const ValueNetwork<Scalar>& net) {
    return probe.churn_rate(net);
}

// ---------------------------------------------------------------------------
// Agent

class DivergedRun : public std::runtime_error {
public:
    DivergedRun(std::int64_t timestep, const std::string& what, RunRecord partial)
        : std::runtime_error(what), timestep_(timestep), partial_(std::move(partial)) {}
    std::int64_t timestep() const { return timestep_; }
    const RunRecord& partial() const { return partial_; }

private:
    std::int64_t timestep_;
    RunRecord partial_;
};

struct TrainHooks {
    std::function<void(const EpisodeLog&)> on_episode;
    std::function<void(const TrainingLog&)> on_train_step;
};

/// One C51 learner. QL-C51 and ES-C51 share everything except how the
/// training target is built.
class Agent {
public:
    using Scalar = float;
    using Network = ValueNetwork<Scalar>;

    Agent(AgentConfig config, const EnvSpec& env);

    const AgentConfig& config() const { return config_; }
    const Support& support() const { return support_; }
    const Network& online() const { return online_; }
    Network& online() { return online_; }
    const Network& target() const { return target_; }
    const ReplayBuffer& buffer() const { return buffer_; }
    ReplayBuffer& buffer() { return buffer_; }
    const OptimizerState<Scalar>& optimizer() const { return optimizer_; }
    std::int64_t gradient_steps() const { return optimizer_.step; }

    /// Online-network Q-values for one observation.
    Eigen::VectorXd q_values(const Eigen::VectorXd& obs) const;
    /// Samples from the softmax over online Q-values at temperature tau_at(t).
    int act(const Eigen::VectorXd& obs, std::int64_t t, Rng& rng) const;

    std::vector<CategoricalDistribution> build_targets(std::span<const Transition> batch, double tau) const;

    /// Samples a minibatch and takes one optimizer step. Returns the loss.
    double train_step(std::int64_t t, Rng& rng);
    void sync_target() { esc51::sync_target(online_, target_); }

    /// Runs the full interaction/training loop on env, which is reset first.
    /// Throws DivergedRun on a non-finite loss.
    RunRecord run(Environment& env, const TrainHooks& hooks = {});

private:
    AgentConfig config_;
    EnvSpec env_spec_;
    Support support_;
    TemperatureSchedule schedule_;
    Network online_;
    Network target_;
    OptimizerState<Scalar> optimizer_;
    ReplayBuffer buffer_;
};

/// Agent(config, env.spec()).run(env, hooks)
RunRecord train_loop(const AgentConfig& config, Environment& env, const TrainHooks& hooks = {});

}  // namespace esc51
