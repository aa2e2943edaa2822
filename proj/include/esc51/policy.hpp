#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "esc51/rng.hpp"

namespace esc51 {

/// Linear temperature decay from tau_start to tau_floor, reached after
/// decay_fraction * total_timesteps steps.
struct TemperatureSchedule {
    double tau_start = 1.0;
    double tau_floor = 0.01;
    double decay_fraction = 0.75;
    std::int64_t total_timesteps = 500'000;

    void validate() const;
};

double tau_at(const TemperatureSchedule& schedule, std::int64_t t);

/// Boltzmann probabilities exp(q_a / tau) / sum_b exp(q_b / tau), max-shifted.
Eigen::VectorXd softmax_probs(const Eigen::Ref<const Eigen::VectorXd>& q_values, double tau);

/// Inverse-CDF draw; consumes exactly one value from rng.
int sample_action(const Eigen::Ref<const Eigen::VectorXd>& probs, Rng& rng);

/// Index of the largest value, lowest index on ties.
int greedy_action(const Eigen::Ref<const Eigen::VectorXd>& q_values);

}  // namespace esc51
