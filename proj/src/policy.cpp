#include "esc51/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace esc51 {

void TemperatureSchedule::validate() const {
    if (!(tau_floor > 0.0)) throw std::invalid_argument("tau_floor must be positive");
    if (!(tau_start >= tau_floor)) throw std::invalid_argument("tau_start must be >= tau_floor");
    if (!(decay_fraction > 0.0 && decay_fraction <= 1.0))
        throw std::invalid_argument("decay_fraction must lie in (0, 1]");
    if (total_timesteps < 1) throw std::invalid_argument("total_timesteps must be >= 1");
}

double tau_at(const TemperatureSchedule& schedule, std::int64_t t) {
    if (t < 0) throw std::invalid_argument("timestep must be nonnegative");
    const double horizon = schedule.decay_fraction * static_cast<double>(schedule.total_timesteps);
    const double linear = schedule.tau_start * (1.0 - static_cast<double>(t) / horizon);
    return std::max(linear, schedule.tau_floor);
}

Eigen::VectorXd softmax_probs(const Eigen::Ref<const Eigen::VectorXd>& q_values, double tau) {
    if (q_values.size() == 0) throw std::invalid_argument("softmax over empty action set");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("temperature must be positive");
    if (!q_values.allFinite()) throw std::invalid_argument("softmax input is not finite");
    const double top = q_values.maxCoeff();
    Eigen::VectorXd e = ((q_values.array() - top) / tau).exp();
    return e / e.sum();
}

int sample_action(const Eigen::Ref<const Eigen::VectorXd>& probs, Rng& rng) {
    if (probs.size() == 0) throw std::invalid_argument("cannot sample from an empty distribution");
    if (!probs.allFinite() || (probs.array() < 0.0).any() || std::abs(probs.sum() - 1.0) > 1e-9)
        throw std::invalid_argument("action probabilities are not a distribution");
    const double u = uniform01(rng);
    double cumulative = 0.0;
    int last_positive = 0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        cumulative += probs[i];
        last_positive = static_cast<int>(i);
        if (u < cumulative) return last_positive;
    }
    // u landed in the rounding gap above the final cumulative sum
    return last_positive;
}

int greedy_action(const Eigen::Ref<const Eigen::VectorXd>& q_values) {
    if (q_values.size() == 0) throw std::invalid_argument("argmax over empty action set");
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < q_values.size(); ++i)
        if (q_values[i] > q_values[best]) best = i;
    return static_cast<int>(best);
}

}  // namespace esc51
