#include "esc51/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace esc51 {

namespace {

void check_action(int action, int count, const std::string& env) {
    if (action < 0 || action >= count)
        throw std::invalid_argument(env + ": invalid action " + std::to_string(action));
}

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

}  // namespace

// ---------------------------------------------------------------------------
// CartPole

CartPoleState cartpole_reset(Rng& rng) {
    CartPoleState s;
    for (int i = 0; i < 4; ++i) s[i] = uniform(rng, -0.05, 0.05);
    return s;
}

StepResult cartpole_step(CartPoleState& state, int action) {
    using namespace cartpole;
    check_action(action, 2, "cartpole");
    constexpr double total_mass = kCartMass + kPoleMass;
    constexpr double pole_mass_length = kPoleMass * kHalfLength;

    const double x = state[0], x_dot = state[1], theta = state[2], theta_dot = state[3];
    const double force = action == 1 ? kForce : -kForce;
    const double cos_t = std::cos(theta);
    const double sin_t = std::sin(theta);
    const double temp = (force + pole_mass_length * theta_dot * theta_dot * sin_t) / total_mass;
    const double theta_acc =
        (kGravity * sin_t - cos_t * temp) / (kHalfLength * (4.0 / 3.0 - kPoleMass * cos_t * cos_t / total_mass));
    const double x_acc = temp - pole_mass_length * theta_acc * cos_t / total_mass;

    // explicit Euler: positions advance with the old velocities
    state[0] = x + kDt * x_dot;
    state[1] = x_dot + kDt * x_acc;
    state[2] = theta + kDt * theta_dot;
    state[3] = theta_dot + kDt * theta_acc;

    // strict inequalities: exactly at a limit still counts as upright
    const bool failed = state[0] < -kPositionLimit || state[0] > kPositionLimit || state[2] < -kAngleLimit ||
                        state[2] > kAngleLimit;
    return StepResult{state, 1.0, failed, false};
}

CartPole::CartPole(std::uint64_t seed)
    : spec_{"cartpole", 4, 2, cartpole::kMaxSteps}, rng_(derive_rng(seed, 101)) {}

Eigen::VectorXd CartPole::reset() {
    state_ = cartpole_reset(rng_);
    elapsed_ = 0;
    return state_;
}

StepResult CartPole::step(int action) {
    StepResult r = cartpole_step(state_, action);
    ++elapsed_;
    r.truncated = !r.terminated && elapsed_ >= spec_.max_episode_steps;
    return r;
}

// ---------------------------------------------------------------------------
// Acrobot

namespace {

using AcrobotDeriv = Eigen::Vector4d;

AcrobotDeriv acrobot_derivatives(const AcrobotState& s, double torque) {
    using namespace acrobot;
    constexpr double m1 = kLinkMass1, m2 = kLinkMass2, l1 = kLinkLength1;
    constexpr double lc1 = kLinkCom1, lc2 = kLinkCom2, i1 = kLinkMoi, i2 = kLinkMoi, g = kGravity;
    constexpr double half_pi = std::numbers::pi / 2.0;
    const double theta1 = s[0], theta2 = s[1], dtheta1 = s[2], dtheta2 = s[3];

    const double d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * std::cos(theta2)) + i1 + i2;
    const double d2 = m2 * (lc2 * lc2 + l1 * lc2 * std::cos(theta2)) + i2;
    const double phi2 = m2 * lc2 * g * std::cos(theta1 + theta2 - half_pi);
    const double phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * std::sin(theta2) -
                        2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * std::sin(theta2) +
                        (m1 * lc1 + m2 * l1) * g * std::cos(theta1 - half_pi) + phi2;
    const double ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * std::sin(theta2) - phi2) /
                            (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    const double ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    return {dtheta1, dtheta2, ddtheta1, ddtheta2};
}

double wrap_angle(double x) {
    constexpr double pi = std::numbers::pi;
    while (x > pi) x -= 2.0 * pi;
    while (x < -pi) x += 2.0 * pi;
    return x;
}

}  // namespace

AcrobotState acrobot_reset(Rng& rng) {
    AcrobotState s;
    for (int i = 0; i < 4; ++i) s[i] = uniform(rng, -0.1, 0.1);
    return s;
}

Eigen::VectorXd acrobot_observation(const AcrobotState& s) {
    Eigen::VectorXd obs(6);
    obs << std::cos(s[0]), std::sin(s[0]), std::cos(s[1]), std::sin(s[1]), s[2], s[3];
    return obs;
}

bool acrobot_success(const AcrobotState& s) { return -std::cos(s[0]) - std::cos(s[1] + s[0]) > 1.0; }

StepResult acrobot_step(AcrobotState& state, int action) {
    using namespace acrobot;
    check_action(action, 3, "acrobot");
    const double torque = static_cast<double>(action) - 1.0;

    const double h = kDt;
    const AcrobotDeriv k1 = acrobot_derivatives(state, torque);
    const AcrobotDeriv k2 = acrobot_derivatives(state + 0.5 * h * k1, torque);
    const AcrobotDeriv k3 = acrobot_derivatives(state + 0.5 * h * k2, torque);
    const AcrobotDeriv k4 = acrobot_derivatives(state + h * k3, torque);
    AcrobotState next = state + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

    next[0] = wrap_angle(next[0]);
    next[1] = wrap_angle(next[1]);
    next[2] = std::clamp(next[2], -kMaxVel1, kMaxVel1);
    next[3] = std::clamp(next[3], -kMaxVel2, kMaxVel2);
    state = next;

    const bool success = acrobot_success(state);
    // the step that reaches the goal costs nothing
    return StepResult{acrobot_observation(state), success ? 0.0 : -1.0, success, false};
}

Acrobot::Acrobot(std::uint64_t seed) : spec_{"acrobot", 6, 3, acrobot::kMaxSteps}, rng_(derive_rng(seed, 102)) {}

Eigen::VectorXd Acrobot::reset() {
    state_ = acrobot_reset(rng_);
    elapsed_ = 0;
    return acrobot_observation(state_);
}

StepResult Acrobot::step(int action) {
    StepResult r = acrobot_step(state_, action);
    ++elapsed_;
    r.truncated = !r.terminated && elapsed_ >= spec_.max_episode_steps;
    return r;
}

// ---------------------------------------------------------------------------
// Equal-mean MDP

StepResult equal_mean_mdp_step(int action, Rng& rng) {
    check_action(action, 2, "equal-mean");
    double reward = 1.0;
    if (action == 1) reward = uniform01(rng) < 0.5 ? 0.0 : 2.0;
    return StepResult{EqualMeanMdp::start_observation(), reward, true, false};
}

EqualMeanMdp::EqualMeanMdp(std::uint64_t seed) : spec_{"equal-mean", 1, 2, 1}, rng_(derive_rng(seed, 103)) {}

Eigen::VectorXd EqualMeanMdp::reset() { return start_observation(); }

StepResult EqualMeanMdp::step(int action) { return equal_mean_mdp_step(action, rng_); }

// ---------------------------------------------------------------------------
// Sticky actions

StickyActions::StickyActions(std::unique_ptr<Environment> inner, double repeat_prob, std::uint64_t seed)
    : inner_(std::move(inner)), repeat_prob_(repeat_prob), rng_(derive_rng(seed, 104)) {
    if (!inner_) throw std::invalid_argument("sticky wrapper needs an environment");
    if (!(repeat_prob >= 0.0 && repeat_prob < 1.0)) throw std::invalid_argument("repeat probability must lie in [0, 1)");
}

Eigen::VectorXd StickyActions::reset() {
    previous_ = -1;
    repeated_ = false;
    return inner_->reset();
}

StepResult StickyActions::step(int action) {
    repeated_ = false;
    if (previous_ >= 0 && uniform01(rng_) < repeat_prob_) {
        repeated_ = true;
        action = previous_;
    }
    previous_ = action;
    return inner_->step(action);
}

std::unique_ptr<Environment> make_environment(std::string_view name, std::uint64_t seed, double sticky) {
    std::unique_ptr<Environment> env;
    if (name == "cartpole")
        env = std::make_unique<CartPole>(seed);
    else if (name == "acrobot")
        env = std::make_unique<Acrobot>(seed);
    else if (name == "equal-mean")
        env = std::make_unique<EqualMeanMdp>(seed);
    else
        throw std::invalid_argument("unknown environment '" + std::string(name) + "'");
    if (sticky > 0.0) env = std::make_unique<StickyActions>(std::move(env), sticky, seed);
    return env;
}

}  // namespace esc51
