#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "esc51/rng.hpp"

namespace esc51 {

struct StepResult {
    Eigen::VectorXd obs;
    double reward = 0.0;
    bool terminated = false;  // absorbing state, stop bootstrapping
    bool truncated = false;   // step cap hit, the state itself is not terminal
};

struct EnvSpec {
    std::string name;
    int observation_dim = 0;
    int action_count = 0;
    int max_episode_steps = 0;
};

/// Episodic environment. After terminated or truncated the caller must reset().
class Environment {
public:
    virtual ~Environment() = default;
    virtual const EnvSpec& spec() const = 0;
    virtual Eigen::VectorXd reset() = 0;
    virtual StepResult step(int action) = 0;
};

// ---------------------------------------------------------------------------
// Cart-pole: state (x, x_dot, theta, theta_dot), actions {push left, push right}.

namespace cartpole {
inline constexpr double kGravity = 9.8;
inline constexpr double kCartMass = 1.0;
inline constexpr double kPoleMass = 0.1;
inline constexpr double kHalfLength = 0.5;
inline constexpr double kForce = 10.0;
inline constexpr double kDt = 0.02;
inline constexpr double kAngleLimit = 12.0 * 2.0 * 3.14159265358979323846 / 360.0;
inline constexpr double kPositionLimit = 2.4;
inline constexpr int kMaxSteps = 500;
}  // namespace cartpole

using CartPoleState = Eigen::Vector4d;

CartPoleState cartpole_reset(Rng& rng);
/// One Euler step of the dynamics; never truncates.
StepResult cartpole_step(CartPoleState& state, int action);

class CartPole final : public Environment {
public:
    explicit CartPole(std::uint64_t seed);
    const EnvSpec& spec() const override { return spec_; }
    Eigen::VectorXd reset() override;
    StepResult step(int action) override;

    const CartPoleState& state() const { return state_; }
    void set_state(const CartPoleState& state) { state_ = state; }

private:
    EnvSpec spec_;
    Rng rng_;
    CartPoleState state_ = CartPoleState::Zero();
    int elapsed_ = 0;
};

// ---------------------------------------------------------------------------
// Acrobot: two-link pendulum actuated at the elbow. State (theta1, theta2,
// dtheta1, dtheta2); observation (cos t1, sin t1, cos t2, sin t2, dt1, dt2).

namespace acrobot {
inline constexpr double kDt = 0.2;
inline constexpr double kLinkLength1 = 1.0;
inline constexpr double kLinkMass1 = 1.0;
inline constexpr double kLinkMass2 = 1.0;
inline constexpr double kLinkCom1 = 0.5;
inline constexpr double kLinkCom2 = 0.5;
inline constexpr double kLinkMoi = 1.0;
inline constexpr double kGravity = 9.8;
inline constexpr double kMaxVel1 = 4.0 * 3.14159265358979323846;
inline constexpr double kMaxVel2 = 9.0 * 3.14159265358979323846;
inline constexpr int kMaxSteps = 500;
}  // namespace acrobot

using AcrobotState = Eigen::Vector4d;

AcrobotState acrobot_reset(Rng& rng);
Eigen::VectorXd acrobot_observation(const AcrobotState& state);
/// Height test: -cos(theta1) - cos(theta1 + theta2) > 1.
bool acrobot_success(const AcrobotState& state);
/// One RK4 step of length kDt under torque action - 1; never truncates.
StepResult acrobot_step(AcrobotState& state, int action);

class Acrobot final : public Environment {
public:
    explicit Acrobot(std::uint64_t seed);
    const EnvSpec& spec() const override { return spec_; }
    Eigen::VectorXd reset() override;
    StepResult step(int action) override;

    const AcrobotState& state() const { return state_; }
    void set_state(const AcrobotState& state) { state_ = state; }

private:
    EnvSpec spec_;
    Rng rng_;
    AcrobotState state_ = AcrobotState::Zero();
    int elapsed_ = 0;
};

// ---------------------------------------------------------------------------
// One-state, one-step task whose two actions have equal mean return and
// different variance: action 0 pays 1, action 1 pays 0 or 2 with equal odds.

StepResult equal_mean_mdp_step(int action, Rng& rng);

class EqualMeanMdp final : public Environment {
public:
    explicit EqualMeanMdp(std::uint64_t seed);
    const EnvSpec& spec() const override { return spec_; }
    Eigen::VectorXd reset() override;
    StepResult step(int action) override;

    static Eigen::VectorXd start_observation() { return Eigen::VectorXd::Ones(1); }

private:
    EnvSpec spec_;
    Rng rng_;
};

// ---------------------------------------------------------------------------

/// With probability repeat_prob the previous executed action replaces the
/// requested one. The first step after reset always uses the request.
class StickyActions final : public Environment {
public:
    StickyActions(std::unique_ptr<Environment> inner, double repeat_prob, std::uint64_t seed);
    const EnvSpec& spec() const override { return inner_->spec(); }
    Eigen::VectorXd reset() override;
    StepResult step(int action) override;

    bool last_step_repeated() const { return repeated_; }

private:
    std::unique_ptr<Environment> inner_;
    double repeat_prob_;
    Rng rng_;
    int previous_ = -1;
    bool repeated_ = false;
};

/// "cartpole", "acrobot" or "equal-mean"; wrapped in StickyActions when sticky > 0.
std::unique_ptr<Environment> make_environment(std::string_view name, std::uint64_t seed, double sticky = 0.0);

}  // namespace esc51
