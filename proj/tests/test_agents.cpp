#include <doctest.h>

#include <cmath>

#include "esc51/agents.hpp"

using namespace esc51;

namespace {

using Dist = CategoricalDistribution;

Dist pmf(std::initializer_list<double> values) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (double x : values) v[i++] = x;
    return Dist(v);
}

double max_gap(const Dist& a, const Dist& b) { return (a.probs() - b.probs()).cwiseAbs().maxCoeff(); }

NetworkShape shape_for(int obs_dim, int actions, int atoms) {
    return NetworkShape{.observation_dim = obs_dim, .hidden = {8, 8}, .n_actions = actions, .n_atoms = atoms};
}

Transition random_transition(int obs_dim, int actions, Rng& rng) {
    Transition t;
    t.obs = Eigen::VectorXd(obs_dim);
    t.next_obs = Eigen::VectorXd(obs_dim);
    for (int i = 0; i < obs_dim; ++i) {
        t.obs[i] = 2.0 * uniform01(rng) - 1.0;
        t.next_obs[i] = 2.0 * uniform01(rng) - 1.0;
    }
    t.action = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(actions)));
    t.reward = 4.0 * uniform01(rng) - 2.0;
    t.done = uniform01(rng) < 0.2;
    return t;
}

// Observation is a running counter, the single action pays a seeded random
// reward, and episodes end at random.
class OneArm final : public Environment {
public:
    explicit OneArm(std::uint64_t seed) : rng_(seed) {}
    const EnvSpec& spec() const override { return spec_; }
    Eigen::VectorXd reset() override {
        count_ = 0;
        return observation();
    }
    StepResult step(int action) override {
        if (action != 0) throw std::invalid_argument("one-armed task has a single action");
        ++count_;
        const double reward = uniform01(rng_);
        return {observation(), reward, uniform01(rng_) < 0.1, count_ >= 30};
    }

private:
    Eigen::VectorXd observation() const { return Eigen::Vector2d(count_ / 30.0, 1.0); }
    EnvSpec spec_{"one-arm", 2, 1, 30};
    Rng rng_;
    int count_ = 0;
};

AgentConfig small_config(Algorithm algorithm) {
    AgentConfig cfg;
    cfg.algorithm = algorithm;
    cfg.total_timesteps = 3000;
    cfg.learning_starts = 500;
    cfg.batch_size = 16;
    cfg.train_frequency = 4;
    cfg.target_update_interval = 100;
    cfg.n_atoms = 21;
    cfg.v_min = -10.0;
    cfg.v_max = 10.0;
    cfg.hidden = {16, 16};
    cfg.buffer_capacity = 1000;
    cfg.adam.learning_rate = 1e-3;
    cfg.seed = 3;
    return cfg;
}

void check_same_record(const RunRecord& a, const RunRecord& b) {
    REQUIRE(a.episodes.size() == b.episodes.size());
    for (std::size_t i = 0; i < a.episodes.size(); ++i) {
        CHECK(a.episodes[i].timestep == b.episodes[i].timestep);
        CHECK(a.episodes[i].ret == b.episodes[i].ret);
        CHECK(a.episodes[i].length == b.episodes[i].length);
    }
    REQUIRE(a.training.size() == b.training.size());
    for (std::size_t i = 0; i < a.training.size(); ++i) {
        CHECK(a.training[i].timestep == b.training[i].timestep);
        CHECK(a.training[i].loss == b.training[i].loss);
        CHECK(a.training[i].tau == b.training[i].tau);
        CHECK(a.training[i].churn == b.training[i].churn);
    }
}

}  // namespace

TEST_CASE("greedy backup examples") {
    const Support s(3, 0.0, 2.0);
    // Q = (1, 2): action 1 is used
    const std::vector<Dist> unique{pmf({0, 1, 0}), pmf({0, 0, 1})};
    CHECK(max_gap(greedy_backup(unique, s, 0.0, 1.0, false), pmf({0, 0, 1})) == 0.0);

    // tie Q = (1, 1): lowest index wins
    const std::vector<Dist> tie{pmf({0, 1, 0}), pmf({0.5, 0, 0.5})};
    CHECK(max_gap(greedy_backup(tie, s, 0.0, 1.0, false), pmf({0, 1, 0})) == 0.0);

    // terminal collapses to the reward atom
    CHECK(max_gap(greedy_backup(tie, s, 0.0, 1.0, true), pmf({1, 0, 0})) == 0.0);
    CHECK(max_gap(greedy_backup(unique, s, 0.0, 0.99, true), pmf({1, 0, 0})) == 0.0);
}

TEST_CASE("expected-Sarsa backup examples") {
    const Support s(3, 0.0, 2.0);
    const std::vector<Dist> tie{pmf({0, 1, 0}), pmf({0.5, 0, 0.5})};
    const Dist target = expected_sarsa_backup(tie, s, 0.0, 1.0, false, 1.0);
    CHECK(target[0] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(target[1] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(target[2] == doctest::Approx(0.25).epsilon(1e-15));
    // same mean as either action, larger variance than the deterministic arm
    CHECK(expectation(target, s) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(variance(target, s) == doctest::Approx(0.5).epsilon(1e-15));

    // near-zero temperature with a unique greedy action matches the greedy backup
    const std::vector<Dist> unique{pmf({0.2, 0.8, 0}), pmf({0, 0.3, 0.7})};
    const Dist cold = expected_sarsa_backup(unique, s, 0.5, 0.9, false, 1e-6);
    CHECK(max_gap(cold, greedy_backup(unique, s, 0.5, 0.9, false)) <= 1e-6);

    // single action: identical for any temperature
    const std::vector<Dist> single{pmf({0.1, 0.6, 0.3})};
    for (double tau : {0.01, 1.0, 100.0})
        CHECK(max_gap(expected_sarsa_backup(single, s, 0.3, 0.7, false, tau),
                      greedy_backup(single, s, 0.3, 0.7, false)) == 0.0);

    CHECK_THROWS_AS(expected_sarsa_backup(tie, s, 0.0, 1.0, false, 0.0), std::invalid_argument);
}

TEST_CASE("mixing before or after projection agrees") {
    Rng rng(31);
    const Support s(7, -3.0, 3.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<Dist> next;
        for (int a = 0; a < 3; ++a) {
            Eigen::VectorXd v(7);
            for (int i = 0; i < 7; ++i) v[i] = uniform01(rng);
            next.push_back(Dist::normalized(v));
        }
        const double reward = 4.0 * uniform01(rng) - 2.0;
        const double gamma = uniform01(rng);
        const double tau = 0.05 + uniform01(rng);
        const Dist mixed_first = expected_sarsa_backup(next, s, reward, gamma, false, tau);

        const Eigen::VectorXd weights = softmax_probs(q_values(next, s), tau);
        Eigen::VectorXd projected_first = Eigen::VectorXd::Zero(7);
        for (int a = 0; a < 3; ++a)
            projected_first += weights[a] * shift_and_project(next[a], s, reward, gamma, false).probs();
        CHECK((mixed_first.probs() - projected_first).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("batched targets: validity, greedy limit and expectation consistency") {
    Rng rng(41);
    const Support support(51, -100.0, 100.0);
    int limit_checks = 0;
    for (int trial = 0; trial < 40; ++trial) {
        ValueNetwork<double> net(shape_for(3, 3, 51), rng);
        std::vector<Transition> batch;
        for (int i = 0; i < 16; ++i) batch.push_back(random_transition(3, 3, rng));

        const auto ql = build_target_ql<double>(batch, net, support, 0.97);
        const auto es = build_target_es<double>(batch, net, support, 0.97, 0.5);
        REQUIRE(ql.size() == batch.size());
        REQUIRE(es.size() == batch.size());
        for (std::size_t j = 0; j < batch.size(); ++j) {
            CHECK(es[j].probs().minCoeff() >= 0.0);
            CHECK(std::abs(es[j].probs().sum() - 1.0) <= 1e-9);
            CHECK(std::abs(ql[j].probs().sum() - 1.0) <= 1e-9);

            const auto next = net.forward(batch[j].next_obs);
            const Eigen::VectorXd q = q_values(next, support);
            // |r| <= 2 and gamma 0.97 keep every shifted atom inside [-100, 100]
            const double bootstrap = batch[j].done ? 0.0 : 0.97 * softmax_probs(q, 0.5).dot(q);
            CHECK(std::abs(expectation(es[j], support) - (batch[j].reward + bootstrap)) <= 1e-6);

            // greedy limit at gap / tau = 40 on this one sample
            Eigen::VectorXd sorted = q;
            std::sort(sorted.data(), sorted.data() + sorted.size(), std::greater<>());
            const double gap = sorted[0] - sorted[1];
            if (gap <= 0.0) continue;
            const std::vector<Transition> one{batch[j]};
            const auto es_cold = build_target_es<double>(one, net, support, 0.97, gap / 40.0);
            const auto ql_one = build_target_ql<double>(one, net, support, 0.97);
            CHECK(max_gap(es_cold[0], ql_one[0]) <= 1e-6);
            ++limit_checks;
        }
    }
    CHECK(limit_checks > 600);
}

TEST_CASE("act") {
    const EnvSpec spec{"test", 2, 3, 10};
    AgentConfig cfg = small_config(Algorithm::es_c51);
    Agent agent(cfg, spec);
    agent.online().zero_output_layer();
    const Eigen::VectorXd obs = Eigen::Vector2d(0.4, -0.3);

    Rng rng(5);
    int counts[3] = {0, 0, 0};
    for (int i = 0; i < 10'000; ++i) ++counts[agent.act(obs, 0, rng)];
    for (int c : counts) CHECK(std::abs(c / 1e4 - 1.0 / 3.0) <= 0.03);

    // peak action 2 at v_max and the rest at v_min; at the floor temperature
    // the Q-gap of 20 leaves no room for other actions
    auto& bias = agent.online().parameters().biases.back();
    bias.setConstant(-30.0);
    bias[0 * 21 + 0] = 30.0;
    bias[1 * 21 + 0] = 30.0;
    bias[2 * 21 + 20] = 30.0;
    const Eigen::VectorXd q = agent.q_values(obs);
    CHECK(q[2] - q[0] >= 10.0);
    const std::int64_t late = cfg.total_timesteps;
    CHECK(softmax_probs(q, cfg.tau_floor)[2] >= 1.0 - 1e-10);
    for (int i = 0; i < 1000; ++i) CHECK(agent.act(obs, late, rng) == 2);

    Rng a(8), b(8);
    agent.online().parameters().biases.back().setZero();
    for (int i = 0; i < 100; ++i) CHECK(agent.act(obs, 7, a) == agent.act(obs, 7, b));
}

TEST_CASE("no training before learning starts") {
    AgentConfig cfg = small_config(Algorithm::ql_c51);
    cfg.total_timesteps = 100;
    cfg.learning_starts = 500;
    auto env = make_environment("cartpole", 1);
    Agent agent(cfg, env->spec());
    const auto before = agent.online().parameters();
    const auto record = agent.run(*env);
    CHECK(agent.gradient_steps() == 0);
    CHECK(record.training.empty());
    for (std::size_t l = 0; l < before.weights.size(); ++l)
        CHECK(agent.online().parameters().weights[l] == before.weights[l]);
}

TEST_CASE("training gating follows the step counter") {
    AgentConfig cfg = small_config(Algorithm::es_c51);
    auto env = make_environment("cartpole", 2);
    const auto record = train_loop(cfg, *env);
    REQUIRE_FALSE(record.training.empty());
    CHECK(record.training.front().timestep == 504);
    for (const auto& log : record.training) {
        CHECK(log.timestep > cfg.learning_starts);
        CHECK(log.timestep % cfg.train_frequency == 0);
        CHECK(std::isfinite(log.loss));
        CHECK(log.loss >= 0.0);
    }
    CHECK(record.training.size() == static_cast<std::size_t>((2999 - 504) / 4 + 1));
    std::int64_t steps = 0;
    for (const auto& e : record.episodes) steps += e.length;
    CHECK(steps <= cfg.total_timesteps);
    CHECK(record.episodes.back().timestep == steps);
}

TEST_CASE("runs are deterministic") {
    for (Algorithm algo : {Algorithm::ql_c51, Algorithm::es_c51}) {
        AgentConfig cfg = small_config(algo);
        cfg.track_churn = true;
        cfg.churn_probe_size = 32;
        auto e1 = make_environment("cartpole", 4);
        auto e2 = make_environment("cartpole", 4);
        const auto r1 = train_loop(cfg, *e1);
        const auto r2 = train_loop(cfg, *e2);
        check_same_record(r1, r2);
        for (const auto& log : r1.training) {
            REQUIRE(log.churn.has_value());
            CHECK(*log.churn >= 0.0);
            CHECK(*log.churn <= 1.0);
        }
    }
}

TEST_CASE("single-action parity between the two learners") {
    OneArm a(6), b(6);
    const auto ql = train_loop(small_config(Algorithm::ql_c51), a);
    const auto es = train_loop(small_config(Algorithm::es_c51), b);
    CHECK_FALSE(ql.training.empty());
    check_same_record(ql, es);
}

TEST_CASE("churn rate") {
    Rng rng(51);
    const Support support(11, -5.0, 5.0);
    ValueNetwork<double> net(shape_for(2, 2, 11), rng);
    std::vector<Eigen::VectorXd> states;
    for (int i = 0; i < 64; ++i) states.push_back(Eigen::Vector2d(2.0 * uniform01(rng) - 1.0, uniform01(rng)));
    ChurnProbe<double> probe(states, net, support);
    CHECK(probe.size() == 64);
    CHECK(churn_rate(probe, net) == 0.0);
    CHECK(churn_rate(probe, net) == 0.0);

    // swapping the two output blocks swaps both actions' distributions
    ValueNetwork<double> flipped = net;
    auto& w = flipped.parameters().weights.back();
    auto& bias = flipped.parameters().biases.back();
    w.topRows(11).swap(w.bottomRows(11));
    bias.head(11).swap(bias.tail(11));
    CHECK(churn_rate(probe, flipped) == 1.0);
    CHECK(churn_rate(probe, flipped) == 0.0);
    CHECK(churn_rate(probe, net) == 1.0);
}

TEST_CASE("algorithm names") {
    CHECK(to_string(Algorithm::ql_c51) == "ql-c51");
    CHECK(to_string(Algorithm::es_c51) == "es-c51");
    CHECK(parse_algorithm("es-c51") == Algorithm::es_c51);
    CHECK_THROWS_AS(parse_algorithm("dqn"), std::invalid_argument);

    AgentConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.gamma = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.train_frequency = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
