#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "esc51/rng.hpp"

namespace esc51 {

/// done is true only for genuine terminal states; time-limit truncation is
/// stored with done = false so the target keeps bootstrapping.
struct Transition {
    Eigen::VectorXd obs;
    int action = 0;
    double reward = 0.0;
    Eigen::VectorXd next_obs;
    bool done = false;
};

/// Fixed-capacity FIFO ring with uniform sampling (with replacement).
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(Transition transition);

    std::size_t size() const { return size_; }
    std::size_t capacity() const { return storage_.size(); }
    bool empty() const { return size_ == 0; }

    /// i = 0 is the oldest retained transition.
    const Transition& operator[](std::size_t i) const;

    /// Positions (oldest-first, as for operator[]) of batch_size draws.
    std::vector<std::size_t> sample_indices(std::size_t batch_size, Rng& rng) const;
    std::vector<Transition> sample_uniform(std::size_t batch_size, Rng& rng) const;

private:
    std::vector<Transition> storage_;
    std::size_t cursor_ = 0;
    std::size_t size_ = 0;
};

}  // namespace esc51
