#include "esc51/replay_buffer.hpp"

#include <cmath>
#include <stdexcept>

namespace esc51 {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : storage_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
}

void ReplayBuffer::push(Transition transition) {
    if (transition.action < 0) throw std::invalid_argument("transition action must be nonnegative");
    if (!std::isfinite(transition.reward)) throw std::invalid_argument("transition reward must be finite");
    storage_[cursor_] = std::move(transition);
    cursor_ = (cursor_ + 1) % storage_.size();
    if (size_ < storage_.size()) ++size_;
}

const Transition& ReplayBuffer::operator[](std::size_t i) const {
    if (i >= size_) throw std::out_of_range("replay buffer index out of range");
    const std::size_t oldest = size_ < storage_.size() ? 0 : cursor_;
    return storage_[(oldest + i) % storage_.size()];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch_size, Rng& rng) const {
    if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
    if (size_ == 0) throw std::runtime_error("cannot sample from an empty replay buffer");
    std::vector<std::size_t> out(batch_size);
    for (auto& i : out) i = static_cast<std::size_t>(uniform_index(rng, size_));
    return out;
}

std::vector<Transition> ReplayBuffer::sample_uniform(std::size_t batch_size, Rng& rng) const {
    std::vector<Transition> out;
    out.reserve(batch_size);
    for (std::size_t i : sample_indices(batch_size, rng)) out.push_back((*this)[i]);
    return out;
}

}  // namespace esc51
