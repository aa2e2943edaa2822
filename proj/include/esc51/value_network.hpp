#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "esc51/categorical.hpp"
#include "esc51/rng.hpp"

namespace esc51 {

/// Thrown when a forward pass or loss produces non-finite values.
class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct NetworkShape {
    int observation_dim = 0;
    std::vector<int> hidden{120, 84};
    int n_actions = 0;
    int n_atoms = 0;

    /// observation_dim, hidden..., n_actions * n_atoms
    std::vector<int> layer_dims() const;
    bool operator==(const NetworkShape&) const = default;
};

template <typename Scalar>
struct NetworkParameters {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    std::vector<Matrix> weights;  // weights[l] is dims[l+1] x dims[l]
    std::vector<Vector> biases;

    static NetworkParameters zeros_like(const NetworkParameters& other);
    void set_zero();
    bool all_finite() const;
    bool same_shape(const NetworkParameters& other) const;
    std::size_t count() const;
};

/// MLP from an observation to per-action logits over the atoms. Hidden layers
/// use ReLU, the output layer is affine. Batches are column-major: one
/// observation per column.
template <typename Scalar>
class ValueNetwork {
public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Parameters = NetworkParameters<Scalar>;

    /// All parameters zero.
    explicit ValueNetwork(NetworkShape shape);
    /// Weights and biases drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    ValueNetwork(NetworkShape shape, Rng& rng);

    const NetworkShape& shape() const { return shape_; }
    int observation_dim() const { return shape_.observation_dim; }
    int n_actions() const { return shape_.n_actions; }
    int n_atoms() const { return shape_.n_atoms; }
    int output_dim() const { return shape_.n_actions * shape_.n_atoms; }

    Parameters& parameters() { return params_; }
    const Parameters& parameters() const { return params_; }

    void zero_output_layer();

    Matrix logits(const Eigen::Ref<const Matrix>& obs) const;

    /// (n_actions * n_atoms) x batch matrix; each action's block of rows is a pmf.
    Matrix predict(const Eigen::Ref<const Matrix>& obs) const;

    /// One distribution per action for a single observation.
    std::vector<CategoricalDistribution> forward(const Eigen::Ref<const Eigen::VectorXd>& obs) const;

    template <typename Other>
    ValueNetwork<Other> cast() const;

private:
    NetworkShape shape_;
    Parameters params_;
};

/// Applies a softmax to every n_atoms-row block of every column, in place.
template <typename Scalar>
void softmax_blocks(Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& logits, int n_atoms);

/// Q(a) = E[Z(a)] for each action.
Eigen::VectorXd q_values(std::span<const CategoricalDistribution> pmfs, const Support& support);

/// Batched Q-values from predict() output: n_actions x batch.
template <typename Scalar>
Eigen::MatrixXd q_values(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& predicted,
                         const Support& support, int n_actions);

template <typename Scalar>
struct LossAndGradients {
    double loss = 0.0;
    NetworkParameters<Scalar> gradients;
};

inline constexpr double kLogClamp = 1e-12;

/// Mean over the batch of -sum_i target[i] * log max(p(s, a, z_i), 1e-12),
/// with exact gradients. Only the taken action's logits receive signal.
/// `targets` is n_atoms x batch.
template <typename Scalar>
LossAndGradients<Scalar> loss_and_gradients(
    const ValueNetwork<Scalar>& net, const Eigen::Ref<const typename ValueNetwork<Scalar>::Matrix>& obs,
    std::span<const int> actions, const Eigen::Ref<const typename ValueNetwork<Scalar>::Matrix>& targets);

struct AdamConfig {
    double learning_rate = 2.5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename Scalar>
struct OptimizerState {
    OptimizerState(const ValueNetwork<Scalar>& net, AdamConfig config);

    AdamConfig config;
    std::int64_t step = 0;
    NetworkParameters<Scalar> first_moment;
    NetworkParameters<Scalar> second_moment;
};

/// Bias-corrected Adam step. Throws NonFiniteError and leaves everything
/// untouched if any gradient is non-finite.
template <typename Scalar>
void apply_update(ValueNetwork<Scalar>& net, const NetworkParameters<Scalar>& gradients,
                  OptimizerState<Scalar>& state);

/// target <- deep copy of net's parameters. Shapes must match.
template <typename Scalar>
void sync_target(const ValueNetwork<Scalar>& net, ValueNetwork<Scalar>& target);

template <typename Scalar>
using TargetNetwork = ValueNetwork<Scalar>;

// Text checkpoint, see README for the layout.
template <typename Scalar>
void save_checkpoint(const ValueNetwork<Scalar>& net, std::ostream& out);
template <typename Scalar>
ValueNetwork<Scalar> load_checkpoint(std::istream& in);

template <typename Scalar>
template <typename Other>
ValueNetwork<Other> ValueNetwork<Scalar>::cast() const {
    ValueNetwork<Other> out(shape_);
    for (std::size_t l = 0; l < params_.weights.size(); ++l) {
        out.parameters().weights[l] = params_.weights[l].template cast<Other>();
        out.parameters().biases[l] = params_.biases[l].template cast<Other>();
    }
    return out;
}

}  // namespace esc51
