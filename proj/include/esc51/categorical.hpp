#pragma once

#include <span>

#include <Eigen/Dense>

namespace esc51 {

/// Fixed grid of N evenly spaced return atoms on [v_min, v_max].
class Support {
public:
    Support(int n_atoms, double v_min, double v_max);

    int size() const { return static_cast<int>(atoms_.size()); }
    double v_min() const { return v_min_; }
    double v_max() const { return v_max_; }
    double delta_z() const { return delta_z_; }
    const Eigen::VectorXd& atoms() const { return atoms_; }
    double operator[](int i) const { return atoms_[i]; }

    bool operator==(const Support& other) const {
        return size() == other.size() && v_min_ == other.v_min_ && v_max_ == other.v_max_;
    }

private:
    double v_min_;
    double v_max_;
    double delta_z_;
    Eigen::VectorXd atoms_;
};

/// Throws std::invalid_argument for n_atoms < 2, non-finite bounds or v_min >= v_max.
Support make_support(int n_atoms, double v_min, double v_max);

/// Probability mass vector over a Support.
///
/// The checked constructor rejects negative entries and sums off by more than
/// kSumTolerance. `normalized` is the only place mass is rescaled.
class CategoricalDistribution {
public:
    static constexpr double kSumTolerance = 1e-9;

    explicit CategoricalDistribution(Eigen::VectorXd probs);

    /// Rescales nonnegative weights to unit mass.
    static CategoricalDistribution normalized(Eigen::VectorXd weights);
    static CategoricalDistribution one_hot(int size, int index);
    static CategoricalDistribution uniform(int size);

    int size() const { return static_cast<int>(probs_.size()); }
    const Eigen::VectorXd& probs() const { return probs_; }
    double operator[](int i) const { return probs_[i]; }

private:
    struct Unchecked {};
    CategoricalDistribution(Eigen::VectorXd probs, Unchecked) : probs_(std::move(probs)) {}

    Eigen::VectorXd probs_;

    friend CategoricalDistribution shift_and_project(const CategoricalDistribution&, const Support&, double,
                                                     double, bool);
    friend CategoricalDistribution mix(std::span<const CategoricalDistribution>, std::span<const double>);
};

double expectation(const CategoricalDistribution& dist, const Support& support);
double variance(const CategoricalDistribution& dist, const Support& support);

/// Distributional Bellman step for one distribution: every atom z_i moves to
/// reward + gamma * z_i (or to reward alone when terminal), is clamped to the
/// support range, and its mass is split linearly between the two bracketing
/// atoms. Mass landing exactly on an atom stays there.
CategoricalDistribution shift_and_project(const CategoricalDistribution& dist, const Support& support,
                                          double reward, double gamma, bool terminal);

/// Atomwise convex combination sum_k weights[k] * dists[k].
CategoricalDistribution mix(std::span<const CategoricalDistribution> dists, std::span<const double> weights);

}  // namespace esc51
