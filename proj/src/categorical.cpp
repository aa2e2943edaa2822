#include "esc51/categorical.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace esc51 {

namespace {

void check_mass(const Eigen::VectorXd& probs) {
    if (probs.size() == 0) throw std::invalid_argument("categorical distribution is empty");
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        if (!std::isfinite(probs[i]) || probs[i] < 0.0)
            throw std::invalid_argument("categorical distribution has invalid entry at atom " + std::to_string(i));
    }
    const double total = probs.sum();
    if (std::abs(total - 1.0) > CategoricalDistribution::kSumTolerance)
        throw std::invalid_argument("categorical distribution sums to " + std::to_string(total));
}

void check_length(const CategoricalDistribution& dist, const Support& support) {
    if (dist.size() != support.size())
        throw std::invalid_argument("distribution has " + std::to_string(dist.size()) +
                                    " atoms but support has " + std::to_string(support.size()));
}

}  // namespace

Support::Support(int n_atoms, double v_min, double v_max) : v_min_(v_min), v_max_(v_max) {
    if (n_atoms < 2) throw std::invalid_argument("support needs at least 2 atoms");
    if (!std::isfinite(v_min) || !std::isfinite(v_max)) throw std::invalid_argument("support bounds must be finite");
    if (!(v_min < v_max)) throw std::invalid_argument("support requires v_min < v_max");
    delta_z_ = (v_max - v_min) / static_cast<double>(n_atoms - 1);
    atoms_.resize(n_atoms);
    for (int i = 0; i < n_atoms; ++i) atoms_[i] = v_min + static_cast<double>(i) * delta_z_;
    atoms_[n_atoms - 1] = v_max;
}

Support make_support(int n_atoms, double v_min, double v_max) { return Support(n_atoms, v_min, v_max); }

CategoricalDistribution::CategoricalDistribution(Eigen::VectorXd probs) : probs_(std::move(probs)) {
    check_mass(probs_);
}

CategoricalDistribution CategoricalDistribution::normalized(Eigen::VectorXd weights) {
    if (weights.size() == 0) throw std::invalid_argument("categorical distribution is empty");
    if (!weights.allFinite() || (weights.array() < 0.0).any())
        throw std::invalid_argument("cannot normalize negative or non-finite weights");
    const double total = weights.sum();
    if (!(total > 0.0)) throw std::invalid_argument("cannot normalize zero mass");
    weights /= total;
    return CategoricalDistribution(std::move(weights), Unchecked{});
}

CategoricalDistribution CategoricalDistribution::one_hot(int size, int index) {
    if (index < 0 || index >= size) throw std::invalid_argument("one_hot index out of range");
    Eigen::VectorXd probs = Eigen::VectorXd::Zero(size);
    probs[index] = 1.0;
    return CategoricalDistribution(std::move(probs), Unchecked{});
}

CategoricalDistribution CategoricalDistribution::uniform(int size) {
    if (size < 1) throw std::invalid_argument("uniform distribution needs at least one atom");
    return CategoricalDistribution(Eigen::VectorXd::Constant(size, 1.0 / size), Unchecked{});
}

double expectation(const CategoricalDistribution& dist, const Support& support) {
    check_length(dist, support);
    return support.atoms().dot(dist.probs());
}

double variance(const CategoricalDistribution& dist, const Support& support) {
    const double mean = expectation(dist, support);
    return (support.atoms().array() - mean).square().matrix().dot(dist.probs());
}

CategoricalDistribution shift_and_project(const CategoricalDistribution& dist, const Support& support,
                                          double reward, double gamma, bool terminal) {
    check_length(dist, support);
    if (!std::isfinite(reward)) throw std::invalid_argument("reward must be finite");
    if (!std::isfinite(gamma)) throw std::invalid_argument("discount must be finite");

    const int n = support.size();
    const double v_min = support.v_min();
    const double v_max = support.v_max();
    const double dz = support.delta_z();
    const auto& p = dist.probs();

    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        if (p[i] == 0.0) continue;
        const double shifted = terminal ? reward : reward + gamma * support[i];
        const double b = (std::clamp(shifted, v_min, v_max) - v_min) / dz;
        const int lower = std::clamp(static_cast<int>(std::floor(b)), 0, n - 1);
        const int upper = std::clamp(static_cast<int>(std::ceil(b)), 0, n - 1);
        if (lower == upper) {
            out[lower] += p[i];
        } else {
            out[lower] += p[i] * (static_cast<double>(upper) - b);
            out[upper] += p[i] * (b - static_cast<double>(lower));
        }
    }
    return CategoricalDistribution(std::move(out), CategoricalDistribution::Unchecked{});
}

CategoricalDistribution mix(std::span<const CategoricalDistribution> dists, std::span<const double> weights) {
    if (dists.empty()) throw std::invalid_argument("mix needs at least one distribution");
    if (dists.size() != weights.size()) throw std::invalid_argument("mix weight/distribution count mismatch");
    double total = 0.0;
    for (double w : weights) {
        if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument("mix weights must be nonnegative");
        total += w;
    }
    if (std::abs(total - 1.0) > CategoricalDistribution::kSumTolerance)
        throw std::invalid_argument("mix weights must sum to 1");

    const int n = dists.front().size();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < dists.size(); ++k) {
        if (dists[k].size() != n) throw std::invalid_argument("mix distributions have different supports");
        out.noalias() += weights[k] * dists[k].probs();
    }
    return CategoricalDistribution(std::move(out), CategoricalDistribution::Unchecked{});
}

}  // namespace esc51
