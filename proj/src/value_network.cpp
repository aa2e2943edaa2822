#include "esc51/value_network.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

namespace esc51 {

std::vector<int> NetworkShape::layer_dims() const {
    std::vector<int> dims;
    dims.reserve(hidden.size() + 2);
    dims.push_back(observation_dim);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(n_actions * n_atoms);
    return dims;
}

// ---------------------------------------------------------------------------
// NetworkParameters

template <typename Scalar>
NetworkParameters<Scalar> NetworkParameters<Scalar>::zeros_like(const NetworkParameters& other) {
    NetworkParameters out;
    for (const auto& w : other.weights) out.weights.push_back(Matrix::Zero(w.rows(), w.cols()));
    for (const auto& b : other.biases) out.biases.push_back(Vector::Zero(b.size()));
    return out;
}

template <typename Scalar>
void NetworkParameters<Scalar>::set_zero() {
    for (auto& w : weights) w.setZero();
    for (auto& b : biases) b.setZero();
}

template <typename Scalar>
bool NetworkParameters<Scalar>::all_finite() const {
    for (const auto& w : weights)
        if (!w.allFinite()) return false;
    for (const auto& b : biases)
        if (!b.allFinite()) return false;
    return true;
}

template <typename Scalar>
bool NetworkParameters<Scalar>::same_shape(const NetworkParameters& other) const {
    if (weights.size() != other.weights.size() || biases.size() != other.biases.size()) return false;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].rows() != other.weights[l].rows() || weights[l].cols() != other.weights[l].cols())
            return false;
        if (biases[l].size() != other.biases[l].size()) return false;
    }
    return true;
}

template <typename Scalar>
std::size_t NetworkParameters<Scalar>::count() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
    for (const auto& b : biases) n += static_cast<std::size_t>(b.size());
    return n;
}

// ---------------------------------------------------------------------------
// ValueNetwork

namespace {

void validate_shape(const NetworkShape& shape) {
    if (shape.observation_dim < 1) throw std::invalid_argument("observation_dim must be positive");
    if (shape.n_actions < 1) throw std::invalid_argument("network needs at least one action");
    if (shape.n_atoms < 2) throw std::invalid_argument("network needs at least two atoms");
    for (int h : shape.hidden)
        if (h < 1) throw std::invalid_argument("hidden layer widths must be positive");
}

}  // namespace

template <typename Scalar>
ValueNetwork<Scalar>::ValueNetwork(NetworkShape shape) : shape_(std::move(shape)) {
    validate_shape(shape_);
    const auto dims = shape_.layer_dims();
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        params_.weights.push_back(Matrix::Zero(dims[l + 1], dims[l]));
        params_.biases.push_back(Vector::Zero(dims[l + 1]));
    }
}

template <typename Scalar>
ValueNetwork<Scalar>::ValueNetwork(NetworkShape shape, Rng& rng) : ValueNetwork(std::move(shape)) {
    for (std::size_t l = 0; l < params_.weights.size(); ++l) {
        auto& w = params_.weights[l];
        auto& b = params_.biases[l];
        const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
        auto draw = [&] { return static_cast<Scalar>((2.0 * uniform01(rng) - 1.0) * bound); };
        // row-major draw order so the layout is independent of Eigen's storage order
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = draw();
        for (Eigen::Index r = 0; r < b.size(); ++r) b[r] = draw();
    }
}

template <typename Scalar>
void ValueNetwork<Scalar>::zero_output_layer() {
    params_.weights.back().setZero();
    params_.biases.back().setZero();
}

namespace {

template <typename Scalar, typename Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>
void check_input(const Eigen::Ref<const Matrix>& obs, int observation_dim) {
    if (obs.rows() != observation_dim)
        throw std::invalid_argument("observation has dimension " + std::to_string(obs.rows()) + ", network expects " +
                                    std::to_string(observation_dim));
    if (obs.cols() < 1) throw std::invalid_argument("empty observation batch");
    if (!obs.allFinite()) throw std::invalid_argument("observation is not finite");
}

// Runs the layer stack, keeping every layer input in `inputs` when requested.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> run_layers(
    const NetworkParameters<Scalar>& params,
    const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>& obs,
    std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>* inputs) {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    const std::size_t n_layers = params.weights.size();
    Matrix act = obs;
    for (std::size_t l = 0; l < n_layers; ++l) {
        Matrix z(params.weights[l].rows(), act.cols());
        z.noalias() = params.weights[l] * act;
        z.colwise() += params.biases[l];
        if (l + 1 < n_layers) z = z.cwiseMax(Scalar(0));
        if (inputs) inputs->push_back(std::move(act));
        act = std::move(z);
    }
    if (!act.allFinite()) throw NonFiniteError("network produced non-finite logits");
    return act;
}

}  // namespace

template <typename Scalar>
void softmax_blocks(Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& logits, int n_atoms) {
    const Eigen::Index n_blocks = logits.rows() / n_atoms;
    for (Eigen::Index a = 0; a < n_blocks; ++a) {
        auto block = logits.middleRows(a * n_atoms, n_atoms);
        const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> top = block.colwise().maxCoeff();
        block = (block.rowwise() - top).array().exp().matrix();
        const Eigen::Array<Scalar, 1, Eigen::Dynamic> total = block.colwise().sum().array();
        block.array().rowwise() /= total;
    }
}

template <typename Scalar>
auto ValueNetwork<Scalar>::logits(const Eigen::Ref<const Matrix>& obs) const -> Matrix {
    check_input<Scalar>(obs, observation_dim());
    return run_layers<Scalar>(params_, obs, nullptr);
}

template <typename Scalar>
auto ValueNetwork<Scalar>::predict(const Eigen::Ref<const Matrix>& obs) const -> Matrix {
    Matrix out = logits(obs);
    softmax_blocks<Scalar>(out, n_atoms());
    return out;
}

template <typename Scalar>
std::vector<CategoricalDistribution> ValueNetwork<Scalar>::forward(
    const Eigen::Ref<const Eigen::VectorXd>& obs) const {
    const Matrix probs = predict(obs.cast<Scalar>());
    std::vector<CategoricalDistribution> out;
    out.reserve(n_actions());
    for (int a = 0; a < n_actions(); ++a)
        out.push_back(CategoricalDistribution::normalized(probs.col(0).segment(a * n_atoms(), n_atoms()).template cast<double>()));
    return out;
}

Eigen::VectorXd q_values(std::span<const CategoricalDistribution> pmfs, const Support& support) {
    Eigen::VectorXd q(static_cast<Eigen::Index>(pmfs.size()));
    for (std::size_t a = 0; a < pmfs.size(); ++a) q[static_cast<Eigen::Index>(a)] = expectation(pmfs[a], support);
    return q;
}

template <typename Scalar>
Eigen::MatrixXd q_values(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& predicted,
                         const Support& support, int n_actions) {
    const int n = support.size();
    if (predicted.rows() != static_cast<Eigen::Index>(n) * n_actions)
        throw std::invalid_argument("prediction rows do not match actions x atoms");
    Eigen::MatrixXd q(n_actions, predicted.cols());
    for (int a = 0; a < n_actions; ++a)
        q.row(a) = support.atoms().transpose() * predicted.middleRows(a * n, n).template cast<double>();
    return q;
}

// ---------------------------------------------------------------------------
// Loss and reverse-mode gradients

template <typename Scalar>
LossAndGradients<Scalar> loss_and_gradients(
    const ValueNetwork<Scalar>& net, const Eigen::Ref<const typename ValueNetwork<Scalar>::Matrix>& obs,
    std::span<const int> actions, const Eigen::Ref<const typename ValueNetwork<Scalar>::Matrix>& targets) {
    using Matrix = typename ValueNetwork<Scalar>::Matrix;
    const Eigen::Index batch = obs.cols();
    const int n = net.n_atoms();
    if (batch < 1) throw std::invalid_argument("empty training batch");
    if (static_cast<Eigen::Index>(actions.size()) != batch || targets.cols() != batch)
        throw std::invalid_argument("batch sizes of observations, actions and targets differ");
    if (targets.rows() != n) throw std::invalid_argument("target distributions have the wrong number of atoms");
    check_input<Scalar>(obs, net.observation_dim());
    for (Eigen::Index j = 0; j < batch; ++j) {
        const auto t = targets.col(j);
        if (!t.allFinite() || (t.array() < Scalar(0)).any() ||
            std::abs(static_cast<double>(t.template cast<double>().sum()) - 1.0) > 1e-5)
            throw std::invalid_argument("target " + std::to_string(j) + " is not a distribution");
        if (actions[j] < 0 || actions[j] >= net.n_actions()) throw std::invalid_argument("action index out of range");
    }

    const auto& params = net.parameters();
    std::vector<Matrix> inputs;
    inputs.reserve(params.weights.size());
    Matrix logits = run_layers<Scalar>(params, obs, &inputs);

    // Gradient w.r.t. logits: p - target on the taken action's block, zero elsewhere.
    const double log_floor = std::log(kLogClamp);
    const Scalar inv_batch = Scalar(1) / static_cast<Scalar>(batch);
    Matrix delta = Matrix::Zero(logits.rows(), batch);
    double loss = 0.0;
    for (Eigen::Index j = 0; j < batch; ++j) {
        const auto z = logits.col(j).segment(static_cast<Eigen::Index>(actions[j]) * n, n);
        const double top = static_cast<double>(z.maxCoeff());
        const Eigen::VectorXd shifted = z.template cast<double>().array() - top;
        const double log_norm = std::log(shifted.array().exp().sum());
        const Eigen::VectorXd log_p = shifted.array() - log_norm;
        const Eigen::VectorXd target = targets.col(j).template cast<double>();
        loss -= target.dot(log_p.cwiseMax(log_floor));
        // Clamped atoms contribute a constant, so only unclamped target mass pulls.
        const Eigen::ArrayXd live = (log_p.array() >= log_floor).cast<double>();
        const double live_mass = (target.array() * live).sum();
        delta.col(j).segment(static_cast<Eigen::Index>(actions[j]) * n, n) =
            ((log_p.array().exp() * live_mass - target.array() * live).matrix().template cast<Scalar>()) *
            inv_batch;
    }
    loss /= static_cast<double>(batch);
    if (!std::isfinite(loss)) throw NonFiniteError("loss is not finite");

    LossAndGradients<Scalar> out;
    out.loss = loss;
    out.gradients = NetworkParameters<Scalar>::zeros_like(params);
    for (std::size_t l = params.weights.size(); l-- > 0;) {
        out.gradients.weights[l].noalias() = delta * inputs[l].transpose();
        out.gradients.biases[l] = delta.rowwise().sum();
        if (l == 0) break;
        Matrix upstream(params.weights[l].cols(), batch);
        upstream.noalias() = params.weights[l].transpose() * delta;
        // inputs[l] is the ReLU output of layer l-1; zero where it was clipped
        delta = (inputs[l].array() > Scalar(0)).select(upstream, Scalar(0));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Optimizer

template <typename Scalar>
OptimizerState<Scalar>::OptimizerState(const ValueNetwork<Scalar>& net, AdamConfig cfg)
    : config(cfg),
      first_moment(NetworkParameters<Scalar>::zeros_like(net.parameters())),
      second_moment(NetworkParameters<Scalar>::zeros_like(net.parameters())) {
    if (!(config.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(config.beta1 >= 0.0 && config.beta1 < 1.0) || !(config.beta2 >= 0.0 && config.beta2 < 1.0))
        throw std::invalid_argument("Adam decay rates must lie in [0, 1)");
    if (!(config.epsilon > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
}

template <typename Scalar>
void apply_update(ValueNetwork<Scalar>& net, const NetworkParameters<Scalar>& gradients,
                  OptimizerState<Scalar>& state) {
    auto& params = net.parameters();
    if (!gradients.same_shape(params) || !state.first_moment.same_shape(params))
        throw std::invalid_argument("gradient or optimizer shapes do not match the network");
    if (!gradients.all_finite()) throw NonFiniteError("non-finite gradient, update skipped");

    state.step += 1;
    const auto& cfg = state.config;
    const Scalar b1 = static_cast<Scalar>(cfg.beta1);
    const Scalar b2 = static_cast<Scalar>(cfg.beta2);
    const Scalar step_size =
        static_cast<Scalar>(cfg.learning_rate / (1.0 - std::pow(cfg.beta1, static_cast<double>(state.step))));
    const Scalar bias2_sqrt = static_cast<Scalar>(std::sqrt(1.0 - std::pow(cfg.beta2, static_cast<double>(state.step))));
    const Scalar eps = static_cast<Scalar>(cfg.epsilon);

    auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
        m = b1 * m + (Scalar(1) - b1) * g;
        v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
        p.array() -= step_size * m.array() / (v.array().sqrt() / bias2_sqrt + eps);
    };
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        update(params.weights[l], gradients.weights[l], state.first_moment.weights[l], state.second_moment.weights[l]);
        update(params.biases[l], gradients.biases[l], state.first_moment.biases[l], state.second_moment.biases[l]);
    }
}

template <typename Scalar>
void sync_target(const ValueNetwork<Scalar>& net, ValueNetwork<Scalar>& target) {
    if (!(net.shape() == target.shape())) throw std::invalid_argument("target network shape differs from source");
    target.parameters() = net.parameters();
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr const char* kCheckpointMagic = "esc51-checkpoint";
constexpr int kCheckpointVersion = 1;
}  // namespace

template <typename Scalar>
void save_checkpoint(const ValueNetwork<Scalar>& net, std::ostream& out) {
    const auto& shape = net.shape();
    const auto dims = shape.layer_dims();
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    out << "n_actions " << shape.n_actions << '\n' << "n_atoms " << shape.n_atoms << '\n';
    out << "dims " << dims.size();
    for (int d : dims) out << ' ' << d;
    out << '\n';
    const auto old_precision = out.precision(std::numeric_limits<Scalar>::max_digits10);
    const auto& params = net.parameters();
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        const auto& w = params.weights[l];
        out << "weight " << l << '\n';
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) out << (c ? " " : "") << w(r, c);
            out << '\n';
        }
        out << "bias " << l << '\n';
        for (Eigen::Index r = 0; r < params.biases[l].size(); ++r) out << (r ? " " : "") << params.biases[l][r];
        out << '\n';
    }
    out.precision(old_precision);
    if (!out) throw std::runtime_error("failed to write checkpoint");
}

template <typename Scalar>
ValueNetwork<Scalar> load_checkpoint(std::istream& in) {
    auto expect = [&](const std::string& word) {
        std::string token;
        if (!(in >> token) || token != word) throw std::runtime_error("malformed checkpoint: expected '" + word + "'");
    };
    expect(kCheckpointMagic);
    int version = 0;
    if (!(in >> version) || version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    NetworkShape shape;
    expect("n_actions");
    in >> shape.n_actions;
    expect("n_atoms");
    in >> shape.n_atoms;
    expect("dims");
    std::size_t n_dims = 0;
    in >> n_dims;
    if (!in || n_dims < 2) throw std::runtime_error("malformed checkpoint: bad layer count");
    std::vector<int> dims(n_dims);
    for (auto& d : dims) in >> d;
    if (!in) throw std::runtime_error("malformed checkpoint: bad layer dims");
    shape.observation_dim = dims.front();
    shape.hidden.assign(dims.begin() + 1, dims.end() - 1);
    if (dims.back() != shape.n_actions * shape.n_atoms)
        throw std::runtime_error("malformed checkpoint: output width is not n_actions * n_atoms");

    ValueNetwork<Scalar> net(shape);
    auto& params = net.parameters();
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        expect("weight");
        std::size_t index = 0;
        in >> index;
        auto& w = params.weights[l];
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) in >> w(r, c);
        expect("bias");
        in >> index;
        for (Eigen::Index r = 0; r < params.biases[l].size(); ++r) in >> params.biases[l][r];
        if (!in) throw std::runtime_error("malformed checkpoint: truncated parameters in layer " + std::to_string(l));
    }
    return net;
}

#define ESC51_INSTANTIATE(S)                                                                                     \
    template struct NetworkParameters<S>;                                                                        \
    template class ValueNetwork<S>;                                                                              \
    template void softmax_blocks<S>(Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>&, int);                    \
    template Eigen::MatrixXd q_values<S>(const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>&, const Support&, \
                                         int);                                                                   \
    template LossAndGradients<S> loss_and_gradients<S>(                                                          \
        const ValueNetwork<S>&, const Eigen::Ref<const ValueNetwork<S>::Matrix>&, std::span<const int>,          \
        const Eigen::Ref<const ValueNetwork<S>::Matrix>&);                                                       \
    template struct OptimizerState<S>;                                                                           \
    template void apply_update<S>(ValueNetwork<S>&, const NetworkParameters<S>&, OptimizerState<S>&);           \
    template void sync_target<S>(const ValueNetwork<S>&, ValueNetwork<S>&);                                      \
    template void save_checkpoint<S>(const ValueNetwork<S>&, std::ostream&);                                     \
    template ValueNetwork<S> load_checkpoint<S>(std::istream&);

ESC51_INSTANTIATE(float)
ESC51_INSTANTIATE(double)

#undef ESC51_INSTANTIATE

}  // namespace esc51
