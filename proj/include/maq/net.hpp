#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "maq/common.hpp"

namespace maq {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class Act { relu, tanh, identity };

inline const char* act_name(Act a) {
    switch (a) {
        case Act::relu: return "relu";
        case Act::tanh: return "tanh";
        case Act::identity: return "identity";
    }
    return "?";
}

inline Act act_from_name(std::string_view s) {
    if (s == "relu") return Act::relu;
    if (s == "tanh") return Act::tanh;
    if (s == "identity") return Act::identity;
    throw ParseError("unknown activation: '" + std::string(s) + "'");
}

// Multilayer perceptron over row-major batches. weights[l] has shape
// layer_sizes[l+1] x layer_sizes[l]; forward computes X * W^T + b per layer.
struct DenseNet {
    std::vector<Mat> weights;
    std::vector<Vec> biases;
    Act hidden_act = Act::relu;
    Act output_act = Act::identity;

    int layer_count() const { return static_cast<int>(weights.size()); }
    int in_dim() const { return static_cast<int>(weights.front().cols()); }
    int out_dim() const { return static_cast<int>(weights.back().rows()); }

    std::vector<int> layer_sizes() const {
        std::vector<int> sizes;
        sizes.push_back(in_dim());
        for (const Mat& w : weights) sizes.push_back(static_cast<int>(w.rows()));
        return sizes;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (int l = 0; l < layer_count(); ++l) n += weights[l].size() + biases[l].size();
        return n;
    }
};

// Glorot-uniform initialization from the given generator.
inline DenseNet make_dense_net(const std::vector<int>& sizes, Act hidden, Act output, Rng& rng) {
    if (sizes.size() < 2) throw ConfigError("dense net needs at least input and output sizes");
    for (int s : sizes)
        if (s <= 0) throw ConfigError("dense net layer sizes must be positive");
    DenseNet net;
    net.hidden_act = hidden;
    net.output_act = output;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const int fan_in = sizes[l];
        const int fan_out = sizes[l + 1];
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        Mat w(fan_out, fan_in);
        for (int r = 0; r < fan_out; ++r)
            for (int c = 0; c < fan_in; ++c) w(r, c) = rng.uniform(-bound, bound);
        net.weights.push_back(std::move(w));
        net.biases.push_back(Vec::Zero(fan_out));
    }
    return net;
}

struct ForwardCache {
    Mat input;
    std::vector<Mat> pre;   // pre-activations per layer
    std::vector<Mat> post;  // post-activations per layer (last = network output)
};

namespace detail {

inline void apply_act(Act a, Mat& m) {
    switch (a) {
        case Act::relu: m = m.cwiseMax(0.0); break;
        case Act::tanh: m = m.array().tanh().matrix(); break;
        case Act::identity: break;
    }
}

// Derivative expressed through pre (z) and post (act(z)) values.
inline Mat act_grad(Act a, const Mat& pre, const Mat& post) {
    switch (a) {
        case Act::relu: return (pre.array() > 0.0).cast<double>().matrix();
        case Act::tanh: return (1.0 - post.array().square()).matrix();
        case Act::identity: return Mat::Ones(pre.rows(), pre.cols());
    }
    return Mat();
}

}  // namespace detail

inline Mat net_forward(const DenseNet& net, const Mat& inputs, ForwardCache* cache = nullptr) {
    if (inputs.cols() != net.in_dim())
        throw ConfigError("forward: input dim " + std::to_string(inputs.cols()) + " != net in_dim " +
                          std::to_string(net.in_dim()));
    if (!inputs.allFinite()) throw ConfigError("forward: non-finite inputs");
    if (cache) {
        cache->input = inputs;
        cache->pre.clear();
        cache->post.clear();
    }
    Mat a = inputs;
    const int L = net.layer_count();
    for (int l = 0; l < L; ++l) {
        Mat z = a * net.weights[l].transpose();
        z.rowwise() += net.biases[l].transpose();
        if (cache) cache->pre.push_back(z);
        detail::apply_act(l + 1 == L ? net.output_act : net.hidden_act, z);
        if (cache) cache->post.push_back(z);
        a = std::move(z);
    }
    return a;
}

// Shape-matched parameter gradients.
struct GradientSet {
    std::vector<Mat> d_weights;
    std::vector<Vec> d_biases;

    static GradientSet zeros_like(const DenseNet& net) {
        GradientSet g;
        for (int l = 0; l < net.layer_count(); ++l) {
            g.d_weights.push_back(Mat::Zero(net.weights[l].rows(), net.weights[l].cols()));
            g.d_biases.push_back(Vec::Zero(net.biases[l].size()));
        }
        return g;
    }

    void add_scaled(const GradientSet& other, double scale) {
        for (std::size_t l = 0; l < d_weights.size(); ++l) {
            d_weights[l] += scale * other.d_weights[l];
            d_biases[l] += scale * other.d_biases[l];
        }
    }

    bool all_finite() const {
        for (std::size_t l = 0; l < d_weights.size(); ++l)
            if (!d_weights[l].allFinite() || !d_biases[l].allFinite()) return false;
        return true;
    }
};

// Analytic reverse pass for the map cached by net_forward. output_gradient is
// dLoss/dOutput (batch x out_dim). If input_gradient is given, dLoss/dInput is
// written there so modules can be chained.
inline GradientSet net_backward(const DenseNet& net, const ForwardCache& cache, const Mat& output_gradient,
                                Mat* input_gradient = nullptr) {
    const int L = net.layer_count();
    if (static_cast<int>(cache.pre.size()) != L || cache.input.rows() != output_gradient.rows())
        throw UsageError("backward: cache does not match this forward call");
    if (output_gradient.cols() != net.out_dim()) throw UsageError("backward: output gradient dim mismatch");

    GradientSet grads;
    grads.d_weights.resize(L);
    grads.d_biases.resize(L);
    Mat da = output_gradient;
    for (int l = L - 1; l >= 0; --l) {
        const Act a = (l + 1 == L) ? net.output_act : net.hidden_act;
        Mat dz = da.cwiseProduct(detail::act_grad(a, cache.pre[l], cache.post[l]));
        const Mat& below = (l == 0) ? cache.input : cache.post[l - 1];
        grads.d_weights[l] = dz.transpose() * below;
        grads.d_biases[l] = dz.colwise().sum().transpose();
        if (l > 0 || input_gradient) da = dz * net.weights[l];
    }
    if (input_gradient) *input_gradient = std::move(da);
    return grads;
}

// Adam with bias correction; moment tensors mirror the parameter shapes.
struct AdamState {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step_count = 0;
    std::vector<Mat> m_weights, v_weights;
    std::vector<Vec> m_biases, v_biases;

    static AdamState for_net(const DenseNet& net, double lr) {
        AdamState s;
        s.learning_rate = lr;
        for (int l = 0; l < net.layer_count(); ++l) {
            s.m_weights.push_back(Mat::Zero(net.weights[l].rows(), net.weights[l].cols()));
            s.v_weights.push_back(Mat::Zero(net.weights[l].rows(), net.weights[l].cols()));
            s.m_biases.push_back(Vec::Zero(net.biases[l].size()));
            s.v_biases.push_back(Vec::Zero(net.biases[l].size()));
        }
        return s;
    }
};

namespace detail {

inline void adam_update_flat(double* param, const double* grad, double* m, double* v, Eigen::Index n,
                             const AdamState& s, double bc1, double bc2) {
    Eigen::Map<Eigen::ArrayXd> p(param, n), mm(m, n), vv(v, n);
    Eigen::Map<const Eigen::ArrayXd> g(grad, n);
    mm = s.beta1 * mm + (1.0 - s.beta1) * g;
    vv = s.beta2 * vv + (1.0 - s.beta2) * g.square();
    p -= s.learning_rate * (mm / bc1) / ((vv / bc2).sqrt() + s.epsilon);
}

}  // namespace detail

inline void adam_step(DenseNet& net, const GradientSet& grads, AdamState& state) {
    if (static_cast<int>(grads.d_weights.size()) != net.layer_count())
        throw UsageError("adam_step: gradient shape mismatch");
    if (!grads.all_finite()) throw TrainError("adam_step: non-finite gradient");
    state.step_count += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (int l = 0; l < net.layer_count(); ++l) {
        detail::adam_update_flat(net.weights[l].data(), grads.d_weights[l].data(), state.m_weights[l].data(),
                                 state.v_weights[l].data(), net.weights[l].size(), state, bc1, bc2);
        detail::adam_update_flat(net.biases[l].data(), grads.d_biases[l].data(), state.m_biases[l].data(),
                                 state.v_biases[l].data(), net.biases[l].size(), state, bc1, bc2);
    }
}

// Scalar Adam, used for the entropy temperature.
struct AdamScalar {
    double learning_rate;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step_count = 0;
    double m = 0.0;
    double v = 0.0;

    explicit AdamScalar(double lr) : learning_rate(lr) {}

    void step(double& param, double grad) {
        if (!std::isfinite(grad)) throw TrainError("adam scalar: non-finite gradient");
        step_count += 1;
        m = beta1 * m + (1.0 - beta1) * grad;
        v = beta2 * v + (1.0 - beta2) * grad * grad;
        const double mh = m / (1.0 - std::pow(beta1, static_cast<double>(step_count)));
        const double vh = v / (1.0 - std::pow(beta2, static_cast<double>(step_count)));
        param -= learning_rate * mh / (std::sqrt(vh) + epsilon);
    }
};

// Flat views over a network's parameters, iteration order fixed as
// (W0, b0, W1, b1, ...). Gradient flattening below uses the same order.
inline std::vector<double*> param_pointers(DenseNet& net) {
    std::vector<double*> ptrs;
    ptrs.reserve(net.param_count());
    for (int l = 0; l < net.layer_count(); ++l) {
        for (Eigen::Index i = 0; i < net.weights[l].size(); ++i) ptrs.push_back(net.weights[l].data() + i);
        for (Eigen::Index i = 0; i < net.biases[l].size(); ++i) ptrs.push_back(net.biases[l].data() + i);
    }
    return ptrs;
}

inline std::vector<double> flatten_gradients(const GradientSet& grads) {
    std::vector<double> flat;
    for (std::size_t l = 0; l < grads.d_weights.size(); ++l) {
        flat.insert(flat.end(), grads.d_weights[l].data(), grads.d_weights[l].data() + grads.d_weights[l].size());
        flat.insert(flat.end(), grads.d_biases[l].data(), grads.d_biases[l].data() + grads.d_biases[l].size());
    }
    return flat;
}

// Max relative error between analytic gradients and central finite differences
// over probe_count randomly probed coordinates. loss_fn must be deterministic
// in the probed parameters. Non-finite comparisons surface as HUGE_VAL.
inline double gradient_check(const std::function<double()>& loss_fn, std::span<double* const> params,
                             std::span<const double> analytic, int probe_count, double epsilon, Rng& rng) {
    if (params.size() != analytic.size()) throw UsageError("gradient_check: analytic size mismatch");
    if (params.empty()) throw UsageError("gradient_check: empty parameter set");
    double max_err = 0.0;
    const int n = static_cast<int>(params.size());
    for (int probe = 0; probe < probe_count; ++probe) {
        const int i = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
        double& p = *params[i];
        const double saved = p;
        p = saved + epsilon;
        const double up = loss_fn();
        p = saved - epsilon;
        const double down = loss_fn();
        p = saved;
        const double numeric = (up - down) / (2.0 * epsilon);
        const double a = analytic[i];
        double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
        if (!std::isfinite(err)) err = HUGE_VAL;
        max_err = std::max(max_err, err);
    }
    return max_err;
}

inline Vec softmax(const Vec& logits) {
    const double m = logits.maxCoeff();
    Vec e = (logits.array() - m).exp();
    return e / e.sum();
}

inline Vec log_softmax(const Vec& logits) {
    const double m = logits.maxCoeff();
    const double lse = std::log((logits.array() - m).exp().sum()) + m;
    return logits.array() - lse;
}

// Row-wise variants for batched policy evaluation.
inline Mat softmax_rows(const Mat& logits) {
    Mat out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) out.row(r) = softmax(logits.row(r).transpose()).transpose();
    return out;
}

inline Mat log_softmax_rows(const Mat& logits) {
    Mat out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) out.row(r) = log_softmax(logits.row(r).transpose()).transpose();
    return out;
}

struct CategoricalSample {
    int index;
    double log_prob;
};

// Draw index ~ softmax(logits); deterministic given the generator state.
inline CategoricalSample sample_categorical(const Vec& logits, Rng& rng) {
    if (logits.size() == 0) throw ConfigError("sample_categorical: empty logits");
    if (!logits.allFinite()) throw ConfigError("sample_categorical: non-finite logits");
    const Vec logp = log_softmax(logits);
    const Vec p = logp.array().exp();
    const double u = rng.uniform();
    double acc = 0.0;
    int idx = static_cast<int>(p.size()) - 1;
    for (int k = 0; k < p.size(); ++k) {
        acc += p[k];
        if (u < acc) {
            idx = k;
            break;
        }
    }
    return {idx, logp[idx]};
}

}  // namespace maq
