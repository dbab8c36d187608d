#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "weimix/config.hpp"
#include "weimix/errors.hpp"
#include "weimix/matrix.hpp"
#include "weimix/mixloss.hpp"
#include "weimix/rng.hpp"

namespace weimix {

/// Layer sizes. The trunk is three fully connected layers with one batch
/// normalization after the first; each head is two fully connected layers
/// with batch normalization after the first, then a linear projection to its
/// output units. The classification head exists only for p > 1.
struct Architecture {
    std::size_t input_dim = 1;
    std::size_t p = 1;
    std::array<std::size_t, 3> trunk = {128, 64, 32};
    std::array<std::size_t, 2> head = {16, 8};

    bool has_clf() const { return p > 1; }

    void validate() const {
        if (input_dim < 1) throw std::invalid_argument("Architecture: input_dim must be >= 1");
        if (p < 1) throw std::invalid_argument("Architecture: p must be >= 1");
        for (std::size_t s : trunk)
            if (s < 1) throw std::invalid_argument("Architecture: trunk sizes must be >= 1");
        for (std::size_t s : head)
            if (s < 1) throw std::invalid_argument("Architecture: head sizes must be >= 1");
    }
};

struct Linear {
    Matrix w;               // (in, out)
    std::vector<double> b;  // (out)

    Linear() = default;
    Linear(std::size_t in, std::size_t out) : w(in, out), b(out, 0.0) {}
};

struct BatchNorm {
    std::vector<double> scale, shift, running_mean, running_var;
    double momentum = 0.9;  // weight kept on the previous running value
    double eps = 1e-5;

    BatchNorm() = default;
    explicit BatchNorm(std::size_t m)
        : scale(m, 1.0), shift(m, 0.0), running_mean(m, 0.0), running_var(m, 1.0) {}

    std::size_t width() const { return scale.size(); }
};

struct NetworkModel {
    Architecture arch;
    double eta_epsilon = kDefaultEtaEpsilon;

    Linear fc1, fc2, fc3;  // trunk
    BatchNorm bn1;
    Linear reg1, reg2, reg_out;  // regression head, reg_out emits 2p units
    BatchNorm reg_bn;
    Linear clf1, clf2, clf_out;  // classification head (empty when p = 1)
    BatchNorm clf_bn;
};

namespace detail {

inline void init_linear(Linear& l, Rng& rng) {
    const double s = std::sqrt(2.0 / static_cast<double>(l.w.rows()));
    for (double& v : l.w.storage()) v = rng.normal() * s;
    std::fill(l.b.begin(), l.b.end(), 0.0);
}

}  // namespace detail

/// Fan-in-scaled normal weights, zero biases. Initialization order is fixed
/// (trunk, regression head, classification head) so a seed pins the model.
inline NetworkModel make_model(const Architecture& arch, Rng& rng,
                               double eta_epsilon = kDefaultEtaEpsilon) {
    arch.validate();
    if (!(eta_epsilon > 0.0)) throw std::invalid_argument("make_model: eta_epsilon must be > 0");
    NetworkModel m;
    m.arch = arch;
    m.eta_epsilon = eta_epsilon;
    m.fc1 = Linear(arch.input_dim, arch.trunk[0]);
    m.fc2 = Linear(arch.trunk[0], arch.trunk[1]);
    m.fc3 = Linear(arch.trunk[1], arch.trunk[2]);
    m.bn1 = BatchNorm(arch.trunk[0]);
    m.reg1 = Linear(arch.trunk[2], arch.head[0]);
    m.reg2 = Linear(arch.head[0], arch.head[1]);
    m.reg_out = Linear(arch.head[1], 2 * arch.p);
    m.reg_bn = BatchNorm(arch.head[0]);
    detail::init_linear(m.fc1, rng);
    detail::init_linear(m.fc2, rng);
    detail::init_linear(m.fc3, rng);
    detail::init_linear(m.reg1, rng);
    detail::init_linear(m.reg2, rng);
    detail::init_linear(m.reg_out, rng);
    if (arch.has_clf()) {
        m.clf1 = Linear(arch.trunk[2], arch.head[0]);
        m.clf2 = Linear(arch.head[0], arch.head[1]);
        m.clf_out = Linear(arch.head[1], arch.p);
        m.clf_bn = BatchNorm(arch.head[0]);
        detail::init_linear(m.clf1, rng);
        detail::init_linear(m.clf2, rng);
        detail::init_linear(m.clf_out, rng);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Layer primitives
// ---------------------------------------------------------------------------

namespace detail {

inline void check_finite(const Matrix& m, const char* block) {
    for (double v : m.storage())
        if (!std::isfinite(v))
            throw TrainingDivergedError(std::string("non-finite activation in ") + block, 0, block);
}

inline void linear_forward(const Linear& l, const Matrix& x, Matrix& y) {
    matmul(x, l.w, y);
    for (std::size_t i = 0; i < y.rows(); ++i) {
        double* yi = y.row(i);
        for (std::size_t j = 0; j < y.cols(); ++j) yi[j] += l.b[j];
    }
}

inline void relu_inplace(Matrix& m) {
    for (double& v : m.storage()) v = v > 0.0 ? v : 0.0;
}

/// d := d .* (activated > 0). Subgradient at 0 is 0.
inline void relu_backward_inplace(const Matrix& activated, Matrix& d) {
    const double* a = activated.data();
    double* g = d.data();
    const std::size_t len = activated.rows() * activated.cols();
    for (std::size_t i = 0; i < len; ++i)
        if (!(a[i] > 0.0)) g[i] = 0.0;
}

}  // namespace detail

/// Batch statistics retained by the training forward for backpropagation.
struct BnCache {
    Matrix xhat;                   // normalized pre-affine activations
    std::vector<double> inv_std;   // 1 / sqrt(batch_var + eps)
};

/// Normalize activations. Training mode uses biased batch statistics, updates
/// the running statistics in place, and requires n >= 2; inference mode uses
/// the stored running statistics and leaves the layer untouched.
inline Matrix batchnorm_forward(BatchNorm& bn, const Matrix& a, bool training,
                                BnCache* cache = nullptr) {
    const std::size_t n = a.rows(), m = a.cols();
    if (m != bn.width()) throw std::invalid_argument("batchnorm_forward: width mismatch");
    Matrix y(n, m);
    if (!training) {
        for (std::size_t j = 0; j < m; ++j) {
            const double inv = 1.0 / std::sqrt(bn.running_var[j] + bn.eps);
            for (std::size_t i = 0; i < n; ++i)
                y(i, j) = bn.scale[j] * ((a(i, j) - bn.running_mean[j]) * inv) + bn.shift[j];
        }
        return y;
    }
    if (n < 2) throw BatchTooSmallError("batchnorm_forward: training mode needs a batch of at least 2");
    std::vector<double> mean(m, 0.0), var(m, 0.0), inv_std(m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) mean[j] += a(i, j);
    for (std::size_t j = 0; j < m; ++j) mean[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const double d = a(i, j) - mean[j];
            var[j] += d * d;
        }
    for (std::size_t j = 0; j < m; ++j) {
        var[j] /= static_cast<double>(n);
        inv_std[j] = 1.0 / std::sqrt(var[j] + bn.eps);
    }
    Matrix xhat(n, m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            xhat(i, j) = (a(i, j) - mean[j]) * inv_std[j];
            y(i, j) = bn.scale[j] * xhat(i, j) + bn.shift[j];
        }
    for (std::size_t j = 0; j < m; ++j) {
        bn.running_mean[j] = bn.momentum * bn.running_mean[j] + (1.0 - bn.momentum) * mean[j];
        bn.running_var[j] = bn.momentum * bn.running_var[j] + (1.0 - bn.momentum) * var[j];
    }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

inline Matrix batchnorm_infer(const BatchNorm& bn, const Matrix& a) {
    return batchnorm_forward(const_cast<BatchNorm&>(bn), a, false, nullptr);
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

/// Intermediates held for backward. Matrices suffixed _a are post-rectifier.
struct ForwardCache {
    Matrix x;
    Matrix t1;  // fc1 output
    BnCache bn1;
    Matrix t1_a;       // relu(bn1)
    Matrix t2, t2_a;   // fc2, relu
    Matrix t3, t3_a;   // fc3, relu -> latent z
    Matrix r1;         // reg1 output
    BnCache reg_bn;
    Matrix r1_a, r2, r2_a;
    Matrix c1;  // clf head (p > 1 only)
    BnCache clf_bn;
    Matrix c1_a, c2, c2_a;
    std::size_t n = 0;
};

struct ForwardResult {
    HeadOutputs raw;
    BatchParams params;
};

namespace detail {

template <bool Training>
inline ForwardResult forward_impl(NetworkModel& model, const Matrix& x, ForwardCache* cache) {
    if (x.cols() != model.arch.input_dim)
        throw std::invalid_argument("forward: input width does not match the model");
    for (double v : x.storage())
        if (!std::isfinite(v)) throw std::invalid_argument("forward: input must be finite");
    const std::size_t p = model.arch.p;

    Matrix t1;
    linear_forward(model.fc1, x, t1);
    check_finite(t1, "fc1");
    Matrix t1_a = batchnorm_forward(model.bn1, t1, Training, cache ? &cache->bn1 : nullptr);
    check_finite(t1_a, "bn1");
    relu_inplace(t1_a);
    Matrix t2;
    linear_forward(model.fc2, t1_a, t2);
    check_finite(t2, "fc2");
    Matrix t2_a = t2;
    relu_inplace(t2_a);
    Matrix t3;
    linear_forward(model.fc3, t2_a, t3);
    check_finite(t3, "fc3");
    Matrix t3_a = t3;
    relu_inplace(t3_a);

    Matrix r1;
    linear_forward(model.reg1, t3_a, r1);
    check_finite(r1, "reg1");
    Matrix r1_a = batchnorm_forward(model.reg_bn, r1, Training, cache ? &cache->reg_bn : nullptr);
    check_finite(r1_a, "reg_bn");
    relu_inplace(r1_a);
    Matrix r2;
    linear_forward(model.reg2, r1_a, r2);
    check_finite(r2, "reg2");
    Matrix r2_a = r2;
    relu_inplace(r2_a);
    Matrix reg_raw;
    linear_forward(model.reg_out, r2_a, reg_raw);
    check_finite(reg_raw, "reg_out");

    ForwardResult out;
    const std::size_t n = x.rows();
    out.raw.beta_raw = Matrix(n, p);
    out.raw.eta_raw = Matrix(n, p);
    // reg_out columns [0, p) carry the beta path, [p, 2p) the eta path.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < p; ++k) {
            out.raw.beta_raw(i, k) = reg_raw(i, k);
            out.raw.eta_raw(i, k) = reg_raw(i, p + k);
        }

    Matrix c1, c1_a, c2, c2_a;
    if (model.arch.has_clf()) {
        linear_forward(model.clf1, t3_a, c1);
        check_finite(c1, "clf1");
        c1_a = batchnorm_forward(model.clf_bn, c1, Training, cache ? &cache->clf_bn : nullptr);
        check_finite(c1_a, "clf_bn");
        relu_inplace(c1_a);
        linear_forward(model.clf2, c1_a, c2);
        check_finite(c2, "clf2");
        c2_a = c2;
        relu_inplace(c2_a);
        linear_forward(model.clf_out, c2_a, out.raw.alpha_logits);
        check_finite(out.raw.alpha_logits, "clf_out");
    }

    out.params = apply_output_activations(out.raw, model.eta_epsilon);

    if (cache) {
        cache->x = x;
        cache->t1 = std::move(t1);
        cache->t1_a = std::move(t1_a);
        cache->t2 = std::move(t2);
        cache->t2_a = std::move(t2_a);
        cache->t3 = std::move(t3);
        cache->t3_a = std::move(t3_a);
        cache->r1 = std::move(r1);
        cache->r1_a = std::move(r1_a);
        cache->r2 = std::move(r2);
        cache->r2_a = std::move(r2_a);
        cache->c1 = std::move(c1);
        cache->c1_a = std::move(c1_a);
        cache->c2 = std::move(c2);
        cache->c2_a = std::move(c2_a);
        cache->n = n;
    }
    return out;
}

}  // namespace detail

/// Inference-mode forward: running statistics, no mutation, no cache.
inline ForwardResult forward(const NetworkModel& model, const Matrix& x) {
    return detail::forward_impl<false>(const_cast<NetworkModel&>(model), x, nullptr);
}

/// Training-mode forward: batch statistics, running-statistics update, cache
/// retained for backward.
inline ForwardResult forward(NetworkModel& model, const Matrix& x, ForwardCache& cache) {
    return detail::forward_impl<true>(model, x, &cache);
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

struct LinearGrads {
    Matrix w;
    std::vector<double> b;
};

struct BnGrads {
    std::vector<double> scale, shift;
};

struct ModelGrads {
    LinearGrads fc1, fc2, fc3, reg1, reg2, reg_out, clf1, clf2, clf_out;
    BnGrads bn1, reg_bn, clf_bn;
};

namespace detail {

inline void zero_like(const Linear& l, LinearGrads& g) {
    g.w = Matrix(l.w.rows(), l.w.cols());
    g.b.assign(l.b.size(), 0.0);
}

inline void zero_like(const BatchNorm& bn, BnGrads& g) {
    g.scale.assign(bn.width(), 0.0);
    g.shift.assign(bn.width(), 0.0);
}

inline void linear_backward(const Linear& l, const Matrix& input, const Matrix& dy,
                            LinearGrads& g, Matrix* dx) {
    matmul_at(input, dy, g.w);
    g.b.assign(l.b.size(), 0.0);
    for (std::size_t i = 0; i < dy.rows(); ++i) {
        const double* di = dy.row(i);
        for (std::size_t j = 0; j < dy.cols(); ++j) g.b[j] += di[j];
    }
    if (dx) matmul_bt(dy, l.w, *dx);
}

/// Standard batch-norm backward over the cached batch statistics.
inline void batchnorm_backward(const BatchNorm& bn, const BnCache& cache, const Matrix& dy,
                               BnGrads& g, Matrix& dx) {
    const std::size_t n = dy.rows(), m = dy.cols();
    g.scale.assign(m, 0.0);
    g.shift.assign(m, 0.0);
    std::vector<double> sum_dxhat(m, 0.0), sum_dxhat_xhat(m, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const double d = dy(i, j);
            g.scale[j] += d * cache.xhat(i, j);
            g.shift[j] += d;
            const double dxhat = d * bn.scale[j];
            sum_dxhat[j] += dxhat;
            sum_dxhat_xhat[j] += dxhat * cache.xhat(i, j);
        }
    if (dx.rows() != n || dx.cols() != m) dx = Matrix(n, m);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const double dxhat = dy(i, j) * bn.scale[j];
            dx(i, j) = cache.inv_std[j] *
                       (dxhat - inv_n * sum_dxhat[j] - cache.xhat(i, j) * inv_n * sum_dxhat_xhat[j]);
        }
}

}  // namespace detail

inline ModelGrads make_zero_grads(const NetworkModel& model) {
    ModelGrads g;
    detail::zero_like(model.fc1, g.fc1);
    detail::zero_like(model.fc2, g.fc2);
    detail::zero_like(model.fc3, g.fc3);
    detail::zero_like(model.bn1, g.bn1);
    detail::zero_like(model.reg1, g.reg1);
    detail::zero_like(model.reg2, g.reg2);
    detail::zero_like(model.reg_out, g.reg_out);
    detail::zero_like(model.reg_bn, g.reg_bn);
    if (model.arch.has_clf()) {
        detail::zero_like(model.clf1, g.clf1);
        detail::zero_like(model.clf2, g.clf2);
        detail::zero_like(model.clf_out, g.clf_out);
        detail::zero_like(model.clf_bn, g.clf_bn);
    }
    return g;
}

/// Backpropagate mixloss gradients (with respect to the raw head outputs)
/// through both heads and the trunk. The cache must come from the matching
/// training-mode forward call.
inline ModelGrads backward(const NetworkModel& model, const ForwardCache& cache,
                           const HeadOutputs& output_grads) {
    const std::size_t n = cache.n, p = model.arch.p;
    if (n == 0 || cache.x.rows() != n)
        throw std::logic_error("backward: cache does not correspond to a training forward");
    if (output_grads.beta_raw.rows() != n || output_grads.beta_raw.cols() != p)
        throw std::logic_error("backward: output gradient shape mismatch");

    ModelGrads g = make_zero_grads(model);

    // Regression head.
    Matrix d_reg_raw(n, 2 * p);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < p; ++k) {
            d_reg_raw(i, k) = output_grads.beta_raw(i, k);
            d_reg_raw(i, p + k) = output_grads.eta_raw(i, k);
        }
    Matrix d_r2_a;
    detail::linear_backward(model.reg_out, cache.r2_a, d_reg_raw, g.reg_out, &d_r2_a);
    detail::relu_backward_inplace(cache.r2_a, d_r2_a);
    Matrix d_r1_a;
    detail::linear_backward(model.reg2, cache.r1_a, d_r2_a, g.reg2, &d_r1_a);
    detail::relu_backward_inplace(cache.r1_a, d_r1_a);
    Matrix d_r1;
    detail::batchnorm_backward(model.reg_bn, cache.reg_bn, d_r1_a, g.reg_bn, d_r1);
    Matrix dz_reg;
    detail::linear_backward(model.reg1, cache.t3_a, d_r1, g.reg1, &dz_reg);

    // Classification head.
    Matrix dz(n, model.arch.trunk[2]);
    dz = dz_reg;
    if (model.arch.has_clf()) {
        if (output_grads.alpha_logits.rows() != n || output_grads.alpha_logits.cols() != p)
            throw std::logic_error("backward: alpha_logits gradient shape mismatch");
        Matrix d_c2_a;
        detail::linear_backward(model.clf_out, cache.c2_a, output_grads.alpha_logits, g.clf_out, &d_c2_a);
        detail::relu_backward_inplace(cache.c2_a, d_c2_a);
        Matrix d_c1_a;
        detail::linear_backward(model.clf2, cache.c1_a, d_c2_a, g.clf2, &d_c1_a);
        detail::relu_backward_inplace(cache.c1_a, d_c1_a);
        Matrix d_c1;
        detail::batchnorm_backward(model.clf_bn, cache.clf_bn, d_c1_a, g.clf_bn, d_c1);
        Matrix dz_clf;
        detail::linear_backward(model.clf1, cache.t3_a, d_c1, g.clf1, &dz_clf);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < dz.cols(); ++j) dz(i, j) += dz_clf(i, j);
    }

    // Trunk.
    detail::relu_backward_inplace(cache.t3_a, dz);
    Matrix d_t2_a;
    detail::linear_backward(model.fc3, cache.t2_a, dz, g.fc3, &d_t2_a);
    detail::relu_backward_inplace(cache.t2_a, d_t2_a);
    Matrix d_t1_a;
    detail::linear_backward(model.fc2, cache.t1_a, d_t2_a, g.fc2, &d_t1_a);
    detail::relu_backward_inplace(cache.t1_a, d_t1_a);
    Matrix d_t1;
    detail::batchnorm_backward(model.bn1, cache.bn1, d_t1_a, g.bn1, d_t1);
    detail::linear_backward(model.fc1, cache.x, d_t1, g.fc1, nullptr);
    return g;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct OptimizerState {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t step = 0;
    ModelGrads m, v;  // first and second moments, shaped like the parameters
};

inline OptimizerState make_optimizer(const NetworkModel& model, double learning_rate = 1e-4) {
    OptimizerState s;
    s.learning_rate = learning_rate;
    s.m = make_zero_grads(model);
    s.v = make_zero_grads(model);
    return s;
}

namespace detail {

inline void adam_update(std::vector<double>& w, std::vector<double>& m, std::vector<double>& v,
                        const std::vector<double>& g, const OptimizerState& st, double bc1,
                        double bc2) {
    for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
        v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
        w[i] -= st.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + st.eps);
    }
}

}  // namespace detail

/// One bias-corrected Adam update over every trainable tensor.
inline void adam_step(NetworkModel& model, OptimizerState& st, const ModelGrads& g) {
    st.step += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    auto upd = [&](std::vector<double>& w, std::vector<double>& m, std::vector<double>& v,
                   const std::vector<double>& gg) { detail::adam_update(w, m, v, gg, st, bc1, bc2); };
    auto upd_lin = [&](Linear& l, LinearGrads& m, LinearGrads& v, const LinearGrads& gg) {
        upd(l.w.storage(), m.w.storage(), v.w.storage(), gg.w.storage());
        upd(l.b, m.b, v.b, gg.b);
    };
    auto upd_bn = [&](BatchNorm& l, BnGrads& m, BnGrads& v, const BnGrads& gg) {
        upd(l.scale, m.scale, v.scale, gg.scale);
        upd(l.shift, m.shift, v.shift, gg.shift);
    };
    upd_lin(model.fc1, st.m.fc1, st.v.fc1, g.fc1);
    upd_bn(model.bn1, st.m.bn1, st.v.bn1, g.bn1);
    upd_lin(model.fc2, st.m.fc2, st.v.fc2, g.fc2);
    upd_lin(model.fc3, st.m.fc3, st.v.fc3, g.fc3);
    upd_lin(model.reg1, st.m.reg1, st.v.reg1, g.reg1);
    upd_bn(model.reg_bn, st.m.reg_bn, st.v.reg_bn, g.reg_bn);
    upd_lin(model.reg2, st.m.reg2, st.v.reg2, g.reg2);
    upd_lin(model.reg_out, st.m.reg_out, st.v.reg_out, g.reg_out);
    if (model.arch.has_clf()) {
        upd_lin(model.clf1, st.m.clf1, st.v.clf1, g.clf1);
        upd_bn(model.clf_bn, st.m.clf_bn, st.v.clf_bn, g.clf_bn);
        upd_lin(model.clf2, st.m.clf2, st.v.clf2, g.clf2);
        upd_lin(model.clf_out, st.m.clf_out, st.v.clf_out, g.clf_out);
    }
}

/// Visit every trainable tensor as (name, vector<double>&), fixed order.
/// Gradient structures share the layout, so tests can walk both in lockstep.
template <typename F>
inline void for_each_parameter(NetworkModel& model, F&& f) {
    f("fc1.w", model.fc1.w.storage());
    f("fc1.b", model.fc1.b);
    f("bn1.scale", model.bn1.scale);
    f("bn1.shift", model.bn1.shift);
    f("fc2.w", model.fc2.w.storage());
    f("fc2.b", model.fc2.b);
    f("fc3.w", model.fc3.w.storage());
    f("fc3.b", model.fc3.b);
    f("reg1.w", model.reg1.w.storage());
    f("reg1.b", model.reg1.b);
    f("reg_bn.scale", model.reg_bn.scale);
    f("reg_bn.shift", model.reg_bn.shift);
    f("reg2.w", model.reg2.w.storage());
    f("reg2.b", model.reg2.b);
    f("reg_out.w", model.reg_out.w.storage());
    f("reg_out.b", model.reg_out.b);
    if (model.arch.has_clf()) {
        f("clf1.w", model.clf1.w.storage());
        f("clf1.b", model.clf1.b);
        f("clf_bn.scale", model.clf_bn.scale);
        f("clf_bn.shift", model.clf_bn.shift);
        f("clf2.w", model.clf2.w.storage());
        f("clf2.b", model.clf2.b);
        f("clf_out.w", model.clf_out.w.storage());
        f("clf_out.b", model.clf_out.b);
    }
}

template <typename F>
inline void for_each_gradient(ModelGrads& g, bool has_clf, F&& f) {
    f("fc1.w", g.fc1.w.storage());
    f("fc1.b", g.fc1.b);
    f("bn1.scale", g.bn1.scale);
    f("bn1.shift", g.bn1.shift);
    f("fc2.w", g.fc2.w.storage());
    f("fc2.b", g.fc2.b);
    f("fc3.w", g.fc3.w.storage());
    f("fc3.b", g.fc3.b);
    f("reg1.w", g.reg1.w.storage());
    f("reg1.b", g.reg1.b);
    f("reg_bn.scale", g.reg_bn.scale);
    f("reg_bn.shift", g.reg_bn.shift);
    f("reg2.w", g.reg2.w.storage());
    f("reg2.b", g.reg2.b);
    f("reg_out.w", g.reg_out.w.storage());
    f("reg_out.b", g.reg_out.b);
    if (has_clf) {
        f("clf1.w", g.clf1.w.storage());
        f("clf1.b", g.clf1.b);
        f("clf_bn.scale", g.clf_bn.scale);
        f("clf_bn.shift", g.clf_bn.shift);
        f("clf2.w", g.clf2.w.storage());
        f("clf2.b", g.clf2.b);
        f("clf_out.w", g.clf_out.w.storage());
        f("clf_out.b", g.clf_out.b);
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// A ready-to-train slice of a dataset: standardized covariates, times in
/// original units, censoring indicators, and the likelihood's censoring rule.
struct TrainingData {
    Matrix x;
    std::vector<double> times;
    std::vector<int> deltas;
    CensoringSpec censoring;

    std::size_t n() const { return times.size(); }

    void validate() const {
        if (x.rows() != times.size() || deltas.size() != times.size())
            throw std::invalid_argument("TrainingData: row counts disagree");
        censoring.validate();
        for (std::size_t i = 0; i < times.size(); ++i) {
            if (!std::isfinite(times[i]) || !(times[i] > 0.0))
                throw std::invalid_argument("TrainingData: times must be positive and finite");
            if (deltas[i] != 0 && deltas[i] != 1)
                throw std::invalid_argument("TrainingData: deltas must be 0 or 1");
        }
    }
};

struct EpochStats {
    std::size_t epoch = 0;
    double train_nll = 0.0;  // sum of batch losses seen this epoch
    double val_nll = 0.0;    // inference-mode loss on the validation set
};

struct TrainResult {
    NetworkModel model;  // snapshot with the best validation loss
    std::vector<EpochStats> trace;
    std::size_t best_epoch = 0;
    double best_val_nll = std::numeric_limits<double>::infinity();
    std::size_t invariant_violations = 0;  // rows breaking beta/eta/alpha constraints
};

/// Rows whose activated parameters escape the admissible region. The offsets
/// make this structurally impossible, so any nonzero count is a defect.
inline std::size_t count_invariant_violations(const BatchParams& params, double eta_epsilon) {
    std::size_t bad = 0;
    for (std::size_t i = 0; i < params.n(); ++i) {
        bool ok = true;
        double sum = 0.0;
        for (std::size_t k = 0; k < params.p(); ++k) {
            if (!(params.beta(i, k) > 1.0)) ok = false;
            if (!(params.eta(i, k) > eta_epsilon)) ok = false;
            sum += params.alpha(i, k);
        }
        if (std::abs(sum - 1.0) > 1e-6) ok = false;
        if (!ok) ++bad;
    }
    return bad;
}

/// Inference-mode loss of a model on a data slice.
inline double evaluate_nll(const NetworkModel& model, const TrainingData& data) {
    data.validate();
    const ForwardResult f = forward(model, data.x);
    return negative_log_likelihood(f.params, data.times, data.deltas, data.censoring);
}

/// Minibatch training: forward, analytic loss gradients, backward, Adam.
/// Tracks per-epoch training and validation loss, keeps the snapshot with the
/// best validation loss, and stops after `patience` epochs without
/// improvement. Deterministic for a fixed seed. Throws TrainingDivergedError
/// with the epoch index if any loss or activation becomes non-finite.
/// learning_rate = 0 is allowed here (the run is then a no-op on parameters);
/// the command-line layer enforces the stricter > 0 rule.
inline TrainResult train(const TrainingData& tr, const TrainingData& val, const TrainConfig& cfg) {
    tr.validate();
    val.validate();
    if (tr.n() < 2) throw BatchTooSmallError("train: need at least 2 training rows");
    if (val.n() < 1) throw std::invalid_argument("train: validation set must be nonempty");
    if (val.x.cols() != tr.x.cols()) throw std::invalid_argument("train: feature widths disagree");
    if (cfg.p < 1) throw ConfigError("train: p must be >= 1");
    if (cfg.batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
    if (cfg.max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
    if (cfg.patience < 1) throw ConfigError("train: patience must be >= 1");
    if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate))
        throw ConfigError("train: learning_rate must be finite and >= 0");
    if (!(cfg.offset_epsilon > 0.0)) throw ConfigError("train: offset_epsilon must be > 0");

    Rng rng(cfg.seed);
    Architecture arch;
    arch.input_dim = tr.x.cols();
    arch.p = cfg.p;
    NetworkModel model = make_model(arch, rng, cfg.offset_epsilon);
    OptimizerState opt = make_optimizer(model, cfg.learning_rate);

    TrainResult out;
    out.model = model;

    std::vector<std::size_t> order(tr.n());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    Matrix bx;
    std::vector<double> btimes;
    std::vector<int> bdeltas;
    std::size_t since_best = 0;
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        try {
            for (std::size_t start = 0; start < tr.n(); start += cfg.batch_size) {
                const std::size_t bsize = std::min(cfg.batch_size, tr.n() - start);
                if (bsize < 2) continue;  // batch normalization cannot run on one row
                bx = Matrix(bsize, tr.x.cols());
                btimes.resize(bsize);
                bdeltas.resize(bsize);
                for (std::size_t r = 0; r < bsize; ++r) {
                    const std::size_t src = order[start + r];
                    const double* row = tr.x.row(src);
                    std::copy(row, row + tr.x.cols(), bx.row(r));
                    btimes[r] = tr.times[src];
                    bdeltas[r] = tr.deltas[src];
                }
                ForwardCache cache;
                const ForwardResult f = forward(model, bx, cache);
                out.invariant_violations += count_invariant_violations(f.params, model.eta_epsilon);
                const NllGradients grads =
                    nll_gradients(f.raw, btimes, bdeltas, tr.censoring, model.eta_epsilon);
                if (!std::isfinite(grads.value))
                    throw TrainingDivergedError("non-finite training loss", epoch, "loss");
                epoch_loss += grads.value;
                const ModelGrads pg = backward(model, cache, grads.grads);
                adam_step(model, opt, pg);
            }
            const ForwardResult vf = forward(static_cast<const NetworkModel&>(model), val.x);
            out.invariant_violations += count_invariant_violations(vf.params, model.eta_epsilon);
            const double val_nll =
                negative_log_likelihood(vf.params, val.times, val.deltas, val.censoring);
            if (!std::isfinite(val_nll))
                throw TrainingDivergedError("non-finite validation loss", epoch, "validation");
            out.trace.push_back({epoch, epoch_loss, val_nll});
            if (val_nll < out.best_val_nll) {
                out.best_val_nll = val_nll;
                out.best_epoch = epoch;
                out.model = model;
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                break;
            }
        } catch (const TrainingDivergedError& e) {
            throw TrainingDivergedError(e.what(), epoch, e.block);
        }
    }
    return out;
}

}  // namespace weimix
