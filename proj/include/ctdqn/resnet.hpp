#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ctdqn/matrix.hpp"
#include "ctdqn/rng.hpp"

namespace ctdqn {

enum class Activation { relu, tanh_fn };

/// How the network exposes action values: one scalar output with the action
/// fed in as an input (action_in), or one output per discrete action
/// (multi_head).
enum class QMode { action_in, multi_head };

inline double activate(Activation act, double p) {
    return act == Activation::relu ? (p > 0.0 ? p : 0.0) : std::tanh(p);
}

inline double activate_grad(Activation act, double p) {
    if (act == Activation::relu) return p > 0.0 ? 1.0 : 0.0;
    const double th = std::tanh(p);
    return 1.0 - th * th;
}

struct AffineMap {
    Matrix w;
    Vec b;
};

/// One residual update x <- x + a_mat * act(b_mat * x + c_mat * a + bias) * dt.
/// c_mat has zero columns when the action is not fed into the block.
struct ResidualBlockParams {
    Matrix a_mat;
    Matrix b_mat;
    Matrix c_mat;
    Vec bias;
};

/// Architecture description; fixed at construction time.
struct NetArch {
    int state_dim = 1;
    QMode mode = QMode::multi_head;
    int n_actions = 1;   // number of heads (multi_head mode)
    int action_dim = 0;  // action-vector dimension (action_in mode)
    int hidden_dim = 64;
    int n_blocks = 2;
    Activation activation = Activation::relu;
    bool time_feature = false;  // append t / horizon to the input features
    double horizon = 1.0;
    double dt = 1.0;  // residual block scale
    bool action_in_input = false;     // action_in mode: feed a through the input map
    bool zero_init_residual = false;  // start every a_mat at zero (identity network)

    int out_dim() const { return mode == QMode::multi_head ? n_actions : 1; }
    int in_dim() const {
        return state_dim + (time_feature ? 1 : 0) +
               (mode == QMode::action_in && action_in_input ? action_dim : 0);
    }
    /// Width of the action input each block receives via c_mat.
    int block_action_dim() const {
        return (mode == QMode::action_in && !action_in_input) ? action_dim : 0;
    }
};

/// Residual Q-network: affine input map, a chain of residual blocks sharing
/// one hidden width, and an affine head. Evaluation is pure; parameters are
/// only changed through set_params / axpy_params.
struct QNetwork {
    NetArch arch;
    AffineMap input_map;
    std::vector<ResidualBlockParams> blocks;
    AffineMap head;
};

/// Thrown when forward evaluation produces a non-finite value; block_index is
/// -1 for the input map and n_blocks for the head.
class EvaluationError : public std::runtime_error {
public:
    EvaluationError(int block_index, const std::string& what)
        : std::runtime_error(what), block_index(block_index) {}
    int block_index;
};

/// Cached intermediates of one forward pass, sufficient for reverse mode.
/// Replaying forward from (u, a) reproduces q exactly.
struct GradientTape {
    int hidden = 0;
    int n_blocks = -1;
    int out_dim = 0;
    int in_dim = 0;
    Vec u;                 // input features
    Vec a;                 // action fed to the blocks (may be empty)
    std::vector<Vec> x;    // layer states x^0 .. x^L
    std::vector<Vec> pre;  // block pre-activations
    std::vector<Vec> act;  // block activations
    Vec q;                 // recorded output
};

inline size_t param_count(const NetArch& a) {
    const size_t h = static_cast<size_t>(a.hidden_dim);
    size_t n = h * a.in_dim() + h;                                    // input map
    n += static_cast<size_t>(a.n_blocks) * (h * h + h * h + h * a.block_action_dim() + h);
    n += static_cast<size_t>(a.out_dim()) * h + a.out_dim();          // head
    return n;
}

inline size_t param_count(const QNetwork& net) { return param_count(net.arch); }

namespace detail {

template <typename Fn>
void for_each_param_array(QNetwork& net, Fn&& fn) {
    fn(net.input_map.w.data);
    fn(net.input_map.b);
    for (ResidualBlockParams& blk : net.blocks) {
        fn(blk.a_mat.data);
        fn(blk.b_mat.data);
        fn(blk.c_mat.data);
        fn(blk.bias);
    }
    fn(net.head.w.data);
    fn(net.head.b);
}

template <typename Fn>
void for_each_param_array(const QNetwork& net, Fn&& fn) {
    for_each_param_array(const_cast<QNetwork&>(net), [&](Vec& v) { fn(static_cast<const Vec&>(v)); });
}

}  // namespace detail

/// Flattened parameter vector. Order: input w (row major), input b, then per
/// block a_mat, b_mat, c_mat, bias, then head w, head b.
inline Vec get_params(const QNetwork& net) {
    Vec out;
    out.reserve(param_count(net));
    detail::for_each_param_array(net, [&](const Vec& v) { out.insert(out.end(), v.begin(), v.end()); });
    return out;
}

inline void set_params(QNetwork& net, const Vec& p) {
    if (p.size() != param_count(net))
        throw std::invalid_argument("set_params: parameter vector length mismatch");
    size_t pos = 0;
    detail::for_each_param_array(net, [&](Vec& v) {
        std::copy(p.begin() + pos, p.begin() + pos + v.size(), v.begin());
        pos += v.size();
    });
}

/// In-place theta += alpha * delta over the flattened parameter order.
inline void axpy_params(QNetwork& net, double alpha, const Vec& delta) {
    if (delta.size() != param_count(net))
        throw std::invalid_argument("axpy_params: parameter vector length mismatch");
    size_t pos = 0;
    detail::for_each_param_array(net, [&](Vec& v) {
        for (double& vi : v) vi += alpha * delta[pos++];
    });
}

/// Fresh network with every affine map drawn uniform in [-b, b],
/// b = sqrt(6 / (fan_in + fan_out)), and zero biases. Deterministic in seed.
inline QNetwork init_network(const NetArch& arch, uint64_t rng_seed) {
    if (arch.hidden_dim < 1) throw std::invalid_argument("init_network: hidden_dim must be >= 1");
    if (arch.n_blocks < 0) throw std::invalid_argument("init_network: n_blocks must be >= 0");
    if (arch.mode == QMode::multi_head && arch.n_actions < 1)
        throw std::invalid_argument("init_network: multi_head needs n_actions >= 1");
    Rng rng = Rng::stream(rng_seed, Rng::kTagInit, 0);
    auto fill = [&rng](Matrix& m, int fan_in, int fan_out) {
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& v : m.data) v = rng.uniform(-bound, bound);
    };
    const int h = arch.hidden_dim;
    QNetwork net;
    net.arch = arch;
    net.input_map.w = Matrix(h, arch.in_dim());
    net.input_map.b = Vec(static_cast<size_t>(h), 0.0);
    fill(net.input_map.w, arch.in_dim(), h);
    net.blocks.resize(static_cast<size_t>(arch.n_blocks));
    for (ResidualBlockParams& blk : net.blocks) {
        blk.a_mat = Matrix(h, h);
        blk.b_mat = Matrix(h, h);
        blk.c_mat = Matrix(h, arch.block_action_dim());
        blk.bias = Vec(static_cast<size_t>(h), 0.0);
        fill(blk.a_mat, h, h);
        if (arch.zero_init_residual)
            std::fill(blk.a_mat.data.begin(), blk.a_mat.data.end(), 0.0);
        fill(blk.b_mat, h, h);
        if (arch.block_action_dim() > 0) fill(blk.c_mat, arch.block_action_dim(), h);
    }
    net.head.w = Matrix(arch.out_dim(), h);
    net.head.b = Vec(static_cast<size_t>(arch.out_dim()), 0.0);
    fill(net.head.w, h, arch.out_dim());
    return net;
}

/// Builds the input feature vector for (t, s) and, when the map consumes it,
/// the action.
inline Vec input_features(const NetArch& arch, double t, const Vec& s, const Vec& a) {
    Vec u;
    u.reserve(static_cast<size_t>(arch.in_dim()));
    u.insert(u.end(), s.begin(), s.end());
    if (arch.time_feature) u.push_back(t / arch.horizon);
    if (arch.mode == QMode::action_in && arch.action_in_input)
        u.insert(u.end(), a.begin(), a.end());
    return u;
}

/// Forward pass writing all Q outputs into tape.q (one value per head in
/// multi_head mode, a single value in action_in mode). `a` is the action
/// vector in action_in mode and ignored in multi_head mode.
inline void forward_into(const QNetwork& net, double t, const Vec& s, const Vec& a,
                         GradientTape& tape) {
    const NetArch& arch = net.arch;
    if (static_cast<int>(s.size()) != arch.state_dim)
        throw std::invalid_argument("forward: state dimension mismatch");
    const int L = arch.n_blocks;
    tape.hidden = arch.hidden_dim;
    tape.n_blocks = L;
    tape.out_dim = arch.out_dim();
    tape.in_dim = arch.in_dim();
    tape.u = input_features(arch, t, s, a);
    tape.a.clear();
    if (arch.block_action_dim() > 0) {
        if (static_cast<int>(a.size()) != arch.action_dim)
            throw std::invalid_argument("forward: action dimension mismatch");
        tape.a = a;
    }
    tape.x.resize(static_cast<size_t>(L) + 1);
    tape.pre.resize(static_cast<size_t>(L));
    tape.act.resize(static_cast<size_t>(L));

    matvec_into(net.input_map.w, tape.u, tape.x[0]);
    for (int i = 0; i < arch.hidden_dim; ++i) tape.x[0][i] += net.input_map.b[i];
    for (double v : tape.x[0])
        if (!std::isfinite(v)) throw EvaluationError(-1, "forward: non-finite input features");

    for (int l = 0; l < L; ++l) {
        const ResidualBlockParams& blk = net.blocks[static_cast<size_t>(l)];
        Vec& pre = tape.pre[static_cast<size_t>(l)];
        matvec_into(blk.b_mat, tape.x[static_cast<size_t>(l)], pre);
        for (int j = 0; j < arch.hidden_dim; ++j) {
            double acc = pre[j] + blk.bias[j];
            for (int k = 0; k < blk.c_mat.cols; ++k) acc += blk.c_mat(j, k) * tape.a[k];
            pre[j] = acc;
        }
        Vec& y = tape.act[static_cast<size_t>(l)];
        y.assign(pre.size(), 0.0);
        for (size_t j = 0; j < pre.size(); ++j) y[j] = activate(arch.activation, pre[j]);
        Vec& x_next = tape.x[static_cast<size_t>(l) + 1];
        matvec_into(blk.a_mat, y, x_next);
        for (int i = 0; i < arch.hidden_dim; ++i)
            x_next[i] = tape.x[static_cast<size_t>(l)][i] + x_next[i] * arch.dt;
        for (double v : x_next)
            if (!std::isfinite(v))
                throw EvaluationError(l, "forward: non-finite state after block " + std::to_string(l));
    }

    matvec_into(net.head.w, tape.x[static_cast<size_t>(L)], tape.q);
    for (int i = 0; i < arch.out_dim(); ++i) tape.q[i] += net.head.b[i];
    for (double v : tape.q)
        if (!std::isfinite(v)) throw EvaluationError(L, "forward: non-finite head output");
}

/// Convenience forward returning the output vector (and the tape via out-param
/// overload above). In multi_head mode pass a = {}.
inline Vec forward(const QNetwork& net, double t, const Vec& s, const Vec& a = {}) {
    GradientTape tape;
    forward_into(net, t, s, a, tape);
    return tape.q;
}

/// Accumulates the exact gradient of dot(upstream, q) with respect to every
/// parameter into `grad` (flattened order). Set accumulate=false to overwrite.
inline void backward_into(const QNetwork& net, const GradientTape& tape, const Vec& upstream,
                          Vec& grad, bool accumulate = true) {
    const NetArch& arch = net.arch;
    const int h = arch.hidden_dim;
    const int L = arch.n_blocks;
    if (tape.hidden != h || tape.n_blocks != L || tape.out_dim != arch.out_dim() ||
        tape.in_dim != arch.in_dim())
        throw std::invalid_argument("backward: tape does not match this network");
    if (static_cast<int>(upstream.size()) != arch.out_dim())
        throw std::invalid_argument("backward: upstream size must equal the output dimension");
    const size_t n_params = param_count(net);
    if (grad.size() != n_params) grad.assign(n_params, 0.0);
    else if (!accumulate) std::fill(grad.begin(), grad.end(), 0.0);

    // Offsets into the flattened parameter order.
    size_t off_in_w = 0;
    size_t off_in_b = off_in_w + net.input_map.w.size();
    size_t off_blocks = off_in_b + net.input_map.b.size();
    const size_t block_stride =
        L > 0 ? (net.blocks[0].a_mat.size() + net.blocks[0].b_mat.size() +
                 net.blocks[0].c_mat.size() + net.blocks[0].bias.size())
              : 0;
    size_t off_head_w = off_blocks + static_cast<size_t>(L) * block_stride;
    size_t off_head_b = off_head_w + net.head.w.size();

    // Head: q = W x^L + b.
    const Vec& xL = tape.x[static_cast<size_t>(L)];
    Vec dx(static_cast<size_t>(h), 0.0);
    for (int i = 0; i < arch.out_dim(); ++i) {
        const double g = upstream[i];
        grad[off_head_b + static_cast<size_t>(i)] += g;
        const size_t row = off_head_w + static_cast<size_t>(i) * h;
        for (int j = 0; j < h; ++j) {
            grad[row + static_cast<size_t>(j)] += g * xL[j];
            dx[j] += net.head.w(i, j) * g;
        }
    }

    Vec dy(static_cast<size_t>(h));
    Vec dpre(static_cast<size_t>(h));
    for (int l = L - 1; l >= 0; --l) {
        const ResidualBlockParams& blk = net.blocks[static_cast<size_t>(l)];
        const Vec& xl = tape.x[static_cast<size_t>(l)];
        const Vec& pre = tape.pre[static_cast<size_t>(l)];
        const Vec& y = tape.act[static_cast<size_t>(l)];
        const size_t base = off_blocks + static_cast<size_t>(l) * block_stride;
        const size_t off_a = base;
        const size_t off_b_mat = off_a + blk.a_mat.size();
        const size_t off_c = off_b_mat + blk.b_mat.size();
        const size_t off_bias = off_c + blk.c_mat.size();

        // x^{l+1} = x^l + A y dt.
        std::fill(dy.begin(), dy.end(), 0.0);
        for (int i = 0; i < h; ++i) {
            const double gi = dx[i] * arch.dt;
            const size_t row = off_a + static_cast<size_t>(i) * h;
            for (int j = 0; j < h; ++j) {
                grad[row + static_cast<size_t>(j)] += gi * y[j];
                dy[j] += blk.a_mat(i, j) * gi;
            }
        }
        // y = act(pre), pre = B x^l + C a + bias.
        for (int j = 0; j < h; ++j) dpre[j] = dy[j] * activate_grad(arch.activation, pre[j]);
        for (int j = 0; j < h; ++j) {
            const double gj = dpre[j];
            grad[off_bias + static_cast<size_t>(j)] += gj;
            const size_t row = off_b_mat + static_cast<size_t>(j) * h;
            for (int k = 0; k < h; ++k) grad[row + static_cast<size_t>(k)] += gj * xl[k];
            for (int k = 0; k < blk.c_mat.cols; ++k)
                grad[off_c + static_cast<size_t>(j) * blk.c_mat.cols + k] += gj * tape.a[k];
        }
        // Skip connection: dx^l = dx^{l+1} + B^T dpre.
        for (int j = 0; j < h; ++j) {
            const double gj = dpre[j];
            for (int k = 0; k < h; ++k) dx[k] += blk.b_mat(j, k) * gj;
        }
    }

    // Input map: x^0 = W u + b.
    for (int i = 0; i < h; ++i) {
        const double gi = dx[i];
        grad[off_in_b + static_cast<size_t>(i)] += gi;
        const size_t row = off_in_w + static_cast<size_t>(i) * tape.u.size();
        for (size_t j = 0; j < tape.u.size(); ++j) grad[row + j] += gi * tape.u[j];
    }
}

/// Gradient of output head `sel` as a fresh vector.
inline Vec backward(const QNetwork& net, const GradientTape& tape, int sel = 0) {
    Vec upstream(static_cast<size_t>(net.arch.out_dim()), 0.0);
    upstream.at(static_cast<size_t>(sel)) = 1.0;
    Vec grad;
    backward_into(net, tape, upstream, grad, /*accumulate=*/false);
    return grad;
}

struct GradCheckResult {
    double max_rel_error = 0.0;
    int n_excluded = 0;  // parameters skipped because the perturbation crossed a ReLU kink
    int n_checked = 0;
};

/// Central-difference verification of backward for output head `sel`:
/// max over parameters of |analytic - fd| / max(1, |analytic|). For ReLU
/// networks a parameter is excluded (and counted) when the +/- perturbations
/// land on different sides of a kink, where the comparison is ill-posed.
inline GradCheckResult gradient_check(const QNetwork& net, double t, const Vec& s, const Vec& a,
                                      int sel = 0, double fd_step = 1e-5) {
    if (!(fd_step > 0.0)) throw std::invalid_argument("gradient_check: fd_step must be positive");
    GradientTape tape;
    forward_into(net, t, s, a, tape);
    const Vec analytic = backward(net, tape, sel);
    const Vec p0 = get_params(net);
    QNetwork work = net;
    GradientTape tp, tm;
    auto sign_pattern_differs = [&](const GradientTape& lhs, const GradientTape& rhs) {
        for (size_t l = 0; l < lhs.pre.size(); ++l)
            for (size_t j = 0; j < lhs.pre[l].size(); ++j)
                if ((lhs.pre[l][j] > 0.0) != (rhs.pre[l][j] > 0.0)) return true;
        return false;
    };
    GradCheckResult res;
    Vec p = p0;
    for (size_t i = 0; i < p0.size(); ++i) {
        p[i] = p0[i] + fd_step;
        set_params(work, p);
        forward_into(work, t, s, a, tp);
        p[i] = p0[i] - fd_step;
        set_params(work, p);
        forward_into(work, t, s, a, tm);
        p[i] = p0[i];
        if (net.arch.activation == Activation::relu && sign_pattern_differs(tp, tm)) {
            ++res.n_excluded;
            continue;
        }
        const double fd = (tp.q[static_cast<size_t>(sel)] - tm.q[static_cast<size_t>(sel)]) /
                          (2.0 * fd_step);
        const double rel = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
        res.max_rel_error = std::max(res.max_rel_error, rel);
        ++res.n_checked;
    }
    set_params(work, p0);
    return res;
}

/// Frobenius-norm product bound on the Lipschitz constant of the map from
/// input features to outputs (activation Lipschitz constant 1).
inline double lipschitz_bound(const QNetwork& net) {
    double bound = frobenius_norm(net.input_map.w);
    for (const ResidualBlockParams& blk : net.blocks)
        bound *= 1.0 + std::abs(net.arch.dt) * frobenius_norm(blk.a_mat) * frobenius_norm(blk.b_mat);
    return bound * frobenius_norm(net.head.w);
}

/// Joint network evaluating both inputs side by side: outputs are the
/// concatenation of the two parts, exactly (block-diagonal embedding; the
/// shallower chain is padded with inert zero blocks). Both parts must expose
/// stacked outputs (multi_head) and share input signature, activation and
/// block scale.
inline QNetwork concat_networks(const QNetwork& n1, const QNetwork& n2) {
    const NetArch& a1 = n1.arch;
    const NetArch& a2 = n2.arch;
    if (a1.mode != QMode::multi_head || a2.mode != QMode::multi_head)
        throw std::invalid_argument("concat_networks: both parts must have stacked outputs");
    if (a1.state_dim != a2.state_dim || a1.time_feature != a2.time_feature ||
        a1.in_dim() != a2.in_dim())
        throw std::invalid_argument("concat_networks: input signatures differ");
    if (a1.activation != a2.activation)
        throw std::invalid_argument("concat_networks: activations differ");
    if (a1.dt != a2.dt) throw std::invalid_argument("concat_networks: block scales differ");
    if (a1.time_feature && a1.horizon != a2.horizon)
        throw std::invalid_argument("concat_networks: time normalizations differ");

    const int h1 = a1.hidden_dim, h2 = a2.hidden_dim;
    const int h = h1 + h2;
    const int L = std::max(a1.n_blocks, a2.n_blocks);
    const int out1 = a1.out_dim(), out2 = a2.out_dim();
    const int out = out1 + out2;
    NetArch arch = a1;
    arch.hidden_dim = h;
    arch.n_blocks = L;
    arch.n_actions = out;
    QNetwork net;
    net.arch = arch;

    const int in_total = a1.in_dim();
    net.input_map.w = Matrix(h, in_total);
    net.input_map.b = Vec(static_cast<size_t>(h), 0.0);
    for (int i = 0; i < h1; ++i)
        for (int j = 0; j < in_total; ++j) net.input_map.w(i, j) = n1.input_map.w(i, j);
    for (int i = 0; i < h2; ++i)
        for (int j = 0; j < in_total; ++j) net.input_map.w(h1 + i, j) = n2.input_map.w(i, j);
    for (int i = 0; i < h1; ++i) net.input_map.b[static_cast<size_t>(i)] = n1.input_map.b[i];
    for (int i = 0; i < h2; ++i) net.input_map.b[static_cast<size_t>(h1 + i)] = n2.input_map.b[i];

    net.blocks.resize(static_cast<size_t>(L));
    for (int l = 0; l < L; ++l) {
        ResidualBlockParams& blk = net.blocks[static_cast<size_t>(l)];
        blk.a_mat = Matrix(h, h);
        blk.b_mat = Matrix(h, h);
        blk.c_mat = Matrix(h, 0);
        blk.bias = Vec(static_cast<size_t>(h), 0.0);
        if (l < a1.n_blocks) {
            const ResidualBlockParams& src = n1.blocks[static_cast<size_t>(l)];
            for (int i = 0; i < h1; ++i)
                for (int j = 0; j < h1; ++j) {
                    blk.a_mat(i, j) = src.a_mat(i, j);
                    blk.b_mat(i, j) = src.b_mat(i, j);
                }
            for (int i = 0; i < h1; ++i) blk.bias[static_cast<size_t>(i)] = src.bias[i];
        }
        if (l < a2.n_blocks) {
            const ResidualBlockParams& src = n2.blocks[static_cast<size_t>(l)];
            for (int i = 0; i < h2; ++i)
                for (int j = 0; j < h2; ++j) {
                    blk.a_mat(h1 + i, h1 + j) = src.a_mat(i, j);
                    blk.b_mat(h1 + i, h1 + j) = src.b_mat(i, j);
                }
            for (int i = 0; i < h2; ++i) blk.bias[static_cast<size_t>(h1 + i)] = src.bias[i];
        }
    }

    net.head.w = Matrix(out, h);
    net.head.b = Vec(static_cast<size_t>(out), 0.0);
    for (int i = 0; i < out1; ++i) {
        for (int j = 0; j < h1; ++j) net.head.w(i, j) = n1.head.w(i, j);
        net.head.b[static_cast<size_t>(i)] = n1.head.b[i];
    }
    for (int i = 0; i < out2; ++i) {
        for (int j = 0; j < h2; ++j) net.head.w(out1 + i, h1 + j) = n2.head.w(i, j);
        net.head.b[static_cast<size_t>(out1 + i)] = n2.head.b[i];
    }
    return net;
}

}  // namespace ctdqn
