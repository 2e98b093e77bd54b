#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ctdqn/resnet.hpp"
#include "ctdqn/rng.hpp"

namespace ctdqn {

/// Scalar target defined on a compact box.
using BoxTarget = std::function<double(const Vec&)>;

struct FitOptions {
    int batch_size = 64;
    double learning_rate = 1e-3;   // adaptive-moment step size
    int grid_points_per_dim = 101;  // dense evaluation grid for the sup error
    Activation activation = Activation::tanh_fn;
    double block_scale = 1.0;
};

struct FitResult {
    double sup_error = std::numeric_limits<double>::infinity();
    bool diverged = false;
    QNetwork net;
};

/// Largest absolute gap between head `head` of the network and the target
/// over a dense uniform grid on the box.
inline double sup_error_on_grid(const QNetwork& net, int head, const BoxTarget& target,
                                const Vec& lo, const Vec& hi, int points_per_dim) {
    if (points_per_dim < 2) throw std::invalid_argument("sup_error_on_grid: need >= 2 points");
    const size_t dim = lo.size();
    std::vector<int> idx(dim, 0);
    Vec x(dim, 0.0);
    double worst = 0.0;
    GradientTape tape;
    while (true) {
        for (size_t d = 0; d < dim; ++d)
            x[d] = lo[d] + (hi[d] - lo[d]) * idx[d] / (points_per_dim - 1);
        forward_into(net, 0.0, x, {}, tape);
        worst = std::max(worst, std::abs(tape.q[static_cast<size_t>(head)] - target(x)));
        size_t d = 0;
        for (; d < dim; ++d) {
            if (++idx[d] < points_per_dim) break;
            idx[d] = 0;
        }
        if (d == dim) break;
    }
    return worst;
}

/// Least-squares fit of a scalar target by a residual network of the given
/// depth and width: mini-batches drawn uniformly from the box, adaptive-moment
/// updates, sup error reported over a dense grid. Deterministic given the
/// seed; a non-finite loss ends the fit early with diverged = true.
inline FitResult fit_supervised(const BoxTarget& target, const Vec& box_lo, const Vec& box_hi,
                                int depth, int width, long train_budget, uint64_t rng_seed,
                                const FitOptions& opts = {}) {
    if (box_lo.empty() || box_lo.size() != box_hi.size())
        throw std::invalid_argument("fit_supervised: malformed box");
    if (train_budget < 1) throw std::invalid_argument("fit_supervised: train_budget must be >= 1");
    NetArch arch;
    arch.state_dim = static_cast<int>(box_lo.size());
    arch.mode = QMode::multi_head;
    arch.n_actions = 1;
    arch.hidden_dim = width;
    arch.n_blocks = depth;
    arch.activation = opts.activation;
    arch.dt = opts.block_scale;

    FitResult res;
    res.net = init_network(arch, rng_seed);
    Rng rng = Rng::stream(rng_seed, Rng::kTagFit, 0);

    const size_t n_params = param_count(res.net);
    Vec grad(n_params, 0.0), m(n_params, 0.0), v(n_params, 0.0), delta(n_params, 0.0);
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const long steps = std::max<long>(1, train_budget / opts.batch_size);
    GradientTape tape;
    Vec x(box_lo.size(), 0.0);
    Vec upstream(1, 0.0);
    for (long step = 1; step <= steps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0.0;
        bool bad = false;
        for (int b = 0; b < opts.batch_size; ++b) {
            for (size_t d = 0; d < x.size(); ++d) x[d] = rng.uniform(box_lo[d], box_hi[d]);
            const double y = target(x);
            try {
                forward_into(res.net, 0.0, x, {}, tape);
            } catch (const EvaluationError&) {
                bad = true;
                break;
            }
            const double e = tape.q[0] - y;
            loss += e * e;
            upstream[0] = 2.0 * e / opts.batch_size;
            backward_into(res.net, tape, upstream, grad, /*accumulate=*/true);
        }
        if (bad || !std::isfinite(loss)) {
            res.diverged = true;
            return res;
        }
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (size_t i = 0; i < n_params; ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            delta[i] = -opts.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
        axpy_params(res.net, 1.0, delta);
    }
    res.sup_error = sup_error_on_grid(res.net, 0, target, box_lo, box_hi, opts.grid_points_per_dim);
    return res;
}

}  // namespace ctdqn
