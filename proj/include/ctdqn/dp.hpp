#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ctdqn/resnet.hpp"
#include "ctdqn/sde.hpp"

namespace ctdqn {

/// Gauss-Hermite nodes/weights transformed to standard-normal expectations:
/// E[f(Z)] ~ sum_i prob[i] * f(node[i]), with probabilities renormalized to
/// sum to 1 exactly.
struct NormalQuadrature {
    Vec nodes;
    Vec probs;
};

/// Computes the n-point rule by Newton iteration on the orthonormal Hermite
/// recurrence. n must be odd and >= 3 so a node sits exactly at 0.
inline NormalQuadrature gauss_hermite(int n) {
    if (n < 3 || n % 2 == 0)
        throw std::invalid_argument("gauss_hermite: node count must be odd and >= 3");
    const double pi_quarter = 0.7511255444649425;  // pi^(-1/4)
    Vec x(static_cast<size_t>(n), 0.0), w(static_cast<size_t>(n), 0.0);
    const int m = (n + 1) / 2;
    double z = 0.0;
    for (int i = 0; i < m; ++i) {
        // Standard initial guesses for the i-th largest root.
        if (i == 0) {
            z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
        } else if (i == 1) {
            z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
        } else if (i == 2) {
            z = 1.86 * z - 0.86 * x[0];
        } else if (i == 3) {
            z = 1.91 * z - 0.91 * x[1];
        } else {
            z = 2.0 * z - x[static_cast<size_t>(i) - 2];
        }
        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p1 = pi_quarter;
            double p2 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / (j + 1.0)) * p2 - std::sqrt(j / (j + 1.0)) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            const double dz = p1 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-15) break;
        }
        x[static_cast<size_t>(i)] = z;
        x[static_cast<size_t>(n) - 1 - i] = -z;
        w[static_cast<size_t>(i)] = 2.0 / (pp * pp);
        w[static_cast<size_t>(n) - 1 - i] = w[static_cast<size_t>(i)];
    }
    // Transform: node z_i = sqrt(2) x_i, probability w_i / sqrt(pi); then
    // renormalize so the probabilities sum to exactly 1.
    NormalQuadrature q;
    q.nodes.resize(static_cast<size_t>(n));
    q.probs.resize(static_cast<size_t>(n));
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += w[static_cast<size_t>(i)];
    for (int i = 0; i < n; ++i) {
        // Descending x order -> ascending node order for reproducible rows.
        q.nodes[static_cast<size_t>(i)] = std::sqrt(2.0) * x[static_cast<size_t>(n) - 1 - i];
        q.probs[static_cast<size_t>(i)] = w[static_cast<size_t>(n) - 1 - i] / total;
    }
    return q;
}

/// Finite-state quadrature approximation of a 1-D controlled diffusion:
/// uniform state grid, discrete actions, sparse transition rows, tabulated
/// per-step rewards (already including the per-step scale of the discounting
/// mode), effective discount, and terminal values.
struct GridMdp {
    Vec grid;                    // sorted 1-D state grid
    ActionSet actions;
    // kernel[s * n_actions + a] = sparse row of (next-state index, probability).
    std::vector<std::vector<std::pair<int, double>>> kernel;
    Vec rewards;                 // rewards[s * n_actions + a], scaled per mode
    double gamma_eff = 0.99;     // in (0, 1]; < 1 required for stationary solving
    double reward_scale = 1.0;
    double dt = 0.1;
    TargetMode mode = TargetMode::discrete_gamma;
    int horizon_steps = 0;       // finite-horizon sweep count; 0 = unset
    Vec terminal;                // terminal[s]

    int n_states() const { return static_cast<int>(grid.size()); }
    int n_actions() const { return actions.size(); }
    double reward(int s, int a) const { return rewards[static_cast<size_t>(s) * n_actions() + a]; }
    const std::vector<std::pair<int, double>>& row(int s, int a) const {
        return kernel[static_cast<size_t>(s) * n_actions() + a];
    }
};

/// Dense (time, state, action) table; stationary solutions use n_time = 1.
struct QTable {
    int n_time = 1;
    int n_states = 0;
    int n_actions = 0;
    Vec data;

    QTable() = default;
    QTable(int t, int s, int a)
        : n_time(t), n_states(s), n_actions(a),
          data(static_cast<size_t>(t) * s * a, 0.0) {}

    double& at(int k, int s, int a) {
        return data[(static_cast<size_t>(k) * n_states + s) * n_actions + a];
    }
    double at(int k, int s, int a) const {
        return data[(static_cast<size_t>(k) * n_states + s) * n_actions + a];
    }
};

/// Dense (time, state) table; stationary solutions use n_time = 1.
struct VTable {
    int n_time = 1;
    int n_states = 0;
    Vec data;

    VTable() = default;
    VTable(int t, int s) : n_time(t), n_states(s), data(static_cast<size_t>(t) * s, 0.0) {}

    double& at(int k, int s) { return data[static_cast<size_t>(k) * n_states + s]; }
    double at(int k, int s) const { return data[static_cast<size_t>(k) * n_states + s]; }
};

inline int nearest_grid_index(const Vec& grid, double x) {
    const auto it = std::lower_bound(grid.begin(), grid.end(), x);
    if (it == grid.begin()) return 0;
    if (it == grid.end()) return static_cast<int>(grid.size()) - 1;
    const int hi = static_cast<int>(it - grid.begin());
    return (x - grid[static_cast<size_t>(hi) - 1] <= grid[static_cast<size_t>(hi)] - x) ? hi - 1
                                                                                        : hi;
}

/// Discretizes one Euler step of the model onto a uniform n_states grid over
/// the clip box: Gauss-Hermite quadrature over the noise, each landing point
/// clipped by the model and its mass assigned to the nearest grid point.
inline GridMdp build_grid_mdp(const SdeModel& model, const ActionSet& actions, int n_states,
                              double dt, int quad_nodes, TargetMode mode) {
    if (n_states < 3) throw std::invalid_argument("build_grid_mdp: n_states must be >= 3");
    if (model.state_dim != 1 || model.noise_dim != 1)
        throw std::invalid_argument("build_grid_mdp: only 1-D models are supported");
    if (!model.clip_active)
        throw std::invalid_argument("build_grid_mdp: the model must define a state box");
    if (actions.kind != ActionSet::Kind::discrete)
        throw std::invalid_argument("build_grid_mdp: requires a discrete action set");
    GridMdp g;
    g.actions = actions;
    g.dt = dt;
    g.mode = mode;
    g.reward_scale = mode == TargetMode::continuous_exp ? dt : 1.0;
    g.gamma_eff = mode == TargetMode::continuous_exp ? std::exp(-model.discount_rate * dt)
                                                     : model.discount_rate;
    const double lo = model.clip_lo[0], hi = model.clip_hi[0];
    g.grid.resize(static_cast<size_t>(n_states));
    for (int i = 0; i < n_states; ++i)
        g.grid[static_cast<size_t>(i)] = lo + (hi - lo) * i / (n_states - 1);
    for (int i = 1; i < n_states; ++i)
        if (g.grid[static_cast<size_t>(i)] <= g.grid[static_cast<size_t>(i) - 1])
            throw std::invalid_argument("build_grid_mdp: degenerate grid");

    const NormalQuadrature quad = gauss_hermite(quad_nodes);
    const int na = actions.size();
    g.kernel.resize(static_cast<size_t>(n_states) * na);
    g.rewards.resize(static_cast<size_t>(n_states) * na, 0.0);
    g.terminal.resize(static_cast<size_t>(n_states), 0.0);
    Vec s(1), z(1);
    for (int si = 0; si < n_states; ++si) {
        s[0] = g.grid[static_cast<size_t>(si)];
        g.terminal[static_cast<size_t>(si)] = model.terminal_reward(s);
        for (int ai = 0; ai < na; ++ai) {
            const Vec& a = actions.action(ai);
            g.rewards[static_cast<size_t>(si) * na + ai] = model.reward(0.0, s, a) * g.reward_scale;
            auto& row = g.kernel[static_cast<size_t>(si) * na + ai];
            for (size_t qi = 0; qi < quad.nodes.size(); ++qi) {
                z[0] = quad.nodes[qi];
                const Vec landing = euler_maruyama_step(model, 0.0, s, a, z, dt);
                const int ni = nearest_grid_index(g.grid, landing[0]);
                bool merged = false;
                for (auto& entry : row) {
                    if (entry.first == ni) {
                        entry.second += quad.probs[qi];
                        merged = true;
                        break;
                    }
                }
                if (!merged) row.emplace_back(ni, quad.probs[qi]);
            }
        }
    }
    return g;
}

inline VTable greedy_values(const GridMdp& g, const QTable& q, int k) {
    VTable v(1, g.n_states());
    for (int s = 0; s < g.n_states(); ++s) {
        double best = q.at(k, s, 0);
        for (int a = 1; a < g.n_actions(); ++a) best = std::max(best, q.at(k, s, a));
        v.at(0, s) = best;
    }
    return v;
}

/// One Bellman sweep: (TQ)[s,a] = r[s,a] + gamma_eff * sum_s' P[s,a,s'] *
/// max_a' Q[s',a']. Pure; requires a stationary-shaped (n_time = 1) table.
inline QTable bellman_apply(const GridMdp& g, const QTable& q) {
    if (q.n_time != 1 || q.n_states != g.n_states() || q.n_actions != g.n_actions())
        throw std::invalid_argument("bellman_apply: table shape does not match the grid");
    const VTable v = greedy_values(g, q, 0);
    QTable out(1, g.n_states(), g.n_actions());
    for (int s = 0; s < g.n_states(); ++s)
        for (int a = 0; a < g.n_actions(); ++a) {
            double exp_v = 0.0;
            for (const auto& [ni, p] : g.row(s, a)) exp_v += p * v.at(0, ni);
            out.at(0, s, a) = g.reward(s, a) + g.gamma_eff * exp_v;
        }
    return out;
}

enum class SolveMode { stationary, finite_horizon };

struct SolveResult {
    QTable q;
    VTable v;
    int iterations = 0;
    Vec deltas;  // stationary mode: sup-norm change per sweep
};

inline double sup_norm_diff(const Vec& a, const Vec& b) {
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

/// Optimal tables. Stationary mode: value iteration from Q = 0 until the
/// sup-norm sweep change is <= tol, guarded by the a-priori geometric
/// iteration bound (exceeding it indicates a broken kernel). Finite-horizon
/// mode: exact backward induction over horizon_steps sweeps from the terminal
/// values. V is derived as max_a Q in both modes.
inline SolveResult solve_q_star(const GridMdp& g, double tol, SolveMode mode) {
    SolveResult res;
    if (mode == SolveMode::stationary) {
        if (!(tol > 0.0)) throw std::invalid_argument("solve_q_star: tol must be positive");
        if (!(g.gamma_eff < 1.0))
            throw std::invalid_argument("solve_q_star: stationary mode needs gamma_eff < 1");
        QTable q(1, g.n_states(), g.n_actions());
        QTable next = bellman_apply(g, q);
        double delta = sup_norm_diff(next.data, q.data);
        res.deltas.push_back(delta);
        q = std::move(next);
        res.iterations = 1;
        long max_iters = 1;
        if (delta > tol) {
            const double first_delta = delta;
            max_iters = static_cast<long>(std::ceil(
                            std::log(tol * (1.0 - g.gamma_eff) / first_delta) /
                            std::log(g.gamma_eff))) +
                        1;
            while (delta > tol) {
                if (res.iterations > max_iters)
                    throw std::runtime_error(
                        "solve_q_star: exceeded the geometric iteration bound; "
                        "transition kernel invariants are broken");
                next = bellman_apply(g, q);
                delta = sup_norm_diff(next.data, q.data);
                res.deltas.push_back(delta);
                q = std::move(next);
                ++res.iterations;
            }
        }
        res.q = std::move(q);
        res.v = VTable(1, g.n_states());
        for (int s = 0; s < g.n_states(); ++s) {
            double best = res.q.at(0, s, 0);
            for (int a = 1; a < g.n_actions(); ++a) best = std::max(best, res.q.at(0, s, a));
            res.v.at(0, s) = best;
        }
        return res;
    }
    // Finite horizon: V_N = terminal, Q_k = r + gamma_eff * E[V_{k+1}].
    const int n = g.horizon_steps;
    if (n < 1) throw std::invalid_argument("solve_q_star: finite_horizon needs horizon_steps >= 1");
    res.q = QTable(n, g.n_states(), g.n_actions());
    res.v = VTable(n + 1, g.n_states());
    for (int s = 0; s < g.n_states(); ++s) res.v.at(n, s) = g.terminal[static_cast<size_t>(s)];
    for (int k = n - 1; k >= 0; --k) {
        for (int s = 0; s < g.n_states(); ++s) {
            double best = 0.0;
            for (int a = 0; a < g.n_actions(); ++a) {
                double exp_v = 0.0;
                for (const auto& [ni, p] : g.row(s, a)) exp_v += p * res.v.at(k + 1, ni);
                const double qv = g.reward(s, a) + g.gamma_eff * exp_v;
                res.q.at(k, s, a) = qv;
                if (a == 0 || qv > best) best = qv;
            }
            res.v.at(k, s) = best;
        }
    }
    res.iterations = n;
    return res;
}

struct ContractionResult {
    double ratio = 0.0;
    bool degenerate = false;  // q1 == q2 in sup norm; ratio reported as 0
};

/// Measured contraction factor ||T q1 - T q2||_inf / ||q1 - q2||_inf.
inline ContractionResult contraction_ratio(const GridMdp& g, const QTable& q1, const QTable& q2) {
    const double denom = sup_norm_diff(q1.data, q2.data);
    if (denom == 0.0) return {0.0, true};
    const QTable t1 = bellman_apply(g, q1);
    const QTable t2 = bellman_apply(g, q2);
    return {sup_norm_diff(t1.data, t2.data) / denom, false};
}

struct HjbResult {
    double max_abs_residual = 0.0;
    std::vector<Vec> field;  // field[k][i] = residual at time k, interior point i
};

/// Discrete residual of -dV/dt + gamma V - max_a { r + h dV/ds + sigma^2/2
/// d2V/ds2 } on interior grid points: forward difference in t, central in s.
/// V must be a finite-horizon table on the grid.
inline HjbResult hjb_residual(const GridMdp& g, const VTable& v, const SdeModel& model) {
    const int ns = g.n_states();
    if (v.n_states != ns || v.n_time < 2)
        throw std::invalid_argument("hjb_residual: table shape does not match the grid");
    if (ns - 2 < 5) throw std::invalid_argument("hjb_residual: fewer than 5 interior points");
    const double ds = g.grid[1] - g.grid[0];
    HjbResult res;
    res.field.resize(static_cast<size_t>(v.n_time) - 1);
    Vec s(1);
    for (int k = 0; k + 1 < v.n_time; ++k) {
        const double t = k * g.dt;
        Vec& row = res.field[static_cast<size_t>(k)];
        row.resize(static_cast<size_t>(ns) - 2);
        for (int i = 1; i + 1 < ns; ++i) {
            s[0] = g.grid[static_cast<size_t>(i)];
            const double dv_dt = (v.at(k + 1, i) - v.at(k, i)) / g.dt;
            const double dv_ds = (v.at(k, i + 1) - v.at(k, i - 1)) / (2.0 * ds);
            const double d2v_ds2 = (v.at(k, i + 1) - 2.0 * v.at(k, i) + v.at(k, i - 1)) / (ds * ds);
            double best = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < g.n_actions(); ++a) {
                const Vec& av = g.actions.action(a);
                const double h = model.drift(t, s, av)[0];
                const double sig = model.diffusion(t, s, av)(0, 0);
                best = std::max(best, model.reward(t, s, av) + h * dv_ds +
                                          0.5 * sig * sig * d2v_ds2);
            }
            const double r = -dv_dt + model.discount_rate * v.at(k, i) - best;
            row[static_cast<size_t>(i) - 1] = r;
            res.max_abs_residual = std::max(res.max_abs_residual, std::abs(r));
        }
    }
    return res;
}

/// Max over grid states with |s| <= radius and all actions of
/// |Q_net(0, s, a) - Q*[s, a]| (time slice 0 of the table).
inline double sup_error(const QNetwork& net, const GridMdp& g, const QTable& q_star,
                        double radius) {
    if (q_star.n_states != g.n_states() || q_star.n_actions != g.n_actions())
        throw std::invalid_argument("sup_error: table shape does not match the grid");
    if (net.arch.mode != QMode::multi_head || net.arch.n_actions != g.n_actions())
        throw std::invalid_argument("sup_error: network heads must match the action count");
    double worst = 0.0;
    bool any = false;
    GradientTape tape;
    Vec s(1);
    for (int si = 0; si < g.n_states(); ++si) {
        s[0] = g.grid[static_cast<size_t>(si)];
        if (std::abs(s[0]) > radius) continue;
        any = true;
        forward_into(net, 0.0, s, {}, tape);
        for (int a = 0; a < g.n_actions(); ++a)
            worst = std::max(worst, std::abs(tape.q[static_cast<size_t>(a)] - q_star.at(0, si, a)));
    }
    if (!any) throw std::invalid_argument("sup_error: no grid states inside the radius");
    return worst;
}

}  // namespace ctdqn
