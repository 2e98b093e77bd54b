#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "ctdqn/sde.hpp"

namespace ctdqn {

/// Closed-form constants of the trajectory-sup tail bound
/// P(sup_{0<=t<=T} ||s_t|| > r1) <= c1 * exp(-c2 * (r1 - c3 (1 + ||x||))^2 / T)
/// for dynamics with Lipschitz drift/diffusion and linear growth.
struct LdpConstants {
    double c1 = 0.0;
    double c2 = 0.0;
    double c3 = 0.0;
    double r1 = 0.0;
    double lipschitz_h = 0.0;
    double lipschitz_sigma = 0.0;
    double growth_k = 0.0;
    int dim = 1;
    double horizon = 0.0;
    double start_norm = 0.0;
    double delta = 0.0;
};

/// Thrown when c2 is undefined because both Lipschitz constants vanish
/// (deterministic constant dynamics make the tail bound vacuous).
class DegenerateConstants : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Smallest radius r1 whose tail bound evaluates to at most delta:
///   c1 = 2 exp(2 (1 + T (L_h^2 + L_sigma^2)))
///   c2 = 1 / (8 n (L_h^2 + L_sigma^2))
///   c3 = K
///   r1 = c3 (1 + ||x||) + sqrt((T / c2) * max(0, ln(c1 / delta)))
/// The log is clamped at zero so that delta >= c1 degenerates to the base
/// radius instead of an imaginary square root.
inline LdpConstants ldp_radius(double lipschitz_h, double lipschitz_sigma, double growth_k,
                               int dim, double horizon, double start_norm, double delta) {
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("ldp_radius: delta must lie in (0,1)");
    if (dim < 1) throw std::invalid_argument("ldp_radius: dim must be >= 1");
    if (!(horizon > 0.0)) throw std::invalid_argument("ldp_radius: horizon must be positive");
    const double lip_sq = lipschitz_h * lipschitz_h + lipschitz_sigma * lipschitz_sigma;
    if (lip_sq == 0.0)
        throw DegenerateConstants(
            "ldp_radius: L_h = L_sigma = 0 leaves c2 undefined (bound is vacuous)");
    LdpConstants c;
    c.lipschitz_h = lipschitz_h;
    c.lipschitz_sigma = lipschitz_sigma;
    c.growth_k = growth_k;
    c.dim = dim;
    c.horizon = horizon;
    c.start_norm = start_norm;
    c.delta = delta;
    c.c1 = 2.0 * std::exp(2.0 * (1.0 + horizon * lip_sq));
    c.c2 = 1.0 / (8.0 * dim * lip_sq);
    c.c3 = growth_k;
    const double log_term = std::max(0.0, std::log(c.c1 / delta));
    c.r1 = c.c3 * (1.0 + start_norm) + std::sqrt(horizon / c.c2 * log_term);
    return c;
}

/// Analytic tail probability at the stored radius. Equals delta whenever the
/// radius came out of the unclamped branch of ldp_radius; values >= 1 mean
/// the bound is vacuous at this radius.
inline double ldp_bound(const LdpConstants& c) {
    const double excess = c.r1 - c.c3 * (1.0 + c.start_norm);
    return c.c1 * std::exp(-c.c2 * excess * excess / c.horizon);
}

/// Monte-Carlo estimate of P(sup_k ||s_k|| > r1) over n_trials rollouts from
/// s0. Requires unconfined dynamics: with a clip box the sup can never leave
/// the box and the estimate would be meaningless.
inline double empirical_exceedance(const SdeModel& model, const ActionSet& actions,
                                   const DiscretePolicy& policy, double r1, int n_trials,
                                   uint64_t rng_seed, const Vec& s0, int max_steps, double dt) {
    if (n_trials < 1) throw std::invalid_argument("empirical_exceedance: n_trials must be >= 1");
    if (model.clip_active)
        throw std::invalid_argument("empirical_exceedance: disable state clipping for this check");
    int exceed = 0;
    for (int trial = 0; trial < n_trials; ++trial) {
        const uint64_t seed = Rng::derive(rng_seed, Rng::kTagTrial, static_cast<uint64_t>(trial));
        const auto episode = simulate_episode(model, actions, policy, seed, s0, max_steps, dt);
        double sup = norm2(s0);
        for (const Transition& tr : episode) sup = std::max(sup, norm2(tr.s_next));
        if (sup > r1) ++exceed;
    }
    return static_cast<double>(exceed) / static_cast<double>(n_trials);
}

}  // namespace ctdqn
