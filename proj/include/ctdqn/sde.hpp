#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ctdqn/matrix.hpp"
#include "ctdqn/rng.hpp"

namespace ctdqn {

/// Default per-episode step cap for the built-in environment.
inline constexpr int kMaxEpisodeSteps = 200;

/// How one step of reward and bootstrap combine in targets and oracles:
/// discrete_gamma uses y = r + gamma * (...); continuous_exp uses
/// y = r * dt + exp(-gamma * dt) * (...).
enum class TargetMode { discrete_gamma, continuous_exp };

/// Controlled diffusion ds = h(t,s,a) dt + sigma(t,s,a) dW with running
/// reward r, terminal reward g, discount rate and finite horizon. States may
/// optionally be confined to a box, applied once per step after the full
/// Euler increment.
struct SdeModel {
    int state_dim = 1;
    int noise_dim = 1;
    std::function<Vec(double, const Vec&, const Vec&)> drift;       // h(t, s, a)
    std::function<Matrix(double, const Vec&, const Vec&)> diffusion;  // sigma(t, s, a)
    std::function<double(double, const Vec&, const Vec&)> reward;   // r(t, s, a)
    std::function<double(const Vec&)> terminal_reward;              // g(s)
    double discount_rate = 0.99;  // in (0, 1)
    double horizon = 1.0;         // > 0
    bool clip_active = false;
    Vec clip_lo;
    Vec clip_hi;

    void validate() const {
        if (!(discount_rate > 0.0 && discount_rate < 1.0))
            throw std::invalid_argument("SdeModel: discount_rate must lie in (0,1)");
        if (!(horizon > 0.0)) throw std::invalid_argument("SdeModel: horizon must be positive");
        if (state_dim < 1 || noise_dim < 1)
            throw std::invalid_argument("SdeModel: dimensions must be positive");
        if (clip_active && (static_cast<int>(clip_lo.size()) != state_dim ||
                            static_cast<int>(clip_hi.size()) != state_dim))
            throw std::invalid_argument("SdeModel: clip bounds must match state_dim");
    }

    void clip_state(Vec& s) const {
        if (!clip_active) return;
        for (int i = 0; i < state_dim; ++i) s[i] = std::clamp(s[i], clip_lo[i], clip_hi[i]);
    }
};

/// Admissible actions: either a finite list of action vectors or a compact box.
struct ActionSet {
    enum class Kind { discrete, box };

    Kind kind = Kind::discrete;
    std::vector<Vec> actions;  // discrete mode
    Vec lo, hi;                // box mode

    static ActionSet discrete_set(std::vector<Vec> list) {
        if (list.empty()) throw std::invalid_argument("ActionSet: empty action list");
        ActionSet a;
        a.kind = Kind::discrete;
        a.actions = std::move(list);
        return a;
    }

    static ActionSet box(Vec lo, Vec hi) {
        if (lo.empty() || lo.size() != hi.size())
            throw std::invalid_argument("ActionSet: malformed box bounds");
        for (size_t i = 0; i < lo.size(); ++i)
            if (!std::isfinite(lo[i]) || !std::isfinite(hi[i]) || lo[i] > hi[i])
                throw std::invalid_argument("ActionSet: box bounds must be finite and ordered");
        ActionSet a;
        a.kind = Kind::box;
        a.lo = std::move(lo);
        a.hi = std::move(hi);
        return a;
    }

    int size() const { return static_cast<int>(actions.size()); }
    const Vec& action(int i) const { return actions.at(static_cast<size_t>(i)); }

    /// Radius of the action set in the Euclidean norm (largest attainable
    /// action magnitude; box corners in box mode).
    double radius() const {
        double r = 0.0;
        if (kind == Kind::discrete) {
            for (const Vec& a : actions) r = std::max(r, norm2(a));
        } else {
            double acc = 0.0;
            for (size_t i = 0; i < lo.size(); ++i) {
                const double m = std::max(std::abs(lo[i]), std::abs(hi[i]));
                acc += m * m;
            }
            r = std::sqrt(acc);
        }
        return r;
    }
};

/// One step of experience: state, chosen action, reward, successor.
struct Transition {
    double t_k = 0.0;
    Vec s_k;
    int a_index = -1;  // index into a discrete ActionSet; -1 when not applicable
    Vec a;
    double r_k = 0.0;
    Vec s_next;
    bool truncated = false;  // episode ended by the step cap
};

/// Thrown when a step produces a non-finite state (drift or diffusion
/// overflow); carries the inputs that triggered it.
class StepFailure : public std::runtime_error {
public:
    StepFailure(double t, Vec s, Vec a)
        : std::runtime_error(describe(t, s, a)), t(t), s(std::move(s)), a(std::move(a)) {}

    double t;
    Vec s, a;

private:
    static std::string describe(double t, const Vec& s, const Vec& a) {
        std::ostringstream os;
        os << "euler_maruyama_step: non-finite state at t=" << t << ", s=[";
        for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
        os << "], a=[";
        for (size_t i = 0; i < a.size(); ++i) os << (i ? "," : "") << a[i];
        os << "]";
        return os.str();
    }
};

/// Explicit Euler-Maruyama update: clip(s + h dt + sigma sqrt(dt) z), with the
/// clip applied only when the model confines states. Pure in its inputs.
inline Vec euler_maruyama_step(const SdeModel& model, double t, const Vec& s, const Vec& a,
                               const Vec& z, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("euler_maruyama_step: dt must be positive");
    if (static_cast<int>(z.size()) != model.noise_dim)
        throw std::invalid_argument("euler_maruyama_step: z must have the noise dimension");
    const Vec h = model.drift(t, s, a);
    const Matrix sig = model.diffusion(t, s, a);
    const double sq_dt = std::sqrt(dt);
    Vec out(static_cast<size_t>(model.state_dim));
    for (int i = 0; i < model.state_dim; ++i) {
        double acc = s[i] + h[i] * dt;
        for (int j = 0; j < model.noise_dim; ++j) acc += sig(i, j) * sq_dt * z[j];
        out[i] = acc;
    }
    for (double v : out)
        if (!std::isfinite(v)) throw StepFailure(t, s, a);
    model.clip_state(out);
    return out;
}

/// 1-D benchmark: ds = a dt + sigma dW on the box [-1, 1], reward
/// -s^2 - action_cost * a^2, discrete actions {-1, 0, +1}, zero terminal
/// reward, horizon = step cap * dt.
inline std::pair<SdeModel, ActionSet> make_stabilization_env(double sigma = 0.1,
                                                             double action_cost = 0.01,
                                                             double dt = 0.1) {
    if (sigma < 0.0) throw std::invalid_argument("make_stabilization_env: sigma must be >= 0");
    if (!(dt > 0.0)) throw std::invalid_argument("make_stabilization_env: dt must be positive");
    SdeModel m;
    m.state_dim = 1;
    m.noise_dim = 1;
    m.drift = [](double, const Vec&, const Vec& a) { return Vec{a[0]}; };
    m.diffusion = [sigma](double, const Vec&, const Vec&) {
        Matrix s(1, 1);
        s(0, 0) = sigma;
        return s;
    };
    m.reward = [action_cost](double, const Vec& s, const Vec& a) {
        return -(s[0] * s[0]) - action_cost * (a[0] * a[0]);
    };
    m.terminal_reward = [](const Vec&) { return 0.0; };
    m.discount_rate = 0.99;
    m.horizon = kMaxEpisodeSteps * dt;
    m.clip_active = true;
    m.clip_lo = {-1.0};
    m.clip_hi = {1.0};
    m.validate();
    ActionSet actions = ActionSet::discrete_set({{-1.0}, {0.0}, {1.0}});
    return {std::move(m), std::move(actions)};
}

/// Policy over a discrete action set: maps (t, s) to an action index.
using DiscretePolicy = std::function<int(double, const Vec&)>;

/// Rolls out one episode from s0 under the policy, drawing the noise from the
/// given seed. Deterministic given (seed, inputs); times are t_k = k * dt and
/// the final transition is flagged truncated when the step cap ends the
/// episode.
inline std::vector<Transition> simulate_episode(const SdeModel& model, const ActionSet& actions,
                                                const DiscretePolicy& policy, uint64_t rng_seed,
                                                const Vec& s0, int max_steps, double dt) {
    if (max_steps < 1) throw std::invalid_argument("simulate_episode: max_steps must be >= 1");
    if (actions.kind != ActionSet::Kind::discrete)
        throw std::invalid_argument("simulate_episode: requires a discrete action set");
    Rng rng(rng_seed);
    std::vector<Transition> episode;
    episode.reserve(static_cast<size_t>(max_steps));
    Vec s = s0;
    Vec z(static_cast<size_t>(model.noise_dim));
    for (int k = 0; k < max_steps; ++k) {
        const double t = k * dt;
        const int a_idx = policy(t, s);
        const Vec& a = actions.action(a_idx);
        for (double& zi : z) zi = rng.normal();
        Vec s_next = euler_maruyama_step(model, t, s, a, z, dt);
        Transition tr;
        tr.t_k = t;
        tr.s_k = s;
        tr.a_index = a_idx;
        tr.a = a;
        tr.r_k = model.reward(t, s, a);
        tr.s_next = s_next;
        tr.truncated = (k == max_steps - 1);
        episode.push_back(std::move(tr));
        s = std::move(s_next);
    }
    return episode;
}

}  // namespace ctdqn
