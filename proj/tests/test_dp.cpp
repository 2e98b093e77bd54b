#include <gtest/gtest.h>

#include <cmath>
#include <utility>
#include <vector>

#include "ctdqn/dp.hpp"
#include "ctdqn/rng.hpp"
#include "ctdqn/sde.hpp"

namespace ctdqn {
namespace {

// Deterministic 1-D rightward transport at unit speed, zero running reward and
// zero discounting, terminal payoff g(s). dt is chosen by the tests as a
// multiple of the grid spacing so every Euler landing snaps exactly.
SdeModel transport_model(std::function<double(const Vec&)> terminal) {
    SdeModel m;
    m.state_dim = 1;
    m.noise_dim = 1;
    m.drift = [](double, const Vec&, const Vec&) { return Vec{1.0}; };
    m.diffusion = [](double, const Vec&, const Vec&) { return Matrix::zeros(1, 1); };
    m.reward = [](double, const Vec&, const Vec&) { return 0.0; };
    m.terminal_reward = std::move(terminal);
    m.discount_rate = 0.0;
    m.horizon = 1.0;
    m.clip_active = true;
    m.clip_lo = {-1.0};
    m.clip_hi = {1.0};
    return m;
}

QTable fill_random(const GridMdp& g, uint64_t seed) {
    QTable q(1, g.n_states(), g.n_actions());
    Rng rng(seed);
    for (double& v : q.data) v = rng.uniform(-2.0, 2.0);
    return q;
}

TEST(GaussHermite, ThreeNodeRuleIsExact) {
    const NormalQuadrature q = gauss_hermite(3);
    ASSERT_EQ(q.nodes.size(), 3u);
    EXPECT_NEAR(q.nodes[0], -std::sqrt(3.0), 1e-12);
    EXPECT_NEAR(q.nodes[1], 0.0, 1e-14);
    EXPECT_NEAR(q.nodes[2], std::sqrt(3.0), 1e-12);
    EXPECT_EQ(q.nodes[0], -q.nodes[2]);
    EXPECT_NEAR(q.probs[0], 1.0 / 6.0, 1e-13);
    EXPECT_NEAR(q.probs[1], 2.0 / 3.0, 1e-13);
    EXPECT_NEAR(q.probs[2], 1.0 / 6.0, 1e-13);
}

TEST(GaussHermite, ElevenNodeMomentsMatchStandardNormal) {
    const NormalQuadrature q = gauss_hermite(11);
    double p_sum = 0.0, m1 = 0.0, m2 = 0.0, m4 = 0.0;
    for (size_t i = 0; i < q.nodes.size(); ++i) {
        p_sum += q.probs[i];
        m1 += q.probs[i] * q.nodes[i];
        m2 += q.probs[i] * q.nodes[i] * q.nodes[i];
        m4 += q.probs[i] * std::pow(q.nodes[i], 4);
    }
    EXPECT_NEAR(p_sum, 1.0, 1e-14);
    EXPECT_NEAR(m1, 0.0, 1e-14);
    EXPECT_NEAR(m2, 1.0, 1e-13);
    EXPECT_NEAR(m4, 3.0, 1e-12);
}

TEST(GaussHermite, RejectsEvenOrTooFewNodes) {
    EXPECT_THROW(gauss_hermite(0), std::invalid_argument);
    EXPECT_THROW(gauss_hermite(1), std::invalid_argument);
    EXPECT_THROW(gauss_hermite(2), std::invalid_argument);
    EXPECT_THROW(gauss_hermite(4), std::invalid_argument);
}

TEST(NearestGrid, SnapsToNearestWithLowerTie) {
    const Vec grid = {0.0, 1.0, 2.0};
    EXPECT_EQ(nearest_grid_index(grid, 0.49), 0);
    EXPECT_EQ(nearest_grid_index(grid, 0.51), 1);
    EXPECT_EQ(nearest_grid_index(grid, 0.5), 0);
    EXPECT_EQ(nearest_grid_index(grid, -5.0), 0);
    EXPECT_EQ(nearest_grid_index(grid, 7.0), 2);
    EXPECT_EQ(nearest_grid_index(grid, 1.0), 1);
}

TEST(BuildGrid, KernelRowsAreProbabilityDistributions) {
    const auto [model, actions] = make_stabilization_env();
    const GridMdp g = build_grid_mdp(model, actions, 51, 0.1, 7, TargetMode::discrete_gamma);
    ASSERT_EQ(g.n_states(), 51);
    ASSERT_EQ(g.n_actions(), 3);
    for (int s = 0; s < g.n_states(); ++s)
        for (int a = 0; a < g.n_actions(); ++a) {
            const auto& row = g.row(s, a);
            ASSERT_FALSE(row.empty());
            double total = 0.0;
            for (size_t i = 0; i < row.size(); ++i) {
                EXPECT_GE(row[i].second, 0.0);
                EXPECT_GE(row[i].first, 0);
                EXPECT_LT(row[i].first, g.n_states());
                for (size_t j = i + 1; j < row.size(); ++j)
                    EXPECT_NE(row[i].first, row[j].first);
                total += row[i].second;
            }
            EXPECT_NEAR(total, 1.0, 1e-12);
        }
}

TEST(BuildGrid, ZeroNoiseRowsCarryUnitMass) {
    const auto [model, actions] = make_stabilization_env(/*sigma=*/0.0);
    const GridMdp g = build_grid_mdp(model, actions, 41, 0.1, 5, TargetMode::discrete_gamma);
    for (int s = 0; s < g.n_states(); ++s)
        for (int a = 0; a < g.n_actions(); ++a) {
            const auto& row = g.row(s, a);
            ASSERT_EQ(row.size(), 1u);
            EXPECT_NEAR(row[0].second, 1.0, 1e-12);
        }
}

TEST(BuildGrid, MeanNextStateTracksDrift) {
    const auto [model, actions] = make_stabilization_env();
    const GridMdp g = build_grid_mdp(model, actions, 201, 0.1, 11, TargetMode::discrete_gamma);
    // State 0 sits at grid index 100; action index 2 is +1, so the Euler mean
    // moves by drift * dt = 0.1.
    EXPECT_EQ(g.grid[100], 0.0);
    double mean = 0.0;
    for (const auto& [ni, p] : g.row(100, 2)) mean += p * g.grid[static_cast<size_t>(ni)];
    EXPECT_NEAR(mean, 0.1, 1e-3);
}

TEST(BuildGrid, RewardScaleAndDiscountFollowTargetMode) {
    const auto [model, actions] = make_stabilization_env();
    const GridMdp disc = build_grid_mdp(model, actions, 201, 0.1, 5, TargetMode::discrete_gamma);
    const GridMdp cont = build_grid_mdp(model, actions, 201, 0.1, 5, TargetMode::continuous_exp);
    // Grid index 150 is s = 0.5; action index 0 is -1.
    EXPECT_EQ(disc.grid[150], 0.5);
    EXPECT_DOUBLE_EQ(disc.reward(150, 0), -0.26);
    EXPECT_DOUBLE_EQ(cont.reward(150, 0), -0.026);
    EXPECT_DOUBLE_EQ(disc.gamma_eff, 0.99);
    EXPECT_DOUBLE_EQ(cont.gamma_eff, std::exp(-0.099));
}

TEST(BuildGrid, RejectsUnsupportedInputs) {
    auto [model, actions] = make_stabilization_env();
    EXPECT_THROW(build_grid_mdp(model, actions, 2, 0.1, 5, TargetMode::discrete_gamma),
                 std::invalid_argument);
    EXPECT_THROW(build_grid_mdp(model, ActionSet::box({-1.0}, {1.0}), 51, 0.1, 5,
                                TargetMode::discrete_gamma),
                 std::invalid_argument);
    SdeModel unclipped = model;
    unclipped.clip_active = false;
    EXPECT_THROW(build_grid_mdp(unclipped, actions, 51, 0.1, 5, TargetMode::discrete_gamma),
                 std::invalid_argument);
    SdeModel wide = model;
    wide.state_dim = 2;
    EXPECT_THROW(build_grid_mdp(wide, actions, 51, 0.1, 5, TargetMode::discrete_gamma),
                 std::invalid_argument);
}

TEST(Bellman, ZeroTableMapsToRewards) {
    const auto [model, actions] = make_stabilization_env();
    const GridMdp g = build_grid_mdp(model, actions, 51, 0.1, 5, TargetMode::discrete_gamma);
    const QTable out = bellman_apply(g, QTable(1, g.n_states(), g.n_actions()));
    for (int s = 0; s < g.n_states(); ++s)
        for (int a = 0; a < g.n_actions(); ++a) EXPECT_EQ(out.at(0, s, a), g.reward(s, a));
}

TEST(Bellman, RejectsMismatchedTableShape) {
    const auto [model, actions] = make_stabilization_env();
    const GridMdp g = build_grid_mdp(model, actions, 51, 0.1, 5, TargetMode::discrete_gamma);
    EXPECT_THROW(bellman_apply(g, QTable(1, 50, 3)), std::invalid_argument);
    EXPECT_THROW(bellman_apply(g, QTable(2, 51, 3)), std::invalid_argument);
}

TEST(Bellman, MonotoneInTheTable) {
    const auto [model, actions] = make_stabilization_env();
    const GridMdp g = build_grid_mdp(model, actions, 31, 0.1, 5, TargetMode::discrete_gamma);
    const QTable q1 = fill_random(g, 5);
    QTable q2 = q1;
    Rng rng(6);
    for (double& v : q2.data) v += rng.uniform(0.0, 1.0);
    const QTable t1 = bellman_apply(g, q1);
    const QTable t2 = bellman_apply(g, q2);
    for (size_t i = 0; i < t1.data.size(); ++i) EXPECT_GE(t2.data[i], t1.data[i]);
}

TEST(Bellman, MeasuredContractionNeverExceedsDiscount) {
    const auto [model, actions] = make_stabilization_env();
    const GridMdp g = build_grid_mdp(model, actions, 31, 0.1, 5, TargetMode::discrete_gamma);
    for (uint64_t seed = 0; seed < 5; ++seed) {
        const ContractionResult res =
            contraction_ratio(g, fill_random(g, 2 * seed), fill_random(g, 2 * seed + 1));
        EXPECT_FALSE(res.degenerate);
        EXPECT_LE(res.ratio, g.gamma_eff + 1e-12);
    }
}

TEST(Bellman, ConstantShiftContractsExactlyByDiscount) {
    const auto [model, actions] = make_stabilization_env();
    const GridMdp g = build_grid_mdp(model, actions, 31, 0.1, 5, TargetMode::discrete_gamma);
    const QTable q1 = fill_random(g, 9);
    QTable q2 = q1;
    for (double& v : q2.data) v += 5.0;
    const ContractionResult res = contraction_ratio(g, q1, q2);
    EXPECT_FALSE(res.degenerate);
    EXPECT_NEAR(res.ratio, g.gamma_eff, 1e-12);
    const ContractionResult same = contraction_ratio(g, q1, q1);
    EXPECT_TRUE(same.degenerate);
    EXPECT_EQ(same.ratio, 0.0);
}

TEST(Solve, ConstantRewardHasClosedFormFixpoint) {
    auto [model, actions] = make_stabilization_env();
    model.reward = [](double, const Vec&, const Vec&) { return 1.0; };
    model.discount_rate = 0.5;
    const GridMdp g = build_grid_mdp(model, actions, 31, 0.1, 5, TargetMode::discrete_gamma);
    const SolveResult res = solve_q_star(g, 1e-10, SolveMode::stationary);
    for (double v : res.q.data) EXPECT_NEAR(v, 2.0, 1e-9);
    // From a zero start the sweep deltas are exactly geometric.
    for (size_t k = 0; k < res.deltas.size(); ++k)
        EXPECT_NEAR(res.deltas[k], std::pow(0.5, static_cast<double>(k)), 1e-12);
}

TEST(Solve, SweepDeltasDecayGeometrically) {
    const auto [model, actions] = make_stabilization_env();
    const GridMdp g = build_grid_mdp(model, actions, 51, 0.1, 7, TargetMode::discrete_gamma);
    const SolveResult res = solve_q_star(g, 1e-8, SolveMode::stationary);
    ASSERT_GE(res.iterations, 2);
    EXPECT_EQ(res.deltas.size(), static_cast<size_t>(res.iterations));
    EXPECT_LE(res.deltas.back(), 1e-8);
    for (size_t k = 0; k < res.deltas.size(); ++k) {
        const double envelope =
            res.deltas[0] * std::pow(g.gamma_eff, static_cast<double>(k)) * (1.0 + 1e-10) + 1e-15;
        EXPECT_LE(res.deltas[k], envelope) << "sweep " << k;
    }
}

TEST(Solve, ValueIsRowwiseMaxOfQ) {
    const auto [model, actions] = make_stabilization_env();
    const GridMdp g = build_grid_mdp(model, actions, 51, 0.1, 5, TargetMode::discrete_gamma);
    const SolveResult res = solve_q_star(g, 1e-6, SolveMode::stationary);
    for (int s = 0; s < g.n_states(); ++s) {
        double best = res.q.at(0, s, 0);
        for (int a = 1; a < g.n_actions(); ++a) best = std::max(best, res.q.at(0, s, a));
        EXPECT_EQ(res.v.at(0, s), best);
    }
}

TEST(Solve, OneStepHorizonReturnsImmediateReward) {
    const auto [model, actions] = make_stabilization_env();
    GridMdp g = build_grid_mdp(model, actions, 201, 0.1, 5, TargetMode::discrete_gamma);
    g.horizon_steps = 1;
    const SolveResult res = solve_q_star(g, 0.0, SolveMode::finite_horizon);
    ASSERT_EQ(res.q.n_time, 1);
    ASSERT_EQ(res.v.n_time, 2);
    // Zero terminal payoff, so Q_0(s, a) is the one-step reward exactly.
    EXPECT_EQ(res.q.at(0, 150, 0), -0.26);
    for (int s = 0; s < g.n_states(); ++s) EXPECT_EQ(res.v.at(1, s), 0.0);
}

TEST(Solve, RejectsBrokenSetups) {
    const auto [model, actions] = make_stabilization_env();
    GridMdp g = build_grid_mdp(model, actions, 31, 0.1, 5, TargetMode::discrete_gamma);
    EXPECT_THROW(solve_q_star(g, 0.0, SolveMode::stationary), std::invalid_argument);
    EXPECT_THROW(solve_q_star(g, 1e-6, SolveMode::finite_horizon), std::invalid_argument);
    GridMdp undiscounted = g;
    undiscounted.gamma_eff = 1.0;
    EXPECT_THROW(solve_q_star(undiscounted, 1e-6, SolveMode::stationary), std::invalid_argument);
}

// Transport with a linear terminal payoff: the exact solution is linear in
// both t and s, so away from the boundary's influence cone the discrete
// residual vanishes to rounding noise.
TEST(Hjb, LinearTransportResidualVanishesInTheClearRegion) {
    const SdeModel model = transport_model([](const Vec& s) { return s[0]; });
    const ActionSet actions = ActionSet::discrete_set({{0.0}});
    GridMdp g = build_grid_mdp(model, actions, 201, 0.1, 3, TargetMode::continuous_exp);
    EXPECT_DOUBLE_EQ(g.gamma_eff, 1.0);
    g.horizon_steps = 3;
    const SolveResult res = solve_q_star(g, 0.0, SolveMode::finite_horizon);
    const HjbResult hjb = hjb_residual(g, res.v, model);
    ASSERT_EQ(hjb.field.size(), 3u);
    double clear = 0.0;
    for (const Vec& row : hjb.field)
        for (size_t i = 0; i < row.size(); ++i)
            if (g.grid[i + 1] <= 0.5) clear = std::max(clear, std::abs(row[i]));
    EXPECT_LT(clear, 1e-10);
}

// Quadratic terminal payoff: the forward time difference leaves a residual of
// exactly dt in the clear region, so halving the grid (and with it dt = 10 ds)
// halves the residual.
TEST(Hjb, QuadraticTransportResidualHalvesUnderRefinement) {
    const SdeModel model = transport_model([](const Vec& s) { return s[0] * s[0]; });
    const ActionSet actions = ActionSet::discrete_set({{0.0}});
    auto clear_max = [&](int n_states, double dt) {
        GridMdp g = build_grid_mdp(model, actions, n_states, dt, 3, TargetMode::continuous_exp);
        g.horizon_steps = 3;
        const SolveResult res = solve_q_star(g, 0.0, SolveMode::finite_horizon);
        const HjbResult hjb = hjb_residual(g, res.v, model);
        double worst = 0.0;
        for (const Vec& row : hjb.field)
            for (size_t i = 0; i < row.size(); ++i)
                if (g.grid[i + 1] <= 0.5) worst = std::max(worst, std::abs(row[i]));
        return worst;
    };
    const double coarse = clear_max(201, 0.1);
    const double fine = clear_max(401, 0.05);
    EXPECT_NEAR(coarse, 0.1, 1e-9);
    EXPECT_NEAR(fine, 0.05, 1e-9);
    EXPECT_NEAR(fine / coarse, 0.5, 1e-6);
}

TEST(Hjb, RejectsDegenerateTables) {
    const auto [model, actions] = make_stabilization_env();
    const GridMdp g = build_grid_mdp(model, actions, 31, 0.1, 5, TargetMode::discrete_gamma);
    EXPECT_THROW(hjb_residual(g, VTable(1, 31), model), std::invalid_argument);
    EXPECT_THROW(hjb_residual(g, VTable(4, 30), model), std::invalid_argument);
    const GridMdp tiny = build_grid_mdp(model, actions, 5, 0.1, 5, TargetMode::discrete_gamma);
    EXPECT_THROW(hjb_residual(tiny, VTable(4, 5), model), std::invalid_argument);
}

TEST(SupError, ConstantHeadAgainstZeroTable) {
    const auto [model, actions] = make_stabilization_env();
    const GridMdp g = build_grid_mdp(model, actions, 5, 0.1, 5, TargetMode::discrete_gamma);
    NetArch arch;
    arch.state_dim = 1;
    arch.mode = QMode::multi_head;
    arch.n_actions = 3;
    arch.hidden_dim = 4;
    arch.n_blocks = 1;
    QNetwork net = init_network(arch, 1);
    std::fill(net.head.w.data.begin(), net.head.w.data.end(), 0.0);
    net.head.b = {3.5, -1.0, 0.25};
    const QTable zero(1, g.n_states(), g.n_actions());
    EXPECT_DOUBLE_EQ(sup_error(net, g, zero, 1.0), 3.5);
    EXPECT_DOUBLE_EQ(sup_error(net, g, zero, 0.4), 3.5);  // only s = 0 inside
    EXPECT_THROW(sup_error(net, g, zero, -1.0), std::invalid_argument);
    EXPECT_THROW(sup_error(net, g, QTable(1, 4, 3), 1.0), std::invalid_argument);
    NetArch two_heads = arch;
    two_heads.n_actions = 2;
    EXPECT_THROW(sup_error(init_network(two_heads, 1), g, zero, 1.0), std::invalid_argument);
}

}  // namespace
}  // namespace ctdqn
