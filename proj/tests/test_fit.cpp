#include <gtest/gtest.h>

#include <cmath>

#include "ctdqn/fit.hpp"

namespace ctdqn {
namespace {

TEST(SupErrorOnGrid, HandComputedGaps) {
    NetArch arch;
    arch.state_dim = 1;
    arch.mode = QMode::multi_head;
    arch.n_actions = 1;
    arch.hidden_dim = 2;
    arch.n_blocks = 0;
    QNetwork net = init_network(arch, 1);
    std::fill(net.head.w.data.begin(), net.head.w.data.end(), 0.0);
    net.head.b = {2.0};
    const BoxTarget zero = [](const Vec&) { return 0.0; };
    EXPECT_DOUBLE_EQ(sup_error_on_grid(net, 0, zero, {-1.0}, {1.0}, 101), 2.0);
    const BoxTarget ramp = [](const Vec& x) { return x[0]; };
    EXPECT_DOUBLE_EQ(sup_error_on_grid(net, 0, ramp, {-1.0}, {1.0}, 101), 3.0);
    EXPECT_THROW(sup_error_on_grid(net, 0, zero, {-1.0}, {1.0}, 1), std::invalid_argument);
}

TEST(FitSupervised, ValidatesArguments) {
    const BoxTarget zero = [](const Vec&) { return 0.0; };
    EXPECT_THROW(fit_supervised(zero, {}, {}, 0, 4, 1000, 1), std::invalid_argument);
    EXPECT_THROW(fit_supervised(zero, {-1.0}, {1.0, 2.0}, 0, 4, 1000, 1), std::invalid_argument);
    EXPECT_THROW(fit_supervised(zero, {-1.0}, {1.0}, 0, 4, 0, 1), std::invalid_argument);
}

TEST(FitSupervised, ConstantTargetIsLearnedTightly) {
    const BoxTarget target = [](const Vec&) { return 0.7; };
    const FitResult res = fit_supervised(target, {-1.0}, {1.0}, 0, 8, 128000, 3);
    EXPECT_FALSE(res.diverged);
    EXPECT_LT(res.sup_error, 1e-2);
}

TEST(FitSupervised, SmoothTargetWithinLooseBand) {
    const BoxTarget target = [](const Vec& x) { return std::sin(3.0 * x[0]); };
    const FitResult res = fit_supervised(target, {-1.0}, {1.0}, 2, 32, 100000, 3);
    EXPECT_FALSE(res.diverged);
    EXPECT_LT(res.sup_error, 0.2);
}

TEST(FitSupervised, DeterministicGivenSeed) {
    const BoxTarget target = [](const Vec& x) { return x[0] * x[0]; };
    const FitResult a = fit_supervised(target, {-1.0}, {1.0}, 1, 8, 4000, 11);
    const FitResult b = fit_supervised(target, {-1.0}, {1.0}, 1, 8, 4000, 11);
    const FitResult c = fit_supervised(target, {-1.0}, {1.0}, 1, 8, 4000, 12);
    EXPECT_EQ(a.sup_error, b.sup_error);
    EXPECT_EQ(get_params(a.net), get_params(b.net));
    EXPECT_NE(get_params(a.net), get_params(c.net));
}

TEST(FitSupervised, AbsurdLearningRateReportsDivergence) {
    const BoxTarget target = [](const Vec& x) { return x[0]; };
    FitOptions opts;
    opts.learning_rate = 1e150;
    const FitResult res = fit_supervised(target, {-1.0}, {1.0}, 2, 8, 10000, 5, opts);
    EXPECT_TRUE(res.diverged);
    EXPECT_TRUE(std::isinf(res.sup_error));
}

}  // namespace
}  // namespace ctdqn
