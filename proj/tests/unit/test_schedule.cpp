#include "loopshift/schedule.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

using namespace loopshift;

namespace {

Matrix random_matrix(long rows, long cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Matrix m(rows, cols);
    for (long i = 0; i < m.size(); ++i) {
        m.data()[i] = normal(rng);
    }
    return m;
}

} // namespace

TEST(Schedule, TwoStepConstantBetas) {
    const NoiseSchedule s = make_linear_schedule(2, 0.1, 0.1);
    EXPECT_EQ(s.steps(), 2);
    EXPECT_DOUBLE_EQ(s.beta(1), 0.1);
    EXPECT_DOUBLE_EQ(s.beta(2), 0.1);
    EXPECT_NEAR(s.alpha_bar(1), 0.9, 1e-15);
    EXPECT_NEAR(s.alpha_bar(2), 0.81, 1e-15);
    EXPECT_EQ(s.alpha_bar(0), 1.0);
}

TEST(Schedule, DefaultFinalAlphaBarMatchesHighPrecisionValue) {
    // Product of (1 - beta_t) evaluated with 50-digit arithmetic.
    const NoiseSchedule s = make_default_schedule();
    EXPECT_NEAR(s.alpha_bar(1000) / 4.0358297653756833e-5, 1.0, 1e-10);
}

TEST(Schedule, RejectsBadParameters) {
    EXPECT_THROW(make_linear_schedule(2, 0.5, 0.1), ConfigError);
    EXPECT_THROW(make_linear_schedule(1, 0.1, 0.1), ConfigError);
    EXPECT_THROW(make_linear_schedule(10, 0.0, 0.1), ConfigError);
    EXPECT_THROW(make_linear_schedule(10, 0.1, 1.0), ConfigError);
    EXPECT_THROW(NoiseSchedule({0.1, 1.5}), ConfigError);
}

TEST(Schedule, InvariantsHold) {
    const NoiseSchedule s = make_default_schedule();
    double running = 1.0;
    for (int t = 1; t <= s.steps(); ++t) {
        EXPECT_GT(s.beta(t), 0.0);
        EXPECT_LT(s.beta(t), 1.0);
        EXPECT_NEAR(s.alpha(t), 1.0 - s.beta(t), 1e-15);
        running *= s.alpha(t);
        EXPECT_NEAR(s.alpha_bar(t) / running, 1.0, 1e-12);
        EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
        EXPECT_GT(s.alpha_bar(t), 0.0);
    }
    EXPECT_THROW(s.alpha_bar(1001), ConfigError);
}

TEST(TimestepPlan, FiftyStepPlan) {
    const TimestepPlan plan = make_timestep_plan(1000, 50);
    ASSERT_EQ(plan.size(), 50u);
    EXPECT_EQ(plan.front().t, 1000);
    EXPECT_EQ(plan.front().t_prev, 980);
    EXPECT_EQ(plan.back().t, 20);
    EXPECT_EQ(plan.back().t_prev, 0);
    for (std::size_t k = 0; k < plan.size(); ++k) {
        EXPECT_GT(plan[k].t, plan[k].t_prev);
        if (k + 1 < plan.size()) {
            EXPECT_EQ(plan[k].t_prev, plan[k + 1].t);
        }
    }
}

TEST(TimestepPlan, UnevenStrideStillDecreasing) {
    const TimestepPlan plan = make_timestep_plan(1000, 7);
    ASSERT_EQ(plan.size(), 7u);
    for (const TimestepPair& p : plan) {
        EXPECT_GT(p.t, p.t_prev);
    }
    EXPECT_EQ(plan.back().t_prev, 0);
    EXPECT_THROW(make_timestep_plan(10, 0), ConfigError);
    EXPECT_THROW(make_timestep_plan(10, 11), ConfigError);
}

TEST(Ddim, ZeroNoiseScalesLatent) {
    const NoiseSchedule s = make_default_schedule();
    const Matrix z = random_matrix(5, 3, 1);
    const Matrix out = ddim_step(z, Matrix::Zero(5, 3), 500, 300, s);
    const double factor = std::sqrt(s.alpha_bar(300) / s.alpha_bar(500));
    EXPECT_LT((out - factor * z).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Ddim, ScalarEvaluation) {
    // alpha_bar(1) = 0.64, alpha_bar(2) = 0.25.
    const NoiseSchedule s({0.36, 1.0 - 0.25 / 0.64});
    ASSERT_NEAR(s.alpha_bar(2), 0.25, 1e-15);
    Matrix z(1, 1);
    z(0, 0) = 1.0;
    const Matrix out = ddim_step(z, Matrix::Zero(1, 1), 2, 1, s);
    EXPECT_NEAR(out(0, 0), 1.6, 1e-12);
}

TEST(Ddim, ExactInversionToZero) {
    const NoiseSchedule s = make_default_schedule();
    const Matrix x0 = random_matrix(8, 4, 2);
    const Matrix eps = random_matrix(8, 4, 3);
    for (int t : {1, 20, 500, 1000}) {
        const Matrix z = add_noise(x0, eps, t, s);
        EXPECT_LT((ddim_step(z, eps, t, 0, s) - x0).cwiseAbs().maxCoeff(), 1e-10) << "t=" << t;
    }
}

TEST(Ddim, AffineBySuperposition) {
    const NoiseSchedule s = make_default_schedule();
    const Matrix z1 = random_matrix(6, 2, 4), z2 = random_matrix(6, 2, 5);
    const Matrix e1 = random_matrix(6, 2, 6), e2 = random_matrix(6, 2, 7);
    const double a = 0.3;
    const double b = 0.7;
    const Matrix lhs = ddim_step(a * z1 + b * z2, a * e1 + b * e2, 700, 680, s);
    const Matrix rhs = a * ddim_step(z1, e1, 700, 680, s) + b * ddim_step(z2, e2, 700, 680, s);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Ddim, DeterministicAndValidated) {
    const NoiseSchedule s = make_default_schedule();
    const Matrix z = random_matrix(4, 4, 8);
    const Matrix e = random_matrix(4, 4, 9);
    const Matrix a = ddim_step(z, e, 100, 80, s);
    const Matrix b = ddim_step(z, e, 100, 80, s);
    EXPECT_EQ(0, std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())));
    EXPECT_THROW(ddim_step(z, random_matrix(3, 4, 1), 100, 80, s), ConfigError);
    EXPECT_THROW(ddim_step(z, e, 80, 80, s), ConfigError);
    EXPECT_THROW(ddim_step(z, e, 80, 100, s), ConfigError);
}

TEST(Ddim, EtaZeroMatchesDeterministic) {
    const NoiseSchedule s = make_default_schedule();
    const Matrix z = random_matrix(4, 2, 10);
    const Matrix e = random_matrix(4, 2, 11);
    const Matrix n = random_matrix(4, 2, 12);
    EXPECT_LT((ddim_step(z, e, 300, 200, s, 0.0, n) - ddim_step(z, e, 300, 200, s)).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_THROW(ddim_step(z, e, 300, 200, s, -1.0, n), ConfigError);
}
