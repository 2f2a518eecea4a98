/*
   Copyright 2026 The ml2rgodic Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#include <cmath>

#include <boost/math/tools/minima.hpp>
#include <gtest/gtest.h>

#include <ml2rgodic/optimizer.hpp>

using namespace ml2rgodic;

namespace {
CalibrationReport ou_exact(double sigma) { return CalibrationReport::from_reference(make_ou(sigma).ref); }
} // namespace

TEST(Depth, TableCells) {
    EXPECT_NEAR(solve_depth(1e-2, 2).x, 2.79, 0.01);
    EXPECT_EQ(solve_depth(1e-2, 2).R, 3);
    EXPECT_NEAR(solve_depth(1e-3, 3).x, 3.06, 0.01);
    EXPECT_EQ(solve_depth(1e-3, 3).R, 4);
    EXPECT_NEAR(solve_depth(1e-4, 4).x, 3.30, 0.01);
    EXPECT_EQ(solve_depth(1e-4, 4).R, 4);
}

TEST(Depth, RootAndBounds) {
    int prevR = 0;
    for (int M : {2, 3, 4, 8}) {
        prevR = 0;
        for (double e = 0.5; e > 1e-12; e /= 3) {
            auto d = solve_depth(e, M);
            EXPECT_NEAR(depth_equation(d.x, e, M), 0.0, 1e-10);
            EXPECT_LE(d.x, 0.5 + std::sqrt(2 * std::log(1 / e) / std::log(M) + 0.25));
            EXPECT_GE(d.R, prevR);
            EXPECT_GE(d.R, 2);
            prevR = d.R;
        }
    }
}

TEST(Depth, Errors) {
    EXPECT_THROW(solve_depth(1.0, 2), ConfigError);
    EXPECT_THROW(solve_depth(0.0, 2), ConfigError);
    EXPECT_THROW(solve_depth(0.1, 1), ConfigError);
    EXPECT_EQ(solve_depth(0.5, 2).R, 2);
}

TEST(Gamma1, Example) { EXPECT_NEAR(optimal_gamma1(3, 3, 4.0, 1.0 / 64), 6.37, 0.005); }

TEST(Gamma1, ScalingLaw) {
    for (int R : {2, 3, 5})
        EXPECT_NEAR(optimal_gamma1(R, 3, 8.0, 0.1) / optimal_gamma1(R, 3, 4.0, 0.1), std::pow(2.0, 1.0 / (2 * R + 1)),
                    1e-12);
}

TEST(Gamma1, ArgminIdentity) { EXPECT_NEAR(argmin_power_balance(1, 1, 2), std::pow(4.0, -0.2), 1e-12); }

TEST(Gamma1, MatchesNumericalMinimum) {
    GaussianStream g(17, 0, 0, StreamPurpose::Test);
    for (int t = 0; t < 20; ++t) {
        int R = 2 + t % 4, M = 2 + t % 3;
        double s1 = 0.1 + 10 * g.uniform(), c = 0.01 + g.uniform();
        double A = 2.0 * R / (2 * R + 1) * s1, B = 4.0 * std::pow(M, -R * (R - 1.0)) * c * c;
        auto obj = [&](double u) { return A / u + B * std::pow(u, 2 * R); };
        double closed = optimal_gamma1(R, M, s1, c);
        auto r = boost::math::tools::brent_find_minima(obj, closed / 50, closed * 50, 60);
        EXPECT_NEAR(r.first / closed, 1.0, 1e-6);
        EXPECT_NEAR(argmin_power_balance(A, B, R) / closed, 1.0, 1e-12);
    }
}

TEST(Rho, Monotone) {
    EXPECT_LT(solve_rho_for_target(1e8, 3), 1e-5);
    EXPECT_GT(solve_rho_for_target(1e-8, 3), 1 - 1e-5);
    auto cal = ou_exact(1.0);
    double r1 = solve_rho(1e-2, 2, 2, cal, psi(2, 2));
    cal.theta1 *= 2;
    double r2 = solve_rho(1e-2, 2, 2, cal, psi(2, 2));
    EXPECT_GT(r2, r1);
}

TEST(Rho, ResidualOfDefiningEquation) {
    for (double s : {1.0, 4.0})
        for (int R : {2, 3, 4})
            for (int M : {2, 3, 4}) {
                auto cal = ou_exact(s);
                double ps = psi(R, M);
                double rho = solve_rho(1e-2, R, M, cal, ps);
                double lhs = std::pow(1e-2, 1.0 / R) * std::pow(M, (R - 1) / 2.0) * R;
                double rhs = rho_map(rho, R) * mu_constant(R, cal.c_next(R)) * cal.theta1 /
                             (cal.theta2 / R + (1 - 1.0 / M) * ps / R);
                EXPECT_NEAR(rhs / lhs, 1.0, 1e-10);
            }
}

TEST(CoarseSize, Examples) {
    // 30-digit evaluation gives 711311.764
    EXPECT_EQ(coarse_size(1e-2, 2, 2, 0.5, 4.0, 1.0 / 16), 711312u);
    double n1 = static_cast<double>(coarse_size(1e-2, 3, 2, 0.4, 4.0, 0.02));
    double n2 = static_cast<double>(coarse_size(5e-3, 3, 2, 0.4, 4.0, 0.02));
    EXPECT_NEAR(n2 / n1, std::pow(2.0, 2 + 1.0 / 3), 1e-5);
    EXPECT_LT(coarse_size(1e-2, 2, 2, 0.9, 4, 0.1), coarse_size(1e-2, 2, 2, 0.5, 4, 0.1));
    EXPECT_THROW(coarse_size(1e-12, 2, 2, 1e-9, 1e6, 1e3), BudgetInfeasible);
}

TEST(Complexity, Examples) {
    EXPECT_DOUBLE_EQ(complexity(1e6, 2, 2), 2e6);
    EXPECT_DOUBLE_EQ(complexity(1e6, 3, 3), 3e6);
    EXPECT_DOUBLE_EQ(complexity(10, 2, 2, 2.5), 50);
}

TEST(Plan, DepthFromTable) {
    auto p = build_plan(1e-2, 2, ou_exact(1.0));
    EXPECT_EQ(p.R, 3);
    EXPECT_NEAR(p.x_depth, 2.79, 0.01);
    EXPECT_DOUBLE_EQ(p.a, 1.0 / 7);
    EXPECT_EQ(p.level_sizes.size(), 3u);
    for (auto nr : p.level_sizes) EXPECT_EQ(nr, p.n / 3);
    EXPECT_DOUBLE_EQ(p.K, complexity(p.n, 3, 2));
    EXPECT_EQ(p.provenance.at("sigma1_sq"), Provenance::Exact);
    EXPECT_EQ(p.provenance.at("R"), Provenance::Derived);
    EXPECT_EQ(p.provenance.at("gamma1"), Provenance::Derived);
}

TEST(Plan, Overrides) {
    PlanOverrides ov;
    ov.R = 2;
    ov.gamma1 = 0.3;
    ov.rho = 0.6;
    auto p = build_plan(1e-2, 3, ou_exact(1.0), ov);
    EXPECT_EQ(p.R, 2);
    EXPECT_EQ(p.gamma1, 0.3);
    EXPECT_EQ(p.rho, 0.6);
    EXPECT_EQ(p.provenance.at("R"), Provenance::Override);
    EXPECT_EQ(build_plan(0.5, 2, ou_exact(1.0)).R, 2);
}

TEST(Plan, SweepPicksCheapest) {
    auto plans = sweep_plans(1e-2, {2, 3, 4}, {2, 3, 4}, ou_exact(4.0));
    ASSERT_EQ(plans.size(), 9u);
    auto &best = cheapest(plans);
    for (auto &p : plans) EXPECT_LE(best.K, p.K);
}

TEST(PredictedMse, SplitMatchesRho) {
    for (double s : {1.0, 4.0})
        for (int R : {2, 3}) {
            auto cal = ou_exact(s);
            PlanOverrides ov;
            ov.R = R;
            auto p = build_plan(1e-2, 2, cal, ov);
            auto m = predicted_mse(p, cal, plan_weights(p));
            EXPECT_LE(m.first_order, p.rho * 1e-4 * (1 + 1e-6));
            EXPECT_NEAR(m.first_order / (p.rho * 1e-4), 1.0, 1e-3);
            EXPECT_LE(m.second_variance, (1 - p.rho) * 1e-4 * (1 + 1e-6));
            EXPECT_NEAR(m.second_variance / ((1 - p.rho) * 1e-4), 1.0, 1e-3);
            EXPECT_GE(m.second_bias, 0.0);
        }
}

TEST(PredictedMse, BiasVarianceBalanceAtOptimum) {
    auto cal = ou_exact(1.0);
    PlanOverrides ov;
    ov.R = 3;
    auto p = build_plan(1e-2, 3, cal, ov);
    auto m = predicted_mse(p, cal, plan_weights(p));
    EXPECT_NEAR(m.first_bias_sq / m.first_variance, 1.0 / (2 * p.R), 1e-10);
}

TEST(PredictedMse, NoBiasWithoutCoefficient) {
    auto cal = ou_exact(1.0);
    PlanOverrides ov;
    ov.R = 2;
    auto p = build_plan(1e-2, 2, cal, ov);
    cal.c_abs.clear();
    cal.c_abs_default = 0.0;
    auto m = predicted_mse(p, cal, plan_weights(p));
    EXPECT_EQ(m.first_bias_sq, 0.0);
    EXPECT_EQ(m.first_order, m.first_variance);
    p.R = 1;
    EXPECT_THROW(predicted_mse(p, cal, plan_weights(build_plan(1e-2, 2, ou_exact(1.0), ov))), ConfigError);
}

TEST(Crude, FirstOrderPlan) {
    auto c = build_crude_plan(1e-2, 4.0, 0.25);
    EXPECT_NEAR(crude_mse(static_cast<double>(c.n), c.gamma1, 4.0, 0.25), 1e-4, 1e-8);
    EXPECT_NEAR(c.K, 2 * std::sqrt(3.0) * 1e6, 2.0);
    EXPECT_DOUBLE_EQ(c.gamma1, optimal_gamma1(1, 2, 4.0, 0.25));
}

TEST(Calibration, DeterministicModelHasNoVariance) {
    DiffusionModel m;
    m.b = [](std::span<const double> x, std::span<double> o) { o[0] = -0.5 * x[0]; };
    m.sigma_dw = [](std::span<const double>, std::span<const double>, std::span<double> o) { o[0] = 0.0; };
    m.initial = {1.0};
    EXPECT_NEAR(calibrate_sigma1(m, Square{}, 10, 1000, 1.0, 3), 0.0, 1e-20);
}

TEST(Calibration, ConstantFunctionHasNoCorrectionVariance) {
    struct One {
        std::size_t dim() const { return 1; }
        void eval(std::span<const double>, std::span<double> o) const { o[0] = 1.0; }
    };
    EXPECT_EQ(calibrate_sigma22(make_ou(1.0).model, One{}, 2, 10, 1000, 1.0, 3), 0.0);
}

TEST(Calibration, OuSigma1Scale) {
    auto ou = make_ou(2.0);
    double s = calibrate_sigma1(ou.model, ou.observable, 60, 50000, 1.0, 11);
    EXPECT_NEAR(s / 64.0, 1.0, 0.35);
}

TEST(Clt, VarianceConstant) {
    EXPECT_DOUBLE_EQ(clt_variance(0.25, 0.5, 1.0, 4.0), 0.75 * 4.0 / std::pow(0.5, 0.75));
}
