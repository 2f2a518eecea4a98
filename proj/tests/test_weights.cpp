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
#include <vector>

#include <gtest/gtest.h>

#include <ml2rgodic/rng.hpp>
#include <ml2rgodic/weights.hpp>

using namespace ml2rgodic;

namespace {

std::vector<double> random_simplex(GaussianStream &g, int R) {
    std::vector<double> q(R);
    double s = 0;
    for (auto &v : q) s += (v = 0.05 + g.uniform());
    for (auto &v : q) v /= s;
    return q;
}

void expect_close(double a, double b, double tol, const char *what) {
    EXPECT_LE(std::abs(a - b), tol * std::max(1.0, std::abs(b))) << what << ": " << a << " vs " << b;
}

} // namespace

TEST(Uniform, Examples) {
    auto a = solve_uniform(2, 2, 0.2);
    EXPECT_EQ(a.w_small, (std::vector<double>{-1.0, 2.0}));
    EXPECT_EQ(a.W, (std::vector<double>{1.0, 2.0}));
    auto b = solve_uniform(3, 2, 0.2);
    EXPECT_NEAR(b.w_small[0], 1.0 / 3, 1e-15);
    EXPECT_NEAR(b.w_small[1], -2.0, 1e-15);
    EXPECT_NEAR(b.w_small[2], 8.0 / 3, 1e-15);
    EXPECT_EQ(b.W[0], 1.0);
    EXPECT_NEAR(b.W[1], 2.0 / 3, 1e-15);
    EXPECT_NEAR(b.W[2], 8.0 / 3, 1e-15);
    EXPECT_NEAR(a.Wt1, -0.659753955386447, 1e-12);
}

TEST(Uniform, IndependentOfExponent) {
    for (int R = 2; R <= 8; ++R) {
        auto a = solve_uniform(R, 3, 0.1), b = solve_uniform(R, 3, 0.7);
        EXPECT_EQ(a.W, b.W);
    }
}

TEST(Uniform, BoundedWeights) {
    for (int M : {2, 3, 4}) {
        double bound = uniform_weight_bound(M);
        for (int R = 2; R <= 12; ++R)
            for (double w : solve_uniform(R, M, 0.2).W) EXPECT_LE(std::abs(w), bound) << "R=" << R << " M=" << M;
    }
}

TEST(Uniform, ClosedFormResidualCoefficients) {
    for (int M : {2, 3, 4})
        for (int R = 2; R <= 7; ++R)
            for (double a : {0.1, 1.0 / 7, 0.2}) {
                auto ws = solve_uniform(R, M, a);
                expect_close(ws.Wt1, wtilde(ws, 1), 1e-10, "Wt1 closed vs definition");
                expect_close(ws.Wt2, wtilde(ws, 2), 1e-10, "Wt2 closed vs definition");
                std::vector<double> q(R, 1.0 / R);
                auto g = solve_general(R, M, a, q);
                expect_close(ws.Wt1, g.Wt1, 1e-10, "Wt1 closed vs series");
                expect_close(ws.Wt2, g.Wt2, 1e-10, "Wt2 closed vs series");
            }
}

TEST(General, TwoLevelClosedForm) {
    auto ws = solve_general(2, 2, 0.2, {0.7, 0.3});
    EXPECT_NEAR(ws.W[1], 2.0 * std::pow(3.0 / 7.0, 0.2), 1e-12);
    EXPECT_NEAR(ws.W[1], 1.688242, 1e-6);
    auto o = solve_oracle(2, 3, 0.3, {0.6, 0.4});
    EXPECT_NEAR(o.W[1], 1.5 * std::pow(0.4 / 0.6, 0.3), 1e-12);
}

TEST(General, MatchesUniform) {
    for (int M : {2, 3, 4})
        for (int R = 2; R <= 6; ++R) {
            std::vector<double> q(R, 1.0 / R);
            auto u = solve_uniform(R, M, 0.2);
            auto g = solve_general(R, M, 0.2, q);
            auto o = solve_oracle(R, M, 0.2, q);
            for (int r = 0; r < R; ++r) {
                expect_close(g.W[r], u.W[r], 1e-12, "series vs uniform");
                expect_close(o.W[r], u.W[r], 1e-12, "oracle vs uniform");
            }
        }
}

TEST(General, SeriesMatchesOracleOnRandomResizers) {
    GaussianStream g(31, 0, 0, StreamPurpose::Test);
    for (int R = 2; R <= 6; ++R)
        for (int M : {2, 3, 4})
            for (double a : {1.0 / 5, 1.0 / 7, 1.0 / 9})
                for (int t = 0; t < 5; ++t) {
                    auto q = random_simplex(g, R);
                    auto s = solve_general(R, M, a, q), o = solve_oracle(R, M, a, q);
                    for (int r = 0; r < R; ++r) expect_close(s.W[r], o.W[r], 1e-10, "W");
                    expect_close(s.Wt1, o.Wt1, 1e-10, "Wt1");
                    expect_close(s.Wt2, o.Wt2, 1e-10, "Wt2");
                    EXPECT_LT(system_residual(s), 1e-10);
                    EXPECT_LT(system_residual(o), 1e-10);
                    EXPECT_EQ(s.W[0], 1.0);
                }
}

TEST(Oracle, ResidualExample) {
    auto ws = solve_oracle(3, 2, 1.0 / 7, {0.5, 0.3, 0.2});
    EXPECT_LT(system_residual(ws), 1e-12);
}

TEST(Residual, UniformAndPerturbed) {
    EXPECT_LT(system_residual(solve_uniform(2, 2, 0.2)), 1e-10);
    EXPECT_LT(system_residual(solve_uniform(4, 3, 0.2)), 1e-10);
    auto ws = solve_uniform(2, 2, 0.2);
    ws.W[1] += 0.1;
    EXPECT_GE(system_residual(ws), 0.01);
}

TEST(Admissibility, RejectsCoincidentNodes) {
    // q_3 M^{3/a} = q_2 M^{2/a}  <=>  q_3 = q_2 M^{-1/a}
    const int M = 2;
    const double a = 0.5;
    double q2 = 0.6, q3 = q2 * std::pow(M, -1.0 / a);
    std::vector<double> q{1.0 - q2 - q3, q2, q3};
    EXPECT_THROW(solve_general(3, M, a, q), ConfigError);
    EXPECT_THROW(solve_oracle(3, M, a, q), ConfigError);
    EXPECT_THROW(solve_general(3, 2, 0.2, {0.5, 0.5, 0.1}), ConfigError);
    EXPECT_THROW(solve_general(2, 2, 0.2, {0.5, 0.5, 0.0}), ConfigError);
}

TEST(Vandermonde, LagrangeIdentities) {
    GaussianStream g(4, 0, 0, StreamPurpose::Test);
    for (int t = 0; t < 20; ++t) {
        const int R = 2 + t % 5;
        std::vector<long double> x;
        for (int r = 0; r < R; ++r) x.push_back(0.2L + r + 0.5L * g.uniform());
        long double c = 0.3L + 2.0L * g.uniform();
        auto y = detail::lagrange_at(x, c);
        std::vector<long double> rhs;
        for (int j = 0; j < R; ++j) rhs.push_back(std::pow(c, j));
        auto sol = detail::vandermonde_solve(x, rhs);
        long double prod = 1.0L, sx = 0.0L, s_r = 0.0L, s_r1 = 0.0L;
        for (int r = 0; r < R; ++r) {
            EXPECT_NEAR(static_cast<double>(y[r]), static_cast<double>(sol[r]), 1e-9 * std::max(1.0L, std::abs(y[r])));
            prod *= c - x[r];
            sx += x[r];
            s_r += y[r] * std::pow(x[r], R);
            s_r1 += y[r] * std::pow(x[r], R + 1);
        }
        long double e1 = std::pow(c, R) - prod;
        long double e2 = std::pow(c, R + 1) - (c + sx) * prod;
        EXPECT_NEAR(static_cast<double>(s_r), static_cast<double>(e1), 1e-9 * std::max(1.0L, std::abs(e1)));
        EXPECT_NEAR(static_cast<double>(s_r1), static_cast<double>(e2), 1e-9 * std::max(1.0L, std::abs(e2)));
    }
}

TEST(Psi, Values) {
    EXPECT_NEAR(psi(2, 2), 64.0 / 15, 1e-12);
    EXPECT_NEAR(psi(3, 2), 272.0 / 35, 1e-12);
    EXPECT_NEAR(psi(3, 3) / 3, 1.278, 5e-4);
    EXPECT_NEAR(psi_bold(2), 2.674, 5e-4);
    EXPECT_NEAR(psi_bold(3), 1.278, 5e-4);
    EXPECT_NEAR(psi_bold(4), 1.024, 5e-4);
}

TEST(Psi, BoldIsRunningMaximumWithPlateau) {
    for (int M : {2, 3, 4}) {
        double best = 0.0;
        std::vector<double> vals;
        for (int R = 2; R <= 40; ++R) vals.push_back(psi(R, M) / R);
        for (double v : vals) best = std::max(best, v);
        EXPECT_DOUBLE_EQ(psi_bold(M), best);
        for (std::size_t i = vals.size() - 10; i < vals.size(); ++i) EXPECT_LE(vals[i], best + 1e-9);
    }
}

TEST(Bias1, Examples) {
    EXPECT_NEAR(bias1_coefficient(solve_uniform(2, 2, 0.2), 2), 0.0, 1e-15);
    EXPECT_NEAR(bias1_coefficient(solve_uniform(3, 2, 0.2), 3), 0.0, 1e-15);
    auto g = solve_general(3, 2, 0.2, {0.5, 0.3, 0.2});
    EXPECT_GT(std::abs(bias1_coefficient(g, 2)), 1e-6);
    EXPECT_THROW(bias1_coefficient(g, 1), ConfigError);
}

TEST(Bias1, VanishesForUniform) {
    for (int M : {2, 3, 4})
        for (int R = 2; R <= 8; ++R) {
            auto ws = solve_uniform(R, M, 0.2);
            for (int l = 2; l <= R; ++l) EXPECT_LT(std::abs(bias1_coefficient(ws, l)), 1e-12);
        }
}
