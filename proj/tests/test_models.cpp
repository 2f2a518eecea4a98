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
#include <cstdio>
#include <fstream>
#include <vector>

#include <gtest/gtest.h>

#include <ml2rgodic/models.hpp>
#include <ml2rgodic/rng.hpp>
#include <ml2rgodic/simulate.hpp>

using namespace ml2rgodic;

namespace {
double drift1(const auto &m, double x) {
    double in = x, out = 0.0;
    m.drift(std::span<const double>(&in, 1), std::span<double>(&out, 1));
    return out;
}
} // namespace

TEST(OU, ReferenceValues) {
    auto a = make_ou(1.0);
    EXPECT_EQ(*a.ref.nu_f, 1.0);
    EXPECT_EQ(*a.ref.sigma1_sq, 4.0);
    EXPECT_EQ(*a.ref.sigma22_sq, 4.0);
    EXPECT_DOUBLE_EQ(a.ref.c_abs.at(2), 1.0 / 16.0);
    EXPECT_EQ(*make_ou(4.0).ref.nu_f, 16.0);
    EXPECT_EQ(*make_ou(2.0).ref.sigma21_sq, 80.0);
}

TEST(OU, Coefficients) {
    auto b = make_ou(3.0);
    EXPECT_EQ(drift1(b.model, 2.0), -1.0);
    double x = 0.7;
    auto sig = diffusion_matrix(b.model, std::span<const double>(&x, 1));
    ASSERT_EQ(sig.size(), 1u);
    EXPECT_EQ(sig[0], 3.0);
}

TEST(OU, StrongConfluence) {
    auto b = make_ou(1.0);
    GaussianStream g(1, 0, 0, StreamPurpose::Test);
    for (int i = 0; i < 1000; ++i) {
        double x = 10 * g.normal(), y = 10 * g.normal();
        EXPECT_LE((drift1(b.model, x) - drift1(b.model, y)) * (x - y), -0.5 * (x - y) * (x - y) + 1e-12);
    }
}

TEST(DoubleWell, Drift) {
    DoubleWell m(2.0);
    EXPECT_EQ(drift1(m, 0.0), 0.0);
    EXPECT_EQ(drift1(m, 1.0), -1.0);
    for (double x : {-2.3, -0.4, 0.9, 3.1}) {
        double h = 1e-6;
        double fd = -(DoubleWell::potential(x + h) - DoubleWell::potential(x - h)) / (2 * h);
        EXPECT_NEAR(drift1(m, x), fd, 1e-7);
    }
}

TEST(Gibbs, GaussianCases) {
    auto sq = [](double x) { return x * x; };
    auto V = [](double x) { return x * x; };
    // c = 2/sigma^2 = 1/2 at sigma = 2
    EXPECT_NEAR(gibbs_quadrature(V, 2.0, sq, GibbsConvention::Standard2OverSigma2), 1.0, 1e-9);
    // c = 1/(2 sigma^2) = 1/8 at sigma = 2
    EXPECT_NEAR(gibbs_quadrature(V, 2.0, sq, GibbsConvention::OneOver2Sigma2), 4.0, 1e-9);
}

TEST(Gibbs, ShiftInvariance) {
    auto sq = [](double x) { return x * x; };
    auto V7 = [](double x) { return DoubleWell::potential(x) + 7.0; };
    for (auto conv : {GibbsConvention::OneOver2Sigma2, GibbsConvention::Standard2OverSigma2})
        EXPECT_NEAR(gibbs_quadrature(DoubleWell::potential, 2.0, sq, conv), gibbs_quadrature(V7, 2.0, sq, conv),
                    1e-10);
}

TEST(Gibbs, DoubleWellConventions) {
    auto sq = [](double x) { return x * x; };
    EXPECT_NEAR(gibbs_quadrature(DoubleWell::potential, 2.0, sq, GibbsConvention::Standard2OverSigma2), 1.417038,
                1e-6);
    EXPECT_NEAR(gibbs_quadrature(DoubleWell::potential, 2.0, sq, GibbsConvention::OneOver2Sigma2), 4.594903,
                1e-6);
}

TEST(Gibbs, NonIntegrableRejected) {
    auto flat = [](double) { return 0.0; };
    EXPECT_THROW(gibbs_quadrature(flat, 1.0, [](double) { return 1.0; }, GibbsConvention::Standard2OverSigma2),
                 ConfigError);
}

// A long decreasing-step chain settles on the standard-convention value.
TEST(DoubleWell, SimulationMatchesStandardConvention) {
    auto b = make_double_well(2.0);
    StepSchedule s(0.5, 1.0 / 3.0);
    auto v = run_coarse_level(b.model, b.observable, s, 4000000, GaussianStream(77, 1, 0, StreamPurpose::Test));
    EXPECT_NEAR(v.value[0], *b.ref.nu_f, 0.1);
    EXPECT_GT(std::abs(v.value[0] - 3.1207), 1.0);
    EXPECT_GT(std::abs(v.value[0] - 4.5949), 1.0);
}

TEST(EWA, DriftExamples) {
    // p = 1, X = [1], Y = [1], beta = 4 (sigma_noise = 1)
    EwaPosterior m({1.0}, {1.0}, 1, 1.0);
    EXPECT_EQ(m.beta(), 4.0);
    EXPECT_DOUBLE_EQ(drift1(m, 0.0), 0.5);
}

TEST(EWA, DriftAtZeroIsDataTerm) {
    auto d = generate_ewa_data(20, 10, 3, 5);
    auto b = make_ewa(d);
    std::vector<double> z(20, 0.0), out(20);
    b.model.drift(z, out);
    for (std::size_t j = 0; j < 20; ++j) {
        double g = 0.0;
        for (std::size_t i = 0; i < 10; ++i) g += d.X[i * 20 + j] * d.Y[i];
        EXPECT_NEAR(out[j], 2.0 / b.model.beta() * g, 1e-12);
    }
}

TEST(EWA, GradientMatchesFiniteDifferences) {
    auto d = generate_ewa_data(30, 12, 4, 9);
    auto b = make_ewa(d);
    GaussianStream g(3, 0, 0, StreamPurpose::Test);
    for (int t = 0; t < 10; ++t) {
        std::vector<double> th(30), out(30);
        for (auto &v : th) v = 0.5 * g.normal();
        b.model.drift(th, out);
        for (std::size_t j = 0; j < 30; ++j) {
            auto tp = th, tm = th;
            double h = 1e-6 * std::max(1.0, std::abs(th[j]));
            tp[j] += h;
            tm[j] -= h;
            double fd = -(b.model.potential(tp) - b.model.potential(tm)) / (2 * h);
            EXPECT_NEAR(out[j], fd, 1e-6 * std::max(1.0, std::abs(fd))) << "point " << t << " coord " << j;
        }
    }
}

TEST(EWA, DataRecipe) {
    auto d = generate_ewa_data(500, 100, 15, 1);
    EXPECT_EQ(d.X.size(), 50000u);
    EXPECT_EQ(d.Y.size(), 100u);
    EXPECT_NEAR(d.sigma_noise * d.sigma_noise, 15.0 / 9.0, 1e-12);
    for (double v : d.X) EXPECT_TRUE(v == 1.0 || v == -1.0);
    for (std::size_t j = 0; j < 500; ++j) EXPECT_EQ((*d.theta0)[j], j < 15 ? 1.0 : 0.0);
    auto b = make_ewa(d);
    EXPECT_NEAR(b.model.tau(), 4.0 * d.sigma_noise / std::sqrt(50000.0), 1e-15);
    EXPECT_DOUBLE_EQ(*b.suggested_clamp, 1.0 / 500.0);
    EXPECT_EQ(b.model.dim(), 500u);
    EXPECT_EQ(b.model.noise_dim(), 500u);
}

TEST(EWA, DiffusionIsScaledIdentity) {
    EwaPosterior m({1, 2, 3, 4, 5, 6}, {1, 2}, 3, 1.0);
    std::vector<double> x(3, 0.1);
    auto s = diffusion_matrix(m, x);
    ASSERT_EQ(s.size(), 9u);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(s[i * 3 + j], i == j ? std::sqrt(2.0) : 0.0);
}

TEST(EWA, DimensionMismatch) {
    EXPECT_THROW(EwaPosterior({1, 2, 3}, {1, 2}, 2, 1.0), ConfigError);
}

TEST(EWA, CsvRoundTrip) {
    const char *path = "ewa_roundtrip.csv";
    {
        std::ofstream o(path);
        o << "1,-1,0.5\n-1,1,2\n1,1,-3\n";
    }
    auto d = load_ewa_csv(path, 0.7);
    EXPECT_EQ(d.N, 3u);
    EXPECT_EQ(d.p, 2u);
    EXPECT_EQ(d.Y, (std::vector<double>{0.5, 2, -3}));
    EXPECT_EQ(d.X, (std::vector<double>{1, -1, -1, 1, 1, 1}));
    std::remove(path);
}

TEST(TypeErased, WrapsConcreteModel) {
    auto ou = make_ou(2.0);
    auto dm = DiffusionModel::from(ou.model, "ou");
    EXPECT_EQ(drift1(dm, 4.0), -2.0);
    StepSchedule s(0.5, 0.3);
    auto a = run_coarse_level(ou.model, ou.observable, s, 1000, GaussianStream(1, 1, 0));
    auto b = run_coarse_level(dm, ou.observable, s, 1000, GaussianStream(1, 1, 0));
    EXPECT_EQ(a.value[0], b.value[0]);
}
