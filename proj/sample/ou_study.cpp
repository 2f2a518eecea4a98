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

// Plans and runs the estimator on the Ornstein-Uhlenbeck process with f(x) = x^2.
//   sample_ou_study [sigma] [epsilon] [replications]

#include <cmath>
#include <cstdio>
#include <cstdlib>

#include <ml2rgodic/ml2rgodic.hpp>

int main(int argc, char **argv) {
    using namespace ml2rgodic;
    const double sigma = argc > 1 ? std::atof(argv[1]) : 1.0;
    const double eps = argc > 2 ? std::atof(argv[2]) : 0.05;
    const std::size_t L = argc > 3 ? std::strtoul(argv[3], nullptr, 10) : 8;

    auto ou = make_ou(sigma);
    auto cal = CalibrationReport::from_reference(ou.ref);
    auto plans = sweep_plans(eps, {2, 3, 4}, {2, 3, 4}, cal);
    const auto &plan = cheapest(plans);
    auto ws = plan_weights(plan);
    std::printf("R=%d M=%d gamma1=%.4f rho=%.4f n=%llu K=%.4g\n", plan.R, plan.M, plan.gamma1, plan.rho,
                static_cast<unsigned long long>(plan.n), plan.K);
    for (int r = 0; r < plan.R; ++r) std::printf("  W_%d = %+.6f\n", r + 1, ws.W[r]);

    std::vector<double> est(L);
    parallel_for(L, [&](std::size_t i) {
        est[i] = ml2rgodic_estimate(ou.model, ou.observable, plan, ws, 2026, static_cast<std::uint32_t>(i)).value[0];
    });
    double se = 0.0;
    for (std::size_t i = 0; i < L; ++i) {
        std::printf("  replication %zu: %.6f\n", i, est[i]);
        se += (est[i] - *ou.ref.nu_f) * (est[i] - *ou.ref.nu_f);
    }
    std::printf("target %.6f  rmse %.3g  (epsilon %.3g)\n", *ou.ref.nu_f, std::sqrt(se / L), eps);
}
