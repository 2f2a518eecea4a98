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

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ml2rgodic {

enum class Provenance { Exact, Calibrated, Default, Override, Derived };

inline const char *to_string(Provenance p) {
    switch (p) {
    case Provenance::Exact: return "exact";
    case Provenance::Calibrated: return "calibrated";
    case Provenance::Default: return "default";
    case Provenance::Override: return "override";
    case Provenance::Derived: return "derived";
    }
    return "unknown";
}

/// Parameters of one estimator run. n_r = floor(q_r n).
struct EstimatorPlan {
    double epsilon = 0.0;
    int M = 2;
    int R = 2;
    double a = 0.2;
    std::vector<double> q;
    double gamma1 = 1.0;
    std::optional<double> clamp;
    double rho = 0.5;
    std::uint64_t n = 0;
    std::vector<std::uint64_t> level_sizes;
    double K = 0.0;
    double kappa0 = 1.0;
    double x_depth = 0.0; ///< real root behind R, 0 when R was overridden
    std::map<std::string, Provenance> provenance;
};

/// Single-chain baseline: n Euler steps with gamma_k = gamma1 k^{-a}.
struct CrudePlan {
    double epsilon = 0.0;
    double a = 1.0 / 3.0;
    double gamma1 = 1.0;
    std::optional<double> clamp;
    std::uint64_t n = 0;
    double K = 0.0;
};

inline std::vector<std::uint64_t> level_sizes(std::uint64_t n, const std::vector<double> &q) {
    std::vector<std::uint64_t> out;
    for (double v : q) out.push_back(static_cast<std::uint64_t>(v * static_cast<double>(n)));
    return out;
}

} // namespace ml2rgodic
