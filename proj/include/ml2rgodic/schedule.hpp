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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "numeric.hpp"

namespace ml2rgodic {

/// Polynomial step sequence gamma_k = min(gamma1 * k^-a, clamp).
class StepSchedule {
public:
    StepSchedule(double gamma1, double a, std::optional<double> clamp = std::nullopt)
        : gamma1_(gamma1), a_(a), clamp_(clamp) {
        if (!(gamma1 > 0.0) || !std::isfinite(gamma1)) throw ConfigError("gamma1 must be positive");
        if (!(a > 0.0 && a < 1.0)) throw ConfigError("step exponent a must lie in (0,1)");
        if (clamp && !(*clamp > 0.0)) throw ConfigError("clamp must be positive");
    }

    double gamma1() const noexcept { return gamma1_; }
    double a() const noexcept { return a_; }
    const std::optional<double> &clamp() const noexcept { return clamp_; }

    double step(std::uint64_t k) const noexcept {
        double g = k == 1 ? gamma1_ : gamma1_ * std::pow(static_cast<double>(k), -a_);
        return clamp_ && *clamp_ < g ? *clamp_ : g;
    }

private:
    double gamma1_;
    double a_;
    std::optional<double> clamp_;
};

inline double step(const StepSchedule &s, std::uint64_t k) { return s.step(k); }

/// Power sums Gamma_n^(l) = sum_{k<=n} gamma_k^l. sums[0] holds n.
struct PowerSums {
    std::uint64_t n = 0;
    std::vector<double> sums;

    double operator[](std::size_t l) const { return sums.at(l); }
};

/// Incremental power sums, one compensated accumulator per exponent.
class PowerSumAccumulator {
public:
    explicit PowerSumAccumulator(int l_max) : acc_(static_cast<std::size_t>(l_max)) {
        if (l_max < 1) throw ConfigError("l_max must be >= 1");
    }

    void push(double gamma) noexcept {
        double p = 1.0;
        for (auto &a : acc_) {
            p *= gamma;
            a.add(p);
        }
        ++n_;
    }

    PowerSums get() const {
        PowerSums out;
        out.n = n_;
        out.sums.reserve(acc_.size() + 1);
        out.sums.push_back(static_cast<double>(n_));
        for (const auto &a : acc_) out.sums.push_back(a.value());
        return out;
    }

private:
    std::vector<CompensatedSum<double>> acc_;
    std::uint64_t n_ = 0;
};

inline PowerSums power_sums(const StepSchedule &sched, std::uint64_t n, int l_max) {
    PowerSumAccumulator acc(l_max);
    for (std::uint64_t k = 1; k <= n; ++k) acc.push(sched.step(k));
    return acc.get();
}

/// Coarse schedule of correcting level r: gamma1 and clamp divided by M^(r-2).
/// The fine companion takes gamma_k^(r) / M, M times per coarse step.
inline StepSchedule refined_schedule(const StepSchedule &sched, int r, int M) {
    if (r < 2) throw ConfigError("refined_schedule needs r >= 2");
    if (M < 2) throw ConfigError("refined_schedule needs M >= 2");
    double f = std::pow(static_cast<double>(M), r - 2);
    std::optional<double> clamp;
    if (sched.clamp()) clamp = *sched.clamp() / f;
    return StepSchedule(sched.gamma1() / f, sched.a(), clamp);
}

} // namespace ml2rgodic
