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
#include <stdexcept>
#include <string>

namespace ml2rgodic {

/// Invalid user input: bad parameter, malformed config, unsupported combination.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string &what) : std::invalid_argument(what) {}
};

/// Non-finite state produced by the Euler scheme.
class BlowUpError : public std::runtime_error {
public:
    BlowUpError(int level, std::size_t step)
        : std::runtime_error("simulation blow-up at level " + std::to_string(level) + ", step " +
                             std::to_string(step) + " (consider a step clamp)"),
          level_(level), step_(step) {}

    int level() const noexcept { return level_; }
    std::size_t step() const noexcept { return step_; }

private:
    int level_;
    std::size_t step_;
};

/// Requested iteration budget does not fit in 62 bits.
class BudgetInfeasible : public std::runtime_error {
public:
    explicit BudgetInfeasible(const std::string &what) : std::runtime_error(what) {}
};

/// Neumaier compensated summation.
template <class T = double>
class CompensatedSum {
public:
    void add(T x) noexcept {
        T t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    T value() const noexcept { return sum_ + comp_; }

private:
    T sum_{};
    T comp_{};
};

/// x^k for a non-negative integer k.
template <class T>
constexpr T ipow(T x, int k) noexcept {
    T r = 1;
    for (; k > 0; --k) r *= x;
    return r;
}

} // namespace ml2rgodic
