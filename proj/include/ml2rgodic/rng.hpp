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

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace ml2rgodic {

/// Philox4x32-10 counter-based block cipher.
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter block(Counter c, Key k) noexcept {
        constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
        constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
        for (int round = 0; round < 10; ++round) {
            std::uint64_t p0 = static_cast<std::uint64_t>(M0) * c[0];
            std::uint64_t p1 = static_cast<std::uint64_t>(M1) * c[2];
            Counter n{static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
                      static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
            c = n;
            k[0] += W0;
            k[1] += W1;
        }
        return c;
    }
};

/// Stream purposes, mixed into the counter so that e.g. calibration and
/// estimation draws never overlap for the same (seed, level, replication).
enum class StreamPurpose : std::uint32_t { Estimate = 0, Crude = 1, Calibrate1 = 2, Calibrate22 = 3, Data = 4, Test = 5 };

/// Standard normal draws addressed by (seed, level, replication, draw index).
class GaussianStream {
public:
    GaussianStream(std::uint64_t seed, std::uint32_t level, std::uint32_t replication,
                   StreamPurpose purpose = StreamPurpose::Estimate) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          lane_((level & 0xFFFFu) | (static_cast<std::uint32_t>(purpose) << 16)), replication_(replication) {}

    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        auto b = next_block();
        std::uint64_t u = (static_cast<std::uint64_t>(b[0]) << 32) | b[1];
        std::uint64_t v = (static_cast<std::uint64_t>(b[2]) << 32) | b[3];
        // u1 in (0,1], u2 in [0,1)
        double u1 = 1.0 - static_cast<double>(u >> 11) * 0x1.0p-53;
        double u2 = static_cast<double>(v >> 11) * 0x1.0p-53;
        double rad = std::sqrt(-2.0 * std::log(u1));
        double th = 2.0 * std::numbers::pi * u2;
        spare_ = rad * std::sin(th);
        has_spare_ = true;
        return rad * std::cos(th);
    }

    /// Uniform on [0,1) with 53 random bits.
    double uniform() noexcept {
        auto b = next_block();
        std::uint64_t u = (static_cast<std::uint64_t>(b[0]) << 32) | b[1];
        return static_cast<double>(u >> 11) * 0x1.0p-53;
    }

    void fill_normal(std::span<double> out, double sd) noexcept {
        for (auto &x : out) x = sd * normal();
    }

    std::uint64_t blocks_used() const noexcept { return counter_; }

private:
    Philox4x32::Counter next_block() noexcept {
        Philox4x32::Counter c{static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32), lane_,
                              replication_};
        ++counter_;
        return Philox4x32::block(c, key_);
    }

    Philox4x32::Key key_;
    std::uint32_t lane_;
    std::uint32_t replication_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace ml2rgodic
