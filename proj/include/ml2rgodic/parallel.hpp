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

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "numeric.hpp"

namespace ml2rgodic {

inline constexpr const char *kWorkersEnv = "ML2RGODIC_WORKERS";

/// Worker count from ML2RGODIC_WORKERS, else the hardware concurrency.
inline std::size_t worker_count() {
    if (const char *s = std::getenv(kWorkersEnv); s && *s) {
        char *end = nullptr;
        long v = std::strtol(s, &end, 10);
        if (*end != '\0' || v < 1) throw ConfigError(std::string(kWorkersEnv) + " must be a positive integer");
        return static_cast<std::size_t>(v);
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Calls fn(i) for i in [0, count). Tasks must write to disjoint slots; the
/// exception of the lowest failing index is rethrown.
template <class Fn>
void parallel_for(std::size_t count, Fn &&fn, std::size_t workers = 0) {
    if (workers == 0) workers = worker_count();
    workers = std::min(workers, count);
    std::vector<std::exception_ptr> errors(count);
    auto body = [&](std::size_t i) {
        try {
            fn(i);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i; (i = next.fetch_add(1)) < count;) body(i);
            });
        for (auto &t : pool) t.join();
    }
    for (auto &e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace ml2rgodic
