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
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "models.hpp"
#include "numeric.hpp"
#include "plan.hpp"
#include "rng.hpp"
#include "schedule.hpp"
#include "weights.hpp"

namespace ml2rgodic {

/// Weighted running mean, value = sum eta_k f_k / sum eta_k.
class EmpiricalAccumulator {
public:
    explicit EmpiricalAccumulator(std::size_t dim = 1) : value_(dim, 0.0) {}

    void update(double eta, std::span<const double> v) {
        H_.add(eta);
        const double h = H_.value();
        const double w = eta / h;
        if (n_ == 0)
            std::copy(v.begin(), v.end(), value_.begin());
        else
            for (std::size_t i = 0; i < value_.size(); ++i) value_[i] = w * v[i] + (1.0 - w) * value_[i];
        ++n_;
    }
    void update(double eta, double v) { update(eta, std::span<const double>(&v, 1)); }

    double H() const { return H_.value(); }
    std::uint64_t count() const { return n_; }
    const std::vector<double> &value() const { return value_; }
    double scalar() const { return value_.at(0); }

private:
    CompensatedSum<double> H_;
    std::vector<double> value_;
    std::uint64_t n_ = 0;
};

inline EmpiricalAccumulator update_empirical(EmpiricalAccumulator acc, double eta, double value) {
    acc.update(eta, value);
    return acc;
}

/// In-place Euler step with scratch buffers sized for one model.
template <SdeModel Model>
class EulerKernel {
public:
    explicit EulerKernel(const Model &m) : m_(m), b_(m.dim()), s_(m.dim()) {}

    /// x <- x + gamma b(x) + sigma(x) dw. Returns false on a non-finite coordinate.
    bool step(std::span<double> x, double gamma, std::span<const double> dw) {
        m_.drift(x, b_);
        m_.diffuse(x, dw, s_);
        bool ok = true;
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] += gamma * b_[i] + s_[i];
            ok = ok && std::isfinite(x[i]);
        }
        return ok;
    }

private:
    const Model &m_;
    std::vector<double> b_, s_;
};

template <SdeModel Model>
std::vector<double> euler_step(std::vector<double> x, const Model &m, double gamma, std::span<const double> dw) {
    EulerKernel<Model> k(m);
    if (!k.step(x, gamma, dw)) throw BlowUpError(0, 1);
    return x;
}

/// Output of one level: final value, values at requested step counts, Euler steps spent.
struct LevelResult {
    std::vector<double> value;
    std::vector<std::vector<double>> at_checkpoints;
    std::uint64_t euler_steps = 0;
};

namespace detail {

inline void record(const EmpiricalAccumulator &acc, std::span<const std::uint64_t> cps, std::size_t &next,
                   LevelResult &out) {
    while (next < cps.size() && cps[next] == acc.count()) {
        out.at_checkpoints.push_back(acc.value());
        ++next;
    }
}

} // namespace detail

/// nu_n(f) = (1/Gamma_n) sum_k gamma_k f(X_{k-1}) along one Euler chain.
/// checkpoints: ascending step counts at which the running value is also returned.
template <SdeModel Model, Observable Obs>
LevelResult run_coarse_level(const Model &m, const Obs &f, const StepSchedule &sched, std::uint64_t n,
                             GaussianStream stream, std::span<const std::uint64_t> checkpoints = {},
                             int level_id = 1) {
    if (n < 1) throw ConfigError("coarse level needs n >= 1");
    EulerKernel<Model> kern(m);
    std::vector<double> x = m.x0(), fx(f.dim()), dw(m.noise_dim());
    EmpiricalAccumulator acc(f.dim());
    LevelResult out;
    std::size_t next = 0;
    for (std::uint64_t k = 1; k <= n; ++k) {
        const double g = sched.step(k);
        f.eval(x, fx);
        acc.update(g, fx);
        detail::record(acc, checkpoints, next, out);
        if (k == n) break;
        stream.fill_normal(dw, std::sqrt(g));
        if (!kern.step(x, g, dw)) throw BlowUpError(level_id, k);
    }
    out.value = acc.value();
    out.euler_steps = n;
    return out;
}

template <SdeModel Model>
double run_coarse_level(const Model &m, const TestFunction &f, const StepSchedule &sched, std::uint64_t n,
                        GaussianStream stream) {
    return run_coarse_level(m, FunctionList(f), sched, n, stream).value[0];
}

/// Recorded coupled paths of one correcting level.
struct CoupledPath {
    std::vector<std::vector<double>> coarse;     ///< X_0..X_n
    std::vector<std::vector<double>> fine;       ///< Y_0..Y_{nM}
    std::vector<std::vector<double>> coarse_dw;  ///< n increments
    std::vector<std::vector<double>> fine_dw;    ///< nM increments
    std::vector<double> coarse_steps, fine_steps;
    std::vector<double> mu;
};

namespace detail {

template <SdeModel Model, Observable Obs>
LevelResult correcting_level(const Model &m, const Obs &f, int r, int M, const StepSchedule &base, std::uint64_t n,
                             GaussianStream stream, std::span<const std::uint64_t> checkpoints, CoupledPath *path) {
    if (r < 2) throw ConfigError("correcting level needs r >= 2");
    if (M < 2) throw ConfigError("correcting level needs M >= 2");
    if (n < 1) throw ConfigError("correcting level needs n >= 1");
    const StepSchedule sched = refined_schedule(base, r, M);
    const std::size_t q = m.noise_dim(), p = f.dim();
    EulerKernel<Model> kc(m), kf(m);
    std::vector<double> x = m.x0(), y = m.x0();
    std::vector<double> fx(p), fy(p), fsum(p), term(p), dw(q), dwc(q);
    EmpiricalAccumulator acc(p);
    LevelResult out;
    std::size_t next = 0;
    if (path) {
        path->coarse.push_back(x);
        path->fine.push_back(y);
    }
    for (std::uint64_t k = 1; k <= n; ++k) {
        const double g = sched.step(k);
        const double h = g / M;
        const double sd = std::sqrt(h);
        std::fill(fsum.begin(), fsum.end(), 0.0);
        std::fill(dwc.begin(), dwc.end(), 0.0);
        const bool last = k == n;
        for (int j = 0; j < M; ++j) {
            f.eval(y, fy);
            for (std::size_t i = 0; i < p; ++i) fsum[i] += fy[i];
            if (last && j == M - 1 && !path) break;
            stream.fill_normal(dw, sd);
            for (std::size_t i = 0; i < q; ++i) dwc[i] += dw[i];
            if (!kf.step(y, h, dw)) throw BlowUpError(r, k);
            if (path) {
                path->fine.push_back(y);
                path->fine_dw.push_back(dw);
                path->fine_steps.push_back(h);
            }
        }
        f.eval(x, fx);
        for (std::size_t i = 0; i < p; ++i) term[i] = fsum[i] / M - fx[i];
        acc.update(g, term);
        record(acc, checkpoints, next, out);
        if (last && !path) break;
        if (!kc.step(x, g, dwc)) throw BlowUpError(r, k);
        if (path) {
            path->coarse.push_back(x);
            path->coarse_dw.push_back(dwc);
            path->coarse_steps.push_back(g);
        }
    }
    out.value = acc.value();
    out.euler_steps = n * static_cast<std::uint64_t>(M + 1);
    if (path) path->mu = out.value;
    return out;
}

} // namespace detail

/// mu_n^{(r,M)}(f): coupled coarse/fine chains driven by one Brownian path.
template <SdeModel Model, Observable Obs>
LevelResult run_correcting_level(const Model &m, const Obs &f, int r, int M, const StepSchedule &base,
                                 std::uint64_t n, GaussianStream stream,
                                 std::span<const std::uint64_t> checkpoints = {}) {
    return detail::correcting_level(m, f, r, M, base, n, stream, checkpoints, nullptr);
}

template <SdeModel Model>
double run_correcting_level(const Model &m, const TestFunction &f, int r, int M, const StepSchedule &base,
                            std::uint64_t n, GaussianStream stream) {
    return run_correcting_level(m, FunctionList(f), r, M, base, n, stream).value[0];
}

/// Same as run_correcting_level but keeps both paths and all increments.
template <SdeModel Model, Observable Obs>
CoupledPath record_correcting_level(const Model &m, const Obs &f, int r, int M, const StepSchedule &base,
                                    std::uint64_t n, GaussianStream stream) {
    CoupledPath path;
    detail::correcting_level(m, f, r, M, base, n, stream, {}, &path);
    return path;
}

struct TracePoint {
    double complexity = 0.0;
    std::vector<double> value;
};

struct Estimate {
    std::vector<double> value;
    std::vector<std::vector<double>> level_values;
    double euler_steps = 0.0;
    std::vector<TracePoint> trace;
};

/// Checkpoint complexities 10^{3 + k/4} up to K.
inline std::vector<double> geometric_checkpoints(double K, double first = 1e3, double per_decade = 4.0) {
    std::vector<double> out;
    for (int k = 0;; ++k) {
        double c = first * std::pow(10.0, k / per_decade);
        if (c > K * (1.0 + 1e-12)) break;
        out.push_back(c);
    }
    if (out.empty() || out.back() < K * (1.0 - 1e-12)) out.push_back(K);
    return out;
}

/// W_1 nu_{n_1} + sum_r W_r mu_{n_r}^{(r,M)} with independent level streams.
/// trace_at: complexities (in units of plan.K) at which running values are reported.
template <SdeModel Model, Observable Obs>
Estimate ml2rgodic_estimate(const Model &m, const Obs &f, const EstimatorPlan &plan, const WeightSet &ws,
                            std::uint64_t seed, std::uint32_t replication = 0,
                            std::span<const double> trace_at = {}) {
    if (ws.R != plan.R || ws.M != plan.M) throw ConfigError("plan and weights disagree on (R, M)");
    if (plan.level_sizes.size() != static_cast<std::size_t>(plan.R))
        throw ConfigError("plan must carry R level sizes");
    for (auto nr : plan.level_sizes)
        if (nr < 1) throw ConfigError("every level needs n_r >= 1");
    const StepSchedule sched(plan.gamma1, plan.a, plan.clamp);

    // level step counts at each trace point; drop points where some level is still empty
    std::vector<std::vector<std::uint64_t>> cps(plan.R);
    std::vector<double> kept;
    for (double c : trace_at) {
        std::vector<std::uint64_t> ks;
        bool ok = true;
        for (int r = 0; r < plan.R; ++r) {
            auto k = static_cast<std::uint64_t>(std::floor(c / plan.K * static_cast<double>(plan.level_sizes[r])));
            k = std::min(k, plan.level_sizes[r]);
            ok = ok && k >= 1;
            ks.push_back(k);
        }
        if (!ok) continue;
        kept.push_back(c);
        for (int r = 0; r < plan.R; ++r) cps[r].push_back(ks[r]);
    }

    Estimate est;
    est.value.assign(f.dim(), 0.0);
    std::vector<LevelResult> levels;
    levels.push_back(run_coarse_level(m, f, sched, plan.level_sizes[0],
                                      GaussianStream(seed, 1, replication, StreamPurpose::Estimate), cps[0]));
    for (int r = 2; r <= plan.R; ++r)
        levels.push_back(run_correcting_level(m, f, r, plan.M, sched, plan.level_sizes[r - 1],
                                              GaussianStream(seed, r, replication, StreamPurpose::Estimate),
                                              cps[r - 1]));
    for (int r = 0; r < plan.R; ++r) {
        for (std::size_t i = 0; i < est.value.size(); ++i) est.value[i] += ws.W[r] * levels[r].value[i];
        est.level_values.push_back(levels[r].value);
        est.euler_steps += static_cast<double>(levels[r].euler_steps);
    }
    for (std::size_t j = 0; j < kept.size(); ++j) {
        TracePoint tp;
        tp.value.assign(f.dim(), 0.0);
        for (int r = 0; r < plan.R; ++r) {
            // a level may record several identical step counts; they are stored in order
            const auto &v = levels[r].at_checkpoints.at(j);
            for (std::size_t i = 0; i < tp.value.size(); ++i) tp.value[i] += ws.W[r] * v[i];
            tp.complexity += static_cast<double>(cps[r][j]) * (r == 0 ? 1.0 : plan.M) * plan.kappa0;
        }
        est.trace.push_back(std::move(tp));
    }
    return est;
}

template <SdeModel Model>
double ml2rgodic_estimate(const Model &m, const TestFunction &f, const EstimatorPlan &plan, const WeightSet &ws,
                          std::uint64_t seed) {
    return ml2rgodic_estimate(m, FunctionList(f), plan, ws, seed).value[0];
}

/// Crude single-chain estimate with optional trace at the given step counts.
template <SdeModel Model, Observable Obs>
Estimate crude_estimate(const Model &m, const Obs &f, const CrudePlan &plan, std::uint64_t seed,
                        std::uint32_t replication = 0, std::span<const double> trace_at = {}) {
    const StepSchedule sched(plan.gamma1, plan.a, plan.clamp);
    std::vector<std::uint64_t> cps;
    for (double c : trace_at) {
        auto k = std::min<std::uint64_t>(static_cast<std::uint64_t>(std::floor(c)), plan.n);
        if (k >= 1) cps.push_back(k);
    }
    auto lr = run_coarse_level(m, f, sched, plan.n, GaussianStream(seed, 1, replication, StreamPurpose::Crude), cps);
    Estimate est;
    est.value = lr.value;
    est.level_values.push_back(lr.value);
    est.euler_steps = static_cast<double>(lr.euler_steps);
    for (std::size_t j = 0; j < cps.size(); ++j) est.trace.push_back({static_cast<double>(cps[j]), lr.at_checkpoints.at(j)});
    return est;
}

} // namespace ml2rgodic
