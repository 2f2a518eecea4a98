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
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "models.hpp"
#include "numeric.hpp"
#include "parallel.hpp"
#include "plan.hpp"
#include "schedule.hpp"
#include "simulate.hpp"
#include "weights.hpp"

namespace ml2rgodic {

/// Constants entering the parameter pipeline, with their origin.
struct CalibrationReport {
    double sigma1_sq = 1.0;
    double sigma22_sq = 1.0;
    double sigma21_sq = 1.0;
    double theta1 = 1.0;
    double theta2 = 1.0;
    double c_tilde = 1.0;
    std::map<int, double> c_abs; ///< R -> |c_{R+1}|
    double c_abs_default = 1.0;
    std::map<std::string, Provenance> provenance;

    /// |c_{R+1}|.
    double c_next(int R) const {
        auto it = c_abs.find(R);
        return it == c_abs.end() ? c_abs_default : it->second;
    }

    /// All constants taken from exact reference values (missing ones fall back to defaults).
    static CalibrationReport from_reference(const ReferenceData &ref) {
        CalibrationReport c;
        auto set = [&](const std::optional<double> &v, double &dst, const char *name) {
            if (v) {
                dst = *v;
                c.provenance[name] = Provenance::Exact;
            } else {
                c.provenance[name] = Provenance::Default;
            }
        };
        set(ref.sigma1_sq, c.sigma1_sq, "sigma1_sq");
        set(ref.sigma22_sq, c.sigma22_sq, "sigma22_sq");
        set(ref.sigma21_sq, c.sigma21_sq, "sigma21_sq");
        c.c_abs = ref.c_abs;
        c.provenance["c_abs"] = ref.c_abs.empty() ? Provenance::Default : Provenance::Exact;
        c.refresh_ratios();
        if (!ref.sigma21_sq) {
            c.theta2 = 1.0;
            c.provenance["theta2"] = Provenance::Default;
        }
        return c;
    }

    /// sigma1^2 and theta1 given; theta2 = c~ = |c_{R+1}| = 1.
    static CalibrationReport defaults(double sigma1_sq, double theta1, Provenance p = Provenance::Calibrated) {
        CalibrationReport c;
        c.sigma1_sq = sigma1_sq;
        c.theta1 = theta1;
        c.sigma22_sq = sigma1_sq / theta1;
        c.theta2 = 1.0;
        c.sigma21_sq = c.sigma22_sq;
        c.provenance = {{"sigma1_sq", p},
                        {"sigma22_sq", p},
                        {"theta1", p},
                        {"theta2", Provenance::Default},
                        {"sigma21_sq", Provenance::Default},
                        {"c_abs", Provenance::Default},
                        {"c_tilde", Provenance::Default}};
        return c;
    }

    void refresh_ratios() {
        if (!(sigma1_sq >= 0.0 && sigma22_sq > 0.0 && sigma21_sq >= 0.0))
            throw ConfigError("calibration variances must be non-negative with sigma22_sq > 0");
        theta1 = sigma1_sq / sigma22_sq;
        theta2 = sigma21_sq / sigma22_sq;
        provenance["theta1"] = Provenance::Derived;
        provenance["theta2"] = Provenance::Derived;
    }
};

// ---------------------------------------------------------------- depth

/// h(x) = (log M / 2) x (x-1) + x log x + log eps.
inline double depth_equation(double x, double epsilon, int M) {
    const double lm = std::log(static_cast<double>(M));
    return 0.5 * lm * x * (x - 1.0) + x * std::log(x) + std::log(epsilon);
}

struct DepthSolution {
    double x = 0.0;
    int R = 2;
};

inline DepthSolution solve_depth(double epsilon, int M) {
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (epsilon >= 1.0) throw ConfigError("epsilon must be < 1 for a depth to be needed");
    if (M < 2) throw ConfigError("root M must be >= 2");
    const double lm = std::log(static_cast<double>(M));
    auto h = [&](double x) { return depth_equation(x, epsilon, M); };
    auto dh = [&](double x) { return 0.5 * lm * (2.0 * x - 1.0) + std::log(x) + 1.0; };

    // h(1) = log eps < 0 and h increases on [1, inf)
    double lo = 1.0, hi = 2.0;
    while (h(hi) < 0.0) hi *= 2.0;
    double x = std::clamp(std::max(1.5, std::sqrt(2.0 * std::log(1.0 / epsilon) / lm)), lo, hi);
    for (int it = 0; it < 100 && std::abs(h(x)) >= 1e-12; ++it) {
        double hx = h(x);
        (hx < 0.0 ? lo : hi) = x;
        double nx = x - hx / dh(x);
        x = (nx > lo && nx < hi) ? nx : 0.5 * (lo + hi);
    }
    DepthSolution s;
    s.x = x;
    s.R = std::max(2, static_cast<int>(std::ceil(x - 1e-12)));
    return s;
}

// ---------------------------------------------------------------- step constant

/// argmin over gamma1 of the first-order MSE constant.
inline double optimal_gamma1(int R, int M, double sigma1_sq, double c_abs) {
    if (R < 1 || M < 1 || !(sigma1_sq > 0.0) || !(c_abs > 0.0))
        throw ConfigError("optimal_gamma1 needs positive inputs");
    const double e = 1.0 / (2.0 * R + 1.0);
    return std::pow(2.0 * R / (2.0 * R + 1.0), e) * std::pow(8.0 * R, -e) * std::pow(c_abs, -2.0 * e) *
           std::pow(sigma1_sq, e) * std::pow(static_cast<double>(M), R * (R - 1.0) * e);
}

/// argmin_{u>0} A/u + B u^{2R}.
inline double argmin_power_balance(double A, double B, int R) {
    return std::pow(A / (2.0 * R * B), 1.0 / (2.0 * R + 1.0));
}

// ---------------------------------------------------------------- resizer split

/// mu(R) = 2^{1/R} (2R+1)^{1/(2R)} |c_{R+1}|^{1/R}.
inline double mu_constant(int R, double c_abs) {
    return std::pow(2.0, 1.0 / R) * std::pow(2.0 * R + 1.0, 1.0 / (2.0 * R)) * std::pow(c_abs, 1.0 / R);
}

/// rho -> ((1-rho)/rho) rho^{-1/(2R)}, strictly decreasing from +inf to 0.
inline double rho_map(double rho, int R) { return (1.0 - rho) / rho * std::pow(rho, -1.0 / (2.0 * R)); }

/// Value rho_map must take at the optimal split.
inline double rho_target(double epsilon, int R, int M, const CalibrationReport &calib, double psi_rm) {
    const double mu = mu_constant(R, calib.c_next(R));
    const double lhs = std::pow(epsilon, 1.0 / R) * std::pow(static_cast<double>(M), (R - 1) / 2.0) * R;
    const double denom = calib.theta2 / R + (1.0 - 1.0 / M) * psi_rm / R;
    return lhs * denom / (mu * calib.theta1);
}

inline double solve_rho_for_target(double target, int R) {
    if (!(target > 0.0) || !std::isfinite(target)) throw ConfigError("rho target must be positive and finite");
    const double e = 1.0 + 1.0 / (2.0 * R);
    auto F = [&](double r) { return std::log1p(-r) - e * std::log(r) - std::log(target); };
    double lo = 1e-12, hi = 1.0 - 1e-12;
    if (F(lo) <= 0.0) return lo;
    if (F(hi) >= 0.0) return hi;
    for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
        double mid = 0.5 * (lo + hi);
        (F(mid) > 0.0 ? lo : hi) = mid;
    }
    double r = 0.5 * (lo + hi);
    for (int it = 0; it < 5; ++it) {
        double d = -1.0 / (1.0 - r) - e / r;
        double nr = r - F(r) / d;
        if (!(nr > 0.0 && nr < 1.0)) break;
        r = nr;
    }
    return r;
}

inline double solve_rho(double epsilon, int R, int M, const CalibrationReport &calib, double psi_rm) {
    return solve_rho_for_target(rho_target(epsilon, R, M, calib, psi_rm), R);
}

// ---------------------------------------------------------------- budget

inline std::uint64_t coarse_size(double epsilon, int R, int M, double rho, double sigma1_sq, double c_abs) {
    if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must lie in (0,1)");
    const double v = std::pow(rho, -(1.0 + 1.0 / (2.0 * R))) * mu_constant(R, c_abs) * R * sigma1_sq *
                     std::pow(static_cast<double>(M), -(R - 1) / 2.0) * std::pow(epsilon, -2.0 - 1.0 / R);
    if (!(v < 0x1p62)) throw BudgetInfeasible("coarse budget exceeds 2^62 iterations");
    return static_cast<std::uint64_t>(std::ceil(v));
}

inline double complexity(double n, int R, int M, double kappa0 = 1.0) {
    return n * (1.0 + M * (1.0 - 1.0 / R)) * kappa0;
}

// ---------------------------------------------------------------- plan

struct PlanOverrides {
    std::optional<int> R;
    std::optional<double> gamma1;
    std::optional<double> rho;
    std::optional<std::vector<double>> q;
    std::optional<std::uint64_t> n;
    std::optional<double> clamp;
    double kappa0 = 1.0;
};

/// Weights matching a plan's (R, M, a, q).
inline WeightSet plan_weights(const EstimatorPlan &p) {
    bool uniform = std::all_of(p.q.begin(), p.q.end(), [&](double v) { return std::abs(v - 1.0 / p.R) < 1e-15; });
    return uniform ? solve_uniform(p.R, p.M, p.a) : solve_general(p.R, p.M, p.a, p.q);
}

inline EstimatorPlan build_plan(double epsilon, int M, const CalibrationReport &calib,
                                const PlanOverrides &ov = {}) {
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    EstimatorPlan p;
    p.epsilon = epsilon;
    p.M = M;
    p.kappa0 = ov.kappa0;
    p.clamp = ov.clamp;
    for (auto &[k, v] : calib.provenance) p.provenance[k] = v;
    if (ov.R) {
        if (*ov.R < 2) throw ConfigError("override R must be >= 2");
        p.R = *ov.R;
        p.provenance["R"] = Provenance::Override;
    } else {
        auto d = solve_depth(epsilon, M);
        p.R = d.R;
        p.x_depth = d.x;
        p.provenance["R"] = Provenance::Derived;
    }
    const int R = p.R;
    p.a = 1.0 / (2.0 * R + 1.0);
    if (ov.q) {
        p.q = *ov.q;
        p.provenance["q"] = Provenance::Override;
    } else {
        p.q.assign(R, 1.0 / R);
        p.provenance["q"] = Provenance::Derived;
    }
    const double c = calib.c_next(R);
    if (ov.gamma1) {
        p.gamma1 = *ov.gamma1;
        p.provenance["gamma1"] = Provenance::Override;
    } else {
        p.gamma1 = optimal_gamma1(R, M, calib.sigma1_sq, c);
        p.provenance["gamma1"] = Provenance::Derived;
    }
    if (ov.rho) {
        p.rho = *ov.rho;
        p.provenance["rho"] = Provenance::Override;
    } else {
        p.rho = solve_rho(epsilon, R, M, calib, psi(solve_uniform(R, M, p.a)));
        p.provenance["rho"] = Provenance::Derived;
    }
    if (ov.n) {
        p.n = *ov.n;
        p.provenance["n"] = Provenance::Override;
    } else {
        p.n = coarse_size(epsilon, R, M, p.rho, calib.sigma1_sq, c);
        p.provenance["n"] = Provenance::Derived;
    }
    p.level_sizes = level_sizes(p.n, p.q);
    p.K = complexity(static_cast<double>(p.n), R, M, p.kappa0);
    return p;
}

/// Plans for every (R, M) pair; R overridden per cell.
inline std::vector<EstimatorPlan> sweep_plans(double epsilon, const std::vector<int> &Ms, const std::vector<int> &Rs,
                                              const CalibrationReport &calib, PlanOverrides ov = {}) {
    std::vector<EstimatorPlan> out;
    for (int M : Ms)
        for (int R : Rs) {
            ov.R = R;
            out.push_back(build_plan(epsilon, M, calib, ov));
        }
    return out;
}

inline const EstimatorPlan &cheapest(const std::vector<EstimatorPlan> &plans) {
    if (plans.empty()) throw ConfigError("empty plan sweep");
    return *std::min_element(plans.begin(), plans.end(), [](auto &a, auto &b) { return a.K < b.K; });
}

// ---------------------------------------------------------------- predicted error

struct MseBreakdown {
    double first_order = 0.0;     ///< n^{-2R/(2R+1)} (sigma_f^2 + m_f^2)
    double first_variance = 0.0;
    double first_bias_sq = 0.0;
    double second_order = 0.0;    ///< (sigma~_f^2 + |m~_f|)/n
    double second_variance = 0.0; ///< sigma~_f^2/n
    double second_bias = 0.0;     ///< |m~_f|/n
    double total() const { return first_order + second_order; }
};

inline MseBreakdown predicted_mse(const EstimatorPlan &p, const CalibrationReport &calib, const WeightSet &ws) {
    const int R = p.R, M = p.M;
    if (R < 2) throw ConfigError("predicted_mse needs R >= 2");
    for (double v : p.q)
        if (std::abs(v - 1.0 / R) > 1e-12) throw ConfigError("predicted_mse needs uniform resizers");
    const double n = static_cast<double>(p.n);
    const double g = p.gamma1;
    const double e = 2.0 * R / (2.0 * R + 1.0);
    const double c1 = calib.c_next(R), c2 = calib.c_next(R + 1);
    MseBreakdown out;
    const double sf2 = e * std::pow(R, e) * calib.sigma1_sq / g;
    const double mf = 2.0 * std::pow(g, R) * std::pow(R, R / (2.0 * R + 1.0)) *
                      std::pow(static_cast<double>(M), -R * (R - 1) / 2.0) * c1;
    out.first_variance = std::pow(n, -e) * sf2;
    out.first_bias_sq = std::pow(n, -e) * mf * mf;
    out.first_order = out.first_variance + out.first_bias_sq;
    const double st2 = R * (calib.sigma21_sq + (1.0 - 1.0 / M) * psi(ws) * calib.sigma22_sq);
    const double mt = 8.0 * R / (R - 1.0) * c1 * c2 * std::pow(g, 2.0 * R + 1.0) * std::abs(ws.Wt1 * ws.Wt2);
    out.second_variance = st2 / n;
    out.second_bias = mt / n;
    out.second_order = out.second_variance + out.second_bias;
    return out;
}

/// Asymptotic variance constant of n^{(1-a)/2}(estimate - nu(f)) for a > 1/(2R+1).
inline double clt_variance(double a, double q1, double gamma1, double sigma1_sq) {
    return (1.0 - a) / gamma1 * sigma1_sq / std::pow(q1, 1.0 - a);
}

// ---------------------------------------------------------------- crude baseline

/// First-order MSE of the single chain with a = 1/3.
inline double crude_mse(double n, double gamma1, double sigma1_sq, double c2_abs) {
    return std::pow(n, -2.0 / 3.0) * (2.0 / 3.0 * sigma1_sq / gamma1 + 4.0 * gamma1 * gamma1 * c2_abs * c2_abs);
}

inline CrudePlan build_crude_plan(double epsilon, double sigma1_sq, double c2_abs,
                                  std::optional<double> gamma1 = std::nullopt,
                                  std::optional<double> clamp = std::nullopt) {
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    CrudePlan p;
    p.epsilon = epsilon;
    p.clamp = clamp;
    p.gamma1 = gamma1 ? *gamma1 : argmin_power_balance(2.0 / 3.0 * sigma1_sq, 4.0 * c2_abs * c2_abs, 1);
    const double v = std::pow(crude_mse(1.0, p.gamma1, sigma1_sq, c2_abs) / (epsilon * epsilon), 1.5);
    if (!(v < 0x1p62)) throw BudgetInfeasible("crude budget exceeds 2^62 iterations");
    p.n = static_cast<std::uint64_t>(std::ceil(v));
    p.K = static_cast<double>(p.n);
    return p;
}

// ---------------------------------------------------------------- calibration

namespace detail {

inline double mean_sample_variance(const std::vector<std::vector<double>> &rows) {
    const std::size_t L = rows.size(), d = rows.at(0).size();
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double m = 0.0;
        for (auto &r : rows) m += r[j];
        m /= static_cast<double>(L);
        double s = 0.0;
        for (auto &r : rows) s += (r[j] - m) * (r[j] - m);
        total += s / static_cast<double>(L - 1);
    }
    return total / static_cast<double>(d);
}

} // namespace detail

/// Gamma_n * sample variance of L coarse levels run with a = 1/2.
template <SdeModel Model, Observable Obs>
double calibrate_sigma1(const Model &m, const Obs &f, std::size_t L, std::uint64_t n, double gamma1,
                        std::uint64_t seed, std::optional<double> clamp = std::nullopt) {
    if (L < 2 || n < 1) throw ConfigError("calibration needs L >= 2 and n >= 1");
    const StepSchedule sched(gamma1, 0.5, clamp);
    std::vector<std::vector<double>> vals(L);
    parallel_for(L, [&](std::size_t l) {
        vals[l] = run_coarse_level(m, f, sched, n,
                                   GaussianStream(seed, 1, static_cast<std::uint32_t>(l), StreamPurpose::Calibrate1))
                      .value;
    });
    return power_sums(sched, n, 1)[1] * detail::mean_sample_variance(vals);
}

/// (Gamma_n^2 / Gamma_n^(2)) * sample variance of L correcting levels (r = 2) run with a = 1/4.
template <SdeModel Model, Observable Obs>
double calibrate_sigma22(const Model &m, const Obs &f, int M, std::size_t L, std::uint64_t n, double gamma1,
                         std::uint64_t seed, std::optional<double> clamp = std::nullopt) {
    if (L < 2 || n < 1) throw ConfigError("calibration needs L >= 2 and n >= 1");
    const StepSchedule sched(gamma1, 0.25, clamp);
    std::vector<std::vector<double>> vals(L);
    parallel_for(L, [&](std::size_t l) {
        vals[l] = run_correcting_level(
                      m, f, 2, M, sched, n,
                      GaussianStream(seed, 2, static_cast<std::uint32_t>(l), StreamPurpose::Calibrate22))
                      .value;
    });
    auto ps = power_sums(sched, n, 2);
    return ps[1] * ps[1] / ps[2] * detail::mean_sample_variance(vals);
}

struct CalibrationOptions {
    std::size_t L = 100;
    std::uint64_t n = 100000;
    double gamma1 = 1.0;
    int M = 2;
    std::optional<double> clamp;
};

/// Estimates sigma1^2 and sigma22^2 by simulation; theta2, c~ and |c_{R+1}| keep their defaults.
template <SdeModel Model, Observable Obs>
CalibrationReport calibrate(const Model &m, const Obs &f, const CalibrationOptions &o, std::uint64_t seed) {
    const double s1 = calibrate_sigma1(m, f, o.L, o.n, o.gamma1, seed, o.clamp);
    const double s22 = calibrate_sigma22(m, f, o.M, o.L, o.n, o.gamma1, seed, o.clamp);
    if (!(s22 > 0.0)) throw ConfigError("calibrated sigma22^2 is zero; theta1 undefined");
    return CalibrationReport::defaults(s1, s1 / s22, Provenance::Calibrated);
}

} // namespace ml2rgodic
