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
#include <functional>
#include <limits>
#include <vector>

#include "numeric.hpp"

namespace ml2rgodic {

/// Multilevel weights and the residual bias coefficients.
/// Vectors are 0-based: W[0] is W_1, q[0] is q_1.
struct WeightSet {
    int R = 0;
    int M = 0;
    double a = 0.0;
    std::vector<double> q;
    std::vector<double> W;
    std::vector<double> w_small; ///< filled for uniform resizers only
    double Wt1 = 0.0;            ///< W~_{R+1}
    double Wt2 = 0.0;            ///< W~_{R+2}
};

namespace detail {

using ld = long double;

inline void check_common(int R, int M, double a) {
    if (R < 2) throw ConfigError("depth R must be >= 2");
    if (M < 2) throw ConfigError("root M must be >= 2");
    if (!(a > 0.0 && a < 1.0)) throw ConfigError("step exponent a must lie in (0,1)");
}

inline void check_resizers(int R, int M, double a, const std::vector<double> &q) {
    check_common(R, M, a);
    if (static_cast<int>(q.size()) != R) throw ConfigError("resizer vector must have R entries");
    double s = 0.0;
    for (double v : q) {
        if (!(v > 0.0)) throw ConfigError("resizers must be positive");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError("resizers must sum to 1");
    // distinct q_r M^{r/a}, r >= 2, compared in log scale
    std::vector<ld> key;
    for (int r = 2; r <= R; ++r)
        key.push_back(std::log(static_cast<ld>(q[r - 1])) + static_cast<ld>(r) / a * std::log(static_cast<ld>(M)));
    for (std::size_t i = 0; i < key.size(); ++i)
        for (std::size_t j = i + 1; j < key.size(); ++j)
            if (std::abs(key[i] - key[j]) < 1e-9L)
                throw ConfigError("resizers not admissible: q_r M^{r/a} must be pairwise distinct");
}

/// Nodes x_r = M^{-(r-2)} (q_1/q_r)^a for r = 2..R.
inline std::vector<ld> nodes(int R, int M, double a, const std::vector<double> &q) {
    std::vector<ld> x;
    for (int r = 2; r <= R; ++r)
        x.push_back(std::pow(static_cast<ld>(M), -(r - 2)) *
                    std::pow(static_cast<ld>(q[0]) / static_cast<ld>(q[r - 1]), static_cast<ld>(a)));
    return x;
}

/// Dense solve with partial pivoting.
inline std::vector<ld> gauss_solve(std::vector<std::vector<ld>> A, std::vector<ld> b) {
    const std::size_t n = b.size();
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t p = c;
        for (std::size_t i = c + 1; i < n; ++i)
            if (std::abs(A[i][c]) > std::abs(A[p][c])) p = i;
        if (A[p][c] == 0.0L) throw ConfigError("singular weight system");
        std::swap(A[p], A[c]);
        std::swap(b[p], b[c]);
        for (std::size_t i = c + 1; i < n; ++i) {
            ld f = A[i][c] / A[c][c];
            for (std::size_t j = c; j < n; ++j) A[i][j] -= f * A[c][j];
            b[i] -= f * b[c];
        }
    }
    std::vector<ld> x(n);
    for (std::size_t i = n; i-- > 0;) {
        ld s = b[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= A[i][j] * x[j];
        x[i] = s / A[i][i];
    }
    return x;
}

/// Solves sum_r y_r x_r^j = rhs[j], j = 0..n-1.
inline std::vector<ld> vandermonde_solve(const std::vector<ld> &x, const std::vector<ld> &rhs) {
    const std::size_t n = x.size();
    std::vector<std::vector<ld>> A(n, std::vector<ld>(n));
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t r = 0; r < n; ++r) A[j][r] = std::pow(x[r], static_cast<int>(j));
    return gauss_solve(std::move(A), rhs);
}

/// Lagrange coefficients y_r = prod_{s != r} (c - x_s)/(x_r - x_s): the solution of
/// sum_r y_r x_r^j = c^j for j < n.
inline std::vector<ld> lagrange_at(const std::vector<ld> &x, ld c) {
    std::vector<ld> y(x.size(), 1.0L);
    for (std::size_t r = 0; r < x.size(); ++r)
        for (std::size_t s = 0; s < x.size(); ++s)
            if (s != r) y[r] *= (c - x[s]) / (x[r] - x[s]);
    return y;
}

/// Sums term(k) for k >= 0. Stops once k > k_min and the term is below tol relative to the sum.
inline ld series(const std::function<ld(int)> &term, int k_min, double tol, int cap = 200) {
    CompensatedSum<ld> s;
    for (int k = 0; k < k_min + cap; ++k) {
        ld t = term(k);
        s.add(t);
        if (k > k_min && std::abs(t) <= static_cast<ld>(tol) * std::abs(s.value())) return s.value();
    }
    throw ConfigError("weight series did not converge within the term cap");
}

inline int log_ceil(ld v, int M) { return static_cast<int>(std::ceil(v / std::log(static_cast<ld>(M)))); }

/// W~_{R+i} from the bias coefficients, exponent L = R+i-1 on both q and M.
inline double wtilde_from_weights(int R, int M, double a, const std::vector<double> &q, const std::vector<double> &W,
                                  int i) {
    const int L = R + i - 1;
    const ld m = M;
    CompensatedSum<ld> s;
    for (int r = 2; r <= R; ++r)
        s.add(static_cast<ld>(W[r - 1]) * std::pow(m, -(r - 2) * L) *
              std::pow(static_cast<ld>(q[r - 1]), -static_cast<ld>(a) * L));
    ld head = static_cast<ld>(W[0]) * std::pow(static_cast<ld>(q[0]), -static_cast<ld>(a) * L);
    return static_cast<double>(head + (std::pow(m, -L) - 1.0L) * s.value());
}

} // namespace detail

/// Closed-form weights for q_r = 1/R. They do not depend on a.
inline WeightSet solve_uniform(int R, int M, double a) {
    detail::check_common(R, M, a);
    using detail::ld;
    WeightSet ws;
    ws.R = R;
    ws.M = M;
    ws.a = a;
    ws.q.assign(R, 1.0 / R);
    std::vector<ld> w(R, 1.0L);
    for (int r = 1; r <= R; ++r)
        for (int s = 1; s <= R; ++s)
            if (s != r) w[r - 1] /= 1.0L - std::pow(static_cast<ld>(M), s - r);
    ws.w_small.resize(R);
    ws.W.resize(R);
    ld acc = 0.0L;
    for (int r = R; r >= 1; --r) {
        acc += w[r - 1];
        ws.w_small[r - 1] = static_cast<double>(w[r - 1]);
        ws.W[r - 1] = static_cast<double>(acc);
    }
    ws.W[0] = 1.0;
    const ld m = M, Rl = R, al = a;
    const ld sign = (R % 2 == 1) ? 1.0L : -1.0L; // (-1)^{R-1}
    const ld mpow = std::pow(m, -static_cast<ld>(R) * (R - 1) / 2.0L);
    ws.Wt1 = static_cast<double>(sign * std::pow(Rl, al * R) * mpow);
    ws.Wt2 = static_cast<double>(sign * std::pow(Rl, al * (R + 1)) * mpow * (1.0L - std::pow(m, -R)) / (1.0L - 1.0L / m));
    return ws;
}

/// Weights for general admissible resizers via the convergent series representation.
inline WeightSet solve_general(int R, int M, double a, const std::vector<double> &q, double tol = 1e-14) {
    detail::check_resizers(R, M, a, q);
    using detail::ld;
    const ld m = M, al = a;
    auto ratio = [&](int s, int r) { return std::pow(static_cast<ld>(q[s - 1]) / static_cast<ld>(q[r - 1]), al); };

    WeightSet ws;
    ws.R = R;
    ws.M = M;
    ws.a = a;
    ws.q = q;
    ws.W.assign(R, 0.0);
    ws.W[0] = 1.0;

    // past k_min every factor 1 - M^{s-2-k}(q_s/q_1)^a is positive
    int k_min = 0;
    for (int s = 2; s <= R; ++s)
        k_min = std::max(k_min, (s - 2) + detail::log_ceil(std::log(ratio(s, 1)), M) + 1);

    for (int r = 2; r <= R; ++r) {
        ld denom = 1.0L;
        for (int s = 2; s <= R; ++s)
            if (s != r) denom *= 1.0L - std::pow(m, s - r) * ratio(s, r);
        auto term = [&](int k) {
            ld p = 1.0L;
            for (int s = 2; s <= R; ++s)
                if (s != r) p *= 1.0L - std::pow(m, s - 2 - k) * ratio(s, 1);
            return p / denom * std::pow(m, -k);
        };
        ld sum = detail::series(term, k_min, tol);
        ws.W[r - 1] = static_cast<double>(std::pow(m, r - 2) * ratio(r, 1) * sum);
    }

    // node factors z_{k,r} = M^{k-r} (q_1/q_{r+2})^a, r = 0..R-2
    int k_min_t = 0;
    for (int r = 0; r <= R - 2; ++r)
        k_min_t = std::max(k_min_t, r + detail::log_ceil(-std::log(ratio(1, r + 2)), M) + 1);
    auto z = [&](int k, int r) { return std::pow(m, k - r) * ratio(1, r + 2); };
    auto t1 = [&](int k) {
        ld p = 1.0L;
        for (int r = 0; r <= R - 2; ++r) p *= 1.0L - z(k, r);
        return p * std::pow(m, -static_cast<ld>(k) * R);
    };
    auto t2 = [&](int k) {
        ld p = 1.0L, s = 1.0L;
        for (int r = 0; r <= R - 2; ++r) {
            ld zz = z(k, r);
            p *= 1.0L - zz;
            s += zz;
        }
        return s * p * std::pow(m, -static_cast<ld>(k) * (R + 1));
    };
    ld q1 = q[0];
    ws.Wt1 = static_cast<double>((1.0L - std::pow(m, -R)) / std::pow(q1, al * R) * detail::series(t1, k_min_t, tol));
    ws.Wt2 = static_cast<double>((1.0L - std::pow(m, -(R + 1))) / std::pow(q1, al * (R + 1)) *
                                 detail::series(t2, k_min_t, tol));
    if (std::all_of(q.begin(), q.end(), [&](double v) { return std::abs(v - q[0]) <= 1e-15; })) {
        auto u = solve_uniform(R, M, a);
        ws.w_small = u.w_small;
    }
    return ws;
}

/// Direct solve of the bias-cancellation system through its Vandermonde form.
inline WeightSet solve_oracle(int R, int M, double a, const std::vector<double> &q) {
    detail::check_resizers(R, M, a, q);
    using detail::ld;
    auto x = detail::nodes(R, M, a, q);
    std::vector<ld> rhs;
    for (int j = 1; j <= R - 1; ++j) rhs.push_back(1.0L / (1.0L - std::pow(static_cast<ld>(M), -j)));
    auto wbar = detail::vandermonde_solve(x, rhs);
    WeightSet ws;
    ws.R = R;
    ws.M = M;
    ws.a = a;
    ws.q = q;
    ws.W.assign(R, 1.0);
    for (int r = 2; r <= R; ++r) ws.W[r - 1] = static_cast<double>(wbar[r - 2] / x[r - 2]);
    ws.Wt1 = detail::wtilde_from_weights(R, M, a, q, ws.W, 1);
    ws.Wt2 = detail::wtilde_from_weights(R, M, a, q, ws.W, 2);
    return ws;
}

/// W~_{R+i} recomputed from ws.W.
inline double wtilde(const WeightSet &ws, int i) {
    return detail::wtilde_from_weights(ws.R, ws.M, ws.a, ws.q, ws.W, i);
}

/// max_l |row l of the system| plus |W_1 - 1|.
inline double system_residual(const WeightSet &ws) {
    using detail::ld;
    const ld m = ws.M;
    ld worst = 0.0L;
    for (int l = 2; l <= ws.R; ++l) {
        CompensatedSum<ld> s;
        for (int r = 2; r <= ws.R; ++r)
            s.add(static_cast<ld>(ws.W[r - 1]) * std::pow(m, -(r - 2) * (l - 1)) *
                  std::pow(static_cast<ld>(ws.q[r - 1]), -static_cast<ld>(ws.a) * (l - 1)));
        ld row = static_cast<ld>(ws.W[0]) * std::pow(static_cast<ld>(ws.q[0]), -static_cast<ld>(ws.a) * (l - 1)) +
                 (std::pow(m, 1 - l) - 1.0L) * s.value();
        worst = std::max(worst, std::abs(row));
    }
    return static_cast<double>(worst + std::abs(static_cast<ld>(ws.W[0]) - 1.0L));
}

/// Psi(R,M) = 4R^2/(4R^2-1) sum_{r>=2} W_r^2.
inline double psi(const WeightSet &ws) {
    CompensatedSum<double> s;
    for (int r = 2; r <= ws.R; ++r) s.add(ws.W[r - 1] * ws.W[r - 1]);
    double R2 = 4.0 * ws.R * ws.R;
    return R2 / (R2 - 1.0) * s.value();
}

inline double psi(int R, int M) { return psi(solve_uniform(R, M, 0.5)); }

/// sup_R Psi(R,M)/R over R = 2..r_cap.
inline double psi_bold(int M, int r_cap = 40) {
    if (M < 2) throw ConfigError("root M must be >= 2");
    double best = 0.0;
    for (int R = 2; R <= r_cap; ++R) best = std::max(best, psi(R, M) / R);
    return best;
}

/// W_1 + sum_{r>=2} W_r (M^{1-l}-1) M^{-(r-2)(l-1)}.
inline double bias1_coefficient(const WeightSet &ws, int l) {
    if (l < 2 || l > ws.R) throw ConfigError("bias1_coefficient needs 2 <= l <= R");
    using detail::ld;
    const ld m = ws.M;
    CompensatedSum<ld> s;
    s.add(ws.W[0]);
    for (int r = 2; r <= ws.R; ++r) s.add(static_cast<ld>(ws.W[r - 1]) * (std::pow(m, 1 - l) - 1.0L) * std::pow(m, -(r - 2) * (l - 1)));
    return static_cast<double>(s.value());
}

/// Bound B_inf / a_inf on uniform weights.
inline double uniform_weight_bound(int M) {
    using detail::ld;
    ld a_inf = 1.0L, a_r = 1.0L, B = 0.0L;
    for (int k = 1; k < 200; ++k) {
        a_r *= 1.0L - std::pow(static_cast<ld>(M), -k);
        B += std::pow(static_cast<ld>(M), -static_cast<ld>(k) * (k - 1) / 2.0L) / a_r;
    }
    a_inf = a_r;
    return static_cast<double>(B / a_inf);
}

} // namespace ml2rgodic
