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
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "numeric.hpp"
#include "rng.hpp"

namespace ml2rgodic {

/// dX = b(X)dt + sigma(X)dW. diffuse() writes sigma(x) * dw.
template <class T>
concept SdeModel = requires(const T &m, std::span<const double> x, std::span<const double> dw, std::span<double> out) {
    { m.dim() } -> std::convertible_to<std::size_t>;
    { m.noise_dim() } -> std::convertible_to<std::size_t>;
    m.drift(x, out);
    m.diffuse(x, dw, out);
    { m.x0() } -> std::convertible_to<std::vector<double>>;
};

/// Vector-valued function of the state; eval() writes dim() values.
template <class T>
concept Observable = requires(const T &o, std::span<const double> x, std::span<double> out) {
    { o.dim() } -> std::convertible_to<std::size_t>;
    o.eval(x, out);
};

/// Type-erased model for user-supplied coefficients.
struct DiffusionModel {
    using Drift = std::function<void(std::span<const double>, std::span<double>)>;
    using Diffuse = std::function<void(std::span<const double>, std::span<const double>, std::span<double>)>;

    std::string name = "custom";
    std::size_t d = 1;
    std::size_t q = 1;
    Drift b;
    Diffuse sigma_dw;
    std::vector<double> initial;
    std::optional<double> suggested_clamp;

    std::size_t dim() const { return d; }
    std::size_t noise_dim() const { return q; }
    void drift(std::span<const double> x, std::span<double> out) const { b(x, out); }
    void diffuse(std::span<const double> x, std::span<const double> dw, std::span<double> out) const {
        sigma_dw(x, dw, out);
    }
    std::vector<double> x0() const { return initial; }

    template <SdeModel Model>
    static DiffusionModel from(const Model &m, std::string name) {
        DiffusionModel out;
        out.name = std::move(name);
        out.d = m.dim();
        out.q = m.noise_dim();
        out.b = [m](std::span<const double> x, std::span<double> o) { m.drift(x, o); };
        out.sigma_dw = [m](std::span<const double> x, std::span<const double> dw, std::span<double> o) {
            m.diffuse(x, dw, o);
        };
        out.initial = m.x0();
        return out;
    }
};

/// sigma(x) as a row-major d x q matrix, recovered column by column.
template <SdeModel Model>
std::vector<double> diffusion_matrix(const Model &m, std::span<const double> x) {
    const std::size_t d = m.dim(), q = m.noise_dim();
    std::vector<double> out(d * q), e(q), col(d);
    for (std::size_t j = 0; j < q; ++j) {
        std::fill(e.begin(), e.end(), 0.0);
        e[j] = 1.0;
        m.diffuse(x, e, col);
        for (std::size_t i = 0; i < d; ++i) out[i * q + j] = col[i];
    }
    return out;
}

struct TestFunction {
    std::string label;
    std::function<double(std::span<const double>)> f;

    double operator()(std::span<const double> x) const { return f(x); }
};

/// Observable built from a list of scalar test functions.
class FunctionList {
public:
    explicit FunctionList(std::vector<TestFunction> fs) : fs_(std::move(fs)) {}
    FunctionList(TestFunction f) : fs_{std::move(f)} {}

    std::size_t dim() const { return fs_.size(); }
    void eval(std::span<const double> x, std::span<double> out) const {
        for (std::size_t i = 0; i < fs_.size(); ++i) out[i] = fs_[i].f(x);
    }
    const std::vector<TestFunction> &functions() const { return fs_; }

private:
    std::vector<TestFunction> fs_;
};

/// All coordinates of the state.
class Coordinates {
public:
    explicit Coordinates(std::size_t d) : d_(d) {}
    std::size_t dim() const { return d_; }
    void eval(std::span<const double> x, std::span<double> out) const { std::copy(x.begin(), x.end(), out.begin()); }

private:
    std::size_t d_;
};

/// x -> x_0^2, the test function of the scalar examples.
struct Square {
    std::size_t dim() const { return 1; }
    void eval(std::span<const double> x, std::span<double> out) const { out[0] = x[0] * x[0]; }
};

inline TestFunction square_function() {
    return {"x2", [](std::span<const double> x) { return x[0] * x[0]; }};
}

struct ReferenceData {
    std::optional<double> nu_f;
    std::optional<double> sigma1_sq;
    std::optional<double> sigma22_sq;
    std::optional<double> sigma21_sq;
    std::map<int, double> c_abs; ///< R -> |c_{R+1}|
    std::optional<std::vector<double>> theta0;
    std::string note;
};

// ---------------------------------------------------------------------------

/// dX = -X/2 dt + sigma dW.
class OrnsteinUhlenbeck {
public:
    explicit OrnsteinUhlenbeck(double sigma) : sigma_(sigma) {
        if (!(sigma >= 0.0)) throw ConfigError("OU sigma must be >= 0");
    }
    std::size_t dim() const { return 1; }
    std::size_t noise_dim() const { return 1; }
    void drift(std::span<const double> x, std::span<double> out) const { out[0] = -0.5 * x[0]; }
    void diffuse(std::span<const double>, std::span<const double> dw, std::span<double> out) const {
        out[0] = sigma_ * dw[0];
    }
    std::vector<double> x0() const { return {0.0}; }
    double sigma() const { return sigma_; }

private:
    double sigma_;
};

/// V(x) = x^2 - log(1+x^2), dX = -V'(X)dt + sigma dW.
class DoubleWell {
public:
    explicit DoubleWell(double sigma) : sigma_(sigma) {
        if (!(sigma >= 0.0)) throw ConfigError("double-well sigma must be >= 0");
    }
    std::size_t dim() const { return 1; }
    std::size_t noise_dim() const { return 1; }
    void drift(std::span<const double> x, std::span<double> out) const {
        const double v = x[0];
        out[0] = -2.0 * v + 2.0 * v / (1.0 + v * v);
    }
    void diffuse(std::span<const double>, std::span<const double> dw, std::span<double> out) const {
        out[0] = sigma_ * dw[0];
    }
    std::vector<double> x0() const { return {0.0}; }
    double sigma() const { return sigma_; }

    static double potential(double x) { return x * x - std::log1p(x * x); }

private:
    double sigma_;
};

/// Sparse-regression posterior, V(t) = |Y - Xt|^2/beta + sum_j log(tau^2 + t_j^2),
/// dT = -grad V(T)dt + sqrt(2) dW.
class EwaPosterior {
public:
    /// X is row-major N x p.
    EwaPosterior(std::vector<double> X, std::vector<double> Y, std::size_t p, double sigma_noise)
        : X_(std::move(X)), Y_(std::move(Y)), p_(p) {
        if (p_ == 0 || Y_.empty()) throw ConfigError("EWA needs N >= 1 and p >= 1");
        if (X_.size() != Y_.size() * p_) throw ConfigError("EWA dimension mismatch between X and Y");
        if (!(sigma_noise > 0.0)) throw ConfigError("EWA noise level must be positive");
        n_ = Y_.size();
        beta_ = 4.0 * sigma_noise * sigma_noise;
        double tr = 0.0;
        for (double v : X_) tr += v * v;
        if (!(tr > 0.0)) throw ConfigError("EWA design matrix is zero");
        tau_ = 4.0 * sigma_noise / std::sqrt(tr);
    }

    std::size_t dim() const { return p_; }
    std::size_t noise_dim() const { return p_; }
    std::size_t observations() const { return n_; }
    double beta() const { return beta_; }
    double tau() const { return tau_; }
    std::vector<double> x0() const { return std::vector<double>(p_, 0.0); }

    double potential(std::span<const double> t) const {
        double v = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            double r = Y_[i];
            const double *row = &X_[i * p_];
            for (std::size_t j = 0; j < p_; ++j) r -= row[j] * t[j];
            v += r * r;
        }
        v /= beta_;
        for (std::size_t j = 0; j < p_; ++j) v += std::log(tau_ * tau_ + t[j] * t[j]);
        return v;
    }

    void drift(std::span<const double> t, std::span<double> out) const {
        std::fill(out.begin(), out.end(), 0.0);
        const double c = 2.0 / beta_;
        for (std::size_t i = 0; i < n_; ++i) {
            const double *row = &X_[i * p_];
            double r = Y_[i];
            for (std::size_t j = 0; j < p_; ++j) r -= row[j] * t[j];
            r *= c;
            for (std::size_t j = 0; j < p_; ++j) out[j] += row[j] * r;
        }
        const double t2 = tau_ * tau_;
        for (std::size_t j = 0; j < p_; ++j) out[j] -= 2.0 * t[j] / (t2 + t[j] * t[j]);
    }

    void diffuse(std::span<const double>, std::span<const double> dw, std::span<double> out) const {
        for (std::size_t j = 0; j < p_; ++j) out[j] = std::numbers::sqrt2 * dw[j];
    }

private:
    std::vector<double> X_, Y_;
    std::size_t p_, n_ = 0;
    double beta_ = 0.0, tau_ = 0.0;
};

template <SdeModel Model, Observable Obs>
struct ModelBundle {
    Model model;
    Obs observable;
    ReferenceData ref;
    std::optional<double> suggested_clamp;
};

/// OU with f(x) = x^2 and its known constants.
inline ModelBundle<OrnsteinUhlenbeck, Square> make_ou(double sigma) {
    if (!(sigma > 0.0)) throw ConfigError("OU sigma must be positive");
    ReferenceData ref;
    const double s2 = sigma * sigma, s4 = s2 * s2;
    ref.nu_f = s2;
    ref.sigma1_sq = 4.0 * s4;
    ref.sigma22_sq = 4.0 * s4;
    ref.sigma21_sq = 5.0 * s4;
    for (int R = 1; R <= 40; ++R) ref.c_abs[R] = s2 / std::pow(4.0, R);
    return {OrnsteinUhlenbeck(sigma), Square{}, ref, std::nullopt};
}

enum class GibbsConvention {
    OneOver2Sigma2,     ///< density exp(-V/(2 sigma^2))
    Standard2OverSigma2 ///< density exp(-2V/sigma^2), invariant law of dX = -V'dt + sigma dW
};

/// E[f] under exp(-cV)/Z on the real line.
inline double gibbs_quadrature(const std::function<double(double)> &potential, double sigma,
                               const std::function<double(double)> &f, GibbsConvention convention) {
    if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
    const double c = convention == GibbsConvention::OneOver2Sigma2 ? 1.0 / (2.0 * sigma * sigma)
                                                                      : 2.0 / (sigma * sigma);
    double vmin = potential(0.0);
    for (double x = -50.0; x <= 50.0; x += 0.01) vmin = std::min(vmin, potential(x));
    auto dens = [&](double x) { return std::exp(-c * (potential(x) - vmin)); };

    // half-width where the integrand tails are negligible
    double B = 1.0;
    auto tail = [&](double b) {
        return std::max(dens(b) * std::max(1.0, std::abs(f(b))), dens(-b) * std::max(1.0, std::abs(f(-b)))) * b;
    };
    while (tail(B) > 1e-18) {
        B *= 1.5;
        if (B > 1e6) throw ConfigError("density is not integrable (tail does not decay)");
    }
    using boost::math::quadrature::gauss_kronrod;
    double err = 0.0;
    double Z = gauss_kronrod<double, 61>::integrate(dens, -B, B, 20, 1e-14, &err);
    double I = gauss_kronrod<double, 61>::integrate([&](double x) { return f(x) * dens(x); }, -B, B, 20, 1e-14, &err);
    return I / Z;
}

inline ModelBundle<DoubleWell, Square> make_double_well(double sigma) {
    if (!(sigma > 0.0)) throw ConfigError("double-well sigma must be positive");
    ReferenceData ref;
    ref.nu_f = gibbs_quadrature(DoubleWell::potential, sigma, [](double x) { return x * x; },
                                GibbsConvention::Standard2OverSigma2);
    ref.note = "reference from quadrature of exp(-2V/sigma^2)";
    return {DoubleWell(sigma), Square{}, ref, std::nullopt};
}

struct EwaData {
    std::vector<double> X; ///< row-major N x p
    std::vector<double> Y;
    std::size_t N = 0, p = 0;
    double sigma_noise = 0.0;
    std::optional<std::vector<double>> theta0;
};

/// Rademacher design, theta0_j = 1 for j < S, Y = X theta0 + noise with variance S/9.
inline EwaData generate_ewa_data(std::size_t p, std::size_t N, std::size_t S, std::uint64_t seed) {
    if (p == 0 || N == 0 || S > p) throw ConfigError("EWA data needs p, N >= 1 and S <= p");
    EwaData d;
    d.N = N;
    d.p = p;
    d.sigma_noise = std::sqrt(static_cast<double>(S) / 9.0);
    std::vector<double> theta(p, 0.0);
    for (std::size_t j = 0; j < S; ++j) theta[j] = 1.0;
    GaussianStream rs(seed, 0, 0, StreamPurpose::Data), ns(seed, 1, 0, StreamPurpose::Data);
    d.X.resize(N * p);
    for (auto &v : d.X) v = rs.uniform() < 0.5 ? -1.0 : 1.0;
    d.Y.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        double y = 0.0;
        for (std::size_t j = 0; j < p; ++j) y += d.X[i * p + j] * theta[j];
        d.Y[i] = y + d.sigma_noise * ns.normal();
    }
    d.theta0 = theta;
    return d;
}

/// Rows are observations; the last column is Y. Commas or whitespace separate fields.
inline EwaData load_ewa_csv(const std::string &path, double sigma_noise) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open EWA data file: " + path);
    EwaData d;
    d.sigma_noise = sigma_noise;
    std::string line;
    while (std::getline(in, line)) {
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        std::vector<double> row;
        double v;
        while (ss >> v) row.push_back(v);
        if (row.empty()) continue;
        if (row.size() < 2) throw ConfigError("EWA data rows need at least 2 columns");
        if (d.p == 0) d.p = row.size() - 1;
        if (row.size() - 1 != d.p) throw ConfigError("EWA data rows have inconsistent widths");
        d.X.insert(d.X.end(), row.begin(), row.end() - 1);
        d.Y.push_back(row.back());
    }
    d.N = d.Y.size();
    if (d.N == 0) throw ConfigError("EWA data file is empty");
    return d;
}

inline ModelBundle<EwaPosterior, Coordinates> make_ewa(const EwaData &data) {
    ReferenceData ref;
    ref.theta0 = data.theta0;
    EwaPosterior m(data.X, data.Y, data.p, data.sigma_noise);
    return {m, Coordinates(data.p), ref, 1.0 / static_cast<double>(data.p)};
}

inline std::vector<TestFunction> coordinate_functions(std::size_t p) {
    std::vector<TestFunction> out;
    for (std::size_t j = 0; j < p; ++j)
        out.push_back({"theta" + std::to_string(j), [j](std::span<const double> x) { return x[j]; }});
    return out;
}

} // namespace ml2rgodic
