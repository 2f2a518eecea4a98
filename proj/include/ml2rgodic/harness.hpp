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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "models.hpp"
#include "numeric.hpp"
#include "optimizer.hpp"
#include "parallel.hpp"
#include "plan.hpp"
#include "simulate.hpp"
#include "weights.hpp"

namespace ml2rgodic {

using json = nlohmann::json;

// ---------------------------------------------------------------- config

struct ModelSpec {
    std::string type = "ou";
    double sigma = 1.0;
    std::size_t p = 500, N = 100, S = 15;
    std::uint64_t data_seed = 1;
    std::string csv;
    std::optional<double> sigma_noise;
    std::vector<double> drift_poly; ///< custom: b(x) = sum_k c_k x^k
    double x0 = 0.0;
    std::optional<double> reference;
};

struct CalibrationSpec {
    std::size_t L = 100;
    std::uint64_t n = 100000;
    double gamma1 = 1.0;
    int M = 2;
};

struct OverrideSpec {
    std::optional<int> R;
    std::optional<double> gamma1, rho, sigma1_sq, sigma22_sq, sigma21_sq, theta1, theta2, c_abs, clamp;
    std::optional<std::vector<double>> q;
    std::optional<std::uint64_t> n;
};

struct TablesSpec {
    std::vector<double> epsilons{1e-1, 1e-2, 1e-3, 1e-4};
    std::vector<int> Ms{2, 3, 4};
    std::vector<int> Rs{2, 3, 4};
    std::vector<double> sigmas{1.0, 4.0};
    double epsilon = 1e-2;
};

struct RunConfig {
    ModelSpec model;
    std::string function = "x2";
    double epsilon = 1e-2;
    std::vector<int> Ms{2};
    bool sweep = false;
    std::vector<int> sweep_R{2, 3, 4};
    std::string mode = "ml2r";
    std::uint64_t seed = 1;
    std::size_t replications = 1;
    std::string constants = "exact";
    CalibrationSpec calibration;
    OverrideSpec overrides;
    bool trace = false;
    std::string output = "ml2rgodic";
    double kappa0 = 1.0;
    TablesSpec tables;
};

namespace detail {

inline void check_keys(const json &j, const std::string &where, const std::set<std::string> &allowed) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError("unknown key '" + where + "." + it.key() + "'");
}

template <class T>
T get(const json &j, const std::string &key, const std::string &where) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception &) {
        throw ConfigError("invalid value for '" + where + "." + key + "'");
    }
}

template <class T>
void maybe(const json &j, const std::string &key, const std::string &where, T &dst) {
    if (j.contains(key)) dst = get<T>(j, key, where);
}

template <class T>
void maybe(const json &j, const std::string &key, const std::string &where, std::optional<T> &dst) {
    if (j.contains(key)) dst = get<T>(j, key, where);
}

} // namespace detail

inline RunConfig parse_config(const json &j) {
    using namespace detail;
    check_keys(j, "config",
               {"model", "function", "epsilon", "M", "R_sweep", "mode", "seed", "replications", "constants",
                "calibration", "overrides", "trace", "output", "kappa0", "tables"});
    RunConfig c;
    if (j.contains("model")) {
        const json &m = j["model"];
        check_keys(m, "model",
                   {"type", "sigma", "p", "N", "S", "data_seed", "csv", "sigma_noise", "drift", "x0", "reference"});
        maybe(m, "type", "model", c.model.type);
        maybe(m, "sigma", "model", c.model.sigma);
        maybe(m, "p", "model", c.model.p);
        maybe(m, "N", "model", c.model.N);
        maybe(m, "S", "model", c.model.S);
        maybe(m, "data_seed", "model", c.model.data_seed);
        maybe(m, "csv", "model", c.model.csv);
        maybe(m, "sigma_noise", "model", c.model.sigma_noise);
        maybe(m, "drift", "model", c.model.drift_poly);
        maybe(m, "x0", "model", c.model.x0);
        maybe(m, "reference", "model", c.model.reference);
        static const std::set<std::string> types{"ou", "double_well", "ewa", "custom"};
        if (!types.count(c.model.type)) throw ConfigError("unknown model type '" + c.model.type + "' in 'model.type'");
        if (!(c.model.sigma > 0.0)) throw ConfigError("'model.sigma' must be positive");
        if (c.model.type == "custom" && c.model.drift_poly.empty())
            throw ConfigError("'model.drift' (polynomial coefficients) is required for custom models");
        if (c.model.type == "ewa") c.function = "coords";
    }
    maybe(j, "function", "config", c.function);
    {
        static const std::set<std::string> fs{"x2", "x", "coords"};
        if (!fs.count(c.function)) throw ConfigError("unknown 'function' '" + c.function + "'");
        if ((c.model.type == "ewa") != (c.function == "coords"))
            throw ConfigError("'function' must be 'coords' for ewa and 'x' or 'x2' otherwise");
    }
    maybe(j, "epsilon", "config", c.epsilon);
    if (!(c.epsilon > 0.0 && c.epsilon < 1.0)) throw ConfigError("'epsilon' must lie in (0,1)");
    if (j.contains("M")) {
        if (j["M"].is_string()) {
            if (j["M"].get<std::string>() != "sweep") throw ConfigError("'M' must be an integer >= 2 or \"sweep\"");
            c.sweep = true;
            c.Ms = {2, 3, 4};
        } else {
            int M = get<int>(j, "M", "config");
            if (M < 2) throw ConfigError("'M' must be >= 2");
            c.Ms = {M};
        }
    }
    maybe(j, "R_sweep", "config", c.sweep_R);
    maybe(j, "mode", "config", c.mode);
    if (c.mode != "ml2r" && c.mode != "crude" && c.mode != "compare")
        throw ConfigError("'mode' must be ml2r, crude or compare");
    maybe(j, "seed", "config", c.seed);
    maybe(j, "replications", "config", c.replications);
    if (c.replications < 1) throw ConfigError("'replications' must be >= 1");
    maybe(j, "constants", "config", c.constants);
    if (c.constants != "exact" && c.constants != "calibrated" && c.constants != "default")
        throw ConfigError("'constants' must be exact, calibrated or default");
    if (j.contains("calibration")) {
        const json &k = j["calibration"];
        check_keys(k, "calibration", {"L", "n", "gamma1", "M"});
        maybe(k, "L", "calibration", c.calibration.L);
        maybe(k, "n", "calibration", c.calibration.n);
        maybe(k, "gamma1", "calibration", c.calibration.gamma1);
        maybe(k, "M", "calibration", c.calibration.M);
        if (c.calibration.L < 2) throw ConfigError("'calibration.L' must be >= 2");
    }
    if (j.contains("overrides")) {
        const json &o = j["overrides"];
        check_keys(o, "overrides",
                   {"R", "gamma1", "rho", "q", "sigma1_sq", "sigma22_sq", "sigma21_sq", "theta1", "theta2", "c_abs", "n",
                    "clamp"});
        auto &ov = c.overrides;
        maybe(o, "R", "overrides", ov.R);
        maybe(o, "gamma1", "overrides", ov.gamma1);
        maybe(o, "rho", "overrides", ov.rho);
        maybe(o, "q", "overrides", ov.q);
        maybe(o, "sigma1_sq", "overrides", ov.sigma1_sq);
        maybe(o, "sigma22_sq", "overrides", ov.sigma22_sq);
        maybe(o, "sigma21_sq", "overrides", ov.sigma21_sq);
        maybe(o, "theta1", "overrides", ov.theta1);
        maybe(o, "theta2", "overrides", ov.theta2);
        maybe(o, "c_abs", "overrides", ov.c_abs);
        maybe(o, "n", "overrides", ov.n);
        maybe(o, "clamp", "overrides", ov.clamp);
        if (ov.R && *ov.R < 2) throw ConfigError("'overrides.R' must be >= 2");
        if (ov.rho && !(*ov.rho > 0.0 && *ov.rho < 1.0)) throw ConfigError("'overrides.rho' must lie in (0,1)");
    }
    maybe(j, "trace", "config", c.trace);
    maybe(j, "output", "config", c.output);
    maybe(j, "kappa0", "config", c.kappa0);
    if (j.contains("tables")) {
        const json &t = j["tables"];
        check_keys(t, "tables", {"epsilons", "M", "R", "sigmas", "epsilon"});
        maybe(t, "epsilons", "tables", c.tables.epsilons);
        maybe(t, "M", "tables", c.tables.Ms);
        maybe(t, "R", "tables", c.tables.Rs);
        maybe(t, "sigmas", "tables", c.tables.sigmas);
        maybe(t, "epsilon", "tables", c.tables.epsilon);
    }
    return c;
}

inline RunConfig load_config(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error &e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

// ---------------------------------------------------------------- model dispatch

/// Polynomial-drift scalar model with constant diffusion.
class PolynomialDrift {
public:
    PolynomialDrift(std::vector<double> coeffs, double sigma, double x0)
        : c_(std::move(coeffs)), sigma_(sigma), x0_(x0) {}
    std::size_t dim() const { return 1; }
    std::size_t noise_dim() const { return 1; }
    void drift(std::span<const double> x, std::span<double> out) const {
        double v = 0.0;
        for (std::size_t k = c_.size(); k-- > 0;) v = v * x[0] + c_[k];
        out[0] = v;
    }
    void diffuse(std::span<const double>, std::span<const double> dw, std::span<double> out) const {
        out[0] = sigma_ * dw[0];
    }
    std::vector<double> x0() const { return {x0_}; }

private:
    std::vector<double> c_;
    double sigma_, x0_;
};

struct Identity1 {
    std::size_t dim() const { return 1; }
    void eval(std::span<const double> x, std::span<double> out) const { out[0] = x[0]; }
};

/// Calls fn(model, observable, reference, suggested clamp) with concrete types.
template <class Fn>
decltype(auto) with_model(const RunConfig &c, Fn &&fn) {
    auto scalar = [&](auto model, ReferenceData ref, std::optional<double> clamp) -> decltype(auto) {
        if (c.function == "x") {
            ReferenceData r2;
            r2.nu_f = c.model.reference;
            return fn(model, Identity1{}, r2, clamp);
        }
        if (c.model.reference) ref.nu_f = c.model.reference;
        return fn(model, Square{}, ref, clamp);
    };
    if (c.model.type == "ou") {
        auto b = make_ou(c.model.sigma);
        if (c.function == "x") {
            ReferenceData r;
            r.nu_f = 0.0;
            return fn(b.model, Identity1{}, r, std::optional<double>{});
        }
        return fn(b.model, b.observable, b.ref, std::optional<double>{});
    }
    if (c.model.type == "double_well") {
        auto b = make_double_well(c.model.sigma);
        return scalar(b.model, b.ref, std::nullopt);
    }
    if (c.model.type == "custom") {
        return scalar(PolynomialDrift(c.model.drift_poly, c.model.sigma, c.model.x0), ReferenceData{}, std::nullopt);
    }
    EwaData d;
    if (!c.model.csv.empty()) {
        if (!c.model.sigma_noise) throw ConfigError("'model.sigma_noise' is required with 'model.csv'");
        d = load_ewa_csv(c.model.csv, *c.model.sigma_noise);
    } else {
        d = generate_ewa_data(c.model.p, c.model.N, c.model.S, c.model.data_seed);
        if (c.model.sigma_noise) d.sigma_noise = *c.model.sigma_noise;
    }
    auto b = make_ewa(d);
    return fn(b.model, b.observable, b.ref, b.suggested_clamp);
}

// ---------------------------------------------------------------- planning

inline CalibrationReport apply_overrides(CalibrationReport c, const OverrideSpec &o) {
    auto set = [&](const std::optional<double> &v, double &dst, const char *name) {
        if (v) {
            dst = *v;
            c.provenance[name] = Provenance::Override;
        }
    };
    set(o.sigma1_sq, c.sigma1_sq, "sigma1_sq");
    if (o.theta1 && !o.sigma22_sq) {
        c.sigma22_sq = c.sigma1_sq / *o.theta1;
        c.provenance["sigma22_sq"] = Provenance::Override;
    }
    set(o.sigma22_sq, c.sigma22_sq, "sigma22_sq");
    if (o.theta2 && !o.sigma21_sq) {
        c.sigma21_sq = *o.theta2 * c.sigma22_sq;
        c.provenance["sigma21_sq"] = Provenance::Override;
    }
    set(o.sigma21_sq, c.sigma21_sq, "sigma21_sq");
    if (o.c_abs) {
        if (!(*o.c_abs > 0.0)) throw ConfigError("'overrides.c_abs' must be positive");
        c.c_abs.clear();
        c.c_abs_default = *o.c_abs;
        c.provenance["c_abs"] = Provenance::Override;
    }
    if (o.sigma1_sq || o.sigma22_sq || o.sigma21_sq || o.theta1 || o.theta2) c.refresh_ratios();
    if (o.theta1) c.provenance["theta1"] = Provenance::Override;
    if (o.theta2) c.provenance["theta2"] = Provenance::Override;
    return c;
}

template <SdeModel Model, Observable Obs>
CalibrationReport resolve_constants(const RunConfig &c, const Model &m, const Obs &f, const ReferenceData &ref,
                                    std::optional<double> clamp) {
    CalibrationReport cal;
    if (c.constants == "exact") {
        if (!ref.sigma1_sq && !c.overrides.sigma1_sq)
            throw ConfigError("'constants' = exact needs known constants for this model; use calibrated or default");
        cal = CalibrationReport::from_reference(ref);
    } else if (c.constants == "calibrated") {
        CalibrationOptions o;
        o.L = c.calibration.L;
        o.n = c.calibration.n;
        o.gamma1 = c.calibration.gamma1;
        o.M = c.calibration.M;
        o.clamp = clamp;
        cal = calibrate(m, f, o, c.seed ^ 0x9E3779B97F4A7C15ull);
    } else {
        cal = CalibrationReport::defaults(1.0, 1.0, Provenance::Default);
    }
    return apply_overrides(cal, c.overrides);
}

inline PlanOverrides plan_overrides(const RunConfig &c, std::optional<double> clamp) {
    PlanOverrides p;
    p.R = c.overrides.R;
    p.gamma1 = c.overrides.gamma1;
    p.rho = c.overrides.rho;
    p.q = c.overrides.q;
    p.n = c.overrides.n;
    p.clamp = c.overrides.clamp ? c.overrides.clamp : clamp;
    p.kappa0 = c.kappa0;
    return p;
}

inline EstimatorPlan make_plan(const RunConfig &c, const CalibrationReport &cal, std::optional<double> clamp) {
    auto ov = plan_overrides(c, clamp);
    if (!c.sweep) return build_plan(c.epsilon, c.Ms.at(0), cal, ov);
    std::vector<int> Rs = ov.R ? std::vector<int>{*ov.R} : c.sweep_R;
    return cheapest(sweep_plans(c.epsilon, c.Ms, Rs, cal, ov));
}

inline CrudePlan make_crude_plan(const RunConfig &c, const CalibrationReport &cal, std::optional<double> clamp,
                                 std::optional<double> complexity = std::nullopt) {
    auto p = build_crude_plan(c.epsilon, cal.sigma1_sq, cal.c_next(1), std::nullopt,
                              c.overrides.clamp ? c.overrides.clamp : clamp);
    if (complexity) {
        p.n = static_cast<std::uint64_t>(std::ceil(*complexity));
        p.K = static_cast<double>(p.n);
    }
    return p;
}

inline json plan_to_json(const EstimatorPlan &p) {
    json j;
    j["epsilon"] = p.epsilon;
    j["M"] = p.M;
    j["R"] = p.R;
    j["a"] = p.a;
    j["q"] = p.q;
    j["gamma1"] = p.gamma1;
    if (p.clamp) j["clamp"] = *p.clamp;
    j["rho"] = p.rho;
    j["n"] = p.n;
    j["level_sizes"] = p.level_sizes;
    j["K"] = p.K;
    j["kappa0"] = p.kappa0;
    if (p.x_depth > 0.0) j["x_depth"] = p.x_depth;
    json prov = json::object();
    for (auto &[k, v] : p.provenance) prov[k] = to_string(v);
    j["provenance"] = prov;
    return j;
}

inline json crude_plan_to_json(const CrudePlan &p) {
    json j;
    j["epsilon"] = p.epsilon;
    j["a"] = p.a;
    j["gamma1"] = p.gamma1;
    if (p.clamp) j["clamp"] = *p.clamp;
    j["n"] = p.n;
    j["K"] = p.K;
    return j;
}

inline json calibration_to_json(const CalibrationReport &c, int R) {
    json j;
    j["sigma1_sq"] = c.sigma1_sq;
    j["sigma22_sq"] = c.sigma22_sq;
    j["sigma21_sq"] = c.sigma21_sq;
    j["theta1"] = c.theta1;
    j["theta2"] = c.theta2;
    j["c_abs_next"] = c.c_next(R);
    j["c_tilde"] = c.c_tilde;
    return j;
}

// ---------------------------------------------------------------- output

inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string csv_quote(const std::string &s) {
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

inline void ensure_parent(const std::string &prefix) {
    auto parent = std::filesystem::path(prefix).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
}

inline std::ofstream open_out(const std::string &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write output file: " + path);
    return out;
}

struct StudyRow {
    std::size_t replication = 0;
    std::uint64_t n = 0;
    double complexity = 0.0;
    double estimate = 0.0;
    double abs_error = std::numeric_limits<double>::quiet_NaN();
};

struct StudySummary {
    double mean = 0.0, rmse = 0.0, variance = 0.0, ci95_half = 0.0;
};

/// Aggregates over rows. rmse is NaN without a reference.
inline StudySummary summarize(const std::vector<StudyRow> &rows) {
    StudySummary s;
    const double L = static_cast<double>(rows.size());
    for (auto &r : rows) s.mean += r.estimate;
    s.mean /= L;
    double ss = 0.0, se = 0.0;
    for (auto &r : rows) {
        ss += (r.estimate - s.mean) * (r.estimate - s.mean);
        se += r.abs_error * r.abs_error;
    }
    s.variance = rows.size() > 1 ? ss / (L - 1.0) : 0.0;
    s.rmse = std::sqrt(se / L);
    s.ci95_half = 1.96 * std::sqrt(s.variance / L);
    return s;
}

struct StudyResult {
    std::vector<StudyRow> rows;
    StudySummary summary;
    json plan;
    std::vector<std::vector<double>> estimates; ///< full vectors
    std::vector<std::vector<TracePoint>> traces;
    std::optional<double> reference;
};

/// Scalar summary of one estimate against the reference.
inline std::pair<double, double> score(const std::vector<double> &v, const ReferenceData &ref) {
    if (v.size() == 1) {
        double err = ref.nu_f ? std::abs(v[0] - *ref.nu_f) : std::numeric_limits<double>::quiet_NaN();
        return {v[0], err};
    }
    if (ref.theta0) {
        double s = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) s += (v[i] - (*ref.theta0)[i]) * (v[i] - (*ref.theta0)[i]);
        return {std::sqrt(s), std::sqrt(s)};
    }
    double s = 0.0;
    for (double x : v) s += x * x;
    return {std::sqrt(s), std::numeric_limits<double>::quiet_NaN()};
}

inline void write_study(const StudyResult &res, const std::string &prefix) {
    ensure_parent(prefix);
    {
        auto out = open_out(prefix + "_rows.csv");
        out << "replication,n,complexity,estimate,abs_error\n";
        for (auto &r : res.rows)
            out << r.replication << ',' << r.n << ',' << fmt(r.complexity) << ',' << fmt(r.estimate) << ','
                << fmt(r.abs_error) << '\n';
    }
    {
        auto out = open_out(prefix + "_summary.csv");
        out << "mean,rmse,variance,ci95_half,plan_json\n";
        out << fmt(res.summary.mean) << ',' << fmt(res.summary.rmse) << ',' << fmt(res.summary.variance) << ','
            << fmt(res.summary.ci95_half) << ',' << csv_quote(res.plan.dump()) << '\n';
    }
    if (!res.estimates.empty() && res.estimates[0].size() > 1) {
        auto out = open_out(prefix + "_vectors.csv");
        out << "replication,component,estimate\n";
        for (std::size_t r = 0; r < res.estimates.size(); ++r)
            for (std::size_t i = 0; i < res.estimates[r].size(); ++i)
                out << r << ',' << i << ',' << fmt(res.estimates[r][i]) << '\n';
    }
}

// ---------------------------------------------------------------- commands

struct PlanReport {
    EstimatorPlan plan;
    CalibrationReport calibration;
    MseBreakdown predicted;
    json doc;
};

inline PlanReport cmd_plan(const RunConfig &c) {
    return with_model(c, [&](const auto &m, const auto &f, const ReferenceData &ref, std::optional<double> clamp) {
        PlanReport r;
        r.calibration = resolve_constants(c, m, f, ref, clamp);
        r.plan = make_plan(c, r.calibration, clamp);
        bool uniform = std::all_of(r.plan.q.begin(), r.plan.q.end(),
                                   [&](double v) { return std::abs(v - 1.0 / r.plan.R) < 1e-15; });
        r.doc["plan"] = plan_to_json(r.plan);
        r.doc["constants"] = calibration_to_json(r.calibration, r.plan.R);
        if (uniform) {
            r.predicted = predicted_mse(r.plan, r.calibration, plan_weights(r.plan));
            r.doc["predicted_mse"] = {{"first_order", r.predicted.first_order},
                                      {"second_order", r.predicted.second_order},
                                      {"second_order_variance", r.predicted.second_variance},
                                      {"second_order_bias", r.predicted.second_bias}};
        }
        auto crude = make_crude_plan(c, r.calibration, clamp);
        r.doc["crude"] = crude_plan_to_json(crude);
        if (ref.nu_f) r.doc["reference"] = *ref.nu_f;
        if (!ref.note.empty()) r.doc["reference_note"] = ref.note;
        return r;
    });
}

inline StudyResult cmd_run(const RunConfig &c) {
    return with_model(c, [&](const auto &m, const auto &f, const ReferenceData &ref, std::optional<double> clamp) {
        StudyResult res;
        auto cal = resolve_constants(c, m, f, ref, clamp);
        const std::size_t L = c.replications;
        res.estimates.resize(L);
        res.traces.resize(L);
        std::vector<double> cps;
        std::uint64_t n = 0;
        double K = 0.0;
        if (c.mode == "crude") {
            auto cp = make_crude_plan(c, cal, clamp);
            if (c.overrides.n) cp.n = *c.overrides.n, cp.K = static_cast<double>(cp.n);
            if (c.trace) cps = geometric_checkpoints(cp.K);
            res.plan = crude_plan_to_json(cp);
            n = cp.n;
            K = cp.K;
            parallel_for(L, [&](std::size_t i) {
                auto e = crude_estimate(m, f, cp, c.seed, static_cast<std::uint32_t>(i), cps);
                res.estimates[i] = e.value;
                res.traces[i] = std::move(e.trace);
            });
        } else {
            auto plan = make_plan(c, cal, clamp);
            auto ws = plan_weights(plan);
            if (c.trace) cps = geometric_checkpoints(plan.K);
            res.plan = plan_to_json(plan);
            res.plan["constants"] = calibration_to_json(cal, plan.R);
            n = plan.n;
            K = plan.K;
            parallel_for(L, [&](std::size_t i) {
                auto e = ml2rgodic_estimate(m, f, plan, ws, c.seed, static_cast<std::uint32_t>(i), cps);
                res.estimates[i] = e.value;
                res.traces[i] = std::move(e.trace);
            });
        }
        if (ref.nu_f) res.reference = *ref.nu_f;
        for (std::size_t i = 0; i < L; ++i) {
            auto [est, err] = score(res.estimates[i], ref);
            res.rows.push_back({i, n, K, est, err});
        }
        res.summary = summarize(res.rows);
        write_study(res, c.output);
        if (c.trace) {
            auto out = open_out(c.output + "_trace.csv");
            out << "replication,complexity,estimate,abs_error\n";
            for (std::size_t i = 0; i < L; ++i)
                for (auto &tp : res.traces[i]) {
                    auto [est, err] = score(tp.value, ref);
                    out << i << ',' << fmt(tp.complexity) << ',' << fmt(est) << ',' << fmt(err) << '\n';
                }
        }
        return res;
    });
}

struct ComparePoint {
    std::size_t replication = 0;
    double complexity = 0.0;
    double crude_estimate = 0.0, ml2r_estimate = 0.0;
    double crude_error = 0.0, ml2r_error = 0.0;
};

struct CompareResult {
    std::vector<ComparePoint> points;
    json plan;
    double K = 0.0;
};

/// ML2R and crude traces at the same checkpoint complexities; crude gets the ML2R budget.
inline CompareResult cmd_compare(const RunConfig &c) {
    return with_model(c, [&](const auto &m, const auto &f, const ReferenceData &ref, std::optional<double> clamp) {
        CompareResult res;
        auto cal = resolve_constants(c, m, f, ref, clamp);
        auto plan = make_plan(c, cal, clamp);
        auto ws = plan_weights(plan);
        auto crude = make_crude_plan(c, cal, clamp, plan.K);
        auto cps = geometric_checkpoints(plan.K);
        res.K = plan.K;
        res.plan["ml2r"] = plan_to_json(plan);
        res.plan["crude"] = crude_plan_to_json(crude);
        const std::size_t L = c.replications;
        std::vector<Estimate> a(L), b(L);
        parallel_for(L, [&](std::size_t i) {
            a[i] = ml2rgodic_estimate(m, f, plan, ws, c.seed, static_cast<std::uint32_t>(i), cps);
            b[i] = crude_estimate(m, f, crude, c.seed, static_cast<std::uint32_t>(i), cps);
        });
        for (std::size_t i = 0; i < L; ++i) {
            // ML2R drops checkpoints where a level is still empty; align on the tail
            const std::size_t na = a[i].trace.size(), nb = b[i].trace.size(), k = std::min(na, nb);
            for (std::size_t j = 0; j < k; ++j) {
                const auto &ta = a[i].trace[na - k + j];
                const auto &tb = b[i].trace[nb - k + j];
                auto [ea, erra] = score(ta.value, ref);
                auto [eb, errb] = score(tb.value, ref);
                res.points.push_back({i, cps[cps.size() - k + j], eb, ea, errb, erra});
            }
        }
        ensure_parent(c.output);
        auto out = open_out(c.output + "_compare.csv");
        out << "replication,complexity,crude_estimate,ml2r_estimate\n";
        for (auto &p : res.points)
            out << p.replication << ',' << fmt(p.complexity) << ',' << fmt(p.crude_estimate) << ','
                << fmt(p.ml2r_estimate) << '\n';
        auto meta = open_out(c.output + "_compare_plan.json");
        meta << res.plan.dump(2) << '\n';
        return res;
    });
}

/// Mean squared error per checkpoint: (complexity, crude, ml2r).
inline std::vector<std::array<double, 3>> compare_mse(const CompareResult &r) {
    std::map<double, std::array<double, 3>> acc;
    std::map<double, double> cnt;
    for (auto &p : r.points) {
        auto &v = acc[p.complexity];
        v[0] = p.complexity;
        v[1] += p.crude_error * p.crude_error;
        v[2] += p.ml2r_error * p.ml2r_error;
        cnt[p.complexity] += 1.0;
    }
    std::vector<std::array<double, 3>> out;
    for (auto &[k, v] : acc) out.push_back({v[0], v[1] / cnt[k], v[2] / cnt[k]});
    return out;
}

// ---------------------------------------------------------------- tables

struct TableCell {
    std::string table;
    std::string row, col;
    double value = 0.0;
};

struct Tables {
    std::vector<TableCell> cells;
};

inline Tables compute_tables(const TablesSpec &t) {
    Tables out;
    for (int M : t.Ms)
        for (double e : t.epsilons) {
            std::ostringstream col;
            col << e;
            out.cells.push_back({"depth_x", "M=" + std::to_string(M), "eps=" + col.str(), solve_depth(e, M).x});
        }
    for (int M : t.Ms) {
        for (int R : t.Rs)
            out.cells.push_back(
                {"psi_over_R", "M=" + std::to_string(M), "R=" + std::to_string(R), psi(R, M) / R});
        out.cells.push_back({"psi_over_R", "M=" + std::to_string(M), "sup", psi_bold(M)});
    }
    for (double s : t.sigmas) {
        auto ou = make_ou(s);
        auto cal = CalibrationReport::from_reference(ou.ref);
        std::ostringstream sg;
        sg << s;
        for (int M : t.Ms)
            for (int R : t.Rs) {
                PlanOverrides ov;
                ov.R = R;
                auto p = build_plan(t.epsilon, M, cal, ov);
                out.cells.push_back({"complexity_sigma=" + sg.str(), "M=" + std::to_string(M),
                                     "R=" + std::to_string(R), p.K});
            }
        out.cells.push_back({"crude_complexity", "sigma=" + sg.str(), "K",
                             build_crude_plan(t.epsilon, cal.sigma1_sq, cal.c_next(1)).K});
    }
    return out;
}

struct ReferenceValue {
    std::string table, row, col;
    double value;
    double tol;
    bool relative;
};

/// Reference values with per-table tolerances.
inline std::vector<ReferenceValue> reference_values() {
    std::vector<ReferenceValue> v;
    const char *eps[] = {"eps=0.1", "eps=0.01", "eps=0.001", "eps=0.0001"};
    const double x[3][4] = {{2.08, 2.79, 3.38, 3.89}, {1.94, 2.56, 3.06, 3.50}, {1.87, 2.44, 2.90, 3.30}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) v.push_back({"depth_x", "M=" + std::to_string(i + 2), eps[j], x[i][j], 0.01, false});
    const double p[3][4] = {{2.133, 2.591, 2.674, 2.674}, {1.200, 1.278, 1.245, 1.278}, {0.948, 1.021, 1.024, 1.024}};
    const char *pc[] = {"R=2", "R=3", "R=4", "sup"};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j)
            v.push_back({"psi_over_R", "M=" + std::to_string(i + 2), pc[j], p[i][j], 0.001, false});
    const double k1[3][3] = {{1.09e6, 1.58e6, 2.55e6}, {1.11e6, 1.43e6, 2.05e6}, {1.21e6, 1.57e6, 2.27e6}};
    const double k4[3][3] = {{7.02e8, 5.23e8, 7.34e8}, {7.17e8, 4.76e8, 6.10e8}, {7.56e8, 4.99e8, 6.55e8}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            v.push_back({"complexity_sigma=1", "M=" + std::to_string(i + 2), "R=" + std::to_string(j + 2), k1[i][j],
                         0.01, true});
            v.push_back({"complexity_sigma=4", "M=" + std::to_string(i + 2), "R=" + std::to_string(j + 2), k4[i][j],
                         0.01, true});
        }
    v.push_back({"crude_complexity", "sigma=1", "K", 6.93e6, 0.01, true});
    v.push_back({"crude_complexity", "sigma=4", "K", 1.77e9, 0.01, true});
    return v;
}

struct SelfTestLine {
    ReferenceValue ref;
    double computed = std::numeric_limits<double>::quiet_NaN();
    bool pass = false;
};

inline std::vector<SelfTestLine> tables_self_test(const Tables &t) {
    std::vector<SelfTestLine> out;
    for (auto &r : reference_values()) {
        SelfTestLine line{r};
        for (auto &c : t.cells)
            if (c.table == r.table && c.row == r.row && c.col == r.col) line.computed = c.value;
        double err = std::abs(line.computed - r.value);
        if (r.relative) err /= std::abs(r.value);
        line.pass = err <= r.tol * (1.0 + 1e-9);
        out.push_back(line);
    }
    return out;
}

inline void write_tables(const Tables &t, const std::string &prefix) {
    ensure_parent(prefix);
    auto out = open_out(prefix + "_tables.csv");
    out << "table,row,column,value\n";
    for (auto &c : t.cells) out << c.table << ',' << c.row << ',' << c.col << ',' << fmt(c.value) << '\n';
}

} // namespace ml2rgodic
