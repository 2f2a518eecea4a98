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

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include <ml2rgodic/harness.hpp>

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kConfigError = 2;
constexpr int kBlowUp = 3;

ml2rgodic::RunConfig load(const std::string &path, std::optional<std::uint64_t> seed, const std::string &out) {
    ml2rgodic::RunConfig c = path.empty() ? ml2rgodic::RunConfig{} : ml2rgodic::load_config(path);
    if (seed) c.seed = *seed;
    if (!out.empty()) c.output = out;
    return c;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Weighted multilevel Richardson-Romberg ergodic estimator"};
    app.require_subcommand(1);
    std::string config, out;
    std::optional<std::uint64_t> seed;
    bool self_test = false;

    auto add_common = [&](CLI::App *sub, bool config_required) {
        auto *opt = sub->add_option("--config", config, "JSON configuration file");
        if (config_required) opt->required();
        sub->add_option("--seed", seed, "master seed (overrides the config)");
        sub->add_option("--out", out, "output path prefix (overrides the config)");
    };
    auto *plan = app.add_subcommand("plan", "print the optimized estimator plan");
    auto *run = app.add_subcommand("run", "replication study of the estimator");
    auto *compare = app.add_subcommand("compare", "matched-complexity traces against the crude chain");
    auto *tables = app.add_subcommand("tables", "depth, weight-variance and complexity tables");
    add_common(plan, true);
    add_common(run, true);
    add_common(compare, true);
    add_common(tables, false);
    tables->add_flag("--self-test", self_test, "compare against the reference values");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    try {
        auto cfg = load(config, seed, out);
        if (plan->parsed()) {
            auto r = ml2rgodic::cmd_plan(cfg);
            std::cout << r.doc.dump(2) << '\n';
            if (!out.empty()) {
                ml2rgodic::ensure_parent(cfg.output);
                auto f = ml2rgodic::open_out(cfg.output + "_plan.json");
                f << r.doc.dump(2) << '\n';
            }
            return kOk;
        }
        if (run->parsed()) {
            auto r = ml2rgodic::cmd_run(cfg);
            std::cout << "replications " << r.rows.size() << "  mean " << ml2rgodic::fmt(r.summary.mean) << "  rmse "
                      << ml2rgodic::fmt(r.summary.rmse) << "  ci95 " << ml2rgodic::fmt(r.summary.ci95_half) << '\n'
                      << "wrote " << cfg.output << "_rows.csv, " << cfg.output << "_summary.csv\n";
            return kOk;
        }
        if (compare->parsed()) {
            auto r = ml2rgodic::cmd_compare(cfg);
            std::cout << "complexity,crude_mse,ml2r_mse\n";
            for (auto &row : ml2rgodic::compare_mse(r))
                std::cout << ml2rgodic::fmt(row[0]) << ',' << ml2rgodic::fmt(row[1]) << ','
                          << ml2rgodic::fmt(row[2]) << '\n';
            std::cout << "wrote " << cfg.output << "_compare.csv\n";
            return kOk;
        }
        auto t = ml2rgodic::compute_tables(cfg.tables);
        ml2rgodic::write_tables(t, cfg.output);
        for (auto &c : t.cells) std::cout << c.table << ',' << c.row << ',' << c.col << ',' << c.value << '\n';
        if (self_test) {
            int fails = 0;
            for (auto &l : ml2rgodic::tables_self_test(t)) {
                std::cout << (l.pass ? "PASS " : "FAIL ") << l.ref.table << ' ' << l.ref.row << ' ' << l.ref.col
                          << " expected " << l.ref.value << " got " << l.computed << '\n';
                fails += l.pass ? 0 : 1;
            }
            std::cout << fails << " mismatches\n";
            return fails == 0 ? kOk : kFailure;
        }
        return kOk;
    } catch (const ml2rgodic::ConfigError &e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const ml2rgodic::BudgetInfeasible &e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const ml2rgodic::BlowUpError &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kBlowUp;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
}
