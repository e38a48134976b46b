/*
   Copyright 2026 The sticky-flow authors

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
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "sticky/config.hpp"

namespace {

struct Flags {
    std::string config;
    std::string out = "runs";
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<double> tolerance_scale;
    bool print_defaults = false;
};

int run(const std::string& experiment, const Flags& f) {
    using namespace sticky;
    ExperimentConfig c;
    try {
        c = f.config.empty() ? default_config(experiment) : parse_config(f.config, experiment);
        if (f.seed) c.seed = *f.seed;
        if (f.threads) c.threads = *f.threads;
        if (f.tolerance_scale) c.tolerance_scale = *f.tolerance_scale;
        const auto v = validate_config(c);
        if (!v.empty()) throw ConfigError(v);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    }
    if (f.print_defaults) {
        std::cout << config_to_json(c).dump(2) << "\n";
        return 0;
    }
    try {
        const RunOutcome o = run_and_persist(c, f.out);
        std::cout << checks_text(o.report);
        for (const auto& r : o.report.rows)
            if (r.status == RowStatus::fail)
                std::cout << "  row fail: " << r.observable << " N=" << r.N << " estimate " << fmt_num(r.estimate)
                          << " oracle " << fmt_num(r.oracle) << " z " << fmt_num(r.z) << "  " << r.note << "\n";
        std::cout << (o.report.pass() ? "ALL CONTRACTS PASS" : "CONTRACT FAILURE") << "  (" << o.dir.string()
                  << ", " << fmt_num(o.manifest.wall_seconds) << " s)\n";
        return o.report.pass() ? 0 : 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sticky random-walk flows: lattice experiments against continuum oracles"};
    app.require_subcommand(1);
    Flags f;
    app.add_option("--config", f.config, "JSON config file (keys override the defaults table)");
    app.add_option("--out", f.out, "base directory; each run writes a fresh timestamped subdirectory");
    app.add_option("--seed", f.seed, "master seed");
    app.add_option("--threads", f.threads, "worker threads (0 = logical cores)");
    app.add_option("--tolerance-scale", f.tolerance_scale, "multiplies every statistical tolerance")
        ->check(CLI::PositiveNumber);
    app.add_flag("--print-config", f.print_defaults, "print the resolved config and exit");
    for (const auto& name : sticky::experiment_names()) {
        auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
        sub->fallthrough();
    }
    CLI11_PARSE(app, argc, argv);
    for (auto* sub : app.get_subcommands()) return run(sub->get_name(), f);
    return 2;
}
