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
#pragma once

#include <unistd.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "experiments.hpp"
#include "json.hpp"

namespace sticky {

inline constexpr const char* config_schema = "sticky-config/1";
inline constexpr const char* manifest_schema = "sticky-manifest/1";
inline constexpr const char* artifact_version = "sticky-flow 0.1.0";

using json = nlohmann::ordered_json;

// The one defaults table. "common" applies to every experiment, then the
// experiment's own block.
inline const json& defaults_table() {
    static const json d = json::parse(R"({
  "schema": "sticky-config/1",
  "common": {
    "nu_total": 0.5,
    "env": {"kind": "two_point"},
    "N": [256, 1024, 4096],
    "t": 1.0,
    "x": [-0.5, 0.0, 0.5],
    "pairs": [[0.0, 0.0]],
    "test_functions": [
      {"kind": "gaussian", "center": 0.0, "width": 0.5},
      {"kind": "bump", "center": 0.0, "width": 1.0}
    ],
    "k": [2, 3],
    "env_replicas": 500,
    "env_replicas_k3": 2000,
    "path_replicas": 100000,
    "calibrate_replicas": 2000,
    "dt": 0.001,
    "exact_lattice": true,
    "seed": 20260917,
    "threads": 0,
    "tolerance_scale": 1.0,
    "max": {"c": 1.0, "d": 0.0, "a_min": -2.0, "a_max": 5.0},
    "she": {"t": [0.5, 1.0, 2.0], "dxy": [0.0, 0.5, 1.5], "sigma": [0.5, 1.0, 2.0], "x0": 0.0}
  },
  "experiments": {
    "calibrate": {},
    "first-moment": {},
    "moments": {},
    "tail": {"env_replicas": 2000},
    "max": {"N": [1024]},
    "she-oracle": {},
    "selftest": {}
  }
})");
    return d;
}

struct ConfigError : domain_error {
    std::vector<std::string> violations;
    explicit ConfigError(std::vector<std::string> v) : domain_error(join(v)), violations(std::move(v)) {}
    static std::string join(const std::vector<std::string>& v) {
        std::string s = "configuration rejected (" + std::to_string(v.size()) + " problem" + (v.size() == 1 ? "" : "s") + "):";
        for (const auto& e : v) s += "\n  - " + e;
        return s;
    }
};

namespace detail {

template <class T>
bool read_as(const json& j, T& out, const std::string& key, std::vector<std::string>& err) {
    try {
        out = j.get<T>();
        return true;
    } catch (const std::exception&) {
        err.push_back(key + ": wrong type (" + std::string(j.type_name()) + ")");
        return false;
    }
}

inline void unknown(const std::string& key, std::vector<std::string>& err) {
    err.push_back("unknown key '" + key + "'");
}

inline void apply_test_function(const json& j, TestFunctionSpec& f, const std::string& where,
                                std::vector<std::string>& err) {
    if (!j.is_object()) {
        err.push_back(where + ": expected an object");
        return;
    }
    for (const auto& [k, v] : j.items()) {
        const std::string key = where + "." + k;
        if (k == "kind") read_as(v, f.kind, key, err);
        else if (k == "center") read_as(v, f.center, key, err);
        else if (k == "width") read_as(v, f.width, key, err);
        else if (k == "lo") read_as(v, f.lo, key, err);
        else if (k == "hi") read_as(v, f.hi, key, err);
        else if (k == "value") read_as(v, f.value, key, err);
        else unknown(key, err);
    }
}

inline void apply_block(const json& j, ExperimentConfig& c, const std::string& where, std::vector<std::string>& err) {
    if (!j.is_object()) {
        err.push_back(where + ": expected an object");
        return;
    }
    for (const auto& [k, v] : j.items()) {
        const std::string key = where.empty() ? k : where + "." + k;
        if (k == "experiment") read_as(v, c.experiment, key, err);
        else if (k == "schema") {
            std::string s;
            if (read_as(v, s, key, err) && s != config_schema)
                err.push_back(key + ": unsupported schema '" + s + "', expected " + config_schema);
        } else if (k == "nu_total") read_as(v, c.nu_total, key, err);
        else if (k == "env") {
            if (!v.is_object()) {
                err.push_back(key + ": expected an object");
                continue;
            }
            c.env.param.reset();
            for (const auto& [ek, ev] : v.items()) {
                if (ek == "kind") read_as(ev, c.env.kind, key + ".kind", err);
                else if (ek == "param") {
                    double p = 0.0;
                    if (ev.is_null()) c.env.param.reset();
                    else if (read_as(ev, p, key + ".param", err)) c.env.param = p;
                } else unknown(key + "." + ek, err);
            }
        } else if (k == "N") read_as(v, c.N, key, err);
        else if (k == "t") read_as(v, c.t, key, err);
        else if (k == "x") read_as(v, c.x, key, err);
        else if (k == "pairs") read_as(v, c.pairs, key, err);
        else if (k == "test_functions") {
            if (!v.is_array()) {
                err.push_back(key + ": expected an array");
                continue;
            }
            c.test_functions.clear();
            for (std::size_t i = 0; i < v.size(); ++i) {
                TestFunctionSpec f;
                apply_test_function(v[i], f, key + "[" + std::to_string(i) + "]", err);
                c.test_functions.push_back(f);
            }
        } else if (k == "k") read_as(v, c.k, key, err);
        else if (k == "env_replicas") read_as(v, c.env_replicas, key, err);
        else if (k == "env_replicas_k3") read_as(v, c.env_replicas_k3, key, err);
        else if (k == "path_replicas") read_as(v, c.path_replicas, key, err);
        else if (k == "calibrate_replicas") read_as(v, c.calibrate_replicas, key, err);
        else if (k == "dt") read_as(v, c.dt, key, err);
        else if (k == "exact_lattice") read_as(v, c.exact_lattice, key, err);
        else if (k == "seed") read_as(v, c.seed, key, err);
        else if (k == "threads") read_as(v, c.threads, key, err);
        else if (k == "tolerance_scale") read_as(v, c.tolerance_scale, key, err);
        else if (k == "max") {
            if (!v.is_object()) {
                err.push_back(key + ": expected an object");
                continue;
            }
            for (const auto& [mk, mv] : v.items()) {
                const std::string kk = key + "." + mk;
                if (mk == "c") read_as(mv, c.max.c, kk, err);
                else if (mk == "d") read_as(mv, c.max.d, kk, err);
                else if (mk == "a_min") read_as(mv, c.max.a_min, kk, err);
                else if (mk == "a_max") read_as(mv, c.max.a_max, kk, err);
                else unknown(kk, err);
            }
        } else if (k == "she") {
            if (!v.is_object()) {
                err.push_back(key + ": expected an object");
                continue;
            }
            for (const auto& [sk, sv] : v.items()) {
                const std::string kk = key + "." + sk;
                if (sk == "t") read_as(sv, c.she.t, kk, err);
                else if (sk == "dxy") read_as(sv, c.she.dxy, kk, err);
                else if (sk == "sigma") read_as(sv, c.she.sigma, kk, err);
                else if (sk == "x0") read_as(sv, c.she.x0, kk, err);
                else unknown(kk, err);
            }
        } else unknown(key, err);
    }
}

}  // namespace detail

// Defaults for an experiment, before any user file.
inline ExperimentConfig default_config(const std::string& experiment) {
    std::vector<std::string> err;
    ExperimentConfig c;
    detail::apply_block(defaults_table()["common"], c, "", err);
    const auto& ex = defaults_table()["experiments"];
    if (!ex.contains(experiment)) throw ConfigError({"experiment: unknown id '" + experiment + "'"});
    detail::apply_block(ex[experiment], c, "", err);
    c.experiment = experiment;
    if (!err.empty()) throw ConfigError(err);
    return c;
}

// Parse text over the defaults of `experiment` (or of the file's own
// "experiment" key when experiment is empty). All problems are collected.
inline ExperimentConfig parse_config_text(const std::string& text, const std::string& experiment = {}) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError({std::string("not valid JSON: ") + e.what()});
    }
    if (!j.is_object()) throw ConfigError({"top level: expected an object"});
    std::string exp = experiment;
    if (j.contains("experiment")) {
        std::string fe;
        if (j["experiment"].is_string()) fe = j["experiment"].get<std::string>();
        if (exp.empty()) exp = fe;
        else if (!fe.empty() && fe != exp)
            throw ConfigError({"experiment: file says '" + fe + "' but '" + exp + "' was requested"});
    }
    if (exp.empty()) throw ConfigError({"experiment: not given"});
    ExperimentConfig c = default_config(exp);
    std::vector<std::string> err;
    detail::apply_block(j, c, "", err);
    c.experiment = exp;
    for (auto& v : validate_config(c)) err.push_back(std::move(v));
    if (!err.empty()) throw ConfigError(err);
    return c;
}

inline ExperimentConfig parse_config(const std::string& path, const std::string& experiment = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"config file '" + path + "' cannot be read"});
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), experiment);
}

inline json config_to_json(const ExperimentConfig& c) {
    json j;
    j["schema"] = config_schema;
    j["experiment"] = c.experiment;
    j["nu_total"] = c.nu_total;
    j["env"] = {{"kind", c.env.kind}};
    if (c.env.param) j["env"]["param"] = *c.env.param;
    j["N"] = c.N;
    j["t"] = c.t;
    j["x"] = c.x;
    j["pairs"] = c.pairs;
    json tf = json::array();
    for (const auto& f : c.test_functions) {
        json o{{"kind", f.kind}};
        if (f.kind == "constant") o["value"] = f.value;
        else if (f.kind == "indicator") o["lo"] = f.lo, o["hi"] = f.hi;
        else o["center"] = f.center, o["width"] = f.width;
        tf.push_back(o);
    }
    j["test_functions"] = tf;
    j["k"] = c.k;
    j["env_replicas"] = c.env_replicas;
    j["env_replicas_k3"] = c.env_replicas_k3;
    j["path_replicas"] = c.path_replicas;
    j["calibrate_replicas"] = c.calibrate_replicas;
    j["dt"] = c.dt;
    j["exact_lattice"] = c.exact_lattice;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["tolerance_scale"] = c.tolerance_scale;
    j["max"] = {{"c", c.max.c}, {"d", c.max.d}, {"a_min", c.max.a_min}, {"a_max", c.max.a_max}};
    j["she"] = {{"t", c.she.t}, {"dxy", c.she.dxy}, {"sigma", c.she.sigma}, {"x0", c.she.x0}};
    return j;
}

// FNV-1a 64
inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char b[20];
    std::snprintf(b, sizeof b, "%016llx", static_cast<unsigned long long>(v));
    return b;
}

inline std::string utc_stamp(std::chrono::system_clock::time_point tp, bool compact) {
    const std::time_t t = std::chrono::system_clock::to_time_t(tp);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char b[32];
    std::strftime(b, sizeof b, compact ? "%Y%m%dT%H%M%SZ" : "%Y-%m-%dT%H:%M:%SZ", &tm);
    return b;
}

inline std::string host_descriptor() {
    char h[256] = {0};
    if (gethostname(h, sizeof h - 1) != 0) h[0] = 0;
    return std::string(h[0] ? h : "unknown") + ", " + std::to_string(default_threads()) + " logical cores";
}

// A directory that did not exist before this call.
inline std::filesystem::path fresh_run_dir(const std::filesystem::path& base, const std::string& experiment,
                                           std::chrono::system_clock::time_point tp) {
    namespace fs = std::filesystem;
    fs::create_directories(base);
    const std::string stem = experiment + "-" + utc_stamp(tp, true);
    for (int i = 0; i < 10000; ++i) {
        const fs::path p = base / (i == 0 ? stem : stem + "-" + std::to_string(i));
        std::error_code ec;
        if (fs::create_directory(p, ec)) return p;
    }
    throw resource_error("cannot create a fresh run directory under " + base.string());
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream o(p, std::ios::binary);
    if (!o) throw resource_error("cannot write " + p.string());
    o << s;
}

struct RunManifest {
    std::string config_checksum;
    std::uint64_t seed = 0;
    std::string version = artifact_version;
    std::string started, finished;
    double wall_seconds = 0.0;
    std::string host;
    std::string experiment;
    bool pass = false;
    std::vector<ContractCheck> checks;
    std::map<std::string, std::string> budgets;
    std::vector<std::string> files;

    json to_json() const {
        json j;
        j["schema"] = manifest_schema;
        j["report_schema"] = report_schema;
        j["config_schema"] = config_schema;
        j["version"] = version;
        j["config_file"] = "config.json";
        j["config_checksum"] = config_checksum;
        j["checksum_algorithm"] = "fnv1a64";
        j["seed"] = seed;
        j["started"] = started;
        j["finished"] = finished;
        j["wall_seconds"] = wall_seconds;
        j["host"] = host;
        j["experiment"] = experiment;
        j["pass"] = pass;
        json cs = json::array();
        for (const auto& c : checks) cs.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
        j["checks"] = cs;
        j["budgets"] = budgets;
        j["files"] = files;
        return j;
    }
};

inline bool verify_manifest_checksum(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json"), cf(dir / "config.json", std::ios::binary);
    if (!mf || !cf) return false;
    const json m = json::parse(mf);
    std::stringstream ss;
    ss << cf.rdbuf();
    return m.value("config_checksum", std::string()) == hex64(fnv1a64(ss.str()));
}

struct RunOutcome {
    std::filesystem::path dir;
    ExperimentReport report;
    RunManifest manifest;
};

// Run one experiment and persist config, report, tables and manifest.
inline RunOutcome run_and_persist(const ExperimentConfig& c, const std::filesystem::path& out_base) {
    const auto t0 = std::chrono::system_clock::now();
    const auto s0 = std::chrono::steady_clock::now();
    RunOutcome o;
    o.dir = fresh_run_dir(out_base, c.experiment, t0);
    const std::string cfg_text = config_to_json(c).dump(2) + "\n";
    write_text(o.dir / "config.json", cfg_text);
    o.report = run_experiment(c);
    const std::string rname = "report_" + c.experiment + ".csv";
    write_text(o.dir / rname, report_csv(o.report));
    o.manifest.files = {"config.json", rname};
    for (const auto& [name, tab] : o.report.tables) {
        write_text(o.dir / (name + ".csv"), table_csv(tab));
        o.manifest.files.push_back(name + ".csv");
    }
    write_text(o.dir / "checks.txt", checks_text(o.report));
    o.manifest.files.push_back("checks.txt");
    o.manifest.config_checksum = hex64(fnv1a64(cfg_text));
    o.manifest.seed = c.seed;
    o.manifest.started = utc_stamp(t0, false);
    o.manifest.finished = utc_stamp(std::chrono::system_clock::now(), false);
    o.manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - s0).count();
    o.manifest.host = host_descriptor();
    o.manifest.experiment = c.experiment;
    o.manifest.pass = o.report.pass();
    o.manifest.checks = o.report.checks;
    o.manifest.budgets = o.report.budgets;
    o.manifest.budgets["threads"] = std::to_string(resolve_threads(c.threads));
    write_text(o.dir / "manifest.json", o.manifest.to_json().dump(2) + "\n");
    return o;
}

}  // namespace sticky
