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
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "sticky/config.hpp"

using namespace sticky;
namespace fs = std::filesystem;

namespace {
std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}
std::vector<std::string> violations_of(const std::string& text, const std::string& exp = {}) {
    try {
        parse_config_text(text, exp);
    } catch (const ConfigError& e) {
        return e.violations;
    }
    return {};
}
fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("sticky_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    return p;
}
}  // namespace

TEST(Config, MinimalTemplateFillsDefaults) {
    const auto c = parse_config_text(R"({"experiment": "tail"})");
    EXPECT_EQ(c.experiment, "tail");
    EXPECT_EQ(c.nu_total, 0.5);
    EXPECT_EQ(c.N, (std::vector<std::int64_t>{256, 1024, 4096}));
    EXPECT_EQ(c.env_replicas, 2000u);
    EXPECT_EQ(c.x.size(), 3u);
    EXPECT_EQ(c.test_functions.size(), 2u);
    EXPECT_EQ(c.env.kind, "two_point");
    EXPECT_FALSE(c.env.param.has_value());
}

TEST(Config, DefaultsTableIsVersioned) {
    EXPECT_EQ(defaults_table()["schema"], config_schema);
    for (const auto& e : experiment_names()) EXPECT_NO_THROW(default_config(e)) << e;
}

TEST(Config, ZeroMassNamesTheConstraint) {
    const auto v = violations_of(R"({"experiment": "moments", "nu_total": 0})");
    ASSERT_FALSE(v.empty());
    bool named = false;
    for (const auto& s : v) named = named || s.find("non-degenerate") != std::string::npos;
    EXPECT_TRUE(named);
}

TEST(Config, CalibrationWindowNamesTheEntry) {
    // fixed delta tuned to N = 1024; N = 256 sees half the stickiness
    const double q = 0.5 / 32.0;
    const double delta = 0.5 * (1.0 - std::sqrt(1.0 - 4.0 * q));
    const auto v = violations_of(R"({"experiment": "calibrate", "env": {"kind": "two_point", "param": )" +
                                 std::to_string(delta) + R"(}, "N": [256, 1024]})");
    ASSERT_EQ(v.size(), 1u);
    EXPECT_NE(v[0].find("N[0] = 256"), std::string::npos);
    EXPECT_NE(v[0].find("calibration window"), std::string::npos);
}

TEST(Config, UnknownKeysAndAllViolationsListed) {
    const auto v = violations_of(R"({"experiment": "tail", "nu_totl": 1, "max": {"cc": 1}, "dt": -1, "k": [4]})");
    ASSERT_EQ(v.size(), 4u);
    EXPECT_NE(v[0].find("'nu_totl'"), std::string::npos);
    EXPECT_NE(v[1].find("'max.cc'"), std::string::npos);
}

TEST(Config, TypeErrorsAndBadJson) {
    EXPECT_FALSE(violations_of(R"({"experiment": "tail", "N": "many"})").empty());
    EXPECT_FALSE(violations_of("{not json").empty());
    EXPECT_FALSE(violations_of(R"({"experiment": "nope"})").empty());
    EXPECT_FALSE(violations_of(R"({"experiment": "tail"})", "max").empty());
}

TEST(Config, RoundTrip) {
    auto c = default_config("moments");
    c.env.kind = "constant_half";
    c.x = {0.25};
    c.dt = 2e-3;
    c.seed = 99;
    const auto back = parse_config_text(config_to_json(c).dump(), "moments");
    EXPECT_EQ(config_to_json(back).dump(), config_to_json(c).dump());
}

TEST(Run, FreshDirectoryManifestAndByteIdenticalRerun) {
    const fs::path base = scratch_dir("run");
    auto c = default_config("selftest");
    c.threads = 2;
    const auto a = run_and_persist(c, base);
    const auto b = run_and_persist(c, base);
    EXPECT_NE(a.dir, b.dir);
    EXPECT_TRUE(a.report.pass());
    for (const char* f : {"manifest.json", "config.json", "report_selftest.csv", "checks.txt"})
        EXPECT_TRUE(fs::exists(a.dir / f)) << f;
    EXPECT_EQ(slurp(a.dir / "report_selftest.csv"), slurp(b.dir / "report_selftest.csv"));
    EXPECT_TRUE(verify_manifest_checksum(a.dir));
    const auto m = json::parse(slurp(a.dir / "manifest.json"));
    EXPECT_EQ(m["schema"], manifest_schema);
    EXPECT_EQ(m["report_schema"], report_schema);
    EXPECT_EQ(m["seed"], c.seed);
    EXPECT_EQ(m["pass"], true);
    // tampering is detected
    {
        std::ofstream o(a.dir / "config.json", std::ios::app);
        o << " ";
    }
    EXPECT_FALSE(verify_manifest_checksum(a.dir));
    fs::remove_all(base);
}

TEST(Run, SheOracleTableIsWritten) {
    const fs::path base = scratch_dir("she");
    const auto o = run_and_persist(default_config("she-oracle"), base);
    const std::string csv = slurp(o.dir / "she_oracle.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,x,y,sigma,bridge,contour,rel_gap");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 28);
    fs::remove_all(base);
}
