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

#include <cmath>

#include "sticky/config.hpp"
#include "sticky/experiments.hpp"

using namespace sticky;

namespace {
bool within(const CalibrationResult& r, double target) {
    return std::abs(r.nu_hat.mean - target) <= 0.1 * target + 4.0 * r.nu_hat.std_err;
}
const ReportRow* find_row(const ExperimentReport& r, const std::string& obs, std::int64_t N) {
    for (const auto& w : r.rows)
        if (w.observable == obs && w.N == N) return &w;
    return nullptr;
}
}  // namespace

TEST(Calibrate, FreeWalks) {
    const std::int64_t N = 1024;
    const auto r = calibrate_stickiness(EnvModel::constant_half(N), N, 1.0, 2000, derive_stream(71, {}),
                                        default_threads());
    EXPECT_DOUBLE_EQ(r.predicted, 8.0);
    EXPECT_TRUE(within(r, std::sqrt(static_cast<double>(N)) / 4.0)) << r.nu_hat.mean << " +- " << r.nu_hat.std_err;
}

TEST(Calibrate, TwoPointDiffusiveScale) {
    const std::int64_t N = 1024;
    const auto m = EnvModel::two_point(0.5 / std::sqrt(static_cast<double>(N)), N);
    const auto r = calibrate_stickiness(m, N, 1.0, 2000, derive_stream(72, {}), default_threads());
    EXPECT_TRUE(within(r, 0.5)) << r.nu_hat.mean << " +- " << r.nu_hat.std_err;
    EXPECT_TRUE(within(r, m.nu_eff()));
}

TEST(Calibrate, StdErrHalvesWithFourTimesReps) {
    const std::int64_t N = 256;
    const auto m = two_point_for_diffusive(0.5, N);
    const auto a = calibrate_stickiness(m, N, 1.0, 1000, derive_stream(73, {}), default_threads());
    const auto b = calibrate_stickiness(m, N, 1.0, 4000, derive_stream(74, {}), default_threads());
    const double ratio = b.nu_hat.std_err / a.nu_hat.std_err;
    EXPECT_NEAR(ratio, 0.5, 0.15);
}

TEST(Calibrate, RejectsSmallBudgets) {
    EXPECT_THROW(calibrate_stickiness(EnvModel::constant_half(64), 64, 1.0, 999, derive_stream(0, {})), domain_error);
}

TEST(FreeMax, CenteringSolvesExpectedCount) {
    const std::int64_t n = 1024;
    const double log_k = 16.0;
    const auto c = free_max_centering(n, log_k);
    EXPECT_GT(c.theta, 0.0);
    EXPECT_NEAR(c.a_of(0) - c.a_of(-2), 2.0 * c.theta, 1e-12);
    // k P(S_n >= M + 2) against e^{-a(M)} on the levels around the centre
    for (std::int64_t M = 2 * (static_cast<std::int64_t>(c.b) / 2) - 4; M <= c.b + 6; M += 2) {
        long double tail = 0.0L;
        for (std::int64_t j = (M + 2 + n) / 2; j <= n; ++j)
            tail += std::exp(std::lgamma(n + 1.0L) - std::lgamma(j + 1.0L) - std::lgamma(n - j + 1.0L) -
                             n * std::log(2.0L));
        const double lhs = std::log(static_cast<double>(tail)) + log_k;
        EXPECT_NEAR(lhs, -c.a_of(M), 0.05) << M;
    }
}

TEST(FreeMax, GumbelAtN1024) {
    auto cfg = default_config("max");
    cfg.env.kind = "constant_half";
    cfg.N = {1024};
    const auto r = run_experiment(cfg);
    ASSERT_EQ(r.checks.size(), 1u);
    EXPECT_TRUE(r.pass()) << checks_text(r);
}

TEST(Max, PathwiseIdentityAndConsistencySmall) {
    auto cfg = default_config("max");
    cfg.N = {256};
    cfg.env_replicas = 100;
    cfg.threads = default_threads();
    const auto r = run_experiment(cfg);
    bool saw_identity = false;
    for (const auto& c : r.checks)
        if (c.name.rfind("pathwise identity", 0) == 0) {
            saw_identity = true;
            EXPECT_TRUE(c.pass) << c.detail;
        }
    EXPECT_TRUE(saw_identity);
}

TEST(Max, KOverflowIsConfigError) {
    auto cfg = default_config("max");
    cfg.max.c = 2.0;
    cfg.N = {1024, 65536};
    const auto v = validate_config(cfg);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_NE(v[0].find("N[1] = 65536"), std::string::npos);
    EXPECT_NE(v[0].find("overflows"), std::string::npos);
}

TEST(Moments, FreeEnvironmentIsSquareOfFirstMoment) {
    auto cfg = default_config("moments");
    cfg.env.kind = "constant_half";
    cfg.N = {256};
    cfg.k = {2};
    cfg.env_replicas = 4;
    cfg.path_replicas = 1000;
    cfg.test_functions = {TestFunctionSpec{}};
    const auto r = run_experiment(cfg);
    const auto* mc = find_row(r, "moment_mc:gaussian(0,0.5)", 256);
    const auto* ex = find_row(r, "lattice_exact:gaussian(0,0.5)", 256);
    ASSERT_TRUE(mc && ex);
    const double h = heat_pairing(1.0, TestFunction::gaussian(0.0, 0.5));
    EXPECT_NEAR(mc->oracle, h * h, 1e-12);
    EXPECT_EQ(mc->std_err, 0.0);
    EXPECT_NEAR(mc->estimate, ex->estimate, 1e-12 * ex->estimate);
    const ModerateDeviationScaling s(256, 1.0);
    const double b = tilted_binomial_sum(s, TestFunction::gaussian(0.0, 0.5));
    EXPECT_NEAR(mc->estimate, b * b, 1e-10);
}

TEST(Report, CsvSchema) {
    ExperimentReport r;
    ReportRow w;
    w.observable = "a,b";
    w.N = 4;
    w.estimate = 0.1;
    w.status = RowStatus::pass;
    r.rows.push_back(w);
    const std::string csv = report_csv(r);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "N,t,x,y,k,estimate,stderr,oracle,z,pass,observable,note");
    EXPECT_NE(csv.find("4,nan,nan,nan,0,0.1,nan,nan,nan,pass,\"a,b\","), std::string::npos);
}

TEST(Selftest, PassesQuicklyAndIsThreadInvariant) {
    auto cfg = default_config("selftest");
    cfg.threads = 1;
    const auto t0 = std::chrono::steady_clock::now();
    const auto a = run_experiment(cfg);
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 60.0);
    EXPECT_TRUE(a.pass()) << checks_text(a);
    cfg.threads = 4;
    const auto b = run_experiment(cfg);
    EXPECT_EQ(report_csv(a), report_csv(b));
}

TEST(SheOracleGrid, AllChecksPass) {
    const auto r = run_experiment(default_config("she-oracle"));
    EXPECT_TRUE(r.pass()) << checks_text(r);
    ASSERT_TRUE(r.tables.count("she_oracle"));
    const auto& t = r.tables.at("she_oracle");
    EXPECT_EQ(t.rows.size(), 27u);
    EXPECT_EQ(t.columns, (std::vector<std::string>{"t", "x", "y", "sigma", "bridge", "contour", "rel_gap"}));
}
