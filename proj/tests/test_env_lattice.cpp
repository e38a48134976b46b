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

#include "sticky/env_lattice.hpp"
#include "sticky/parallel.hpp"

using namespace sticky;

namespace {
double binom_pmf(std::int64_t n, std::int64_t j) {
    return std::exp(std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0) - n * std::log(2.0));
}
}  // namespace

TEST(EnvProb, ConstantHalf) {
    const auto s = derive_stream(1, {});
    for (std::int64_t n : {0, 5, 1000})
        for (std::int64_t x : {-7, 0, 3, 100000}) EXPECT_EQ(env_prob(EnvModel::constant_half(), s, n, x), 0.5);
}

TEST(EnvProb, TwoPointMean) {
    const auto m = EnvModel::two_point(0.1);
    const auto s = derive_stream(2, {});
    MomentAccumulator a;
    std::vector<double> row;
    for (std::int64_t n = 0; n < 1000; ++n) {
        env_row(m, s, n, -500, 499, row);
        for (double w : row) {
            ASSERT_TRUE(w == 0.1 || w == 0.9);
            a.add(w);
        }
    }
    EXPECT_EQ(a.count(), 1000000);
    EXPECT_LE(std::abs(a.mean() - 0.5), 4.0 * a.std_err());
}

TEST(EnvProb, BetaSecondMoment) {
    for (double beta : {0.5, 2.0}) {
        const auto m = EnvModel::beta_symmetric(beta);
        const auto s = derive_stream(3, {});
        MomentAccumulator a;
        std::vector<double> row;
        for (std::int64_t n = 0; n < 200; ++n) {
            env_row(m, s, n, -250, 249, row);
            for (double w : row) a.add(w * (1.0 - w));
        }
        const double exact = beta / (2.0 * (2.0 * beta + 1.0));
        EXPECT_NEAR(m.q(), exact, 1e-15);
        EXPECT_LE(std::abs(a.mean() - exact), 4.0 * a.std_err()) << beta;
    }
}

TEST(EnvProb, RowMatchesPointwiseAndIsStrided) {
    const auto s = derive_stream(4, {9});
    for (const auto& m : {EnvModel::two_point(0.2), EnvModel::beta_symmetric(1.5)}) {
        std::vector<double> row;
        env_row(m, s, 17, -301, 200, 3, row);
        for (std::int64_t i = 0; i < 200; ++i) EXPECT_EQ(row[i], env_prob(m, s, 17, -301 + 3 * i));
    }
}

TEST(EnvProb, FieldCalibration) {
    for (double nu : {0.25, 0.5, 2.0}) {
        EXPECT_NEAR(two_point_for_field(nu, 1024).nu_field(), nu, 1e-12);
        EXPECT_NEAR(beta_for_field(nu, 1024).nu_field(), nu, 1e-12);
        EXPECT_NEAR(two_point_for_field(nu, 1024).sigma_field(), 1.0 / (2.0 * nu), 1e-12);
        EXPECT_NEAR(two_point_for_diffusive(nu, 1024).nu_eff(), nu, 1e-12);
    }
    EXPECT_EQ(EnvModel::constant_half().sigma_field(), 0.0);
}

TEST(StepKernel, SingleSite) {
    const auto K = step_kernel(QuenchedKernel::delta0(), EnvModel::constant(0.7), derive_stream(0, {}));
    EXPECT_DOUBLE_EQ(K.at(1), 0.7);
    EXPECT_DOUBLE_EQ(K.at(-1), 0.3);
    EXPECT_EQ(K.at(0), 0.0);
    EXPECT_EQ(K.n, 1);
}

TEST(StepKernel, TwoFreeSteps) {
    const auto s = derive_stream(0, {});
    const auto K = step_kernel(step_kernel(QuenchedKernel::delta0(), EnvModel::constant_half(), s),
                               EnvModel::constant_half(), s);
    EXPECT_DOUBLE_EQ(K.at(-2), 0.25);
    EXPECT_DOUBLE_EQ(K.at(0), 0.5);
    EXPECT_DOUBLE_EQ(K.at(2), 0.25);
    EXPECT_EQ(K.at(1), 0.0);
}

TEST(StepKernel, ConservationAfter1e4Steps) {
    for (const auto& m : {two_point_for_field(0.5, 4096), EnvModel::beta_symmetric(1.0)}) {
        const auto K = evolve(m, derive_stream(5, {1}), 10000);
        EXPECT_LE(std::abs(K.mass() - 1.0), 1e-12);
    }
}

TEST(Evolve, ZeroSteps) {
    const auto K = evolve(two_point_for_field(0.5, 64), derive_stream(1, {}), 0);
    EXPECT_EQ(K.n, 0);
    EXPECT_EQ(K.at(0), 1.0);
    EXPECT_EQ(K.probs.size(), 1u);
}

TEST(Evolve, FreeIsBinomial) {
    const std::int64_t n = 4096;
    const auto K = evolve(EnvModel::constant_half(), derive_stream(1, {}), n);
    double worst = 0.0;
    for (std::int64_t j = 0; j <= n; ++j) worst = std::max(worst, std::abs(K.at(2 * j - n) - binom_pmf(n, j)));
    EXPECT_LE(worst, 1e-12);
    EXPECT_EQ(K.at(1 - n), 0.0);
}

TEST(Evolve, AnnealedIsBinomial) {
    const std::int64_t n = 20;
    const auto m = EnvModel::two_point(0.2);
    const auto base = derive_stream(6, {});
    auto acc = replicate_vec(2000, n + 1, 1, [&](std::size_t r) {
        const auto K = evolve(m, base.child(r), n);
        std::vector<double> v(n + 1);
        for (std::int64_t j = 0; j <= n; ++j) v[j] = K.at(2 * j - n);
        return v;
    });
    for (std::int64_t j = 0; j <= n; ++j) {
        const double p = binom_pmf(n, j);
        EXPECT_LE(std::abs(acc[j].mean() - p), 4.0 * acc[j].std_err() + 1e-15) << "site " << 2 * j - n;
    }
}

TEST(Evolve, MemoryCapIsEnforced) {
    const auto saved = kernel_memory_cap();
    kernel_memory_cap() = 1024;
    EXPECT_THROW(evolve(EnvModel::constant_half(), derive_stream(0, {}), 1000), resource_error);
    kernel_memory_cap() = saved;
}

TEST(KernelTail, Support) {
    const auto K = step_kernel(QuenchedKernel::delta0(), EnvModel::constant(0.7), derive_stream(0, {}));
    EXPECT_DOUBLE_EQ(kernel_tail(K, -5), 1.0);
    EXPECT_EQ(kernel_tail(K, 5), 0.0);
    EXPECT_DOUBLE_EQ(kernel_tail(K, 0), 0.7);
    const TailTable T(K);
    for (std::int64_t u = -3; u <= 3; ++u) EXPECT_DOUBLE_EQ(T.tail(u), kernel_tail(K, u));
}
