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

#include "sticky/core.hpp"
#include "sticky/parallel.hpp"
#include "sticky/rng.hpp"

using namespace sticky;

TEST(Constants, HalfMass) {
    const auto m = derive_constants(0.5);
    EXPECT_DOUBLE_EQ(m.lambda, 2.0);
    EXPECT_DOUBLE_EQ(m.sigma, 1.0);
}

TEST(Constants, QuarterMass) {
    const auto m = derive_constants(0.25);
    EXPECT_DOUBLE_EQ(m.lambda, 1.0);
    EXPECT_DOUBLE_EQ(m.sigma, 2.0);
}

TEST(Constants, ProductIsTwo) {
    for (double nu : {1.0, 0.013, 7.5, 1e3}) {
        const auto m = derive_constants(nu);
        EXPECT_NEAR(m.lambda * m.sigma, 2.0, 1e-15) << nu;
    }
}

TEST(Constants, RejectsDegenerate) {
    EXPECT_THROW(derive_constants(0.0), domain_error);
    EXPECT_THROW(derive_constants(-1.0), domain_error);
    EXPECT_THROW(derive_constants(std::nan("")), domain_error);
}

TEST(Scaling, Window) {
    const ModerateDeviationScaling s(4096, 1.0);
    EXPECT_EQ(s.n(), 4096);
    EXPECT_DOUBLE_EQ(s.quarterN(), 8.0);
    EXPECT_DOUBLE_EQ(s.u(0.0), 512.0);
    EXPECT_NEAR(s.x_of(s.u(0.3)), 0.3, 1e-14);
    EXPECT_THROW(ModerateDeviationScaling(0, 1.0), domain_error);
    EXPECT_THROW(ModerateDeviationScaling(4, 0.1), domain_error);
}

TEST(Accumulator, MergeMatchesSequential) {
    MomentAccumulator all, a, b;
    for (int i = 0; i < 100; ++i) {
        const double v = std::sin(i * 0.37) * 3.0 + i * 0.01;
        all.add(v);
        (i < 37 ? a : b).add(v);
    }
    a.merge(b);
    EXPECT_EQ(a.count(), all.count());
    EXPECT_NEAR(a.mean(), all.mean(), 1e-14);
    EXPECT_NEAR(a.variance(), all.variance(), 1e-12);
}

TEST(Philox, KnownAnswers) {
    EXPECT_EQ(philox4x32_10({0, 0, 0, 0}, {0, 0}),
              (Philox4x32Ctr{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
    EXPECT_EQ(philox4x32_10({~0u, ~0u, ~0u, ~0u}, {~0u, ~0u}),
              (Philox4x32Ctr{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
    EXPECT_EQ(philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}),
              (Philox4x32Ctr{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Stream, GoldenFirstDraw) {
    SequentialRng r(derive_stream(0, {}));
    EXPECT_EQ(r.next_u64(), 0xe169c58d6627e8d5ull);
    SequentialRng u(derive_stream(0, {}));
    EXPECT_DOUBLE_EQ(u.uniform(), 0.88052019788861435);
}

TEST(Stream, RepeatableMillionDraws) {
    SequentialRng a(derive_stream(42, {3, 1, 4})), b(derive_stream(42, {3, 1, 4}));
    for (int i = 0; i < 1000000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64()) << i;
}

TEST(Stream, ChildEqualsPath) {
    const auto s = derive_stream(9, {1}).child({2, 3});
    const auto t = derive_stream(9, {1, 2, 3});
    EXPECT_EQ(s.key(), t.key());
    EXPECT_EQ(s.descriptor(), "9:[1,2,3]");
}

TEST(Stream, SiblingsUncorrelated) {
    SequentialRng a(derive_stream(7, {1})), b(derive_stream(7, {2}));
    const int n = 100000;
    double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
    for (int i = 0; i < n; ++i) {
        const double x = a.uniform(), y = b.uniform();
        sa += x;
        sb += y;
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    const double cov = sab / n - (sa / n) * (sb / n);
    const double corr = cov / std::sqrt((saa / n - sa * sa / n / n) * (sbb / n - sb * sb / n / n));
    EXPECT_LE(std::abs(corr), 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST(Stream, UniformOpenInterval) {
    EXPECT_GT(u64_to_open_unit(0), 0.0);
    EXPECT_LT(u64_to_open_unit(~0ull), 1.0);
}

TEST(Stream, NormalMoments) {
    SequentialRng r(derive_stream(5, {}));
    MomentAccumulator m, m2;
    for (int i = 0; i < 200000; ++i) {
        const double z = r.normal();
        m.add(z);
        m2.add(z * z);
    }
    EXPECT_LE(std::abs(m.mean()), 4.0 * m.std_err());
    EXPECT_LE(std::abs(m2.mean() - 1.0), 4.0 * m2.std_err());
}

TEST(Parallel, ReplicateIndependentOfThreads) {
    auto f = [](std::size_t r) {
        SequentialRng g(derive_stream(11, {r}));
        return g.normal() + g.uniform();
    };
    const auto a = replicate(1000, 1, f), b = replicate(1000, 4, f), c = replicate(1000, 7, f);
    EXPECT_EQ(a.mean(), b.mean());
    EXPECT_EQ(a.mean(), c.mean());
    EXPECT_EQ(a.variance(), c.variance());
}

TEST(Parallel, PropagatesExceptions) {
    EXPECT_THROW(parallel_map(100, 4,
                              [](std::size_t i) {
                                  if (i == 57) throw numeric_error("boom");
                                  return 1.0;
                              }),
                 numeric_error);
}
