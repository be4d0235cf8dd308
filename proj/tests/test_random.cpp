// Copyright (C) 2026 blendlab authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <set>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "blendlab/parallel.hpp"
#include "blendlab/random.hpp"

using namespace blendlab;

TEST(DeriveSeed, PureAndDistinct)
{
    EXPECT_EQ(derive_seed(42, 0, 7), derive_seed(42, 0, 7));
    std::set<std::uint64_t> seen;
    for (std::uint64_t master : {std::uint64_t{0}, std::uint64_t{1}, std::uint64_t{42}}) {
        for (std::uint64_t stream : {std::uint64_t{0}, std::uint64_t{1}, streams::verify}) {
            for (std::uint64_t i = 0; i < 200; ++i) {
                seen.insert(derive_seed(master, stream, i));
            }
        }
    }
    EXPECT_EQ(seen.size(), 3u * 3u * 200u);
}

TEST(DeriveSeed, SplitmixReferenceValue)
{
    // First output of the reference splitmix64 generator seeded with 0.
    EXPECT_EQ(splitmix64(0), 0xE220A8397B1DCDAFULL);
}

TEST(Rng, StreamsReplay)
{
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) {
        ASSERT_EQ(a.normal(), b.normal());
    }
    Rng c(124);
    EXPECT_NE(Rng(123).normal(), c.normal());
}

TEST(Rng, NormalMoments)
{
    Rng rng(derive_seed(1, 2, 3));
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        s += x;
        s2 += x * x;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    EXPECT_LT(std::abs(mean), 4.0 / std::sqrt(n));
    EXPECT_NEAR(var, 1.0, 4.0 * std::sqrt(2.0 / n));
}

TEST(Rng, UniformRange)
{
    Rng rng(9);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}

TEST(Parallel, VisitsEveryIndexOnce)
{
    for (std::size_t threads : {1u, 2u, 3u, 8u}) {
        std::vector<std::atomic<int>> hits(97);
        parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i]++; });
        for (const auto& h : hits) {
            ASSERT_EQ(h.load(), 1);
        }
    }
    parallel_for(0, 4, [](std::size_t) { FAIL(); });
}

TEST(Parallel, RethrowsLowestFailingIndex)
{
    for (std::size_t threads : {1u, 2u, 4u}) {
        try {
            parallel_for(40, threads, [](std::size_t i) {
                if (i == 13 || i == 31) throw std::runtime_error(std::to_string(i));
            });
            FAIL() << "expected an exception";
        } catch (const std::runtime_error& e) {
            EXPECT_STREQ(e.what(), "13") << "threads=" << threads;
        }
    }
}

TEST(Parallel, ThreadCountCappedByEnvironment)
{
    ::setenv("BLENDLAB_THREADS", "2", 1);
    EXPECT_EQ(resolve_thread_count(8, 100), 2u);
    EXPECT_EQ(resolve_thread_count(1, 100), 1u);
    ::setenv("BLENDLAB_THREADS", "junk", 1);
    EXPECT_EQ(resolve_thread_count(8, 100), 8u);
    ::unsetenv("BLENDLAB_THREADS");
    EXPECT_EQ(resolve_thread_count(8, 3), 3u);
    EXPECT_GE(resolve_thread_count(0, 100), 1u);
}
