// Copyright (C) 2026 blendlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace blendlab {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed for one (stream, index) pair under a master seed. Pure function of
/// its inputs, so chain c draws the same numbers whatever the chain count or
/// thread layout.
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                           std::uint64_t index) noexcept
{
    return splitmix64(splitmix64(splitmix64(master) ^ (stream * 0xD1B54A32D192ED03ULL)) ^ index);
}

/// Well-known stream identifiers.
namespace streams {
inline constexpr std::uint64_t blend_chain = 0;
inline constexpr std::uint64_t verify = 0x7665726966790000ULL;
// Reference sampling for concept k uses concept_sampling + k.
inline constexpr std::uint64_t concept_sampling = 0x636F6E6365707400ULL;
} // namespace streams

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal() { return normal_(engine_); }

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

    Eigen::VectorXd standard_normal(Eigen::Index dim)
    {
        Eigen::VectorXd v(dim);
        for (Eigen::Index i = 0; i < dim; ++i) {
            v[i] = normal_(engine_);
        }
        return v;
    }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_;
};

} // namespace blendlab
