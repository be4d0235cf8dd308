// Copyright (C) 2026 blendlab authors
// SPDX-License-Identifier: Apache-2.0

// Hand-rolled generators for property tests. Every generator draws from a
// caller-owned blendlab::Rng so failures replay from the printed seed.

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "blendlab/concepts.hpp"
#include "blendlab/random.hpp"
#include "blendlab/schedule.hpp"

namespace blendlab::gen {

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

inline int uniform_int(Rng& rng, int lo, int hi)
{
    return lo + static_cast<int>(rng.uniform() * static_cast<double>(hi - lo + 1)) % (hi - lo + 1);
}

inline Vector random_vector(Rng& rng, Eigen::Index d, double scale = 3.0)
{
    Vector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = uniform(rng, -scale, scale);
    return v;
}

/// A A^T + floor * I with A ~ uniform entries.
inline Matrix random_spd(Rng& rng, Eigen::Index d, double floor = 0.2)
{
    Matrix a(d, d);
    for (Eigen::Index r = 0; r < d; ++r)
        for (Eigen::Index c = 0; c < d; ++c) a(r, c) = uniform(rng, -1.0, 1.0);
    Matrix s = a * a.transpose() + floor * Matrix::Identity(d, d);
    return 0.5 * (s + s.transpose());
}

inline GaussianMixture random_gmm(Rng& rng, Eigen::Index d, int max_k = 3)
{
    const int k = uniform_int(rng, 1, max_k);
    GaussianMixture m;
    double total = 0.0;
    for (int i = 0; i < k; ++i) {
        GaussianComponent c;
        c.weight = uniform(rng, 0.2, 1.0);
        total += c.weight;
        c.mean = random_vector(rng, d);
        c.covariance = random_spd(rng, d);
        m.components.push_back(c);
    }
    double sum = 0.0;
    for (auto& c : m.components) {
        c.weight /= total;
        sum += c.weight;
    }
    m.components.back().weight += 1.0 - sum;
    return m;
}

inline ConceptSpec random_concept(Rng& rng, const std::string& label, Eigen::Index d, int max_k = 3)
{
    return ConceptSpec{label, random_gmm(rng, d, max_k)};
}

inline BlendPolicy random_policy(Rng& rng, std::size_t n)
{
    BlendPolicy p;
    p.gammas.clear();
    for (std::size_t i = 0; i < n; ++i) p.gammas.push_back(uniform(rng, 0.25, 2.0));
    const int s = uniform_int(rng, 0, 2);
    p.strategy = s == 0 ? Strategy::Increase : s == 1 ? Strategy::Invariant : Strategy::Decline;
    p.invariant_p = rng.uniform();
    return p;
}

/// Gammas rescaled so they sum to N.
inline std::vector<double> gammas_summing_to_n(Rng& rng, std::size_t n)
{
    std::vector<double> g(n);
    double total = 0.0;
    for (auto& x : g) {
        x = uniform(rng, 0.25, 2.0);
        total += x;
    }
    for (auto& x : g) x *= static_cast<double>(n) / total;
    return g;
}

} // namespace blendlab::gen
