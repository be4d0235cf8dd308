// Copyright (C) 2026 blendlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "blendlab/concepts.hpp"
#include "blendlab/random.hpp"
#include "blendlab/schedule.hpp"

namespace blendlab {

enum class Sampler { DDPM, DDIM };

inline std::string_view to_string(Sampler sampler) noexcept
{
    return sampler == Sampler::DDPM ? "ddpm" : "ddim";
}

inline Sampler parse_sampler(std::string_view name)
{
    if (name == "ddpm") return Sampler::DDPM;
    if (name == "ddim") return Sampler::DDIM;
    throw std::invalid_argument("unknown sampler '" + std::string(name) + "'");
}

/// Closed interval the predicted clean latent is clamped to, per coordinate.
struct ClampBox {
    double lo = -1.0;
    double hi = 1.0;
};

struct ReverseOptions {
    Sampler sampler = Sampler::DDPM;
    std::optional<ClampBox> clamp_x0;
};

/// sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps with eps ~ N(0, I) from rng.
inline Vector forward_noise(const Vector& x0, int t, const NoiseSchedule& schedule, Rng& rng)
{
    if (t < 0 || t > schedule.step_count()) {
        throw std::out_of_range("forward_noise: timestep outside [0, T]");
    }
    const double abar = schedule.alpha_bar(t);
    const Vector eps = rng.standard_normal(x0.size());
    return std::sqrt(abar) * x0 + std::sqrt(1.0 - abar) * eps;
}

/// Classifier-free guidance written as (1 - w) * eps_null + w * eps_cond,
/// which equals eps_null + w * (eps_cond - eps_null) and reproduces either
/// input bit-for-bit at w = 0 and w = 1.
inline Vector combine_guidance(const Vector& eps_null, const Vector& eps_cond, double w)
{
    return (1.0 - w) * eps_null + w * eps_cond;
}

inline Vector guided_noise(const DenoiserRegistry& reg, const Vector& z, int t, const Condition& cond, double w,
                           const NoiseSchedule& schedule)
{
    const Vector eps_null = predict_noise(reg, z, t, NullCondition{}, schedule);
    const Vector eps_cond = predict_noise(reg, z, t, cond, schedule);
    return combine_guidance(eps_null, eps_cond, w);
}

/// Precomputed noisy marginals of one condition for every timestep.
class ConditionTable {
public:
    ConditionTable() = default;

    ConditionTable(const DenoiserRegistry& reg, const Condition& cond, const NoiseSchedule& schedule)
        : label_(describe(cond))
    {
        const GaussianMixture clean = resolve_condition(reg, cond);
        by_step_.reserve(static_cast<std::size_t>(schedule.step_count()));
        alpha_bars_.reserve(static_cast<std::size_t>(schedule.step_count()));
        for (int t = 1; t <= schedule.step_count(); ++t) {
            by_step_.emplace_back(marginal_at(clean, schedule.alpha_bar(t)));
            alpha_bars_.push_back(schedule.alpha_bar(t));
        }
    }

    Vector predict_noise(const Vector& z, int t) const
    {
        const auto i = static_cast<std::size_t>(t - 1);
        return noise_from_score(by_step_.at(i).score(z), alpha_bars_[i]);
    }

    const std::string& label() const noexcept { return label_; }

private:
    std::string label_;
    std::vector<PreparedMixture> by_step_;
    std::vector<double> alpha_bars_;
};

/// Guided denoiser for one condition: caches both the null and the
/// conditional marginals.
class GuidedDenoiser {
public:
    GuidedDenoiser(const DenoiserRegistry& reg, const Condition& cond, double w, const NoiseSchedule& schedule)
        : null_(reg, NullCondition{}, schedule), cond_(reg, cond, schedule), w_(w)
    {
    }

    Vector operator()(const Vector& z, int t) const
    {
        return combine_guidance(null_.predict_noise(z, t), cond_.predict_noise(z, t), w_);
    }

    double guidance() const noexcept { return w_; }

private:
    ConditionTable null_;
    ConditionTable cond_;
    double w_;
};

/// One reverse step t -> t-1. DDPM is the ancestral posterior step with
/// noise scale sigma(t) (zero at t = 1); DDIM is the eta = 0 update.
inline Vector reverse_step(const Vector& z, const Vector& eps_hat, int t, const NoiseSchedule& schedule,
                           const ReverseOptions& options, Rng& rng)
{
    if (t < 1 || t > schedule.step_count()) {
        throw std::out_of_range("reverse_step: timestep outside [1, T]");
    }
    const double abar = schedule.alpha_bar(t);
    const double abar_prev = schedule.alpha_bar(t - 1);
    Vector x0 = (z - std::sqrt(1.0 - abar) * eps_hat) / std::sqrt(abar);
    Vector eps = eps_hat;
    if (options.clamp_x0) {
        x0 = x0.cwiseMax(options.clamp_x0->lo).cwiseMin(options.clamp_x0->hi);
        eps = (z - std::sqrt(abar) * x0) / std::sqrt(1.0 - abar);
    }

    if (options.sampler == Sampler::DDIM) {
        return std::sqrt(abar_prev) * x0 + std::sqrt(1.0 - abar_prev) * eps;
    }

    const double beta = schedule.beta(t);
    const double x0_coeff = std::sqrt(abar_prev) * beta / (1.0 - abar);
    const double z_coeff = std::sqrt(schedule.alpha(t)) * (1.0 - abar_prev) / (1.0 - abar);
    Vector mean = x0_coeff * x0 + z_coeff * z;
    const double sigma = schedule.sigma(t);
    if (t > 1 && sigma > 0.0) {
        mean += sigma * rng.standard_normal(z.size());
    }
    return mean;
}

} // namespace blendlab
