// Copyright (C) 2026 blendlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace blendlab {

/// Discrete forward-process tables for T steps. Timesteps are 1-based:
/// beta(t), alpha(t) and sigma(t) are defined for t in [1, T], alpha_bar(t)
/// for t in [0, T] with alpha_bar(0) == 1.
class NoiseSchedule {
public:
    NoiseSchedule() = default;

    explicit NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas))
    {
        if (betas_.empty()) {
            throw std::invalid_argument("noise schedule needs at least one step");
        }
        alphas_.reserve(betas_.size());
        alpha_bars_.reserve(betas_.size() + 1);
        sigmas_.reserve(betas_.size());
        alpha_bars_.push_back(1.0);
        for (std::size_t i = 0; i < betas_.size(); ++i) {
            const double beta = betas_[i];
            if (!(beta > 0.0 && beta < 1.0)) {
                throw std::invalid_argument("beta at step " + std::to_string(i + 1) +
                                            " outside (0, 1): " + std::to_string(beta));
            }
            alphas_.push_back(1.0 - beta);
            alpha_bars_.push_back(alpha_bars_.back() * alphas_.back());
        }
        // sigma_1 is zero: no noise is injected on the final denoising step.
        sigmas_.push_back(0.0);
        for (std::size_t t = 2; t <= betas_.size(); ++t) {
            const double var = betas_[t - 1] * (1.0 - alpha_bars_[t - 1]) / (1.0 - alpha_bars_[t]);
            sigmas_.push_back(std::sqrt(var));
        }
    }

    int step_count() const noexcept { return static_cast<int>(betas_.size()); }

    double beta(int t) const { return betas_.at(index(t)); }
    double alpha(int t) const { return alphas_.at(index(t)); }
    double alpha_bar(int t) const { return alpha_bars_.at(static_cast<std::size_t>(t)); }
    double sigma(int t) const { return sigmas_.at(index(t)); }

    const std::vector<double>& betas() const noexcept { return betas_; }
    const std::vector<double>& alphas() const noexcept { return alphas_; }
    const std::vector<double>& alpha_bars() const noexcept { return alpha_bars_; }
    const std::vector<double>& posterior_sigmas() const noexcept { return sigmas_; }

private:
    std::size_t index(int t) const
    {
        if (t < 1 || t > step_count()) {
            throw std::out_of_range("timestep " + std::to_string(t) + " outside [1, " +
                                    std::to_string(step_count()) + "]");
        }
        return static_cast<std::size_t>(t - 1);
    }

    std::vector<double> betas_;
    std::vector<double> alphas_;
    std::vector<double> alpha_bars_;
    std::vector<double> sigmas_;
};

/// Betas linearly spaced from beta_start to beta_end inclusive.
inline NoiseSchedule make_linear_schedule(int step_count, double beta_start, double beta_end)
{
    if (step_count < 1) {
        throw std::invalid_argument("step count must be positive");
    }
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw std::invalid_argument("need 0 < beta_start <= beta_end < 1");
    }
    std::vector<double> betas(static_cast<std::size_t>(step_count));
    if (step_count == 1) {
        betas[0] = beta_start;
    } else {
        const double span = beta_end - beta_start;
        const double denom = static_cast<double>(step_count - 1);
        for (int i = 0; i < step_count; ++i) {
            betas[static_cast<std::size_t>(i)] = beta_start + span * (static_cast<double>(i) / denom);
        }
        betas.back() = beta_end;
    }
    return NoiseSchedule(std::move(betas));
}

enum class Stage { Initialization, Blending, Refinement };

inline std::string_view to_string(Stage stage) noexcept
{
    switch (stage) {
    case Stage::Initialization: return "initialization";
    case Stage::Blending: return "blending";
    case Stage::Refinement: return "refinement";
    }
    return "unknown";
}

/// Blending runs for t_e < t <= t_s while counting down from T.
struct StageConfig {
    int t_start = 0;
    int t_end = 0;

    void validate(int step_count) const
    {
        if (!(step_count >= t_start && t_start >= t_end && t_end >= 0)) {
            throw std::invalid_argument("stage bounds need T >= t_s >= t_e >= 0 (T=" +
                                        std::to_string(step_count) + ", t_s=" + std::to_string(t_start) +
                                        ", t_e=" + std::to_string(t_end) + ")");
        }
    }

    bool has_blending() const noexcept { return t_start > t_end; }
};

/// Rounds half-up; fractions are of the total step count.
inline int round_fraction_of_steps(double fraction, int step_count)
{
    return static_cast<int>(std::floor(fraction * static_cast<double>(step_count) + 0.5));
}

inline StageConfig stage_config_from_fractions(double start_fraction, double end_fraction, int step_count)
{
    StageConfig cfg{round_fraction_of_steps(start_fraction, step_count),
                    round_fraction_of_steps(end_fraction, step_count)};
    cfg.validate(step_count);
    return cfg;
}

inline Stage stage_of(int t, const StageConfig& cfg) noexcept
{
    if (t > cfg.t_start) {
        return Stage::Initialization;
    }
    if (t > cfg.t_end) {
        return Stage::Blending;
    }
    return Stage::Refinement;
}

enum class Strategy { Increase, Invariant, Decline };

inline std::string_view to_string(Strategy strategy) noexcept
{
    switch (strategy) {
    case Strategy::Increase: return "increase";
    case Strategy::Invariant: return "invariant";
    case Strategy::Decline: return "decline";
    }
    return "unknown";
}

inline Strategy parse_strategy(std::string_view name)
{
    if (name == "increase") return Strategy::Increase;
    if (name == "invariant") return Strategy::Invariant;
    if (name == "decline") return Strategy::Decline;
    throw std::invalid_argument("unknown strategy '" + std::string(name) + "'");
}

struct BlendPolicy {
    std::vector<double> gammas{1.0, 1.0};
    Strategy strategy = Strategy::Increase;
    double invariant_p = 0.5;
    double guidance_w = 3.0;
    bool feedback_enabled = true;

    std::size_t concept_count() const noexcept { return gammas.size(); }

    void validate() const
    {
        if (gammas.empty()) {
            throw std::invalid_argument("blend policy needs at least one gamma");
        }
        for (double g : gammas) {
            if (!(g > 0.0) || !std::isfinite(g)) {
                throw std::invalid_argument("gammas must be positive and finite");
            }
        }
        if (!(invariant_p >= 0.0 && invariant_p <= 1.0)) {
            throw std::invalid_argument("invariant_p must lie in [0, 1]");
        }
        if (!(guidance_w >= 0.0) || !std::isfinite(guidance_w)) {
            throw std::invalid_argument("guidance scale w must be nonnegative");
        }
    }
};

/// Weight of the blending latent at timestep t. Increase gives p = 1 - t/T,
/// so p grows as denoising counts down.
inline double blend_ratio(int t, int step_count, const BlendPolicy& policy)
{
    if (t < 0 || t > step_count) {
        throw std::out_of_range("blend_ratio: timestep outside [0, T]");
    }
    const double frac = static_cast<double>(t) / static_cast<double>(step_count);
    switch (policy.strategy) {
    case Strategy::Increase: return 1.0 - frac;
    case Strategy::Decline: return frac;
    case Strategy::Invariant: return policy.invariant_p;
    }
    return policy.invariant_p;
}

/// Share of each auxiliary latent: (1 - p) / N.
inline double aux_weight(double p, std::size_t concept_count)
{
    if (concept_count == 0) {
        throw std::invalid_argument("aux_weight: concept count must be positive");
    }
    return (1.0 - p) / static_cast<double>(concept_count);
}

} // namespace blendlab
