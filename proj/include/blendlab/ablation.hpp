// Copyright (C) 2026 blendlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "blendlab/blend.hpp"
#include "blendlab/metrics.hpp"

namespace blendlab {

enum class AblationAxis { Strategy, Feedback, Stages, Gamma, Distance };

inline std::string_view to_string(AblationAxis axis) noexcept
{
    switch (axis) {
    case AblationAxis::Strategy: return "strategy";
    case AblationAxis::Feedback: return "feedback";
    case AblationAxis::Stages: return "stages";
    case AblationAxis::Gamma: return "gamma";
    case AblationAxis::Distance: return "distance";
    }
    return "unknown";
}

inline AblationAxis parse_axis(std::string_view name)
{
    if (name == "strategy") return AblationAxis::Strategy;
    if (name == "feedback") return AblationAxis::Feedback;
    if (name == "stages") return AblationAxis::Stages;
    if (name == "gamma") return AblationAxis::Gamma;
    if (name == "distance") return AblationAxis::Distance;
    throw std::invalid_argument("unknown ablation axis '" + std::string(name) + "'");
}

struct AblationGrids {
    /// gamma_2 / gamma_1 with gamma_1 = 1.
    std::vector<double> gamma_ratios{0.5, 1.0, 1.5};
    /// Distances between the two blended concepts' means.
    std::vector<double> distances{1.0, 2.0, 4.0, 6.0, 8.0};
};

struct AblationVariant {
    std::string name;
    RunConfig config;
    DenoiserRegistry registry;
    RunArtifact artifact;
    MetricReport metrics;
};

/// Shortest round-trip decimal form of a double.
inline std::string format_number(double v)
{
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// Copy of the registry with the first two blended concepts translated
/// along their connecting axis so their means are `distance` apart, keeping
/// the midpoint fixed. Other concepts are untouched.
inline DenoiserRegistry with_separation(const DenoiserRegistry& reg, const std::vector<std::string>& labels,
                                        double distance, std::vector<Vector>* shifts = nullptr)
{
    if (labels.size() < 2) {
        throw std::invalid_argument("distance sweep needs at least two blended concepts");
    }
    if (!(distance >= 0.0)) {
        throw std::invalid_argument("distance must be nonnegative");
    }
    const BlendAxis axis = blend_axis(reg.at(labels[0]), reg.at(labels[1]));
    const Vector target1 = axis.midpoint - 0.5 * distance * axis.direction;
    const Vector target2 = axis.midpoint + 0.5 * distance * axis.direction;
    const Vector shift1 = target1 - reg.at(labels[0]).mixture.mean();
    const Vector shift2 = target2 - reg.at(labels[1]).mixture.mean();

    std::vector<ConceptSpec> moved = reg.concepts();
    for (auto& c : moved) {
        const Vector* shift = nullptr;
        if (c.label == labels[0]) shift = &shift1;
        if (c.label == labels[1]) shift = &shift2;
        if (shift) {
            for (auto& comp : c.mixture.components) {
                comp.mean += *shift;
            }
        }
    }
    if (shifts) {
        *shifts = {shift1, shift2};
    }
    return DenoiserRegistry(std::move(moved));
}

namespace detail {
inline AblationVariant make_variant(std::string name, RunConfig config, DenoiserRegistry registry)
{
    return AblationVariant{std::move(name), std::move(config), std::move(registry), RunArtifact{}, MetricReport{}};
}
} // namespace detail

/// Variant configurations along one axis, before running anything.
inline std::vector<AblationVariant> ablation_variants(const RunConfig& base, AblationAxis axis,
                                                      const DenoiserRegistry& reg, const AblationGrids& grids = {})
{
    std::vector<AblationVariant> out;
    switch (axis) {
    case AblationAxis::Strategy:
        for (Strategy s : {Strategy::Increase, Strategy::Invariant, Strategy::Decline}) {
            RunConfig c = base;
            c.policy.strategy = s;
            out.push_back(detail::make_variant(std::string(to_string(s)), c, reg));
        }
        break;
    case AblationAxis::Feedback:
        for (bool on : {true, false}) {
            RunConfig c = base;
            c.policy.feedback_enabled = on;
            c.record_trajectories = true;
            out.push_back(detail::make_variant(on ? "feedback_on" : "feedback_off", c, reg));
        }
        break;
    case AblationAxis::Stages: {
        struct Toggle {
            const char* name;
            bool init;
            bool refine;
        };
        for (const Toggle& t : {Toggle{"blend", false, false}, Toggle{"blend+refine", false, true},
                                Toggle{"init+blend", true, false}, Toggle{"init+blend+refine", true, true}}) {
            RunConfig c = base;
            c.init_stage_on = t.init;
            c.refine_stage_on = t.refine;
            out.push_back(detail::make_variant(t.name, c, reg));
        }
        break;
    }
    case AblationAxis::Gamma:
        if (base.labels.size() != 2) {
            throw std::invalid_argument("gamma sweep needs exactly two blended concepts");
        }
        for (double r : grids.gamma_ratios) {
            if (!(r > 0.0)) {
                throw std::invalid_argument("gamma ratios must be positive");
            }
            RunConfig c = base;
            c.policy.gammas = {1.0, r};
            out.push_back(detail::make_variant("gamma_" + format_number(r), c, reg));
        }
        break;
    case AblationAxis::Distance:
        for (double d : grids.distances) {
            RunConfig c = base;
            std::vector<Vector> shifts;
            DenoiserRegistry moved = with_separation(reg, base.labels, d, &shifts);
            if (c.reference_points) {
                (*c.reference_points)[0] += shifts[0];
                (*c.reference_points)[1] += shifts[1];
            }
            out.push_back(detail::make_variant("distance_" + format_number(d), c, std::move(moved)));
        }
        break;
    }
    return out;
}

/// Runs every variant along the axis with the base master seed shared
/// across variants (common random numbers) and attaches metrics.
inline std::vector<AblationVariant> run_ablation_suite(const RunConfig& base, AblationAxis axis,
                                                       const DenoiserRegistry& reg, const AblationGrids& grids = {},
                                                       const ExecutionOptions& exec = {})
{
    auto variants = ablation_variants(base, axis, reg, grids);
    for (auto& v : variants) {
        v.artifact = run_freeblend(v.config, v.registry, exec);
        const auto originals = original_samples(v.config, v.registry, exec);
        v.metrics = evaluate_run(v.artifact, v.registry, originals);
        v.artifact.metrics = flatten(v.metrics);
    }
    return variants;
}

} // namespace blendlab
