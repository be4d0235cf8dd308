// Copyright (C) 2026 blendlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "blendlab/concepts.hpp"
#include "blendlab/diffusion.hpp"
#include "blendlab/errors.hpp"
#include "blendlab/parallel.hpp"
#include "blendlab/random.hpp"
#include "blendlab/schedule.hpp"

namespace blendlab {

struct ScheduleParams {
    int step_count = 50;
    double beta_start = 1e-4;
    double beta_end = 0.08;

    NoiseSchedule build() const { return make_linear_schedule(step_count, beta_start, beta_end); }
};

struct RunConfig {
    ScheduleParams schedule;
    StageConfig stages{44, 6};
    BlendPolicy policy;
    /// Concepts to blend, one per gamma.
    std::vector<std::string> labels{"A", "B"};
    /// Fixed reference points (one per label); drawn from each concept per chain when absent.
    std::optional<std::vector<Vector>> reference_points;
    Eigen::Index dimension = 2;
    ReverseOptions reverse;
    std::size_t chain_count = 2000;
    std::uint64_t master_seed = 42;
    bool init_stage_on = true;
    bool refine_stage_on = true;
    bool record_trajectories = false;
    /// Only the first this-many chains keep coordinate trajectories.
    std::size_t trajectory_chain_limit = std::numeric_limits<std::size_t>::max();

    /// Stage bounds after the toggles: no initialization stage starts
    /// blending at T, no refinement stage runs blending down to t = 1.
    StageConfig effective_stages() const
    {
        StageConfig s = stages;
        if (!init_stage_on) {
            s.t_start = schedule.step_count;
        }
        if (!refine_stage_on) {
            s.t_end = 0;
        }
        return s;
    }

    void validate(const DenoiserRegistry& reg) const
    {
        policy.validate();
        stages.validate(schedule.step_count);
        if (labels.size() != policy.gammas.size()) {
            throw std::invalid_argument("need one gamma per blended concept (" + std::to_string(labels.size()) +
                                        " labels, " + std::to_string(policy.gammas.size()) + " gammas)");
        }
        for (const auto& l : labels) {
            reg.at(l);
        }
        if (dimension != reg.dimension()) {
            throw std::invalid_argument("run dimension " + std::to_string(dimension) +
                                        " does not match concept dimension " + std::to_string(reg.dimension()));
        }
        if (chain_count < 1) {
            throw std::invalid_argument("chain count must be at least 1");
        }
        if (reference_points) {
            if (reference_points->size() != labels.size()) {
                throw std::invalid_argument("need one reference point per blended concept");
            }
            for (const auto& r : *reference_points) {
                if (r.size() != dimension || !r.allFinite()) {
                    throw std::invalid_argument("reference point has wrong dimension or non-finite entries");
                }
            }
        }
        if (reverse.clamp_x0 && !(reverse.clamp_x0->lo < reverse.clamp_x0->hi)) {
            throw std::invalid_argument("clamp box needs lo < hi");
        }
    }
};

/// Condition used for the blending latent in every stage.
inline Condition blend_condition(const std::vector<std::string>& labels)
{
    if (labels.size() == 1) {
        return SingleCondition{labels[0]};
    }
    if (labels.size() == 2) {
        return PairCondition{labels[0], labels[1]};
    }
    WeightedCondition w;
    for (const auto& l : labels) {
        w.terms.emplace_back(l, 1.0 / static_cast<double>(labels.size()));
    }
    return w;
}

struct RunState {
    int t = 0;
    Vector blend;
    std::vector<Vector> aux; // populated only while blending
    Stage stage = Stage::Initialization;
};

/// Latents at one timestep, captured just before the denoising step.
/// During blending `blend_before` is L_b, `blend` is the interpolated L'_b,
/// `aux_before` holds L_a and `aux` the feedback-updated L'_a.
struct StepRecord {
    int t = 0;
    Stage stage = Stage::Initialization;
    double p = 0.0;
    Vector blend_before;
    Vector blend;
    std::vector<Vector> aux_before;
    std::vector<Vector> aux;
};

struct ChainTrace {
    std::size_t chain = 0;
    std::vector<StepRecord> steps; // t strictly decreasing
};

struct RunArtifact {
    Matrix samples; // chain_count x d
    std::vector<ChainTrace> traces;
    std::map<std::string, double> metrics;
    RunConfig config;
    std::uint64_t seed = 0;
    double wall_seconds = 0.0;
};

struct ExecutionOptions {
    std::size_t threads = 0; // 0: hardware concurrency (capped by BLENDLAB_THREADS)
};

// --- single-step operations ------------------------------------------------

/// Forward-noises each reference to t_s with independent noise, in order.
inline std::vector<Vector> init_auxiliaries(const std::vector<Vector>& references, int t_start,
                                            const NoiseSchedule& schedule, Rng& rng)
{
    if (references.empty()) {
        throw std::invalid_argument("init_auxiliaries: no reference points");
    }
    const auto d = references.front().size();
    std::vector<Vector> out;
    out.reserve(references.size());
    for (const auto& r : references) {
        if (r.size() != d) {
            throw std::invalid_argument("init_auxiliaries: reference points differ in dimension");
        }
        out.push_back(forward_noise(r, t_start, schedule, rng));
    }
    return out;
}

/// L'_b = p * L_b + ((1 - p) / N) * sum_n gamma_n * L_a^n
inline Vector interpolate_blend(const Vector& blend, const std::vector<Vector>& aux, double p,
                                const BlendPolicy& policy)
{
    if (aux.size() != policy.concept_count()) {
        throw std::invalid_argument("interpolate_blend: need one auxiliary latent per gamma");
    }
    const double lambda = aux_weight(p, aux.size());
    Vector mix = Vector::Zero(blend.size());
    for (std::size_t n = 0; n < aux.size(); ++n) {
        if (aux[n].size() != blend.size()) {
            throw std::invalid_argument("interpolate_blend: dimension mismatch");
        }
        mix += policy.gammas[n] * aux[n];
    }
    return p * blend + lambda * mix;
}

/// L'_a = p * L'_b + (1 - p) * L_a
inline Vector feedback_update(const Vector& blend_prime, const Vector& aux, double p)
{
    if (aux.size() != blend_prime.size()) {
        throw std::invalid_argument("feedback_update: dimension mismatch");
    }
    return p * blend_prime + (1.0 - p) * aux;
}

// --- runners ---------------------------------------------------------------

namespace detail {

struct ChainPlan {
    NoiseSchedule schedule;
    StageConfig stages;
    BlendPolicy policy;
    ReverseOptions reverse;
    Eigen::Index dimension = 0;
    std::uint64_t seed = 0;
    std::uint64_t stream = streams::blend_chain;
    std::optional<GuidedDenoiser> blend_denoiser;
    std::vector<GuidedDenoiser> aux_denoisers;
    std::vector<GaussianMixture> concepts;
    std::optional<std::vector<Vector>> fixed_references;
};

struct ChainOutput {
    Vector final_latent;
    ChainTrace trace;
};

inline void require_finite(const Vector& v, std::size_t chain, int t, const char* what)
{
    if (!v.allFinite()) {
        throw NumericalError(chain, t, std::string("non-finite ") + what + " latent");
    }
}

inline ChainOutput run_chain(const ChainPlan& plan, std::size_t chain, bool record)
{
    Rng rng(derive_seed(plan.seed, plan.stream, chain));
    const int T = plan.schedule.step_count();
    const auto& denoise_blend = *plan.blend_denoiser;

    ChainOutput out;
    out.trace.chain = chain;
    if (record) {
        out.trace.steps.reserve(static_cast<std::size_t>(T));
    }

    RunState state;
    state.blend = rng.standard_normal(plan.dimension);
    try {
        for (int t = T; t >= 1; --t) {
            state.t = t;
            state.stage = stage_of(t, plan.stages);

            if (state.stage != Stage::Blending) {
                state.aux.clear();
                if (record) {
                    StepRecord rec;
                    rec.t = t;
                    rec.stage = state.stage;
                    rec.blend = state.blend;
                    out.trace.steps.push_back(std::move(rec));
                }
                state.blend = reverse_step(state.blend, denoise_blend(state.blend, t), t, plan.schedule,
                                           plan.reverse, rng);
                require_finite(state.blend, chain, t, "blending");
                continue;
            }

            if (state.aux.empty()) {
                std::vector<Vector> refs;
                if (plan.fixed_references) {
                    refs = *plan.fixed_references;
                } else {
                    refs.reserve(plan.concepts.size());
                    for (const auto& c : plan.concepts) {
                        refs.push_back(sample_mixture(c, rng));
                    }
                }
                state.aux = init_auxiliaries(refs, plan.stages.t_start, plan.schedule, rng);
            }

            const double p = blend_ratio(t, T, plan.policy);
            const Vector blend_prime = interpolate_blend(state.blend, state.aux, p, plan.policy);
            std::vector<Vector> aux_before;
            if (record) {
                aux_before = state.aux;
            }
            if (plan.policy.feedback_enabled) {
                for (auto& a : state.aux) {
                    a = feedback_update(blend_prime, a, p);
                }
            }
            if (record) {
                StepRecord rec;
                rec.t = t;
                rec.stage = state.stage;
                rec.p = p;
                rec.blend_before = state.blend;
                rec.blend = blend_prime;
                rec.aux_before = std::move(aux_before);
                rec.aux = state.aux;
                out.trace.steps.push_back(std::move(rec));
            }

            // Fixed draw order: blending latent first, then auxiliaries 1..N.
            state.blend = reverse_step(blend_prime, denoise_blend(blend_prime, t), t, plan.schedule, plan.reverse,
                                       rng);
            require_finite(state.blend, chain, t, "blending");
            for (std::size_t k = 0; k < state.aux.size(); ++k) {
                state.aux[k] = reverse_step(state.aux[k], plan.aux_denoisers[k](state.aux[k], t), t, plan.schedule,
                                            plan.reverse, rng);
                require_finite(state.aux[k], chain, t, "auxiliary");
            }
        }
    } catch (const std::domain_error& e) {
        throw NumericalError(chain, state.t, e.what());
    }
    out.final_latent = std::move(state.blend);
    return out;
}

inline RunArtifact execute(const ChainPlan& plan, const RunConfig& config, const ExecutionOptions& exec)
{
    const auto started = std::chrono::steady_clock::now();
    RunArtifact art;
    art.config = config;
    art.seed = config.master_seed;
    art.samples.resize(static_cast<Eigen::Index>(config.chain_count), plan.dimension);

    const std::size_t traced =
        config.record_trajectories ? std::min(config.trajectory_chain_limit, config.chain_count) : 0;
    art.traces.resize(traced);

    const std::size_t threads = resolve_thread_count(exec.threads, config.chain_count);
    parallel_for(config.chain_count, threads, [&](std::size_t chain) {
        const bool record = chain < traced;
        ChainOutput out = run_chain(plan, chain, record);
        art.samples.row(static_cast<Eigen::Index>(chain)) = out.final_latent.transpose();
        if (record) {
            art.traces[chain] = std::move(out.trace);
        }
    });

    art.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return art;
}

} // namespace detail

/// Three-stage blending run over all chains. Chains are independent and may
/// run in parallel; chain c always draws from derive_seed(seed, 0, c).
inline RunArtifact run_freeblend(const RunConfig& config, const DenoiserRegistry& reg,
                                 const ExecutionOptions& exec = {})
{
    config.validate(reg);
    detail::ChainPlan plan;
    plan.schedule = config.schedule.build();
    plan.stages = config.effective_stages();
    plan.policy = config.policy;
    plan.reverse = config.reverse;
    plan.dimension = config.dimension;
    plan.seed = config.master_seed;
    const double w = config.policy.guidance_w;
    plan.blend_denoiser.emplace(reg, blend_condition(config.labels), w, plan.schedule);
    if (plan.stages.has_blending()) {
        for (const auto& label : config.labels) {
            plan.aux_denoisers.emplace_back(reg, SingleCondition{label}, w, plan.schedule);
            plan.concepts.push_back(reg.at(label).mixture);
        }
        plan.fixed_references = config.reference_points;
    }
    return detail::execute(plan, config, exec);
}

/// Plain guided sampling under one condition for every step, no blending.
/// Uses the same per-chain streams as run_freeblend unless `stream` differs.
inline RunArtifact sample_conditional(const RunConfig& config, const DenoiserRegistry& reg, const Condition& cond,
                                      const ExecutionOptions& exec = {},
                                      std::uint64_t stream = streams::blend_chain)
{
    detail::ChainPlan plan;
    plan.schedule = config.schedule.build();
    // Every step falls in the refinement stage.
    plan.stages = StageConfig{0, 0};
    plan.policy = config.policy;
    plan.reverse = config.reverse;
    plan.dimension = reg.dimension();
    plan.seed = config.master_seed;
    plan.stream = stream;
    plan.blend_denoiser.emplace(reg, cond, config.policy.guidance_w, plan.schedule);
    RunConfig echo = config;
    echo.dimension = reg.dimension();
    return detail::execute(plan, echo, exec);
}

} // namespace blendlab
