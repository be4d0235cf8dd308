// Copyright (C) 2026 blendlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "blendlab/blend.hpp"
#include "blendlab/concepts.hpp"
#include "blendlab/defaults.hpp"
#include "blendlab/diffusion.hpp"
#include "blendlab/output.hpp"
#include "blendlab/random.hpp"

namespace blendlab {

struct OracleReport {
    std::string name;
    double max_error = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::size_t sample_size = 0;
    std::string detail;
};

inline OracleReport make_report(std::string name, double max_error, double tolerance, std::size_t n,
                                std::string detail = {})
{
    return OracleReport{std::move(name), max_error, tolerance, max_error <= tolerance, n, std::move(detail)};
}

/// The score under test; swappable so a deliberately broken score can be
/// checked to fail.
using ScoreFn = std::function<Vector(const GaussianMixture&, const Vector&)>;

inline Vector reference_score(const GaussianMixture& m, const Vector& z) { return score(m, z); }

namespace oracle {

/// Mixture log-density from explicit inverses and determinants, kept apart
/// from the Cholesky path used by the denoiser.
inline double mixture_log_density(const GaussianMixture& mixture, const Vector& z)
{
    const double d = static_cast<double>(z.size());
    std::vector<double> terms;
    terms.reserve(mixture.components.size());
    for (const auto& c : mixture.components) {
        const Eigen::FullPivLU<Matrix> lu(c.covariance);
        const Vector diff = z - c.mean;
        const double quad = diff.dot(lu.inverse() * diff);
        terms.push_back(std::log(c.weight) - 0.5 * quad - 0.5 * std::log(lu.determinant()) -
                        0.5 * d * std::log(2.0 * std::numbers::pi));
    }
    const double peak = *std::max_element(terms.begin(), terms.end());
    double acc = 0.0;
    for (double t : terms) {
        acc += std::exp(t - peak);
    }
    return peak + std::log(acc);
}

/// Central differences with step h_i = 1e-4 * (1 + |z_i|).
inline Vector finite_difference_gradient(const GaussianMixture& mixture, const Vector& z)
{
    Vector g(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double h = 1e-4 * (1.0 + std::abs(z[i]));
        Vector up = z;
        Vector down = z;
        up[i] += h;
        down[i] -= h;
        g[i] = (mixture_log_density(mixture, up) - mixture_log_density(mixture, down)) / (up[i] - down[i]);
    }
    return g;
}

/// ||a - b|| / max(||b||, 1): relative where the gradient is large,
/// absolute near stationary points.
inline double relative_error(const Vector& a, const Vector& b)
{
    return (a - b).norm() / std::max(b.norm(), 1.0);
}

} // namespace oracle

/// Random mixture with 1..max_components components: Dirichlet-like weights,
/// means ~ N(0, 9 I), covariances A A^T + 0.2 I.
inline GaussianMixture random_mixture(Rng& rng, Eigen::Index dim, int max_components = 3)
{
    const int k = 1 + static_cast<int>(rng.uniform() * max_components) % max_components;
    GaussianMixture m;
    double total = 0.0;
    for (int i = 0; i < k; ++i) {
        GaussianComponent c;
        c.weight = -std::log(1.0 - rng.uniform() * 0.999);
        total += c.weight;
        c.mean = 3.0 * rng.standard_normal(dim);
        Matrix a(dim, dim);
        for (Eigen::Index r = 0; r < dim; ++r) {
            for (Eigen::Index s = 0; s < dim; ++s) {
                a(r, s) = 0.7 * rng.normal();
            }
        }
        c.covariance = a * a.transpose() + 0.2 * Matrix::Identity(dim, dim);
        m.components.push_back(std::move(c));
    }
    for (auto& c : m.components) {
        c.weight /= total;
    }
    // Renormalise so the weights sum to 1 to within rounding.
    double sum = 0.0;
    for (const auto& c : m.components) sum += c.weight;
    m.components.back().weight += 1.0 - sum;
    return m;
}

/// Score versus central finite differences of the log-density at random
/// (concept, timestep, point) triples. Concepts come from the registry; the
/// point is drawn around the noisy marginal with extra spread.
inline OracleReport finite_diff_score_check(const DenoiserRegistry& reg, std::size_t trials, Rng& rng,
                                            const NoiseSchedule& schedule, const ScoreFn& score_fn = reference_score,
                                            double tolerance = 1e-5)
{
    double worst = 0.0;
    const auto& concepts = reg.concepts();
    for (std::size_t i = 0; i < trials; ++i) {
        const auto& c = concepts[static_cast<std::size_t>(rng.uniform() * static_cast<double>(concepts.size())) %
                                 concepts.size()];
        const int t = 1 + static_cast<int>(rng.uniform() * schedule.step_count()) % schedule.step_count();
        const GaussianMixture noisy = marginal_at(c.mixture, schedule.alpha_bar(t));
        const Vector z = sample_mixture(noisy, rng) + 1.5 * rng.standard_normal(reg.dimension());
        const Vector analytic = score_fn(noisy, z);
        const Vector numeric = oracle::finite_difference_gradient(noisy, z);
        worst = std::max(worst, oracle::relative_error(analytic, numeric));
    }
    return make_report("finite_diff_score", worst, tolerance, trials);
}

/// Same check over freshly generated random mixtures in `dim` dimensions.
inline OracleReport finite_diff_random_mixtures(std::size_t trials, Eigen::Index max_dim, Rng& rng,
                                                const NoiseSchedule& schedule,
                                                const ScoreFn& score_fn = reference_score, double tolerance = 1e-5)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < trials; ++i) {
        const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(max_dim)) % max_dim;
        const GaussianMixture clean = random_mixture(rng, d);
        const int t = 1 + static_cast<int>(rng.uniform() * schedule.step_count()) % schedule.step_count();
        const GaussianMixture noisy = marginal_at(clean, schedule.alpha_bar(t));
        const Vector z = sample_mixture(noisy, rng) + 1.5 * rng.standard_normal(d);
        worst = std::max(worst, oracle::relative_error(score_fn(noisy, z), oracle::finite_difference_gradient(noisy, z)));
    }
    return make_report("finite_diff_score_random_mixtures", worst, tolerance, trials);
}

/// Tolerance rule for Monte Carlo moment comparisons, expressed as the
/// largest ratio |error| / allowance over all entries (pass iff <= 1):
/// means within 4 standard errors, covariance entries within 10% relative
/// or 0.02 absolute when the true entry is below 0.2 in magnitude.
inline double moment_error_ratio(const Vector& emp_mean, const Matrix& emp_cov, const Vector& true_mean,
                                 const Matrix& true_cov, std::size_t n)
{
    double worst = 0.0;
    for (Eigen::Index i = 0; i < true_mean.size(); ++i) {
        const double se = std::sqrt(true_cov(i, i) / static_cast<double>(n));
        worst = std::max(worst, std::abs(emp_mean[i] - true_mean[i]) / (4.0 * se));
    }
    for (Eigen::Index i = 0; i < true_cov.rows(); ++i) {
        for (Eigen::Index j = 0; j < true_cov.cols(); ++j) {
            const double truth = true_cov(i, j);
            const double allowance = std::abs(truth) < 0.2 ? 0.02 : 0.1 * std::abs(truth);
            worst = std::max(worst, std::abs(emp_cov(i, j) - truth) / allowance);
        }
    }
    return worst;
}

namespace oracle {
inline void empirical_moments(const std::vector<Vector>& xs, Vector& mean, Matrix& cov)
{
    const auto d = xs.front().size();
    mean = Vector::Zero(d);
    for (const auto& x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    cov = Matrix::Zero(d, d);
    for (const auto& x : xs) {
        const Vector c = x - mean;
        cov += c * c.transpose();
    }
    cov /= static_cast<double>(xs.size() - 1);
}
} // namespace oracle

/// Forward-noises n draws of the concept to timestep t and compares the
/// empirical moments with the closed-form marginal.
inline OracleReport marginal_moment_check(const ConceptSpec& concept_spec, int t, std::size_t n, Rng& rng,
                                          const NoiseSchedule& schedule)
{
    if (n < 1000) {
        throw std::invalid_argument("marginal_moment_check needs n >= 1000");
    }
    std::vector<Vector> xs;
    xs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs.push_back(forward_noise(sample_mixture(concept_spec.mixture, rng), t, schedule, rng));
    }
    Vector mean;
    Matrix cov;
    oracle::empirical_moments(xs, mean, cov);
    const GaussianMixture closed = marginal_at(concept_spec.mixture, t, schedule);
    const double err = moment_error_ratio(mean, cov, closed.mean(), closed.covariance(), n);
    return make_report("marginal_moments(" + concept_spec.label + ",t=" + std::to_string(t) + ")", err, 1.0, n);
}

/// Plain guided sampling (w = 1, Single) of a concept compared against the
/// concept's own moments.
inline OracleReport sampler_fidelity_check(const ConceptSpec& concept_spec, const RunConfig& base,
                                           std::size_t chains, const ExecutionOptions& exec = {})
{
    const DenoiserRegistry reg({concept_spec});
    RunConfig cfg = base;
    cfg.labels = {concept_spec.label};
    cfg.policy.gammas = {1.0};
    cfg.policy.guidance_w = 1.0;
    cfg.dimension = reg.dimension();
    cfg.chain_count = chains;
    const RunArtifact art = sample_conditional(cfg, reg, SingleCondition{concept_spec.label}, exec);
    std::vector<Vector> xs;
    xs.reserve(chains);
    for (Eigen::Index i = 0; i < art.samples.rows(); ++i) {
        xs.push_back(art.samples.row(i).transpose());
    }
    Vector mean;
    Matrix cov;
    oracle::empirical_moments(xs, mean, cov);
    const double err = moment_error_ratio(mean, cov, concept_spec.mixture.mean(), concept_spec.mixture.covariance(),
                                          chains);
    return make_report("sampler_fidelity(" + concept_spec.label + ")", err, 1.0, chains);
}

namespace detail {
inline bool same_bits(const Vector& a, const Vector& b)
{
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
}

inline bool same_steps(const StepRecord& a, const StepRecord& b)
{
    if (a.t != b.t || a.stage != b.stage || a.aux.size() != b.aux.size() ||
        a.aux_before.size() != b.aux_before.size()) {
        return false;
    }
    if (!same_bits(a.blend, b.blend)) return false;
    if (a.blend_before.size() != b.blend_before.size() ||
        (a.blend_before.size() && !same_bits(a.blend_before, b.blend_before))) {
        return false;
    }
    for (std::size_t k = 0; k < a.aux.size(); ++k) {
        if (!same_bits(a.aux[k], b.aux[k]) || !same_bits(a.aux_before[k], b.aux_before[k])) return false;
    }
    return true;
}

inline bool same_trace(const ChainTrace& a, const ChainTrace& b)
{
    if (a.chain != b.chain || a.steps.size() != b.steps.size()) return false;
    for (std::size_t i = 0; i < a.steps.size(); ++i) {
        if (!same_steps(a.steps[i], b.steps[i])) return false;
    }
    return true;
}

inline bool same_traces(const std::vector<ChainTrace>& a, const std::vector<ChainTrace>& b)
{
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!same_trace(a[i], b[i])) return false;
    }
    return true;
}
} // namespace detail

/// Degenerate-path equivalences, all required to hold bit-for-bit:
///  - empty blending stage vs the plain sampler under the blend condition
///  - feedback on with p forced to 0 vs feedback off
///  - chain 0 unchanged when the chain count grows from 1 to 8
///  - samples independent of the worker count
/// max_error counts failing sub-checks (tolerance 0).
inline OracleReport reduction_check(const RunConfig& config, const DenoiserRegistry& reg)
{
    std::vector<std::string> failed;

    {
        RunConfig empty = config;
        empty.stages.t_end = empty.stages.t_start;
        empty.init_stage_on = true;
        empty.refine_stage_on = true;
        const RunArtifact staged = run_freeblend(empty, reg);
        const RunArtifact plain = sample_conditional(empty, reg, blend_condition(empty.labels));
        if (samples_csv("run", staged.samples) != samples_csv("run", plain.samples)) {
            failed.push_back("empty_blending_vs_plain");
        }
    }
    {
        RunConfig on = config;
        on.policy.strategy = Strategy::Invariant;
        on.policy.invariant_p = 0.0;
        on.policy.feedback_enabled = true;
        on.record_trajectories = true;
        RunConfig off = on;
        off.policy.feedback_enabled = false;
        const RunArtifact a = run_freeblend(on, reg);
        const RunArtifact b = run_freeblend(off, reg);
        if (!detail::same_traces(a.traces, b.traces) ||
            samples_csv("run", a.samples) != samples_csv("run", b.samples)) {
            failed.push_back("feedback_p0_vs_off");
        }
    }
    {
        RunConfig one = config;
        one.chain_count = 1;
        one.record_trajectories = true;
        RunConfig eight = one;
        eight.chain_count = 8;
        const RunArtifact a = run_freeblend(one, reg);
        const RunArtifact b = run_freeblend(eight, reg);
        if (!detail::same_trace(a.traces.at(0), b.traces.at(0)) ||
            !detail::same_bits(a.samples.row(0).transpose(), b.samples.row(0).transpose())) {
            failed.push_back("chain0_vs_chain_count");
        }
    }
    {
        const RunArtifact a = run_freeblend(config, reg, ExecutionOptions{1});
        const RunArtifact b = run_freeblend(config, reg, ExecutionOptions{4});
        if (samples_csv("run", a.samples) != samples_csv("run", b.samples)) {
            failed.push_back("thread_count");
        }
    }

    std::string detail = failed.empty() ? "all reductions bit-identical" : "failed:";
    for (const auto& f : failed) {
        detail += " " + f;
    }
    return make_report("reductions", static_cast<double>(failed.size()), 0.0, config.chain_count, detail);
}

struct VerifyOptions {
    bool full = false;
    std::uint64_t seed = 20260101;
    ScoreFn score_fn = reference_score;
};

/// The oracle suite behind `blendlab verify`.
inline std::vector<OracleReport> run_verify_suite(const VerifyOptions& options)
{
    const std::size_t fd_trials = options.full ? 2000 : 200;
    const std::size_t moment_n = options.full ? 400000 : 100000;
    const std::size_t fidelity_chains = options.full ? 20000 : 4000;
    const std::size_t reduction_chains = options.full ? 256 : 32;

    const RunConfig base = default_run_config();
    const NoiseSchedule schedule = base.schedule.build();
    const DenoiserRegistry reg = default_registry();
    std::vector<OracleReport> out;
    auto stream_rng = [&](std::uint64_t k) { return Rng(derive_seed(options.seed, streams::verify, k)); };

    {
        Rng rng = stream_rng(0);
        const DenoiserRegistry standard({isotropic_concept("standard", Vector::Zero(2))});
        // Both sides equal -z; only finite-difference rounding remains.
        auto r = finite_diff_score_check(standard, 50, rng, schedule, options.score_fn, 1e-8);
        r.name = "finite_diff_score(standard_normal)";
        out.push_back(r);
    }
    {
        Rng rng = stream_rng(1);
        auto r = finite_diff_score_check(reg, fd_trials, rng, schedule, options.score_fn);
        r.name = "finite_diff_score(default_concepts)";
        out.push_back(r);
    }
    {
        Rng rng = stream_rng(2);
        out.push_back(finite_diff_random_mixtures(fd_trials, 4, rng, schedule, options.score_fn));
    }
    {
        Rng rng = stream_rng(3);
        out.push_back(marginal_moment_check(reg.at("A"), 0, moment_n, rng, schedule));
    }
    {
        Rng rng = stream_rng(4);
        const NoiseSchedule quarter = make_linear_schedule(1, 0.75, 0.75);
        out.push_back(
            marginal_moment_check(isotropic_concept("shifted", Vector{{4.0, 0.0}}), 1, moment_n, rng, quarter));
    }
    {
        Rng rng = stream_rng(5);
        const NoiseSchedule long_schedule = make_linear_schedule(1000, 1e-4, 0.02);
        out.push_back(marginal_moment_check(reg.at("B"), 1000, moment_n, rng, long_schedule));
    }
    {
        RunConfig cfg = base;
        cfg.master_seed = derive_seed(options.seed, streams::verify, 6);
        out.push_back(sampler_fidelity_check(isotropic_concept("centred", Vector::Zero(2)), cfg, fidelity_chains));
    }
    {
        RunConfig cfg = base;
        cfg.chain_count = reduction_chains;
        cfg.master_seed = derive_seed(options.seed, streams::verify, 7);
        out.push_back(reduction_check(cfg, reg));
    }
    return out;
}

} // namespace blendlab
