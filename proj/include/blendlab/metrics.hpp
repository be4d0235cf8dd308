// Copyright (C) 2026 blendlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "blendlab/blend.hpp"
#include "blendlab/concepts.hpp"

namespace blendlab {

struct MetricReport {
    std::map<std::string, double> values;
    std::size_t sample_count = 0;
    std::map<std::string, std::map<std::string, double>> per_concept;

    bool all_finite() const
    {
        for (const auto& [k, v] : values) {
            if (!std::isfinite(v)) return false;
        }
        for (const auto& [label, sub] : per_concept) {
            for (const auto& [k, v] : sub) {
                if (!std::isfinite(v)) return false;
            }
        }
        return true;
    }
};

struct Moments {
    Vector mean;
    Matrix covariance;
};

/// Unbiased sample mean and covariance of the rows of `samples`.
inline Moments moment_stats(const Matrix& samples)
{
    if (samples.rows() < 2) {
        throw std::invalid_argument("moment_stats needs at least two samples");
    }
    Moments m;
    m.mean = samples.colwise().mean().transpose();
    const Matrix centered = samples.rowwise() - m.mean.transpose();
    m.covariance = (centered.transpose() * centered) / static_cast<double>(samples.rows() - 1);
    return m;
}

/// Average log-density of the rows of `samples` under the concept.
inline double mean_loglik(const Matrix& samples, const ConceptSpec& concept_spec)
{
    if (samples.rows() == 0) {
        throw std::invalid_argument("mean_loglik: empty sample set");
    }
    if (samples.cols() != concept_spec.mixture.dimension()) {
        throw std::invalid_argument("mean_loglik: dimension mismatch for concept '" + concept_spec.label + "'");
    }
    const PreparedMixture prepared(concept_spec.mixture);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
        acc += prepared.log_density(samples.row(i).transpose());
    }
    return acc / static_cast<double>(samples.rows());
}

/// sum_i [ mean_loglik(blend, c_i) - mean_loglik(orig_i, c_i) ]
inline double toy_bs(const Matrix& blend_samples, const std::vector<Matrix>& orig_samples,
                     const std::vector<ConceptSpec>& concepts)
{
    if (orig_samples.size() != concepts.size()) {
        throw std::invalid_argument("toy_bs: need one original sample set per concept");
    }
    double score = 0.0;
    for (std::size_t i = 0; i < concepts.size(); ++i) {
        score += mean_loglik(blend_samples, concepts[i]) - mean_loglik(orig_samples[i], concepts[i]);
    }
    return score;
}

namespace detail {
inline Matrix spd_sqrt(const Matrix& s)
{
    Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
    const Vector roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

inline void require_spd(const Matrix& s, const char* name)
{
    if (s.rows() != s.cols()) {
        throw std::invalid_argument(std::string("gaussian_w2: ") + name + " is not square");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(s, Eigen::EigenvaluesOnly);
    if (!(eig.eigenvalues().minCoeff() > 0.0)) {
        throw std::invalid_argument(std::string("gaussian_w2: ") + name + " is not positive definite");
    }
}
} // namespace detail

/// 2-Wasserstein distance between N(mu1, s1) and N(mu2, s2).
inline double gaussian_w2(const Vector& mu1, const Matrix& s1, const Vector& mu2, const Matrix& s2)
{
    detail::require_spd(s1, "first covariance");
    detail::require_spd(s2, "second covariance");
    if (mu1.size() != mu2.size() || s1.rows() != mu1.size() || s2.rows() != mu2.size()) {
        throw std::invalid_argument("gaussian_w2: dimension mismatch");
    }
    const Matrix root2 = detail::spd_sqrt(s2);
    const Matrix cross = detail::spd_sqrt(root2 * s1 * root2);
    const double bures = (s1 + s2 - 2.0 * cross).trace();
    const double w2sq = (mu1 - mu2).squaredNorm() + bures;
    return std::sqrt(std::max(0.0, w2sq));
}

struct AuxConvergenceRow {
    int t = 0;
    double p = 0.0;
    double before = 0.0; // mean ||L_a - L'_b|| before the feedback update
    double after = 0.0;  // mean ||L'_a - L'_b|| after it
};

/// Per blending timestep, mean over chains and auxiliaries of the distance
/// between each auxiliary and the interpolated blending latent.
inline std::vector<AuxConvergenceRow> aux_convergence_trace(const std::vector<ChainTrace>& traces)
{
    std::map<int, AuxConvergenceRow, std::greater<>> rows;
    std::map<int, std::size_t> counts;
    for (const auto& chain : traces) {
        for (const auto& step : chain.steps) {
            if (step.stage != Stage::Blending) {
                continue;
            }
            auto& row = rows[step.t];
            row.t = step.t;
            row.p = step.p;
            for (std::size_t k = 0; k < step.aux.size(); ++k) {
                row.before += (step.aux_before[k] - step.blend).norm();
                row.after += (step.aux[k] - step.blend).norm();
                ++counts[step.t];
            }
        }
    }
    if (rows.empty()) {
        throw std::invalid_argument("aux_convergence_trace: no blending-stage trajectories recorded");
    }
    std::vector<AuxConvergenceRow> out;
    out.reserve(rows.size());
    for (auto& [t, row] : rows) {
        const double n = static_cast<double>(counts[t]);
        row.before /= n;
        row.after /= n;
        out.push_back(row);
    }
    return out;
}

/// Orientation of a two-concept blend: midpoint and unit direction from the
/// first concept's mean to the second's.
struct BlendAxis {
    Vector midpoint;
    Vector direction;
    double separation = 0.0;
};

inline BlendAxis blend_axis(const ConceptSpec& first, const ConceptSpec& second)
{
    const Vector m1 = first.mixture.mean();
    const Vector m2 = second.mixture.mean();
    BlendAxis axis;
    axis.midpoint = 0.5 * (m1 + m2);
    axis.separation = (m2 - m1).norm();
    if (axis.separation > 0.0) {
        axis.direction = (m2 - m1) / axis.separation;
    } else {
        axis.direction = Vector::Unit(m1.size(), 0);
    }
    return axis;
}

/// Reference samples of each blended concept, drawn by plain guided sampling
/// under Single(label) with a stream per concept.
inline std::vector<Matrix> original_samples(const RunConfig& config, const DenoiserRegistry& reg,
                                            const ExecutionOptions& exec = {})
{
    std::vector<Matrix> out;
    for (std::size_t k = 0; k < config.labels.size(); ++k) {
        RunConfig c = config;
        c.record_trajectories = false;
        out.push_back(sample_conditional(c, reg, SingleCondition{config.labels[k]}, exec,
                                         streams::concept_sampling + k)
                          .samples);
    }
    return out;
}

/// Full metric report for a blending run given the per-concept originals.
inline MetricReport evaluate_run(const RunArtifact& art, const DenoiserRegistry& reg,
                                 const std::vector<Matrix>& originals)
{
    const auto& labels = art.config.labels;
    std::vector<ConceptSpec> concepts;
    for (const auto& l : labels) {
        concepts.push_back(reg.at(l));
    }
    MetricReport report;
    report.sample_count = static_cast<std::size_t>(art.samples.rows());
    report.values["toy_bs"] = toy_bs(art.samples, originals, concepts);

    const bool have_moments = art.samples.rows() >= 2;
    Moments blend_moments;
    if (have_moments) {
        blend_moments = moment_stats(art.samples);
    }
    for (std::size_t i = 0; i < concepts.size(); ++i) {
        auto& sub = report.per_concept[concepts[i].label];
        sub["loglik"] = mean_loglik(art.samples, concepts[i]);
        sub["orig_loglik"] = mean_loglik(originals[i], concepts[i]);
        if (have_moments) {
            sub["w2"] = gaussian_w2(blend_moments.mean, blend_moments.covariance, concepts[i].mixture.mean(),
                                    concepts[i].mixture.covariance());
        }
    }

    if (concepts.size() >= 2) {
        const BlendAxis axis = blend_axis(concepts[0], concepts[1]);
        const Vector proj = (art.samples.rowwise() - axis.midpoint.transpose()) * axis.direction;
        const double n = static_cast<double>(proj.size());
        const double mean = proj.mean();
        report.values["bias_projection"] = mean;
        if (proj.size() >= 2) {
            const double var = (proj.array() - mean).square().sum() / (n - 1.0);
            report.values["bias_projection_se"] = std::sqrt(var / n);
        }
        report.values["separation"] = axis.separation;
        report.values["concept_w2"] =
            gaussian_w2(concepts[0].mixture.mean(), concepts[0].mixture.covariance(), concepts[1].mixture.mean(),
                        concepts[1].mixture.covariance());
    }

    bool any_blending = false;
    for (const auto& tr : art.traces) {
        for (const auto& s : tr.steps) {
            any_blending = any_blending || s.stage == Stage::Blending;
        }
    }
    if (any_blending) {
        const auto rows = aux_convergence_trace(art.traces);
        double acc = 0.0;
        for (const auto& r : rows) {
            acc += r.after;
        }
        report.values["aux_convergence_mean"] = acc / static_cast<double>(rows.size());
    }
    return report;
}

/// Flattens a report into the artifact's metrics map ("label.metric" keys for sub-scores).
inline std::map<std::string, double> flatten(const MetricReport& report)
{
    std::map<std::string, double> out = report.values;
    out["sample_count"] = static_cast<double>(report.sample_count);
    for (const auto& [label, sub] : report.per_concept) {
        for (const auto& [k, v] : sub) {
            out[label + "." + k] = v;
        }
    }
    return out;
}

} // namespace blendlab
