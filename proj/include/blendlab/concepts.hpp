// Copyright (C) 2026 blendlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "blendlab/random.hpp"
#include "blendlab/schedule.hpp"

namespace blendlab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kMaxConditionNumber = 1e12;
inline constexpr double kWeightSumTolerance = 1e-12;

struct GaussianComponent {
    double weight = 1.0;
    Vector mean;
    Matrix covariance;
};

struct GaussianMixture {
    std::vector<GaussianComponent> components;

    Eigen::Index dimension() const noexcept
    {
        return components.empty() ? 0 : components.front().mean.size();
    }

    Vector mean() const
    {
        Vector m = Vector::Zero(dimension());
        for (const auto& c : components) {
            m += c.weight * c.mean;
        }
        return m;
    }

    /// Total covariance (law of total variance).
    Matrix covariance() const
    {
        const Vector m = mean();
        Matrix s = Matrix::Zero(dimension(), dimension());
        for (const auto& c : components) {
            const Vector d = c.mean - m;
            s += c.weight * (c.covariance + d * d.transpose());
        }
        return s;
    }
};

/// Checks weights, shapes, symmetry and positive-definiteness. `label` is
/// only used in the message.
inline void validate_mixture(const GaussianMixture& mixture, std::string_view label)
{
    const std::string who = "concept '" + std::string(label) + "'";
    if (mixture.components.empty()) {
        throw std::invalid_argument(who + " has no components");
    }
    const Eigen::Index d = mixture.dimension();
    if (d < 1) {
        throw std::invalid_argument(who + " has zero dimension");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < mixture.components.size(); ++i) {
        const auto& c = mixture.components[i];
        const std::string where = who + " component " + std::to_string(i);
        if (!(c.weight > 0.0) || !std::isfinite(c.weight)) {
            throw std::invalid_argument(where + ": weight must be positive");
        }
        total += c.weight;
        if (c.mean.size() != d || c.covariance.rows() != d || c.covariance.cols() != d) {
            throw std::invalid_argument(where + ": dimension mismatch");
        }
        if (!c.mean.allFinite() || !c.covariance.allFinite()) {
            throw std::invalid_argument(where + ": non-finite entries");
        }
        const double scale = std::max(1.0, c.covariance.cwiseAbs().maxCoeff());
        if ((c.covariance - c.covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
            throw std::invalid_argument(where + ": covariance is not symmetric");
        }
        Eigen::SelfAdjointEigenSolver<Matrix> eig(c.covariance, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        if (!(lo > 0.0)) {
            throw std::invalid_argument(where + ": covariance is not positive definite");
        }
        if (hi / lo > kMaxConditionNumber) {
            throw std::invalid_argument(where + ": covariance condition number exceeds 1e12");
        }
    }
    if (std::abs(total - 1.0) > kWeightSumTolerance) {
        throw std::invalid_argument(who + ": weights must sum to 1");
    }
}

struct ConceptSpec {
    std::string label;
    GaussianMixture mixture;

    void validate() const { validate_mixture(mixture, label); }
};

/// Single-Gaussian concept with covariance `scale * I`.
inline ConceptSpec isotropic_concept(std::string label, Vector mean, double scale = 1.0)
{
    const auto d = mean.size();
    return ConceptSpec{std::move(label), GaussianMixture{{GaussianComponent{1.0, std::move(mean),
                                                                            scale * Matrix::Identity(d, d)}}}};
}

/// Push-forward of q(z_t | z_0): component means scale by sqrt(abar),
/// covariances become abar * S + (1 - abar) * I.
inline GaussianMixture marginal_at(const GaussianMixture& mixture, double alpha_bar)
{
    GaussianMixture out = mixture;
    const double signal = std::sqrt(alpha_bar);
    for (auto& c : out.components) {
        c.mean *= signal;
        c.covariance *= alpha_bar;
        c.covariance.diagonal().array() += 1.0 - alpha_bar;
    }
    return out;
}

inline GaussianMixture marginal_at(const GaussianMixture& mixture, int t, const NoiseSchedule& schedule)
{
    if (t < 0 || t > schedule.step_count()) {
        throw std::out_of_range("marginal_at: timestep outside [0, T]");
    }
    return marginal_at(mixture, schedule.alpha_bar(t));
}

/// Mixture with per-component Cholesky factors computed once, for repeated
/// density and score evaluation.
class PreparedMixture {
public:
    PreparedMixture() = default;

    explicit PreparedMixture(const GaussianMixture& mixture) : dim_(mixture.dimension())
    {
        const double half_log_two_pi = 0.5 * std::log(2.0 * std::numbers::pi);
        parts_.reserve(mixture.components.size());
        for (const auto& c : mixture.components) {
            Eigen::LLT<Matrix> llt(c.covariance);
            if (llt.info() != Eigen::Success) {
                throw std::invalid_argument("covariance is not positive definite");
            }
            const Matrix lower = llt.matrixL();
            Part part;
            part.mean = c.mean;
            part.whiten = lower.triangularView<Eigen::Lower>().solve(Matrix::Identity(dim_, dim_));
            part.precision = part.whiten.transpose() * part.whiten;
            const double half_log_det = lower.diagonal().array().log().sum();
            part.log_coeff = std::log(c.weight) - half_log_det - static_cast<double>(dim_) * half_log_two_pi;
            parts_.push_back(std::move(part));
        }
    }

    Eigen::Index dimension() const noexcept { return dim_; }
    std::size_t size() const noexcept { return parts_.size(); }

    double log_density(const Vector& z) const
    {
        check_input(z);
        double peak = -std::numeric_limits<double>::infinity();
        std::vector<double> logs(parts_.size());
        for (std::size_t k = 0; k < parts_.size(); ++k) {
            logs[k] = component_log(k, z);
            peak = std::max(peak, logs[k]);
        }
        double acc = 0.0;
        for (double l : logs) {
            acc += std::exp(l - peak);
        }
        return peak + std::log(acc);
    }

    /// Gradient of the log-density: sum_k r_k(z) * S_k^{-1} (mu_k - z), with
    /// responsibilities r_k normalized in log space.
    Vector score(const Vector& z) const
    {
        check_input(z);
        if (parts_.size() == 1) {
            return parts_.front().precision * (parts_.front().mean - z);
        }
        double peak = -std::numeric_limits<double>::infinity();
        std::vector<double> logs(parts_.size());
        for (std::size_t k = 0; k < parts_.size(); ++k) {
            logs[k] = component_log(k, z);
            peak = std::max(peak, logs[k]);
        }
        double norm = 0.0;
        for (auto& l : logs) {
            l = std::exp(l - peak);
            norm += l;
        }
        Vector out = Vector::Zero(dim_);
        for (std::size_t k = 0; k < parts_.size(); ++k) {
            out.noalias() += (logs[k] / norm) * (parts_[k].precision * (parts_[k].mean - z));
        }
        return out;
    }

private:
    struct Part {
        double log_coeff = 0.0;
        Vector mean;
        Matrix whiten;    // L^{-1}
        Matrix precision; // S^{-1}
    };

    void check_input(const Vector& z) const
    {
        if (z.size() != dim_) {
            throw std::invalid_argument("latent dimension " + std::to_string(z.size()) +
                                        " does not match mixture dimension " + std::to_string(dim_));
        }
        if (!z.allFinite()) {
            throw std::domain_error("non-finite latent passed to the denoiser");
        }
    }

    double component_log(std::size_t k, const Vector& z) const
    {
        const Part& p = parts_[k];
        const double q = (p.whiten * (z - p.mean)).squaredNorm();
        return p.log_coeff - 0.5 * q;
    }

    Eigen::Index dim_ = 0;
    std::vector<Part> parts_;
};

inline Vector score(const GaussianMixture& mixture, const Vector& z)
{
    return PreparedMixture(mixture).score(z);
}

inline double log_density(const GaussianMixture& mixture, const Vector& z)
{
    return PreparedMixture(mixture).log_density(z);
}

/// Draws one point: pick a component by weight, then mean + L * n.
inline Vector sample_mixture(const GaussianMixture& mixture, Rng& rng)
{
    const double u = rng.uniform();
    std::size_t pick = mixture.components.size() - 1;
    double acc = 0.0;
    for (std::size_t k = 0; k < mixture.components.size(); ++k) {
        acc += mixture.components[k].weight;
        if (u < acc) {
            pick = k;
            break;
        }
    }
    const auto& c = mixture.components[pick];
    const Matrix lower = Eigen::LLT<Matrix>(c.covariance).matrixL();
    return c.mean + lower * rng.standard_normal(mixture.dimension());
}

// --- conditions -------------------------------------------------------------

struct NullCondition {};
struct SingleCondition {
    std::string label;
};
/// Down/up pair; resolved as an equal-weight union of both concepts.
struct PairCondition {
    std::string down;
    std::string up;
};
struct WeightedCondition {
    std::vector<std::pair<std::string, double>> terms;
};

using Condition = std::variant<NullCondition, SingleCondition, PairCondition, WeightedCondition>;

inline std::string describe(const Condition& cond)
{
    struct Visitor {
        std::string operator()(const NullCondition&) const { return "null"; }
        std::string operator()(const SingleCondition& c) const { return "single(" + c.label + ")"; }
        std::string operator()(const PairCondition& c) const { return "pair(" + c.down + "," + c.up + ")"; }
        std::string operator()(const WeightedCondition& c) const
        {
            std::string out = "weighted(";
            for (std::size_t i = 0; i < c.terms.size(); ++i) {
                out += (i ? "," : "") + c.terms[i].first + ":" + std::to_string(c.terms[i].second);
            }
            return out + ")";
        }
    };
    return std::visit(Visitor{}, cond);
}

class UnknownConceptError : public std::invalid_argument {
public:
    explicit UnknownConceptError(const std::string& label)
        : std::invalid_argument("unknown concept label '" + label + "'"), label_(label)
    {
    }
    const std::string& label() const noexcept { return label_; }

private:
    std::string label_;
};

/// Immutable set of concepts standing in for the trained denoiser.
class DenoiserRegistry {
public:
    explicit DenoiserRegistry(std::vector<ConceptSpec> concepts) : concepts_(std::move(concepts))
    {
        if (concepts_.empty()) {
            throw std::invalid_argument("denoiser registry needs at least one concept");
        }
        dim_ = concepts_.front().mixture.dimension();
        for (std::size_t i = 0; i < concepts_.size(); ++i) {
            concepts_[i].validate();
            if (concepts_[i].mixture.dimension() != dim_) {
                throw std::invalid_argument("concept '" + concepts_[i].label + "' has dimension " +
                                            std::to_string(concepts_[i].mixture.dimension()) + ", expected " +
                                            std::to_string(dim_));
            }
            for (std::size_t j = 0; j < i; ++j) {
                if (concepts_[j].label == concepts_[i].label) {
                    throw std::invalid_argument("duplicate concept label '" + concepts_[i].label + "'");
                }
            }
        }
    }

    Eigen::Index dimension() const noexcept { return dim_; }
    const std::vector<ConceptSpec>& concepts() const noexcept { return concepts_; }

    bool contains(std::string_view label) const noexcept
    {
        return std::any_of(concepts_.begin(), concepts_.end(), [&](const auto& c) { return c.label == label; });
    }

    const ConceptSpec& at(std::string_view label) const
    {
        for (const auto& c : concepts_) {
            if (c.label == label) {
                return c;
            }
        }
        throw UnknownConceptError(std::string(label));
    }

private:
    std::vector<ConceptSpec> concepts_;
    Eigen::Index dim_ = 0;
};

namespace detail {
inline void append_scaled(GaussianMixture& out, const GaussianMixture& part, double scale)
{
    for (const auto& c : part.components) {
        out.components.push_back(GaussianComponent{scale * c.weight, c.mean, c.covariance});
    }
}
} // namespace detail

/// Mixture a condition stands for. Null is the uniform union of every
/// registered concept.
inline GaussianMixture resolve_condition(const DenoiserRegistry& reg, const Condition& cond)
{
    struct Visitor {
        const DenoiserRegistry& reg;

        GaussianMixture operator()(const NullCondition&) const
        {
            GaussianMixture out;
            const double share = 1.0 / static_cast<double>(reg.concepts().size());
            for (const auto& c : reg.concepts()) {
                detail::append_scaled(out, c.mixture, share);
            }
            return out;
        }
        GaussianMixture operator()(const SingleCondition& c) const { return reg.at(c.label).mixture; }
        GaussianMixture operator()(const PairCondition& c) const
        {
            if (c.down == c.up) {
                return reg.at(c.down).mixture;
            }
            GaussianMixture out;
            detail::append_scaled(out, reg.at(c.down).mixture, 0.5);
            detail::append_scaled(out, reg.at(c.up).mixture, 0.5);
            return out;
        }
        GaussianMixture operator()(const WeightedCondition& c) const
        {
            if (c.terms.empty()) {
                throw std::invalid_argument("weighted condition has no terms");
            }
            double total = 0.0;
            GaussianMixture out;
            for (const auto& [label, weight] : c.terms) {
                if (!(weight > 0.0)) {
                    throw std::invalid_argument("weighted condition weights must be positive");
                }
                total += weight;
                detail::append_scaled(out, reg.at(label).mixture, weight);
            }
            if (std::abs(total - 1.0) > kWeightSumTolerance) {
                throw std::invalid_argument("weighted condition weights must sum to 1");
            }
            return out;
        }
    };
    return std::visit(Visitor{reg}, cond);
}

/// Optimal noise prediction from a score: eps = -sqrt(1 - abar) * score.
inline Vector noise_from_score(const Vector& score_value, double alpha_bar)
{
    return -std::sqrt(1.0 - alpha_bar) * score_value;
}

/// Exact noise prediction for the resolved conditional distribution at t.
inline Vector predict_noise(const DenoiserRegistry& reg, const Vector& z, int t, const Condition& cond,
                            const NoiseSchedule& schedule)
{
    if (t < 1 || t > schedule.step_count()) {
        throw std::out_of_range("predict_noise: timestep outside [1, T]");
    }
    const double abar = schedule.alpha_bar(t);
    const PreparedMixture prepared(marginal_at(resolve_condition(reg, cond), abar));
    return noise_from_score(prepared.score(z), abar);
}

} // namespace blendlab
