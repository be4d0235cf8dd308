// Copyright (C) 2026 blendlab authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <stdexcept>

#include <gtest/gtest.h>

#include "blendlab/ablation.hpp"
#include "blendlab/blend.hpp"
#include "blendlab/defaults.hpp"
#include "blendlab/output.hpp"
#include "support.hpp"

using namespace blendlab;

namespace {

RunConfig small_config(std::size_t chains = 64)
{
    RunConfig c = default_run_config();
    c.chain_count = chains;
    c.master_seed = 9001;
    return c;
}

// Expanded form of the feedback update through the interpolation:
// L'_a = (1 - p) L_a + p^2 L_b + p (1 - p) (1/N) sum gamma_n L_a^n
Vector expanded_feedback(const Vector& lb, const std::vector<Vector>& aux, std::size_t k, double p,
                         const std::vector<double>& gammas)
{
    const double n = static_cast<double>(aux.size());
    Vector sum = Vector::Zero(lb.size());
    for (std::size_t i = 0; i < aux.size(); ++i) sum += gammas[i] * aux[i];
    return (1.0 - p) * aux[k] + p * p * lb + p * (1.0 - p) / n * sum;
}

} // namespace

TEST(Interpolate, Examples)
{
    BlendPolicy pol;
    const Vector lb{{0.0, 0.0}};
    const std::vector<Vector> aux{Vector{{2.0, 0.0}}, Vector{{0.0, 2.0}}};
    const Vector out = interpolate_blend(lb, aux, 0.5, pol);
    EXPECT_DOUBLE_EQ(out[0], 0.5);
    EXPECT_DOUBLE_EQ(out[1], 0.5);

    const Vector lb2{{4.0, -1.0}};
    EXPECT_TRUE(interpolate_blend(lb2, aux, 1.0, pol) == lb2);
    EXPECT_TRUE(interpolate_blend(lb2, aux, 0.0, pol).isApprox(0.5 * (aux[0] + aux[1]), 1e-15));
    EXPECT_THROW(interpolate_blend(lb2, {aux[0]}, 0.5, pol), std::invalid_argument);
}

TEST(Feedback, Examples)
{
    const Vector lb{{1.0, 2.0}};
    const Vector la{{-3.0, 5.0}};
    EXPECT_TRUE(feedback_update(lb, la, 0.0) == la);
    EXPECT_TRUE(feedback_update(lb, la, 1.0) == lb);
    EXPECT_THROW(feedback_update(lb, Vector::Zero(3), 0.5), std::invalid_argument);
}

TEST(FeedbackProperty, ContractionIdentity)
{
    Rng rng(derive_seed(21, 0, 0));
    for (int trial = 0; trial < 1000; ++trial) {
        const auto d = static_cast<Eigen::Index>(gen::uniform_int(rng, 1, 6));
        const Vector lb = gen::random_vector(rng, d, 10.0);
        const Vector la = gen::random_vector(rng, d, 10.0);
        const double p = rng.uniform();
        const double lhs = (feedback_update(lb, la, p) - lb).norm();
        const double rhs = (1.0 - p) * (la - lb).norm();
        ASSERT_LE(std::abs(lhs - rhs), 1e-12 * std::max(1.0, rhs));
    }
}

TEST(FeedbackProperty, MatchesExpandedForm)
{
    Rng rng(derive_seed(21, 1, 0));
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = static_cast<std::size_t>(gen::uniform_int(rng, 1, 4));
        BlendPolicy pol = gen::random_policy(rng, n);
        const Vector lb = gen::random_vector(rng, 3);
        std::vector<Vector> aux;
        for (std::size_t i = 0; i < n; ++i) aux.push_back(gen::random_vector(rng, 3));
        const double p = rng.uniform();
        const Vector lbp = interpolate_blend(lb, aux, p, pol);
        for (std::size_t k = 0; k < n; ++k) {
            const Vector direct = feedback_update(lbp, aux[k], p);
            const Vector oracle = expanded_feedback(lb, aux, k, p, pol.gammas);
            ASSERT_LT((direct - oracle).norm(), 1e-12);
        }
    }
}

TEST(BlendProperty, TranslationEquivariance)
{
    Rng rng(derive_seed(21, 2, 0));
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = static_cast<std::size_t>(gen::uniform_int(rng, 1, 4));
        BlendPolicy pol;
        pol.gammas = gen::gammas_summing_to_n(rng, n);
        const Vector lb = gen::random_vector(rng, 2);
        const Vector v = gen::random_vector(rng, 2);
        std::vector<Vector> aux, moved;
        for (std::size_t i = 0; i < n; ++i) {
            aux.push_back(gen::random_vector(rng, 2));
            moved.push_back(aux.back() + v);
        }
        const double p = rng.uniform();
        const Vector a = interpolate_blend(lb, aux, p, pol);
        const Vector b = interpolate_blend(lb + v, moved, p, pol);
        ASSERT_LT((b - a - v).cwiseAbs().maxCoeff(), 1e-12);
        for (std::size_t k = 0; k < n; ++k) {
            const Vector fa = feedback_update(a, aux[k], p);
            const Vector fb = feedback_update(b, moved[k], p);
            ASSERT_LT((fb - fa - v).cwiseAbs().maxCoeff(), 1e-12);
        }
    }
}

TEST(InitAuxiliaries, IdentityAndScaling)
{
    const auto s = make_linear_schedule(50, 1e-4, 0.08);
    Rng rng(4);
    const std::vector<Vector> refs{Vector{{1.0, 2.0}}, Vector{{-1.0, 0.5}}};
    const auto same = init_auxiliaries(refs, 0, s, rng);
    EXPECT_TRUE(same[0] == refs[0]);
    EXPECT_TRUE(same[1] == refs[1]);

    Rng a(8), b(8);
    const auto out = init_auxiliaries({Vector::Zero(2), Vector::Zero(2)}, 44, s, a);
    const double scale = std::sqrt(1.0 - s.alpha_bar(44));
    const Vector e0 = b.standard_normal(2);
    const Vector e1 = b.standard_normal(2);
    EXPECT_TRUE(out[0].isApprox(scale * e0, 1e-15));
    EXPECT_TRUE(out[1].isApprox(scale * e1, 1e-15));

    EXPECT_THROW(init_auxiliaries({}, 10, s, rng), std::invalid_argument);
    EXPECT_THROW(init_auxiliaries({Vector::Zero(2), Vector::Zero(3)}, 10, s, rng), std::invalid_argument);
}

TEST(InitAuxiliaries, MonteCarloMean)
{
    const auto s = make_linear_schedule(50, 1e-4, 0.08);
    Rng rng(derive_seed(21, 3, 0));
    const Vector ref{{3.0, -2.0}};
    const int n = 100000;
    Vector acc = Vector::Zero(2);
    for (int i = 0; i < n; ++i) acc += init_auxiliaries({ref}, 44, s, rng)[0];
    acc /= n;
    const double se = std::sqrt((1.0 - s.alpha_bar(44)) / n);
    for (int i = 0; i < 2; ++i) {
        EXPECT_LT(std::abs(acc[i] - std::sqrt(s.alpha_bar(44)) * ref[i]), 4.0 * se);
    }
}

TEST(RunFreeblend, ShapesAndTraceLayout)
{
    const auto reg = default_registry();
    RunConfig cfg = small_config(5);
    cfg.record_trajectories = true;
    const auto art = run_freeblend(cfg, reg);
    ASSERT_EQ(art.samples.rows(), 5);
    ASSERT_EQ(art.samples.cols(), 2);
    ASSERT_EQ(art.traces.size(), 5u);
    for (const auto& tr : art.traces) {
        ASSERT_EQ(tr.steps.size(), 50u);
        for (std::size_t i = 0; i < tr.steps.size(); ++i) {
            const auto& st = tr.steps[i];
            ASSERT_EQ(st.t, 50 - static_cast<int>(i));
            ASSERT_EQ(st.stage, stage_of(st.t, cfg.stages));
            // Auxiliaries exist only during blending.
            ASSERT_EQ(st.aux.empty(), st.stage != Stage::Blending);
            if (st.stage == Stage::Blending) {
                ASSERT_EQ(st.aux.size(), 2u);
                ASSERT_DOUBLE_EQ(st.p, 1.0 - st.t / 50.0);
            }
        }
    }
}

TEST(RunFreeblend, TraceIdentitiesHoldAtEveryBlendingStep)
{
    const auto reg = default_registry();
    RunConfig cfg = small_config(16);
    cfg.record_trajectories = true;
    const auto art = run_freeblend(cfg, reg);
    std::size_t checked = 0;
    for (const auto& tr : art.traces) {
        for (const auto& st : tr.steps) {
            if (st.stage != Stage::Blending) continue;
            const Vector lbp = interpolate_blend(st.blend_before, st.aux_before, st.p, cfg.policy);
            ASSERT_TRUE(lbp == st.blend);
            for (std::size_t k = 0; k < st.aux.size(); ++k) {
                const double lhs = (st.aux[k] - st.blend).norm();
                const double rhs = (1.0 - st.p) * (st.aux_before[k] - st.blend).norm();
                ASSERT_LE(std::abs(lhs - rhs), 1e-12 * std::max(1.0, rhs));
                ++checked;
            }
        }
    }
    EXPECT_EQ(checked, 16u * 38u * 2u);
}

TEST(RunFreeblend, DeterministicAndThreadIndependent)
{
    const auto reg = default_registry();
    const RunConfig cfg = small_config(40);
    const auto a = run_freeblend(cfg, reg, ExecutionOptions{1});
    const auto b = run_freeblend(cfg, reg, ExecutionOptions{3});
    const auto c = run_freeblend(cfg, reg, ExecutionOptions{8});
    EXPECT_EQ(samples_csv("r", a.samples), samples_csv("r", b.samples));
    EXPECT_EQ(samples_csv("r", a.samples), samples_csv("r", c.samples));
    RunConfig other = cfg;
    other.master_seed += 1;
    EXPECT_NE(samples_csv("r", a.samples), samples_csv("r", run_freeblend(other, reg).samples));
}

TEST(RunFreeblend, ChainPrefixStableUnderChainCount)
{
    const auto reg = default_registry();
    RunConfig one = small_config(1);
    RunConfig many = small_config(8);
    const auto a = run_freeblend(one, reg);
    const auto b = run_freeblend(many, reg);
    EXPECT_TRUE(a.samples.row(0) == b.samples.row(0));
}

TEST(RunFreeblend, EmptyBlendingStageIsPlainSampling)
{
    const auto reg = default_registry();
    RunConfig cfg = small_config(32);
    cfg.stages = StageConfig{20, 20};
    const auto staged = run_freeblend(cfg, reg);
    const auto plain = sample_conditional(cfg, reg, PairCondition{"A", "B"});
    EXPECT_EQ(samples_csv("r", staged.samples), samples_csv("r", plain.samples));
}

TEST(RunFreeblend, FeedbackWithZeroRatioEqualsNoFeedback)
{
    const auto reg = default_registry();
    RunConfig on = small_config(16);
    on.policy.strategy = Strategy::Invariant;
    on.policy.invariant_p = 0.0;
    RunConfig off = on;
    off.policy.feedback_enabled = false;
    EXPECT_EQ(samples_csv("r", run_freeblend(on, reg).samples), samples_csv("r", run_freeblend(off, reg).samples));
}

TEST(RunFreeblend, FixedReferencePointsAreUsed)
{
    const auto reg = default_registry();
    RunConfig cfg = small_config(4);
    cfg.record_trajectories = true;
    cfg.stages = StageConfig{50, 6};  // blending starts at T: no init-stage draws
    cfg.reference_points = std::vector<Vector>{Vector{{-3.0, 0.0}}, Vector{{3.0, 0.0}}};
    const auto a = run_freeblend(cfg, reg);
    const auto b = run_freeblend(cfg, reg);
    EXPECT_TRUE(a.samples == b.samples);
    // The first blending record's auxiliaries are forward-noised references.
    const auto& st = a.traces[0].steps[0];
    ASSERT_EQ(st.stage, Stage::Blending);
    EXPECT_EQ(st.aux_before.size(), 2u);

    cfg.reference_points = std::vector<Vector>{Vector{{0.0, 0.0}}};
    EXPECT_THROW(run_freeblend(cfg, reg), std::invalid_argument);
}

TEST(RunFreeblend, MirrorSymmetricConceptsGiveCentredOutput)
{
    const auto reg = default_registry();
    RunConfig cfg = small_config(4000);
    const auto art = run_freeblend(cfg, reg);
    const double proj = art.samples.col(0).mean();
    EXPECT_LT(std::abs(proj), 0.05 * 6.0);
}

TEST(RunFreeblend, ValidatesConfiguration)
{
    const auto reg = default_registry();
    RunConfig cfg = small_config(4);
    cfg.labels = {"A", "Z"};
    EXPECT_THROW(run_freeblend(cfg, reg), UnknownConceptError);
    cfg = small_config(4);
    cfg.policy.gammas = {1.0};
    EXPECT_THROW(run_freeblend(cfg, reg), std::invalid_argument);
    cfg = small_config(0);
    EXPECT_THROW(run_freeblend(cfg, reg), std::invalid_argument);
    cfg = small_config(4);
    cfg.stages = StageConfig{6, 44};
    EXPECT_THROW(run_freeblend(cfg, reg), std::invalid_argument);
    cfg = small_config(4);
    cfg.dimension = 3;
    EXPECT_THROW(run_freeblend(cfg, reg), std::invalid_argument);
}

TEST(RunFreeblend, NumericalFailureNamesChainAndTimestep)
{
    const auto reg = default_registry();
    RunConfig cfg = small_config(3);
    cfg.reference_points = std::vector<Vector>{Vector{{1e308, 0.0}}, Vector{{1e308, 0.0}}};
    cfg.policy.gammas = {1e10, 1e10};
    try {
        run_freeblend(cfg, reg);
        FAIL() << "expected a numerical failure";
    } catch (const NumericalError& e) {
        ASSERT_TRUE(e.chain().has_value());
        ASSERT_TRUE(e.timestep().has_value());
        EXPECT_EQ(*e.chain(), 0u);
        EXPECT_LE(*e.timestep(), cfg.stages.t_start);
        EXPECT_NE(std::string(e.what()).find("chain 0"), std::string::npos);
    }
}

TEST(RunFreeblend, ThreeConceptBlendRuns)
{
    const DenoiserRegistry reg({isotropic_concept("A", Vector{{-3.0, 0.0}}), isotropic_concept("B", Vector{{3.0, 0.0}}),
                                isotropic_concept("C", Vector{{0.0, 4.0}})});
    RunConfig cfg = small_config(200);
    cfg.labels = {"A", "B", "C"};
    cfg.policy.gammas = {1.0, 1.0, 1.0};
    const auto art = run_freeblend(cfg, reg);
    EXPECT_TRUE(art.samples.allFinite());
    // The third concept pulls the blend off the A-B axis.
    EXPECT_GT(art.samples.col(1).mean(), 0.5);
}

namespace {
struct ColumnMoments {
    double mean[2];
    double var[2];
};

ColumnMoments column_moments(const Matrix& x)
{
    ColumnMoments m{};
    const double n = static_cast<double>(x.rows());
    for (int i = 0; i < 2; ++i) {
        m.mean[i] = x.col(i).mean();
        m.var[i] = (x.col(i).array() - m.mean[i]).square().sum() / (n - 1.0);
    }
    return m;
}

struct SelfBlendRuns {
    ColumnMoments blend;
    ColumnMoments plain;
    double n;
};

SelfBlendRuns self_blend(const BlendPolicy& policy)
{
    const DenoiserRegistry reg({isotropic_concept("c", Vector::Zero(2))});
    RunConfig cfg = small_config(20000);
    cfg.labels = {"c", "c"};
    cfg.policy = policy;
    const auto blend = run_freeblend(cfg, reg);
    const auto plain = sample_conditional(cfg, reg, SingleCondition{"c"});
    return {column_moments(blend.samples), column_moments(plain.samples), static_cast<double>(cfg.chain_count)};
}
} // namespace

TEST(RunFreeblend, SelfBlendKeepsSingleConceptMean)
{
    const auto r = self_blend(BlendPolicy{});
    for (int i = 0; i < 2; ++i) {
        EXPECT_LT(std::abs(r.blend.mean[i] - r.plain.mean[i]), 4.0 * std::sqrt((r.blend.var[i] + r.plain.var[i]) / r.n));
    }
}

TEST(RunFreeblend, SelfBlendWithUnitRatioMatchesSingleConceptMoments)
{
    BlendPolicy pol;
    pol.strategy = Strategy::Invariant;
    pol.invariant_p = 1.0;
    const auto r = self_blend(pol);
    for (int i = 0; i < 2; ++i) {
        EXPECT_LT(std::abs(r.blend.mean[i] - r.plain.mean[i]), 4.0 * std::sqrt((r.blend.var[i] + r.plain.var[i]) / r.n));
        EXPECT_NEAR(r.blend.var[i], r.plain.var[i], 0.1 * r.plain.var[i]);
    }
}

// Interpolating the blending latent with independent auxiliaries of the same
// concept scales its variance by p^2 + (1 - p)^2 / N at the first blending
// step (0.40 at the default bounds); the short refinement stage does not
// restore it.
TEST(RunFreeblend, SelfBlendContractsSpreadUnderIncrease)
{
    const auto r = self_blend(BlendPolicy{});
    for (int i = 0; i < 2; ++i) {
        EXPECT_LT(r.blend.var[i], 0.6 * r.plain.var[i]);
        EXPECT_GT(r.blend.var[i], 0.3 * r.plain.var[i]);
    }
}

TEST(Ablation, VariantEnumeration)
{
    const auto reg = default_registry();
    const RunConfig base = small_config(8);
    const auto strat = ablation_variants(base, AblationAxis::Strategy, reg);
    ASSERT_EQ(strat.size(), 3u);
    EXPECT_EQ(strat[0].name, "increase");
    EXPECT_EQ(strat[1].name, "invariant");
    EXPECT_EQ(strat[2].name, "decline");

    const auto gam = ablation_variants(base, AblationAxis::Gamma, reg);
    ASSERT_EQ(gam.size(), 3u);
    EXPECT_EQ(gam[0].config.policy.gammas, (std::vector<double>{1.0, 0.5}));
    EXPECT_EQ(gam[2].config.policy.gammas, (std::vector<double>{1.0, 1.5}));
    EXPECT_EQ(gam[1].name, "gamma_1");

    const auto fb = ablation_variants(base, AblationAxis::Feedback, reg);
    ASSERT_EQ(fb.size(), 2u);
    EXPECT_TRUE(fb[0].config.policy.feedback_enabled);
    EXPECT_FALSE(fb[1].config.policy.feedback_enabled);

    const auto st = ablation_variants(base, AblationAxis::Stages, reg);
    ASSERT_EQ(st.size(), 4u);
    for (const auto& v : st) {
        EXPECT_TRUE(v.config.effective_stages().has_blending());
    }
    EXPECT_EQ(st[0].config.effective_stages().t_start, 50);
    EXPECT_EQ(st[0].config.effective_stages().t_end, 0);

    const auto dist = ablation_variants(base, AblationAxis::Distance, reg);
    ASSERT_EQ(dist.size(), 5u);
    for (std::size_t i = 0; i < dist.size(); ++i) {
        const auto axis = blend_axis(dist[i].registry.at("A"), dist[i].registry.at("B"));
        EXPECT_NEAR(axis.separation, AblationGrids{}.distances[i], 1e-12);
        EXPECT_LT(axis.midpoint.norm(), 1e-12);
    }
    EXPECT_THROW(parse_axis("nope"), std::invalid_argument);
}

TEST(Ablation, VariantsShareSeed)
{
    const auto reg = default_registry();
    const RunConfig base = small_config(8);
    for (auto axis : {AblationAxis::Strategy, AblationAxis::Feedback, AblationAxis::Stages, AblationAxis::Gamma,
                      AblationAxis::Distance}) {
        for (const auto& v : ablation_variants(base, axis, reg)) {
            EXPECT_EQ(v.config.master_seed, base.master_seed);
            EXPECT_EQ(v.config.chain_count, base.chain_count);
        }
    }
}

TEST(Ablation, SuiteAttachesMetrics)
{
    const auto reg = default_registry();
    const auto out = run_ablation_suite(small_config(64), AblationAxis::Feedback, reg);
    ASSERT_EQ(out.size(), 2u);
    for (const auto& v : out) {
        EXPECT_TRUE(v.artifact.metrics.count("toy_bs"));
        EXPECT_TRUE(v.artifact.metrics.count("aux_convergence_mean"));
        EXPECT_TRUE(v.metrics.all_finite());
    }
}
