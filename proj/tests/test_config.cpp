// Copyright (C) 2026 blendlab authors
// SPDX-License-Identifier: Apache-2.0

#include <string>

#include <gtest/gtest.h>

#include "blendlab/config.hpp"

using namespace blendlab;

namespace {

std::string default_text() { return read_file(std::filesystem::path(BLENDLAB_SOURCE_DIR) / "configs" / "default.json"); }

ConfigError parse_error(const std::string& text)
{
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e;
    }
    ADD_FAILURE() << "expected a config error for:\n" << text;
    return ConfigError("", "none");
}

bool mentions(const std::exception& e, const std::string& what) { return std::string(e.what()).find(what) != std::string::npos; }

} // namespace

TEST(ParseConfig, DefaultFile)
{
    const auto cfg = parse_config(default_text());
    EXPECT_EQ(cfg.run.schedule.step_count, 50);
    EXPECT_EQ(cfg.run.stages.t_start, 44);
    EXPECT_EQ(cfg.run.stages.t_end, 6);
    EXPECT_EQ(cfg.run.policy.strategy, Strategy::Increase);
    EXPECT_EQ(cfg.run.policy.guidance_w, 3.0);
    EXPECT_TRUE(cfg.run.policy.feedback_enabled);
    EXPECT_EQ(cfg.run.labels, (std::vector<std::string>{"A", "B"}));
    EXPECT_EQ(cfg.run.chain_count, 2000u);
    EXPECT_EQ(cfg.run.master_seed, 42u);
    ASSERT_EQ(cfg.concepts.size(), 2u);
    EXPECT_EQ(cfg.concepts[1].mixture.components[0].mean[0], 3.0);
    EXPECT_EQ(cfg.output.directory, "out/default");
    EXPECT_FALSE(cfg.output.trajectory);
    EXPECT_EQ(cfg.grids.distances.size(), 5u);
}

TEST(ParseConfig, EmptyObjectUsesDefaults)
{
    const auto cfg = parse_config("{}");
    EXPECT_EQ(cfg.run.stages.t_start, 44);
    EXPECT_EQ(cfg.run.labels, (std::vector<std::string>{"A", "B"}));
    EXPECT_EQ(cfg.concepts.size(), 2u);
}

TEST(ParseConfig, AbsoluteStageBounds)
{
    const auto cfg = parse_config(R"({"stages": {"t_s": 30, "t_e": 10}})");
    EXPECT_EQ(cfg.run.stages.t_start, 30);
    EXPECT_EQ(cfg.run.stages.t_end, 10);
    EXPECT_FALSE(cfg.stage_fractions.has_value());
    const auto frac = parse_config(R"({"schedule": {"T": 25}, "stages": {"ts_frac": 0.88, "te_frac": 0.12}})");
    EXPECT_EQ(frac.run.stages.t_start, 22);
    EXPECT_EQ(frac.run.stages.t_end, 3);
    const auto e = parse_error(R"({"stages": {"t_s": 30, "ts_frac": 0.5}})");
    EXPECT_EQ(e.field(), "stages.ts_frac");
}

TEST(ParseConfig, UnknownKeysAreRejected)
{
    const auto e = parse_error("{\n  \"policy\": {\n    \"gamma\": [1, 1]\n  }\n}");
    EXPECT_EQ(e.field(), "policy.gamma");
    EXPECT_EQ(e.line(), std::optional<std::size_t>(3));
    EXPECT_TRUE(mentions(e, "line 3"));
    EXPECT_EQ(parse_error(R"({"extras": 1})").field(), "extras");
}

TEST(ParseConfig, MalformedJsonReportsLine)
{
    const auto e = parse_error("{\n  \"schedule\": {\n    \"T\": 50,\n  }\n}");
    ASSERT_TRUE(e.line().has_value());
    EXPECT_EQ(*e.line(), 4u);
    EXPECT_TRUE(mentions(e, "malformed JSON"));
}

TEST(ParseConfig, NonSpdCovarianceNamesConceptAndLine)
{
    std::string text = default_text();
    const std::string good = "\"covariances\": [[[1.0, 0.0], [0.0, 1.0]]]\n    },\n    {\n      \"label\": \"B\"";
    const auto pos = text.find(good);
    ASSERT_NE(pos, std::string::npos);
    text.replace(pos, std::string("\"covariances\": [[[1.0, 0.0], [0.0, 1.0]]]").size(),
                 "\"covariances\": [[[1.0, 2.0], [2.0, 1.0]]]");
    const auto e = parse_error(text);
    EXPECT_EQ(e.field(), "concepts[0].covariances");
    EXPECT_TRUE(mentions(e, "'A'"));
    ASSERT_TRUE(e.line().has_value());
    std::size_t expected_line = 1;
    for (std::size_t i = 0; i < text.find("[[[1.0, 2.0]"); ++i) expected_line += text[i] == '\n';
    EXPECT_EQ(*e.line(), expected_line);
}

TEST(ParseConfig, SecondConceptErrorsPointAtSecondConcept)
{
    const std::string text = R"({
  "concepts": [
    {"label": "A", "weights": [1.0], "means": [[0.0, 0.0]], "covariances": [[[1.0, 0.0], [0.0, 1.0]]]},
    {"label": "B", "weights": [1.0], "means": [[1.0, 0.0]], "covariances": [[[-1.0, 0.0], [0.0, 1.0]]]}
  ]
})";
    const auto e = parse_error(text);
    EXPECT_EQ(e.field(), "concepts[1].covariances");
    EXPECT_TRUE(mentions(e, "'B'"));
    EXPECT_EQ(e.line(), std::optional<std::size_t>(4));
}

TEST(ParseConfig, SemanticErrors)
{
    EXPECT_EQ(parse_error(R"({"schedule": {"T": 0}})").field(), "schedule.T");
    EXPECT_EQ(parse_error(R"({"schedule": {"beta_start": 0.5, "beta_end": 0.1}})").field(), "schedule");
    EXPECT_EQ(parse_error(R"({"stages": {"t_s": 5, "t_e": 10}})").field(), "stages");
    EXPECT_EQ(parse_error(R"({"policy": {"strategy": "sideways"}})").field(), "policy.strategy");
    EXPECT_EQ(parse_error(R"({"policy": {"gammas": [1, -1]}})").field(), "policy");
    EXPECT_EQ(parse_error(R"({"policy": {"w": "three"}})").field(), "policy.w");
    EXPECT_EQ(parse_error(R"({"run": {"blend": ["A", "Z"]}})").field(), "run.blend");
    EXPECT_EQ(parse_error(R"({"run": {"dim": 3}})").field(), "run.dim");
    EXPECT_EQ(parse_error(R"({"run": {"chains": 0}})").field(), "run.chains");
    EXPECT_EQ(parse_error(R"({"run": {"sampler": "euler"}})").field(), "run.sampler");
    EXPECT_EQ(parse_error(R"({"run": {"clamp_x0": [1, -1]}})").field(), "run.clamp_x0");
    EXPECT_EQ(parse_error(R"({"output": {"formats": ["png"]}})").field(), "output.formats[0]");
    EXPECT_EQ(parse_error(R"({"policy": {"gammas": [1, 1, 1]}})").field(), "policy.gammas");
    EXPECT_EQ(parse_error(R"({"concepts": []})").field(), "concepts");
}

TEST(ParseConfig, RunSection)
{
    const auto cfg = parse_config(R"({
  "policy": {"gammas": [1.0, 0.5]},
  "run": {"sampler": "ddim", "seed": 18446744073709551615, "trajectory_chains": 3,
          "reference_points": [[-3, 0], [3, 0]], "clamp_x0": [-5, 5], "blend": ["B", "A"]},
  "output": {"formats": ["trajectory"]}
})");
    EXPECT_EQ(cfg.run.reverse.sampler, Sampler::DDIM);
    EXPECT_EQ(cfg.run.master_seed, 18446744073709551615ull);
    EXPECT_EQ(cfg.run.trajectory_chain_limit, 3u);
    ASSERT_TRUE(cfg.run.reference_points.has_value());
    EXPECT_EQ((*cfg.run.reference_points)[1][0], 3.0);
    ASSERT_TRUE(cfg.run.reverse.clamp_x0.has_value());
    EXPECT_EQ(cfg.run.reverse.clamp_x0->hi, 5.0);
    EXPECT_EQ(cfg.run.labels, (std::vector<std::string>{"B", "A"}));
    EXPECT_TRUE(cfg.run.record_trajectories);
    EXPECT_FALSE(cfg.output.samples);
}

TEST(ConfigEcho, RoundTrips)
{
    for (const std::string& text :
         {default_text(), std::string(R"({"run": {"clamp_x0": [-4, 4], "trajectory_chains": 2}})")}) {
        const auto a = parse_config(text);
        const auto echo = config_echo(a);
        const auto b = parse_config(echo.dump(2));
        EXPECT_EQ(config_echo(b), echo);
        EXPECT_EQ(b.run.stages.t_start, a.run.stages.t_start);
        EXPECT_EQ(b.run.master_seed, a.run.master_seed);
    }
    EXPECT_EQ(config_echo(parse_config(default_text()))["stages"]["t_s"], 44);
}

TEST(LoadConfig, MissingFileIsAConfigError)
{
    EXPECT_THROW(load_config("/nonexistent/blendlab.json"), ConfigError);
}
