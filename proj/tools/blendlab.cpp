// Copyright (C) 2026 blendlab authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "blendlab/cli.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"blendlab: staged latent blending over analytic Gaussian-mixture denoisers"};
    app.set_version_flag("--version", std::string(BLENDLAB_VERSION) + " (" + BLENDLAB_GIT_REVISION + ")");
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::size_t> chains;
    bool trajectories = false;
    std::string axis;
    bool full = false;

    auto add_run_flags = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run config (JSON)")->required();
        cmd->add_option("--seed", seed, "master seed override");
        cmd->add_option("--out", out_dir, "output directory override");
        cmd->add_option("--chains", chains, "chain count override")->check(CLI::PositiveNumber);
        cmd->add_flag("--trajectories", trajectories, "record and write trajectory.csv");
    };

    CLI::App* blend = app.add_subcommand("blend", "run one blending experiment and write its bundle");
    add_run_flags(blend);

    CLI::App* ablate = app.add_subcommand("ablate", "sweep one ablation axis, one bundle per variant");
    add_run_flags(ablate);
    ablate->add_option("--axis", axis, "strategy | feedback | stages | gamma | distance")->required();

    CLI::App* verify = app.add_subcommand("verify", "run the oracle suite");
    verify->add_flag("--full", full, "larger trial and chain counts");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return blendlab::kExitUsage;
    }

    const blendlab::CliOverrides overrides{seed, out_dir, chains, trajectories};
    if (*blend) {
        return blendlab::cmd_blend(config_path, overrides, std::cout, std::cerr);
    }
    if (*ablate) {
        return blendlab::cmd_ablate(config_path, axis, overrides, std::cout, std::cerr);
    }
    return blendlab::cmd_verify(full, std::cout, std::cerr);
}
