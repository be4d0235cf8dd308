// Copyright (C) 2026 blendlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "blendlab/ablation.hpp"
#include "blendlab/blend.hpp"
#include "blendlab/config.hpp"
#include "blendlab/errors.hpp"
#include "blendlab/metrics.hpp"
#include "blendlab/output.hpp"
#include "blendlab/svg.hpp"
#include "blendlab/verify.hpp"

#ifndef BLENDLAB_VERSION
#define BLENDLAB_VERSION "0.0.0"
#endif
#ifndef BLENDLAB_GIT_REVISION
#define BLENDLAB_GIT_REVISION "unknown"
#endif

namespace blendlab {

enum ExitCode : int { kExitOk = 0, kExitVerifyFailed = 1, kExitUsage = 2, kExitNumerical = 3 };

struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> chains;
    bool trajectories = false;
};

inline void apply_overrides(LoadedConfig& cfg, const CliOverrides& o)
{
    if (o.seed) cfg.run.master_seed = *o.seed;
    if (o.out) cfg.output.directory = *o.out;
    if (o.chains) {
        if (*o.chains < 1) throw ConfigError("--chains", "must be at least 1");
        cfg.run.chain_count = *o.chains;
    }
    if (o.trajectories) {
        cfg.run.record_trajectories = true;
        cfg.output.trajectory = true;
    }
}

/// Non-finite values become null; nlohmann would otherwise do the same
/// silently, this makes it explicit in one place.
inline nlohmann::json metrics_json(const std::map<std::string, double>& metrics)
{
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : metrics) {
        j[k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
    }
    return j;
}

inline nlohmann::json provenance_json(const LoadedConfig& cfg)
{
    return {{"config", config_echo(cfg)},
            {"seed", cfg.run.master_seed},
            {"version", BLENDLAB_VERSION},
            {"git", BLENDLAB_GIT_REVISION}};
}

/// Writes one output bundle into `dir`. Wall-clock time goes to the log
/// stream only, so every file is a function of (config, seed).
inline void write_bundle(const std::filesystem::path& dir, const std::string& run_id, const LoadedConfig& cfg,
                         const DenoiserRegistry& reg, const RunArtifact& art, std::ostream& log)
{
    std::filesystem::create_directories(dir);
    if (cfg.output.samples) {
        write_file(dir / "samples.csv", samples_csv(run_id, art.samples));
    }
    if (cfg.output.trajectory && !art.traces.empty()) {
        write_file(dir / "trajectory.csv", trajectory_csv(art.traces, art.samples.cols()));
    }
    if (cfg.output.metrics) {
        nlohmann::json j = {{"metrics", metrics_json(art.metrics)}, {"provenance", provenance_json(cfg)}};
        write_file(dir / "metrics.json", j.dump(2) + "\n");
    }
    if (cfg.output.svg) {
        std::vector<ConceptSpec> shown;
        for (const auto& l : cfg.run.labels) {
            shown.push_back(reg.at(l));
        }
        emit_svg({PlotRun{run_id, &art.samples}}, shown, dir / "plot.svg", {}, &log);
    }
    write_file(dir / "config_echo.json", config_echo(cfg).dump(2) + "\n");
}

namespace detail {

template <typename Body>
int guarded(std::ostream& err, Body&& body)
{
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const UnknownConceptError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}

inline std::string seconds(double s)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", s);
    return buf;
}

} // namespace detail

/// `blendlab blend`: one run, one bundle.
inline int cmd_blend(const std::filesystem::path& config_path, const CliOverrides& overrides, std::ostream& out,
                     std::ostream& err)
{
    return detail::guarded(err, [&] {
        LoadedConfig cfg = load_config(config_path);
        apply_overrides(cfg, overrides);
        const DenoiserRegistry reg(cfg.concepts);
        RunArtifact art = run_freeblend(cfg.run, reg);
        const auto originals = original_samples(cfg.run, reg);
        const MetricReport report = evaluate_run(art, reg, originals);
        if (!report.all_finite()) {
            throw NumericalError("metrics are not finite");
        }
        art.metrics = flatten(report);
        const std::filesystem::path dir = cfg.output.directory;
        write_bundle(dir, "blend", cfg, reg, art, err);
        out << "wrote " << dir.string() << " (" << cfg.run.chain_count << " chains, toy_bs "
            << format_double(art.metrics.at("toy_bs")) << ", " << detail::seconds(art.wall_seconds) << " s)\n";
        return static_cast<int>(kExitOk);
    });
}

/// `blendlab ablate`: one bundle per variant under <out>/<variant>/, plus
/// summary.csv and a combined plot.svg; the feedback axis also writes
/// aux_convergence.csv.
inline int cmd_ablate(const std::filesystem::path& config_path, const std::string& axis_name,
                      const CliOverrides& overrides, std::ostream& out, std::ostream& err)
{
    return detail::guarded(err, [&] {
        AblationAxis axis;
        try {
            axis = parse_axis(axis_name);
        } catch (const std::invalid_argument& e) {
            throw ConfigError("--axis", std::string(e.what()) + " (strategy, feedback, stages, gamma, distance)");
        }
        LoadedConfig cfg = load_config(config_path);
        apply_overrides(cfg, overrides);
        const DenoiserRegistry reg(cfg.concepts);
        auto variants = run_ablation_suite(cfg.run, axis, reg, cfg.grids);

        const std::filesystem::path root = cfg.output.directory;
        std::vector<std::pair<std::string, std::map<std::string, double>>> rows;
        std::vector<PlotRun> plot_runs;
        std::vector<ConceptSpec> plot_concepts;
        std::string aux_rows = "variant,t,p,distance_before,distance_after\r\n";
        for (const auto& v : variants) {
            if (!v.metrics.all_finite()) {
                throw NumericalError("variant " + v.name + ": metrics are not finite");
            }
            LoadedConfig vc = cfg;
            vc.run = v.config;
            vc.concepts = v.registry.concepts();
            if (axis == AblationAxis::Feedback) {
                vc.output.trajectory = true;
            }
            write_bundle(root / v.name, v.name, vc, v.registry, v.artifact, err);
            rows.emplace_back(v.name, v.artifact.metrics);
            plot_runs.push_back(PlotRun{v.name, &v.artifact.samples});
            for (const auto& l : v.config.labels) {
                ConceptSpec c = v.registry.at(l);
                if (axis == AblationAxis::Distance) {
                    c.label += " @" + v.name;
                }
                bool dup = false;
                for (const auto& p : plot_concepts) {
                    dup = dup || p.label == c.label;
                }
                if (!dup) plot_concepts.push_back(std::move(c));
            }
            if (axis == AblationAxis::Feedback) {
                for (const auto& r : aux_convergence_trace(v.artifact.traces)) {
                    aux_rows += csv_field(v.name) + "," + std::to_string(r.t) + "," + format_double(r.p) + "," +
                                format_double(r.before) + "," + format_double(r.after) + "\r\n";
                }
            }
            out << v.name << ": toy_bs " << format_double(v.artifact.metrics.at("toy_bs")) << "\n";
        }
        write_file(root / "summary.csv", summary_csv(rows));
        if (axis == AblationAxis::Feedback) {
            write_file(root / "aux_convergence.csv", aux_rows);
        }
        if (cfg.output.svg) {
            emit_svg(plot_runs, plot_concepts, root / "plot.svg", {}, &err);
        }
        out << "wrote " << (root / "summary.csv").string() << " (" << variants.size() << " variants)\n";
        return static_cast<int>(kExitOk);
    });
}

inline void print_verify_table(const std::vector<OracleReport>& reports, std::ostream& out)
{
    std::size_t width = 5;
    for (const auto& r : reports) width = std::max(width, r.name.size());
    char line[512];
    std::snprintf(line, sizeof(line), "%-*s  %12s  %10s  %8s  %s\n", static_cast<int>(width), "check", "max_error",
                  "tolerance", "n", "status");
    out << line;
    for (const auto& r : reports) {
        std::snprintf(line, sizeof(line), "%-*s  %12.4e  %10.3g  %8zu  %s\n", static_cast<int>(width),
                      r.name.c_str(), r.max_error, r.tolerance, r.sample_size, r.pass ? "PASS" : "FAIL");
        out << line;
        if (!r.detail.empty() && !r.pass) {
            out << "    " << r.detail << "\n";
        }
    }
}

/// `blendlab verify`: runs the oracle suite, exit 0 iff every check passes.
inline int cmd_verify(bool full, std::ostream& out, std::ostream& err, const ScoreFn& score_fn = reference_score)
{
    return detail::guarded(err, [&] {
        VerifyOptions opt;
        opt.full = full;
        opt.score_fn = score_fn;
        const auto started = std::chrono::steady_clock::now();
        const auto reports = run_verify_suite(opt);
        print_verify_table(reports, out);
        std::size_t failed = 0;
        for (const auto& r : reports) failed += r.pass ? 0 : 1;
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        out << (failed ? std::to_string(failed) + " check(s) failed" : std::string("all checks passed")) << " in "
            << detail::seconds(secs) << " s\n";
        return static_cast<int>(failed ? kExitVerifyFailed : kExitOk);
    });
}

} // namespace blendlab
