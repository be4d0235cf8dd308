// Copyright (C) 2026 blendlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "blendlab/ablation.hpp"
#include "blendlab/blend.hpp"
#include "blendlab/concepts.hpp"
#include "blendlab/errors.hpp"
#include "blendlab/output.hpp"

namespace blendlab {

using json = nlohmann::json;

struct OutputSettings {
    std::string directory = "out";
    bool samples = true;
    bool trajectory = false;
    bool metrics = true;
    bool svg = true;
};

/// Everything a config file resolves to.
struct LoadedConfig {
    RunConfig run;
    std::vector<ConceptSpec> concepts;
    OutputSettings output;
    AblationGrids grids;
    /// Stage boundaries as fractions of T when given that way; kept for the echo.
    std::optional<std::pair<double, double>> stage_fractions;
};

namespace detail {

/// 1-based line of a byte offset.
inline std::size_t line_of_offset(std::string_view text, std::size_t offset)
{
    offset = std::min(offset, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

/// Best-effort source line of a dotted field path ("policy.strategy",
/// "concepts[1].means"): each key is searched for after the previous one,
/// and an index [i] on an array of objects skips to the (i+1)-th occurrence
/// of the following key.
inline std::optional<std::size_t> locate_field(std::string_view text, std::string_view path)
{
    std::size_t pos = 0;
    bool found = false;
    std::size_t start = 0;
    std::size_t skip = 0;
    while (start <= path.size()) {
        std::size_t end = path.find('.', start);
        if (end == std::string_view::npos) end = path.size();
        std::string_view key = path.substr(start, end - start);
        std::size_t index = 0;
        if (auto br = key.find('['); br != std::string_view::npos) {
            index = static_cast<std::size_t>(std::strtoul(std::string(key.substr(br + 1)).c_str(), nullptr, 10));
            key = key.substr(0, br);
        }
        if (!key.empty()) {
            const std::string quoted = "\"" + std::string(key) + "\"";
            std::size_t at = text.find(quoted, pos);
            for (std::size_t s = 0; s < skip && at != std::string_view::npos; ++s) {
                at = text.find(quoted, at + quoted.size());
            }
            if (at == std::string_view::npos) break;
            pos = at;
            found = true;
        }
        skip = index;
        start = end + 1;
    }
    if (!found) return std::nullopt;
    return line_of_offset(text, pos);
}

class Reader {
public:
    explicit Reader(std::string_view text) : text_(text) {}

    [[noreturn]] void fail(const std::string& field, const std::string& message) const
    {
        throw ConfigError(field, message, locate_field(text_, field));
    }

    void only_keys(const json& obj, const std::string& field, std::initializer_list<std::string_view> allowed) const
    {
        if (!obj.is_object()) {
            fail(field, "expected an object");
        }
        for (const auto& [k, v] : obj.items()) {
            if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
                fail(join(field, k), "unknown key");
            }
        }
    }

    double number(const json& v, const std::string& field) const
    {
        if (!v.is_number()) fail(field, "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) fail(field, "must be finite");
        return d;
    }

    std::int64_t integer(const json& v, const std::string& field) const
    {
        if (v.is_number_integer()) return v.get<std::int64_t>();
        if (v.is_number_float()) {
            const double d = v.get<double>();
            if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9.0e15) {
                return static_cast<std::int64_t>(d);
            }
        }
        fail(field, "expected an integer");
    }

    std::uint64_t seed(const json& v, const std::string& field) const
    {
        if (v.is_number_unsigned()) return v.get<std::uint64_t>();
        if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
        fail(field, "expected a nonnegative 64-bit integer");
    }

    bool boolean(const json& v, const std::string& field) const
    {
        if (!v.is_boolean()) fail(field, "expected true or false");
        return v.get<bool>();
    }

    std::string string(const json& v, const std::string& field) const
    {
        if (!v.is_string()) fail(field, "expected a string");
        return v.get<std::string>();
    }

    Vector vector(const json& v, const std::string& field) const
    {
        if (!v.is_array() || v.empty()) fail(field, "expected a non-empty array of numbers");
        Vector out(static_cast<Eigen::Index>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) {
            out[static_cast<Eigen::Index>(i)] = number(v[i], field + "[" + std::to_string(i) + "]");
        }
        return out;
    }

    Matrix matrix(const json& v, const std::string& field) const
    {
        if (!v.is_array() || v.empty()) fail(field, "expected a non-empty array of rows");
        const auto rows = static_cast<Eigen::Index>(v.size());
        Matrix out(rows, rows);
        for (Eigen::Index r = 0; r < rows; ++r) {
            const std::string rf = field + "[" + std::to_string(r) + "]";
            const Vector row = vector(v[static_cast<std::size_t>(r)], rf);
            if (row.size() != rows) fail(rf, "covariance must be square");
            out.row(r) = row.transpose();
        }
        return out;
    }

    static std::string join(const std::string& parent, std::string_view key)
    {
        return parent.empty() ? std::string(key) : parent + "." + std::string(key);
    }

private:
    std::string_view text_;
};

inline ConceptSpec parse_concept(const Reader& rd, const json& v, const std::string& field)
{
    rd.only_keys(v, field, {"label", "weights", "means", "covariances"});
    for (const char* k : {"label", "means", "covariances"}) {
        if (!v.contains(k)) rd.fail(Reader::join(field, k), "missing");
    }
    ConceptSpec spec;
    spec.label = rd.string(v["label"], Reader::join(field, "label"));
    if (spec.label.empty()) rd.fail(Reader::join(field, "label"), "label must not be empty");
    const json& means = v["means"];
    const json& covs = v["covariances"];
    if (!means.is_array() || means.empty()) rd.fail(Reader::join(field, "means"), "expected a list of mean vectors");
    if (!covs.is_array() || covs.size() != means.size()) {
        rd.fail(Reader::join(field, "covariances"), "concept '" + spec.label + "': need one covariance per mean");
    }
    std::vector<double> weights(means.size(), 1.0 / static_cast<double>(means.size()));
    if (v.contains("weights")) {
        const Vector w = rd.vector(v["weights"], Reader::join(field, "weights"));
        if (static_cast<std::size_t>(w.size()) != means.size()) {
            rd.fail(Reader::join(field, "weights"), "concept '" + spec.label + "': need one weight per mean");
        }
        weights.assign(w.data(), w.data() + w.size());
    }
    for (std::size_t k = 0; k < means.size(); ++k) {
        const std::string idx = "[" + std::to_string(k) + "]";
        GaussianComponent c;
        c.weight = weights[k];
        c.mean = rd.vector(means[k], Reader::join(field, "means") + idx);
        c.covariance = rd.matrix(covs[k], Reader::join(field, "covariances") + idx);
        spec.mixture.components.push_back(std::move(c));
    }
    try {
        spec.validate();
    } catch (const std::invalid_argument& e) {
        rd.fail(Reader::join(field, "covariances"), e.what());
    }
    return spec;
}

} // namespace detail

/// Parses a JSON config document. Sections: schedule, stages, policy,
/// concepts, run, output, and an optional ablation section; unknown keys
/// anywhere are errors. Missing keys take the bundled defaults.
inline LoadedConfig parse_config(std::string_view text)
{
    json doc;
    try {
        doc = json::parse(text.begin(), text.end(), nullptr, true, false);
    } catch (const json::parse_error& e) {
        const std::size_t byte = e.byte > 0 ? e.byte - 1 : 0;
        throw ConfigError("", std::string("malformed JSON: ") + e.what(), detail::line_of_offset(text, byte));
    }
    const detail::Reader rd(text);
    rd.only_keys(doc, "", {"schedule", "stages", "policy", "concepts", "run", "output", "ablation"});

    LoadedConfig out;
    RunConfig& rc = out.run;
    rc = RunConfig{};
    rc.master_seed = 42;
    rc.chain_count = 2000;

    if (doc.contains("schedule")) {
        const json& s = doc["schedule"];
        rd.only_keys(s, "schedule", {"T", "beta_start", "beta_end"});
        if (s.contains("T")) {
            const auto T = rd.integer(s["T"], "schedule.T");
            if (T < 1 || T > 100000) rd.fail("schedule.T", "must lie in [1, 100000]");
            rc.schedule.step_count = static_cast<int>(T);
        }
        if (s.contains("beta_start")) rc.schedule.beta_start = rd.number(s["beta_start"], "schedule.beta_start");
        if (s.contains("beta_end")) rc.schedule.beta_end = rd.number(s["beta_end"], "schedule.beta_end");
        try {
            (void)rc.schedule.build();
        } catch (const std::invalid_argument& e) {
            rd.fail("schedule", e.what());
        }
    }
    const int T = rc.schedule.step_count;

    double ts_frac = 0.88;
    double te_frac = 0.12;
    std::optional<int> ts_abs;
    std::optional<int> te_abs;
    if (doc.contains("stages")) {
        const json& s = doc["stages"];
        rd.only_keys(s, "stages", {"t_s", "t_e", "ts_frac", "te_frac", "init", "refine"});
        if (s.contains("t_s") && s.contains("ts_frac")) rd.fail("stages.ts_frac", "give t_s or ts_frac, not both");
        if (s.contains("t_e") && s.contains("te_frac")) rd.fail("stages.te_frac", "give t_e or te_frac, not both");
        if (s.contains("t_s")) ts_abs = static_cast<int>(rd.integer(s["t_s"], "stages.t_s"));
        if (s.contains("t_e")) te_abs = static_cast<int>(rd.integer(s["t_e"], "stages.t_e"));
        if (s.contains("ts_frac")) ts_frac = rd.number(s["ts_frac"], "stages.ts_frac");
        if (s.contains("te_frac")) te_frac = rd.number(s["te_frac"], "stages.te_frac");
        for (const auto& [name, f] : {std::pair{"stages.ts_frac", ts_frac}, std::pair{"stages.te_frac", te_frac}}) {
            if (!(f >= 0.0 && f <= 1.0)) rd.fail(name, "fraction must lie in [0, 1]");
        }
        if (s.contains("init")) rc.init_stage_on = rd.boolean(s["init"], "stages.init");
        if (s.contains("refine")) rc.refine_stage_on = rd.boolean(s["refine"], "stages.refine");
    }
    rc.stages.t_start = ts_abs ? *ts_abs : round_fraction_of_steps(ts_frac, T);
    rc.stages.t_end = te_abs ? *te_abs : round_fraction_of_steps(te_frac, T);
    if (!ts_abs || !te_abs) {
        out.stage_fractions = std::pair{ts_frac, te_frac};
    }
    try {
        rc.stages.validate(T);
    } catch (const std::invalid_argument& e) {
        rd.fail("stages", e.what());
    }

    if (doc.contains("policy")) {
        const json& p = doc["policy"];
        rd.only_keys(p, "policy", {"gammas", "strategy", "invariant_p", "w", "feedback"});
        if (p.contains("gammas")) {
            const Vector g = rd.vector(p["gammas"], "policy.gammas");
            rc.policy.gammas.assign(g.data(), g.data() + g.size());
        }
        if (p.contains("strategy")) {
            try {
                rc.policy.strategy = parse_strategy(rd.string(p["strategy"], "policy.strategy"));
            } catch (const std::invalid_argument& e) {
                rd.fail("policy.strategy", e.what());
            }
        }
        if (p.contains("invariant_p")) rc.policy.invariant_p = rd.number(p["invariant_p"], "policy.invariant_p");
        if (p.contains("w")) rc.policy.guidance_w = rd.number(p["w"], "policy.w");
        if (p.contains("feedback")) rc.policy.feedback_enabled = rd.boolean(p["feedback"], "policy.feedback");
        try {
            rc.policy.validate();
        } catch (const std::invalid_argument& e) {
            rd.fail("policy", e.what());
        }
    }

    if (doc.contains("concepts")) {
        const json& cs = doc["concepts"];
        if (!cs.is_array() || cs.empty()) rd.fail("concepts", "expected a non-empty list of concepts");
        std::set<std::string> seen;
        for (std::size_t i = 0; i < cs.size(); ++i) {
            ConceptSpec spec = detail::parse_concept(rd, cs[i], "concepts[" + std::to_string(i) + "]");
            if (!seen.insert(spec.label).second) {
                rd.fail("concepts[" + std::to_string(i) + "].label", "duplicate concept label '" + spec.label + "'");
            }
            out.concepts.push_back(std::move(spec));
        }
    } else {
        out.concepts = {isotropic_concept("A", Vector{{-3.0, 0.0}}), isotropic_concept("B", Vector{{3.0, 0.0}})};
    }
    for (std::size_t i = 1; i < out.concepts.size(); ++i) {
        if (out.concepts[i].mixture.dimension() != out.concepts[0].mixture.dimension()) {
            rd.fail("concepts[" + std::to_string(i) + "].means",
                    "concept '" + out.concepts[i].label + "' differs in dimension from '" + out.concepts[0].label +
                        "'");
        }
    }
    rc.dimension = out.concepts.front().mixture.dimension();

    // Blended labels default to the first N concepts, N = number of gammas.
    rc.labels.clear();
    if (doc.contains("run")) {
        const json& r = doc["run"];
        rd.only_keys(r, "run",
                     {"dim", "sampler", "chains", "seed", "record_trajectories", "trajectory_chains", "blend",
                      "reference_points", "clamp_x0"});
        if (r.contains("dim")) {
            const auto d = rd.integer(r["dim"], "run.dim");
            if (d != rc.dimension) {
                rd.fail("run.dim", "dim " + std::to_string(d) + " does not match concept dimension " +
                                       std::to_string(rc.dimension));
            }
        }
        if (r.contains("sampler")) {
            try {
                rc.reverse.sampler = parse_sampler(rd.string(r["sampler"], "run.sampler"));
            } catch (const std::invalid_argument& e) {
                rd.fail("run.sampler", e.what());
            }
        }
        if (r.contains("chains")) {
            const auto n = rd.integer(r["chains"], "run.chains");
            if (n < 1) rd.fail("run.chains", "must be at least 1");
            rc.chain_count = static_cast<std::size_t>(n);
        }
        if (r.contains("seed")) rc.master_seed = rd.seed(r["seed"], "run.seed");
        if (r.contains("record_trajectories")) {
            rc.record_trajectories = rd.boolean(r["record_trajectories"], "run.record_trajectories");
        }
        if (r.contains("trajectory_chains")) {
            const auto n = rd.integer(r["trajectory_chains"], "run.trajectory_chains");
            if (n < 1) rd.fail("run.trajectory_chains", "must be at least 1");
            rc.trajectory_chain_limit = static_cast<std::size_t>(n);
        }
        if (r.contains("blend")) {
            const json& b = r["blend"];
            if (!b.is_array() || b.empty()) rd.fail("run.blend", "expected a non-empty list of concept labels");
            for (std::size_t i = 0; i < b.size(); ++i) {
                rc.labels.push_back(rd.string(b[i], "run.blend[" + std::to_string(i) + "]"));
            }
        }
        if (r.contains("reference_points")) {
            const json& pts = r["reference_points"];
            if (!pts.is_array()) rd.fail("run.reference_points", "expected a list of points");
            std::vector<Vector> refs;
            for (std::size_t i = 0; i < pts.size(); ++i) {
                refs.push_back(rd.vector(pts[i], "run.reference_points[" + std::to_string(i) + "]"));
            }
            rc.reference_points = std::move(refs);
        }
        if (r.contains("clamp_x0")) {
            const Vector box = rd.vector(r["clamp_x0"], "run.clamp_x0");
            if (box.size() != 2 || !(box[0] < box[1])) rd.fail("run.clamp_x0", "expected [lo, hi] with lo < hi");
            rc.reverse.clamp_x0 = ClampBox{box[0], box[1]};
        }
    }
    if (rc.labels.empty()) {
        if (rc.policy.gammas.size() > out.concepts.size()) {
            rd.fail("policy.gammas", "more gammas than concepts");
        }
        for (std::size_t i = 0; i < rc.policy.gammas.size(); ++i) {
            rc.labels.push_back(out.concepts[i].label);
        }
    }

    if (doc.contains("output")) {
        const json& o = doc["output"];
        rd.only_keys(o, "output", {"directory", "formats"});
        if (o.contains("directory")) {
            out.output.directory = rd.string(o["directory"], "output.directory");
            if (out.output.directory.empty()) rd.fail("output.directory", "must not be empty");
        }
        if (o.contains("formats")) {
            const json& f = o["formats"];
            if (!f.is_array()) rd.fail("output.formats", "expected a list");
            out.output.samples = out.output.trajectory = out.output.metrics = out.output.svg = false;
            for (std::size_t i = 0; i < f.size(); ++i) {
                const std::string field = "output.formats[" + std::to_string(i) + "]";
                const std::string name = rd.string(f[i], field);
                if (name == "samples") out.output.samples = true;
                else if (name == "trajectory") out.output.trajectory = true;
                else if (name == "metrics") out.output.metrics = true;
                else if (name == "svg") out.output.svg = true;
                else rd.fail(field, "unknown format '" + name + "' (samples, trajectory, metrics, svg)");
            }
        }
    }
    if (out.output.trajectory) {
        rc.record_trajectories = true;
    }

    if (doc.contains("ablation")) {
        const json& a = doc["ablation"];
        rd.only_keys(a, "ablation", {"gamma_ratios", "distances"});
        if (a.contains("gamma_ratios")) {
            const Vector g = rd.vector(a["gamma_ratios"], "ablation.gamma_ratios");
            out.grids.gamma_ratios.assign(g.data(), g.data() + g.size());
        }
        if (a.contains("distances")) {
            const Vector d = rd.vector(a["distances"], "ablation.distances");
            out.grids.distances.assign(d.data(), d.data() + d.size());
        }
    }

    try {
        const DenoiserRegistry reg(out.concepts);
        rc.validate(reg);
    } catch (const ConfigError&) {
        throw;
    } catch (const UnknownConceptError& e) {
        rd.fail("run.blend", e.what());
    } catch (const std::exception& e) {
        rd.fail("run", e.what());
    }
    return out;
}

inline LoadedConfig load_config(const std::filesystem::path& path)
{
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::runtime_error& e) {
        throw ConfigError("", e.what());
    }
    return parse_config(text);
}

namespace detail {
inline json to_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline json to_json(const Matrix& m)
{
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        rows.push_back(to_json(Vector(m.row(r).transpose())));
    }
    return rows;
}
} // namespace detail

/// Canonical, fully resolved form of a config (all defaults filled in).
/// Parsing the echo yields the same run.
inline json config_echo(const LoadedConfig& cfg)
{
    const RunConfig& rc = cfg.run;
    json j;
    j["schedule"] = {{"T", rc.schedule.step_count},
                     {"beta_start", rc.schedule.beta_start},
                     {"beta_end", rc.schedule.beta_end}};
    j["stages"] = {{"t_s", rc.stages.t_start},
                   {"t_e", rc.stages.t_end},
                   {"init", rc.init_stage_on},
                   {"refine", rc.refine_stage_on}};
    j["policy"] = {{"gammas", rc.policy.gammas},
                   {"strategy", std::string(to_string(rc.policy.strategy))},
                   {"invariant_p", rc.policy.invariant_p},
                   {"w", rc.policy.guidance_w},
                   {"feedback", rc.policy.feedback_enabled}};
    json concepts = json::array();
    for (const auto& c : cfg.concepts) {
        json weights = json::array(), means = json::array(), covs = json::array();
        for (const auto& comp : c.mixture.components) {
            weights.push_back(comp.weight);
            means.push_back(detail::to_json(comp.mean));
            covs.push_back(detail::to_json(comp.covariance));
        }
        concepts.push_back({{"label", c.label}, {"weights", weights}, {"means", means}, {"covariances", covs}});
    }
    j["concepts"] = concepts;
    json run = {{"dim", rc.dimension},
                {"sampler", std::string(to_string(rc.reverse.sampler))},
                {"chains", rc.chain_count},
                {"seed", rc.master_seed},
                {"record_trajectories", rc.record_trajectories},
                {"blend", rc.labels}};
    if (rc.trajectory_chain_limit != std::numeric_limits<std::size_t>::max()) {
        run["trajectory_chains"] = rc.trajectory_chain_limit;
    }
    if (rc.reference_points) {
        json pts = json::array();
        for (const auto& p : *rc.reference_points) pts.push_back(detail::to_json(p));
        run["reference_points"] = pts;
    }
    if (rc.reverse.clamp_x0) {
        run["clamp_x0"] = {rc.reverse.clamp_x0->lo, rc.reverse.clamp_x0->hi};
    }
    j["run"] = run;
    json formats = json::array();
    if (cfg.output.samples) formats.push_back("samples");
    if (cfg.output.trajectory) formats.push_back("trajectory");
    if (cfg.output.metrics) formats.push_back("metrics");
    if (cfg.output.svg) formats.push_back("svg");
    j["output"] = {{"directory", cfg.output.directory}, {"formats", formats}};
    j["ablation"] = {{"gamma_ratios", cfg.grids.gamma_ratios}, {"distances", cfg.grids.distances}};
    return j;
}

} // namespace blendlab
