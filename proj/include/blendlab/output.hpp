// Copyright (C) 2026 blendlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "blendlab/blend.hpp"
#include "blendlab/metrics.hpp"

namespace blendlab {

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v)
{
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// RFC 4180 field: quoted when it contains a comma, quote or line break.
inline std::string csv_field(std::string_view s)
{
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) {
        return std::string(s);
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

struct NamedSamples {
    std::string run_id;
    const Matrix* samples = nullptr;
};

/// Header `run_id,chain,x0..x{d-1}`; CRLF line endings per RFC 4180.
inline std::string samples_csv(const std::vector<NamedSamples>& runs)
{
    if (runs.empty()) {
        throw std::invalid_argument("samples_csv: no runs");
    }
    const Eigen::Index d = runs.front().samples->cols();
    std::string out = "run_id,chain";
    for (Eigen::Index j = 0; j < d; ++j) {
        out += ",x" + std::to_string(j);
    }
    out += "\r\n";
    for (const auto& run : runs) {
        const Matrix& m = *run.samples;
        if (m.cols() != d) {
            throw std::invalid_argument("samples_csv: runs differ in dimension");
        }
        const std::string id = csv_field(run.run_id);
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            out += id;
            out += ',';
            out += std::to_string(i);
            for (Eigen::Index j = 0; j < d; ++j) {
                out += ',';
                out += format_double(m(i, j));
            }
            out += "\r\n";
        }
    }
    return out;
}

inline std::string samples_csv(std::string run_id, const Matrix& samples)
{
    return samples_csv({NamedSamples{std::move(run_id), &samples}});
}

/// Header `chain,t,stage,latent,k,x0..`. Blending rows carry the latents
/// that enter the denoiser (interpolated blend, feedback-updated auxiliaries);
/// `k` is empty for the blending latent.
inline std::string trajectory_csv(const std::vector<ChainTrace>& traces, Eigen::Index dimension)
{
    std::string out = "chain,t,stage,latent,k";
    for (Eigen::Index j = 0; j < dimension; ++j) {
        out += ",x" + std::to_string(j);
    }
    out += "\r\n";
    auto coords = [&](const Vector& v) {
        for (Eigen::Index j = 0; j < v.size(); ++j) {
            out += ',';
            out += format_double(v[j]);
        }
        out += "\r\n";
    };
    for (const auto& tr : traces) {
        for (const auto& s : tr.steps) {
            const std::string prefix =
                std::to_string(tr.chain) + "," + std::to_string(s.t) + "," + std::string(to_string(s.stage));
            out += prefix + ",blend,";
            coords(s.blend);
            for (std::size_t k = 0; k < s.aux.size(); ++k) {
                out += prefix + ",aux," + std::to_string(k);
                coords(s.aux[k]);
            }
        }
    }
    return out;
}

inline std::string aux_convergence_csv(const std::vector<AuxConvergenceRow>& rows)
{
    std::string out = "t,p,distance_before,distance_after\r\n";
    for (const auto& r : rows) {
        out += std::to_string(r.t) + "," + format_double(r.p) + "," + format_double(r.before) + "," +
               format_double(r.after) + "\r\n";
    }
    return out;
}

/// One row per variant; columns are the union of metric names in sorted order.
inline std::string summary_csv(const std::vector<std::pair<std::string, std::map<std::string, double>>>& rows)
{
    std::vector<std::string> columns;
    {
        std::map<std::string, bool> seen;
        for (const auto& [name, metrics] : rows) {
            for (const auto& [k, v] : metrics) {
                seen[k] = true;
            }
        }
        for (const auto& [k, v] : seen) {
            columns.push_back(k);
        }
    }
    std::string out = "variant";
    for (const auto& c : columns) {
        out += "," + csv_field(c);
    }
    out += "\r\n";
    for (const auto& [name, metrics] : rows) {
        out += csv_field(name);
        for (const auto& c : columns) {
            out += ',';
            if (auto it = metrics.find(c); it != metrics.end()) {
                out += format_double(it->second);
            }
        }
        out += "\r\n";
    }
    return out;
}

inline void write_file(const std::filesystem::path& path, std::string_view content)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) {
        throw std::runtime_error("failed writing " + path.string());
    }
}

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace blendlab
