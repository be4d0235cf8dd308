// Copyright (C) 2026 blendlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "blendlab/concepts.hpp"
#include "blendlab/output.hpp"

namespace blendlab {

struct PlotRun {
    std::string name;
    const Matrix* samples = nullptr;
};

struct SvgOptions {
    int canvas = 800;
    int margin = 60;
    /// Points drawn per run; larger runs are thinned by a fixed stride.
    std::size_t max_points_per_run = 4000;
    double point_radius = 1.6;
};

inline constexpr std::array<const char*, 10> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                                      "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

namespace detail {

inline std::string fixed(double v, int digits = 2)
{
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    std::string s(buf);
    if (s == "-0.00" || s == "-0.0" || s == "-0") {
        s.erase(0, 1);
    }
    return s;
}

inline std::string xml_escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

struct Ellipse {
    double rx, ry, angle_deg;
};

inline Ellipse one_sigma(const Matrix& cov2)
{
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(Eigen::Matrix2d(cov2.topLeftCorner(2, 2)));
    const auto vals = es.eigenvalues();
    const auto vecs = es.eigenvectors();
    const double angle = std::atan2(vecs(1, 1), vecs(0, 1)) * 180.0 / std::numbers::pi;
    return {std::sqrt(std::max(vals[1], 0.0)), std::sqrt(std::max(vals[0], 0.0)), angle};
}

} // namespace detail

/// Standalone SVG 1.1 scatter plot: one colour per run, every concept
/// component drawn as a 1-sigma ellipse with its mean marked. Dimensions
/// above two are projected onto (x0, x1); `warnings` receives a note then.
inline std::string render_svg(const std::vector<PlotRun>& runs, const std::vector<ConceptSpec>& concepts,
                              const SvgOptions& opt = {}, std::ostream* warnings = nullptr)
{
    std::size_t total = 0;
    Eigen::Index dim = -1;
    for (const auto& r : runs) {
        if (!r.samples) {
            throw std::invalid_argument("render_svg: null sample matrix");
        }
        total += static_cast<std::size_t>(r.samples->rows());
        if (r.samples->rows() > 0) {
            if (dim >= 0 && r.samples->cols() != dim) {
                throw std::invalid_argument("render_svg: runs differ in dimension");
            }
            dim = r.samples->cols();
        }
    }
    if (total == 0) {
        throw std::invalid_argument("render_svg: empty sample set");
    }
    if (dim < 1) {
        throw std::invalid_argument("render_svg: samples have no coordinates");
    }
    if (dim > 2 && warnings) {
        *warnings << "warning: " << dim << "-dimensional samples projected onto x0, x1 for plotting\n";
    }
    auto coord = [dim](const auto& row, Eigen::Index j) { return j < dim ? row(j) : 0.0; };

    // Data bounds over samples and 2-sigma concept extents.
    double lo_x = std::numeric_limits<double>::infinity(), hi_x = -lo_x, lo_y = lo_x, hi_y = -lo_x;
    auto extend = [&](double x, double y) {
        if (!std::isfinite(x) || !std::isfinite(y)) return;
        lo_x = std::min(lo_x, x);
        hi_x = std::max(hi_x, x);
        lo_y = std::min(lo_y, y);
        hi_y = std::max(hi_y, y);
    };
    for (const auto& r : runs) {
        for (Eigen::Index i = 0; i < r.samples->rows(); ++i) {
            extend(coord(r.samples->row(i), 0), coord(r.samples->row(i), 1));
        }
    }
    for (const auto& c : concepts) {
        for (const auto& comp : c.mixture.components) {
            const double mx = comp.mean[0];
            const double my = comp.mean.size() > 1 ? comp.mean[1] : 0.0;
            const double sx = 2.0 * std::sqrt(comp.covariance(0, 0));
            const double sy = comp.mean.size() > 1 ? 2.0 * std::sqrt(comp.covariance(1, 1)) : 0.0;
            extend(mx - sx, my - sy);
            extend(mx + sx, my + sy);
        }
    }
    if (!std::isfinite(lo_x)) {
        lo_x = lo_y = -1.0;
        hi_x = hi_y = 1.0;
    }
    // Equal scaling on both axes so ellipses keep their shape.
    const double span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-9}) * 1.05;
    const double cx = 0.5 * (lo_x + hi_x);
    const double cy = 0.5 * (lo_y + hi_y);
    const double inner = opt.canvas - 2.0 * opt.margin;
    const double scale = inner / span;
    auto px = [&](double x) { return opt.margin + inner / 2.0 + (x - cx) * scale; };
    auto py = [&](double y) { return opt.margin + inner / 2.0 - (y - cy) * scale; };

    const std::string size = std::to_string(opt.canvas);
    std::string out;
    out += "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n";
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + size + "\" height=\"" + size +
           "\" viewBox=\"0 0 " + size + " " + size + "\">\n";
    out += "<rect x=\"0\" y=\"0\" width=\"" + size + "\" height=\"" + size + "\" fill=\"#ffffff\"/>\n";
    out += "<rect x=\"" + std::to_string(opt.margin) + "\" y=\"" + std::to_string(opt.margin) + "\" width=\"" +
           detail::fixed(inner) + "\" height=\"" + detail::fixed(inner) +
           "\" fill=\"none\" stroke=\"#cccccc\"/>\n";

    for (std::size_t r = 0; r < runs.size(); ++r) {
        const Matrix& m = *runs[r].samples;
        const char* colour = kPalette[r % kPalette.size()];
        out += "<g class=\"run\" id=\"run-" + std::to_string(r) + "\" fill=\"" + colour +
               "\" fill-opacity=\"0.45\">\n";
        const auto n = static_cast<std::size_t>(m.rows());
        const std::size_t stride = std::max<std::size_t>(1, (n + opt.max_points_per_run - 1) / opt.max_points_per_run);
        for (std::size_t i = 0; i < n; i += stride) {
            const auto row = m.row(static_cast<Eigen::Index>(i));
            const double x = coord(row, 0);
            const double y = coord(row, 1);
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            out += "<circle cx=\"" + detail::fixed(px(x)) + "\" cy=\"" + detail::fixed(py(y)) + "\" r=\"" +
                   detail::fixed(opt.point_radius) + "\"/>\n";
        }
        out += "</g>\n";
    }

    for (const auto& c : concepts) {
        for (std::size_t k = 0; k < c.mixture.components.size(); ++k) {
            const auto& comp = c.mixture.components[k];
            Matrix cov2 = Matrix::Zero(2, 2);
            Vector mu2 = Vector::Zero(2);
            const Eigen::Index keep = std::min<Eigen::Index>(2, comp.mean.size());
            mu2.head(keep) = comp.mean.head(keep);
            cov2.topLeftCorner(keep, keep) = comp.covariance.topLeftCorner(keep, keep);
            const auto e = detail::one_sigma(cov2);
            const std::string mx = detail::fixed(px(mu2[0]));
            const std::string my = detail::fixed(py(mu2[1]));
            out += "<g class=\"component\" data-concept=\"" + detail::xml_escape(c.label) + "\" data-index=\"" +
                   std::to_string(k) + "\">\n";
            // SVG y points down, so the rotation flips sign.
            out += "<ellipse cx=\"" + mx + "\" cy=\"" + my + "\" rx=\"" + detail::fixed(e.rx * scale) + "\" ry=\"" +
                   detail::fixed(e.ry * scale) + "\" transform=\"rotate(" + detail::fixed(-e.angle_deg) + " " + mx +
                   " " + my + ")\" fill=\"none\" stroke=\"#000000\" stroke-width=\"1.5\"/>\n";
            out += "<path d=\"M " + detail::fixed(px(mu2[0]) - 6) + " " + my + " H " + detail::fixed(px(mu2[0]) + 6) +
                   " M " + mx + " " + detail::fixed(py(mu2[1]) - 6) + " V " + detail::fixed(py(mu2[1]) + 6) +
                   "\" stroke=\"#000000\" stroke-width=\"2\"/>\n";
            out += "<text x=\"" + detail::fixed(px(mu2[0]) + 8) + "\" y=\"" + detail::fixed(py(mu2[1]) - 8) +
                   "\" font-family=\"sans-serif\" font-size=\"12\">" + detail::xml_escape(c.label) + "</text>\n";
            out += "</g>\n";
        }
    }

    out += "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"13\">\n";
    for (std::size_t r = 0; r < runs.size(); ++r) {
        const int y = opt.margin / 2 + static_cast<int>(r) * 18 - 6;
        out += "<rect x=\"" + std::to_string(opt.margin) + "\" y=\"" + std::to_string(y) +
               "\" width=\"12\" height=\"12\" fill=\"" + kPalette[r % kPalette.size()] + "\"/>\n";
        out += "<text x=\"" + std::to_string(opt.margin + 18) + "\" y=\"" + std::to_string(y + 11) + "\">" +
               detail::xml_escape(runs[r].name) + "</text>\n";
    }
    out += "</g>\n</svg>\n";
    return out;
}

/// Renders and writes; nothing is written when rendering fails.
inline void emit_svg(const std::vector<PlotRun>& runs, const std::vector<ConceptSpec>& concepts,
                     const std::filesystem::path& out_path, const SvgOptions& opt = {},
                     std::ostream* warnings = nullptr)
{
    const std::string svg = render_svg(runs, concepts, opt, warnings);
    write_file(out_path, svg);
}

} // namespace blendlab
