#include "mmcvae/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "mmcvae/errors.hpp"

namespace mmcvae {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape(const std::string& text) {
    std::string out;
    for (char c : text) {
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

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

std::string svg_scatter(const Matrix& points, const std::vector<int>& labels, const std::string& title,
                        const std::vector<std::string>& label_names) {
    if (points.cols() != 2) {
        throw DimensionError("svg_scatter: expected 2 columns, got " + points.shape_string());
    }
    if (labels.size() != points.rows()) {
        throw DimensionError("svg_scatter: row/label count mismatch");
    }
    const double width = 520, height = 440, margin = 50, legend = 110;
    double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
    if (!points.empty()) {
        x_lo = x_hi = points(0, 0);
        y_lo = y_hi = points(0, 1);
        for (std::size_t i = 0; i < points.rows(); ++i) {
            x_lo = std::min(x_lo, points(i, 0));
            x_hi = std::max(x_hi, points(i, 0));
            y_lo = std::min(y_lo, points(i, 1));
            y_hi = std::max(y_hi, points(i, 1));
        }
    }
    if (x_hi - x_lo < 1e-12) {
        x_lo -= 1;
        x_hi += 1;
    }
    if (y_hi - y_lo < 1e-12) {
        y_lo -= 1;
        y_hi += 1;
    }
    const double plot_w = width - 2 * margin - legend, plot_h = height - 2 * margin;
    auto px = [&](double v) { return margin + (v - x_lo) / (x_hi - x_lo) * plot_w; };
    auto py = [&](double v) { return height - margin - (v - y_lo) / (y_hi - y_lo) * plot_h; };

    std::map<int, std::size_t> color;
    for (int label : labels) {
        color.emplace(label, 0);
    }
    std::size_t next = 0;
    for (auto& [label, idx] : color) {
        idx = next++ % std::size(kPalette);
    }

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"15\">"
        << escape(title) << "</text>\n";
    out << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << plot_w << "\" height=\"" << plot_h
        << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (std::size_t i = 0; i < points.rows(); ++i) {
        out << "<circle cx=\"" << fixed(px(points(i, 0)), 2) << "\" cy=\"" << fixed(py(points(i, 1)), 2)
            << "\" r=\"2.2\" fill=\"" << kPalette[color.at(labels[i])] << "\" fill-opacity=\"0.6\"/>\n";
    }
    double ly = margin + 10;
    for (const auto& [label, idx] : color) {
        std::string name = std::to_string(label);
        if (label >= 0 && static_cast<std::size_t>(label) < label_names.size()) {
            name = label_names[static_cast<std::size_t>(label)];
        }
        out << "<circle cx=\"" << width - legend - margin / 2 + 20 << "\" cy=\"" << ly << "\" r=\"5\" fill=\""
            << kPalette[idx] << "\"/>\n";
        out << "<text x=\"" << width - legend - margin / 2 + 30 << "\" y=\"" << ly + 4
            << "\" font-family=\"sans-serif\" font-size=\"12\">" << escape(name) << "</text>\n";
        ly += 18;
    }
    out << "</svg>\n";
    return out.str();
}

std::string svg_heatmap(const Matrix& values, const std::vector<std::string>& row_labels,
                        const std::vector<std::string>& col_labels, const std::string& title,
                        const std::string& row_axis, const std::string& col_axis) {
    if (row_labels.size() != values.rows() || col_labels.size() != values.cols()) {
        throw DimensionError("svg_heatmap: label counts do not match " + values.shape_string());
    }
    const double cell = 64, left = 110, top = 60;
    const double width = left + cell * static_cast<double>(values.cols()) + 30;
    const double height = top + cell * static_cast<double>(values.rows()) + 60;
    double lo = 0, hi = 1;
    bool seen = false;
    for (double v : values.values()) {
        if (std::isfinite(v)) {
            lo = seen ? std::min(lo, v) : v;
            hi = seen ? std::max(hi, v) : v;
            seen = true;
        }
    }
    const double span = hi - lo > 1e-12 ? hi - lo : 1.0;

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"15\">"
        << escape(title) << "</text>\n";
    for (std::size_t r = 0; r < values.rows(); ++r) {
        const double y = top + cell * static_cast<double>(r);
        out << "<text x=\"" << left - 8 << "\" y=\"" << y + cell / 2 + 4
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << escape(row_labels[r])
            << "</text>\n";
        for (std::size_t c = 0; c < values.cols(); ++c) {
            const double x = left + cell * static_cast<double>(c);
            const double v = values(r, c);
            std::string fill = "#cccccc";
            if (std::isfinite(v)) {
                const double t = (v - lo) / span;
                const int red = static_cast<int>(std::lround(255 * (1 - t) + 30 * t));
                const int green = static_cast<int>(std::lround(255 * (1 - t) + 90 * t));
                const int blue = static_cast<int>(std::lround(255 * (1 - t) + 170 * t));
                char buf[16];
                std::snprintf(buf, sizeof buf, "#%02x%02x%02x", red, green, blue);
                fill = buf;
            }
            out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
                << "\" fill=\"" << fill << "\" stroke=\"white\"/>\n";
            out << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
                << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
                << (std::isfinite(v) ? fixed(v, 3) : std::string("n/a")) << "</text>\n";
        }
    }
    const double bottom = top + cell * static_cast<double>(values.rows());
    for (std::size_t c = 0; c < values.cols(); ++c) {
        out << "<text x=\"" << left + cell * (static_cast<double>(c) + 0.5) << "\" y=\"" << bottom + 16
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << escape(col_labels[c])
            << "</text>\n";
    }
    out << "<text x=\"" << left + cell * static_cast<double>(values.cols()) / 2 << "\" y=\"" << bottom + 40
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << escape(col_axis)
        << "</text>\n";
    out << "<text x=\"14\" y=\"" << top + cell * static_cast<double>(values.rows()) / 2
        << "\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 14 "
        << top + cell * static_cast<double>(values.rows()) / 2 << ")\" text-anchor=\"middle\">" << escape(row_axis)
        << "</text>\n";
    out << "</svg>\n";
    return out.str();
}

}  // namespace mmcvae
