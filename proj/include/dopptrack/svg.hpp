#pragma once

// Minimal SVG line plots: framed axes, ticks, polylines and a legend.

#include "dopptrack/csv.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace dopptrack {

struct PlotSeries {
    std::string name;
    std::string color;
    std::vector<double> x;
    std::vector<double> y;
    bool step = false;
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool equal_aspect = false;
    int width = 640;
    int height = 480;
};

namespace detail {

inline double nice_step(double span, int target_ticks) {
    const double raw = span / std::max(1, target_ticks);
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double norm = raw / mag;
    const double nice = norm < 1.5 ? 1.0 : norm < 3.0 ? 2.0 : norm < 7.0 ? 5.0 : 10.0;
    return nice * mag;
}

inline std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        default: out += c;
        }
    }
    return out;
}

inline std::string tick_label(double v, double step) {
    std::ostringstream ss;
    const int decimals = step >= 1.0 ? 0 : static_cast<int>(std::ceil(-std::log10(step)));
    ss.setf(std::ios::fixed);
    ss.precision(decimals);
    ss << (std::abs(v) < 0.5 * step * 1e-6 ? 0.0 : v);
    return ss.str();
}

}  // namespace detail

inline std::string render_svg(const PlotSpec& spec, const std::vector<PlotSeries>& series) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series) {
        for (double v : s.x) { x0 = std::min(x0, v); x1 = std::max(x1, v); }
        for (double v : s.y) { y0 = std::min(y0, v); y1 = std::max(y1, v); }
    }
    if (!std::isfinite(x0)) { x0 = 0; x1 = 1; y0 = 0; y1 = 1; }
    if (x1 - x0 < 1e-12) { x0 -= 0.5; x1 += 0.5; }
    if (y1 - y0 < 1e-12) { y0 -= 0.5; y1 += 0.5; }
    const double padx = 0.05 * (x1 - x0), pady = 0.05 * (y1 - y0);
    x0 -= padx; x1 += padx; y0 -= pady; y1 += pady;

    const double left = 70, right = 20, top = 40, bottom = 60;
    const double pw = spec.width - left - right, ph = spec.height - top - bottom;
    if (spec.equal_aspect) {
        const double scale = std::max((x1 - x0) / pw, (y1 - y0) / ph);
        const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
        x0 = cx - 0.5 * scale * pw; x1 = cx + 0.5 * scale * pw;
        y0 = cy - 0.5 * scale * ph; y1 = cy + 0.5 * scale * ph;
    }
    auto sx = [&](double v) { return left + (v - x0) / (x1 - x0) * pw; };
    auto sy = [&](double v) { return top + (y1 - v) / (y1 - y0) * ph; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width << "\" height=\"" << spec.height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << spec.width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
      << detail::escape_xml(spec.title) << "</text>\n";
    o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";

    const double xs = detail::nice_step(x1 - x0, 8), ys = detail::nice_step(y1 - y0, 6);
    for (double v = std::ceil(x0 / xs) * xs; v <= x1; v += xs) {
        o << "<line x1=\"" << sx(v) << "\" y1=\"" << top + ph << "\" x2=\"" << sx(v) << "\" y2=\"" << top + ph + 5
          << "\" stroke=\"black\"/>\n";
        o << "<text x=\"" << sx(v) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
          << detail::tick_label(v, xs) << "</text>\n";
    }
    for (double v = std::ceil(y0 / ys) * ys; v <= y1; v += ys) {
        o << "<line x1=\"" << left - 5 << "\" y1=\"" << sy(v) << "\" x2=\"" << left << "\" y2=\"" << sy(v)
          << "\" stroke=\"black\"/>\n";
        o << "<text x=\"" << left - 8 << "\" y=\"" << sy(v) + 4 << "\" text-anchor=\"end\">"
          << detail::tick_label(v, ys) << "</text>\n";
    }
    o << "<text x=\"" << left + pw / 2 << "\" y=\"" << spec.height - 15 << "\" text-anchor=\"middle\">"
      << detail::escape_xml(spec.x_label) << "</text>\n";
    o << "<text transform=\"translate(18," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << detail::escape_xml(spec.y_label) << "</text>\n";

    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t p = 0; p < std::min(s.x.size(), s.y.size()); ++p) {
            if (s.step && p > 0) o << sx(s.x[p]) << ',' << sy(s.y[p - 1]) << ' ';
            o << sx(s.x[p]) << ',' << sy(s.y[p]) << ' ';
        }
        o << "\"/>\n";
        const double ly = top + 16 + 16 * static_cast<double>(i);
        o << "<line x1=\"" << left + 10 << "\" y1=\"" << ly << "\" x2=\"" << left + 30 << "\" y2=\"" << ly
          << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << left + 36 << "\" y=\"" << ly + 4 << "\">" << detail::escape_xml(s.name) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

inline void write_svg(const std::filesystem::path& path, const PlotSpec& spec, const std::vector<PlotSeries>& series) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CsvError("cannot open " + path.string() + " for writing");
    out << render_svg(spec, series);
}

}  // namespace dopptrack
