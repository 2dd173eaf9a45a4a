#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sigmor/io.hpp"

namespace sigmor {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct ChartSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_y = false;
    int width = 760;
    int height = 480;
};

namespace detail {

inline std::string px(double v) {
    return format_double(std::round(v * 100.0) / 100.0);
}

/// Tick positions on a 1-2-5 ladder covering [lo, hi] with roughly `want`
/// intervals.
inline std::vector<double> linear_ticks(double lo, double hi, int want = 6) {
    if (!(hi > lo)) {
        const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.5;
        lo -= pad;
        hi += pad;
    }
    const double raw = (hi - lo) / want;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double mult : {1.0, 2.0, 5.0, 10.0}) {
        step = mult * mag;
        if ((hi - lo) / step <= want + 1) break;
    }
    std::vector<double> out;
    double t = std::ceil(lo / step) * step;
    for (; t <= hi + 0.5 * step; t += step) {
        double v = t;
        if (std::abs(v) < 1e-12 * step) v = 0.0;
        out.push_back(v);
    }
    return out;
}

inline std::vector<int> decade_ticks(double lo, double hi) {
    const int a = static_cast<int>(std::ceil(std::log10(lo) - 1e-9));
    const int b = static_cast<int>(std::floor(std::log10(hi) + 1e-9));
    std::vector<int> out;
    for (int e = a; e <= b; ++e) out.push_back(e);
    if (out.empty()) out.push_back(static_cast<int>(std::floor(std::log10(lo))));
    return out;
}

inline const char* series_color(std::size_t k) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    return palette[k % (sizeof(palette) / sizeof(palette[0]))];
}

inline void xml_escape(std::ostringstream& os, const std::string& s) {
    for (char c : s) {
        if (c == '&') os << "&amp;";
        else if (c == '<') os << "&lt;";
        else if (c == '>') os << "&gt;";
        else os << c;
    }
}

} // namespace detail

/// Static SVG line chart. Series are drawn as polylines in a fixed palette
/// with a legend. With log_y, nonpositive values break the polyline rather
/// than being clamped, so exactly-zero tails simply end the curve.
inline std::string line_chart_svg(const ChartSpec& spec, const std::vector<Series>& series) {
    if (series.empty()) throw std::invalid_argument("line_chart_svg: no series");
    double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
    double y_lo = std::numeric_limits<double>::infinity(), y_hi = -y_lo;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size())
            throw std::invalid_argument("line_chart_svg: series length mismatch");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            if (spec.log_y && !(s.y[i] > 0.0)) continue;
            x_lo = std::min(x_lo, s.x[i]);
            x_hi = std::max(x_hi, s.x[i]);
            y_lo = std::min(y_lo, s.y[i]);
            y_hi = std::max(y_hi, s.y[i]);
        }
    }
    if (!(x_lo <= x_hi))
        throw std::invalid_argument("line_chart_svg: no plottable points");
    if (x_lo == x_hi) {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    if (spec.log_y) {
        if (y_lo == y_hi) {
            y_lo *= 0.5;
            y_hi *= 2.0;
        }
    } else if (y_lo == y_hi) {
        const double pad = y_lo == 0.0 ? 1.0 : std::abs(y_lo) * 0.1;
        y_lo -= pad;
        y_hi += pad;
    }

    const double ml = 78, mr = 22, mt = 42, mb = 56;
    const double pw = spec.width - ml - mr;
    const double ph = spec.height - mt - mb;
    auto sx = [&](double v) { return ml + (v - x_lo) / (x_hi - x_lo) * pw; };
    auto sy = [&](double v) {
        const double t = spec.log_y ? (std::log10(v) - std::log10(y_lo)) /
                                          (std::log10(y_hi) - std::log10(y_lo))
                                    : (v - y_lo) / (y_hi - y_lo);
        return mt + (1.0 - t) * ph;
    };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width << "\" height=\""
       << spec.height << "\" viewBox=\"0 0 " << spec.width << " " << spec.height << "\">\n";
    os << "<rect width=\"" << spec.width << "\" height=\"" << spec.height
       << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << spec.width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
          "font-family=\"sans-serif\" font-size=\"15\">";
    detail::xml_escape(os, spec.title);
    os << "</text>\n";

    // gridlines and ticks
    os << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
    for (double t : detail::linear_ticks(x_lo, x_hi)) {
        if (t < x_lo - 1e-12 || t > x_hi + 1e-12) continue;
        const double X = sx(t);
        os << "<line x1=\"" << detail::px(X) << "\" y1=\"" << detail::px(mt) << "\" x2=\""
           << detail::px(X) << "\" y2=\"" << detail::px(mt + ph) << "\" stroke=\"#ddd\"/>\n";
        os << "<text x=\"" << detail::px(X) << "\" y=\"" << detail::px(mt + ph + 16)
           << "\" text-anchor=\"middle\">" << format_double(t) << "</text>\n";
    }
    if (spec.log_y) {
        for (int e : detail::decade_ticks(y_lo, y_hi)) {
            const double v = std::pow(10.0, e);
            if (v < y_lo / 1.0000001 || v > y_hi * 1.0000001) continue;
            const double Y = sy(v);
            os << "<line x1=\"" << detail::px(ml) << "\" y1=\"" << detail::px(Y) << "\" x2=\""
               << detail::px(ml + pw) << "\" y2=\"" << detail::px(Y) << "\" stroke=\"#ddd\"/>\n";
            os << "<text x=\"" << detail::px(ml - 6) << "\" y=\"" << detail::px(Y + 4)
               << "\" text-anchor=\"end\">1e" << e << "</text>\n";
        }
    } else {
        for (double t : detail::linear_ticks(y_lo, y_hi)) {
            if (t < y_lo - 1e-12 || t > y_hi + 1e-12) continue;
            const double Y = sy(t);
            os << "<line x1=\"" << detail::px(ml) << "\" y1=\"" << detail::px(Y) << "\" x2=\""
               << detail::px(ml + pw) << "\" y2=\"" << detail::px(Y) << "\" stroke=\"#ddd\"/>\n";
            os << "<text x=\"" << detail::px(ml - 6) << "\" y=\"" << detail::px(Y + 4)
               << "\" text-anchor=\"end\">" << format_double(t) << "</text>\n";
        }
    }
    os << "</g>\n";

    // axes
    os << "<rect x=\"" << detail::px(ml) << "\" y=\"" << detail::px(mt) << "\" width=\""
       << detail::px(pw) << "\" height=\"" << detail::px(ph)
       << "\" fill=\"none\" stroke=\"#333\"/>\n";
    os << "<text x=\"" << detail::px(ml + pw / 2) << "\" y=\"" << detail::px(spec.height - 12)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">";
    detail::xml_escape(os, spec.x_label);
    os << "</text>\n";
    os << "<text x=\"16\" y=\"" << detail::px(mt + ph / 2)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
          "transform=\"rotate(-90 16 "
       << detail::px(mt + ph / 2) << ")\">";
    detail::xml_escape(os, spec.y_label);
    os << "</text>\n";

    // series
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        std::ostringstream pts;
        bool open = false;
        auto flush = [&]() {
            if (open)
                os << "<polyline points=\"" << pts.str()
                   << "\" fill=\"none\" stroke-width=\"1.6\" stroke=\"" << detail::series_color(k)
                   << "\"/>\n";
            pts.str("");
            open = false;
        };
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            const bool drawable = std::isfinite(s.x[i]) && std::isfinite(s.y[i]) &&
                                  (!spec.log_y || s.y[i] > 0.0);
            if (!drawable) {
                flush();
                continue;
            }
            if (open) pts << ' ';
            pts << detail::px(sx(s.x[i])) << ',' << detail::px(sy(s.y[i]));
            open = true;
        }
        flush();
    }

    // legend
    os << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const double Y = mt + 14 + 16 * static_cast<double>(k);
        os << "<line x1=\"" << detail::px(ml + pw - 150) << "\" y1=\"" << detail::px(Y)
           << "\" x2=\"" << detail::px(ml + pw - 126) << "\" y2=\"" << detail::px(Y)
           << "\" stroke-width=\"2\" stroke=\"" << detail::series_color(k) << "\"/>\n";
        os << "<text x=\"" << detail::px(ml + pw - 120) << "\" y=\"" << detail::px(Y + 4)
           << "\">";
        detail::xml_escape(os, series[k].label);
        os << "</text>\n";
    }
    os << "</g>\n</svg>\n";
    return os.str();
}

} // namespace sigmor
