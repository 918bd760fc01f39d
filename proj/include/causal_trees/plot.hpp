#pragma once

// Minimal SVG emitters for line charts, MCMC trace plots and waterfall plots.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "causal_trees/version.hpp"

namespace causal_trees {

struct PlotSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> lo;  // optional band, same length as y
    std::vector<double> hi;
    bool dashed = false;
};

struct PlotLabels {
    std::string title;
    std::string x;
    std::string y;
};

namespace detail {

inline const char* palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
    return colors[i % 8];
}

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", std::abs(v) < 1e-12 ? 0.0 : v);
    return buf;
}

inline std::string escape(const std::string& s) {
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

// Roughly five round tick positions covering [lo, hi].
inline std::vector<double> ticks(double lo, double hi) {
    const double span = hi - lo;
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double norm = raw / mag;
    const double step = (norm < 1.5 ? 1.0 : norm < 3.0 ? 2.0 : norm < 7.0 ? 5.0 : 10.0) * mag;
    std::vector<double> out;
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) out.push_back(t);
    return out;
}

class Canvas {
public:
    static constexpr double width = 720, height = 440;
    static constexpr double left = 70, right = 160, top = 40, bottom = 55;

    Canvas(double x0, double x1, double y0, double y1) : x0_(x0), x1_(x1), y0_(y0), y1_(y1) {
        if (!(x1_ > x0_)) { x0_ -= 0.5; x1_ += 0.5; }
        if (!(y1_ > y0_)) { y0_ -= 0.5; y1_ += 0.5; }
        const double pad = 0.04 * (y1_ - y0_);
        y0_ -= pad;
        y1_ += pad;
    }

    double px(double x) const { return left + (x - x0_) / (x1_ - x0_) * (width - left - right); }
    double py(double y) const { return height - bottom - (y - y0_) / (y1_ - y0_) * (height - top - bottom); }

    void header(const PlotLabels& labels) {
        os_ << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
            << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
            << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
            << "<!-- causal_trees " << kVersion << " -->\n"
            << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
            << "<text x=\"" << fmt(width / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
            << escape(labels.title) << "</text>\n";
        axes(labels);
    }

    void polyline(std::span<const double> x, std::span<const double> y, const char* color, double stroke,
                  bool dashed = false) {
        os_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << fmt(stroke) << '"'
            << (dashed ? " stroke-dasharray=\"6 4\"" : "") << " points=\"";
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (!std::isfinite(y[i])) continue;
            os_ << (i ? " " : "") << fmt(px(x[i])) << ',' << fmt(py(y[i]));
        }
        os_ << "\"/>\n";
    }

    void band(std::span<const double> x, std::span<const double> lo, std::span<const double> hi, const char* color) {
        os_ << "<polygon fill=\"" << color << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
        for (std::size_t i = 0; i < x.size(); ++i) os_ << (i ? " " : "") << fmt(px(x[i])) << ',' << fmt(py(hi[i]));
        for (std::size_t i = x.size(); i-- > 0;) os_ << ' ' << fmt(px(x[i])) << ',' << fmt(py(lo[i]));
        os_ << "\"/>\n";
    }

    void segment(double xa, double ya, double xb, double yb, const char* color, double stroke) {
        os_ << "<line x1=\"" << fmt(px(xa)) << "\" y1=\"" << fmt(py(ya)) << "\" x2=\"" << fmt(px(xb)) << "\" y2=\""
            << fmt(py(yb)) << "\" stroke=\"" << color << "\" stroke-width=\"" << fmt(stroke) << "\"/>\n";
    }

    void marker(double x, double y, const char* color) {
        os_ << "<circle cx=\"" << fmt(px(x)) << "\" cy=\"" << fmt(py(y)) << "\" r=\"2\" fill=\"" << color << "\"/>\n";
    }

    void legend(std::size_t slot, const std::string& name, const char* color) {
        const double y = top + 10 + 20.0 * static_cast<double>(slot);
        const double x = width - right + 15;
        os_ << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(y) << "\" x2=\"" << fmt(x + 22) << "\" y2=\"" << fmt(y)
            << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
            << "<text x=\"" << fmt(x + 28) << "\" y=\"" << fmt(y + 4) << "\">" << escape(name) << "</text>\n";
    }

    std::string finish() {
        os_ << "</svg>\n";
        return os_.str();
    }

private:
    void axes(const PlotLabels& labels) {
        const double xl = left, xr = width - right, yt = top, yb = height - bottom;
        os_ << "<g stroke=\"#444\" stroke-width=\"1\">\n"
            << "<line x1=\"" << fmt(xl) << "\" y1=\"" << fmt(yb) << "\" x2=\"" << fmt(xr) << "\" y2=\"" << fmt(yb) << "\"/>\n"
            << "<line x1=\"" << fmt(xl) << "\" y1=\"" << fmt(yt) << "\" x2=\"" << fmt(xl) << "\" y2=\"" << fmt(yb) << "\"/>\n"
            << "</g>\n";
        for (double t : ticks(x0_, x1_)) {
            os_ << "<line x1=\"" << fmt(px(t)) << "\" y1=\"" << fmt(yb) << "\" x2=\"" << fmt(px(t)) << "\" y2=\""
                << fmt(yb + 5) << "\" stroke=\"#444\"/>\n"
                << "<text x=\"" << fmt(px(t)) << "\" y=\"" << fmt(yb + 18) << "\" text-anchor=\"middle\">" << tick_label(t)
                << "</text>\n";
        }
        for (double t : ticks(y0_, y1_)) {
            os_ << "<line x1=\"" << fmt(xl - 5) << "\" y1=\"" << fmt(py(t)) << "\" x2=\"" << fmt(xr) << "\" y2=\""
                << fmt(py(t)) << "\" stroke=\"#ddd\"/>\n"
                << "<text x=\"" << fmt(xl - 8) << "\" y=\"" << fmt(py(t) + 4) << "\" text-anchor=\"end\">" << tick_label(t)
                << "</text>\n";
        }
        os_ << "<text x=\"" << fmt((xl + xr) / 2) << "\" y=\"" << fmt(height - 14) << "\" text-anchor=\"middle\">"
            << escape(labels.x) << "</text>\n"
            << "<text transform=\"translate(18," << fmt((yt + yb) / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
            << escape(labels.y) << "</text>\n";
    }

    double x0_, x1_, y0_, y1_;
    std::ostringstream os_;
};

inline std::pair<double, double> finite_range(std::span<const double> v, std::pair<double, double> acc) {
    for (double x : v)
        if (std::isfinite(x)) acc = {std::min(acc.first, x), std::max(acc.second, x)};
    return acc;
}

}  // namespace detail

// Multi-series line chart with optional shaded bands.
inline std::string line_chart(std::span<const PlotSeries> series, const PlotLabels& labels) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::pair<double, double> xr{inf, -inf}, yr{inf, -inf};
    for (const auto& s : series) {
        xr = detail::finite_range(s.x, xr);
        yr = detail::finite_range(s.y, yr);
        yr = detail::finite_range(s.lo, yr);
        yr = detail::finite_range(s.hi, yr);
    }
    if (!std::isfinite(xr.first)) xr = yr = {0.0, 1.0};
    detail::Canvas canvas(xr.first, xr.second, yr.first, yr.second);
    canvas.header(labels);
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        if (!s.lo.empty()) canvas.band(s.x, s.lo, s.hi, detail::palette(i));
    }
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        canvas.polyline(s.x, s.y, detail::palette(i), 2.0, s.dashed);
        canvas.legend(i, s.name, detail::palette(i));
    }
    return canvas.finish();
}

// One line per chain of a scalar draw sequence.
inline std::string trace_plot(std::span<const double> draws, std::span<const int> chain, const PlotLabels& labels) {
    std::vector<PlotSeries> per_chain;
    std::vector<int> ids(chain.begin(), chain.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    for (int c : ids) {
        PlotSeries s;
        s.name = "chain " + std::to_string(c + 1);
        for (std::size_t d = 0; d < draws.size(); ++d)
            if (chain[d] == c) {
                s.x.push_back(static_cast<double>(s.x.size() + 1));
                s.y.push_back(draws[d]);
            }
        per_chain.push_back(std::move(s));
    }
    return line_chart(per_chain, labels);
}

// Sorted per-row effects with interval whiskers and a zero reference line.
inline std::string waterfall_plot(std::span<const double> mean, std::span<const double> lo, std::span<const double> hi,
                                  const PlotLabels& labels) {
    std::vector<std::size_t> order(mean.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mean[a] < mean[b]; });
    auto yr = detail::finite_range(lo, {0.0, 0.0});
    yr = detail::finite_range(hi, yr);
    detail::Canvas canvas(0.0, std::max<double>(1.0, static_cast<double>(mean.size())), yr.first, yr.second);
    canvas.header(labels);
    canvas.segment(0.0, 0.0, static_cast<double>(mean.size()), 0.0, "#888", 1.0);
    for (std::size_t r = 0; r < order.size(); ++r) {
        const double x = static_cast<double>(r) + 0.5;
        canvas.segment(x, lo[order[r]], x, hi[order[r]], "#9ecae1", 1.0);
    }
    for (std::size_t r = 0; r < order.size(); ++r) canvas.marker(static_cast<double>(r) + 0.5, mean[order[r]], "#08519c");
    canvas.legend(0, "posterior mean", "#08519c");
    canvas.legend(1, "95% HDI", "#9ecae1");
    return canvas.finish();
}

}  // namespace causal_trees
