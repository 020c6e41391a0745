#pragma once

// Result tables: CSV emission and parsing, per-N summaries, static SVG plots.

#include "drorl/error.hpp"
#include "drorl/experiment.hpp"
#include "drorl/tabular_mdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

namespace drorl {

inline constexpr std::string_view kCsvHeader = "algo,kind,env,coverage,N,seed,iterations,suboptimality,runtime_ms";

inline void emit_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
    os << kCsvHeader << '\n';
    char ms[64];
    for (const auto& r : rows) {
        std::snprintf(ms, sizeof ms, "%.3f", r.runtime_ms);
        os << r.algo << ',' << r.kind << ',' << r.env << ',' << r.coverage << ',' << r.N << ',' << r.seed << ','
           << r.iterations << ',';
        detail::write_real(os, r.suboptimality);
        os << ',' << ms << '\n';
    }
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

template <class T>
T parse_number(const std::string& text, std::size_t line, const char* field) {
    std::istringstream ss(text);
    T value{};
    if (!(ss >> value) || !(ss >> std::ws).eof() || (std::is_unsigned_v<T> && text.find('-') != std::string::npos))
        throw ParseError(std::string("csv: bad ") + field + " '" + text + "'", line);
    return value;
}

} // namespace detail

inline std::vector<ResultRow> parse_csv(std::istream& is) {
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(is, line)) throw ParseError("csv: missing header", line_no);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kCsvHeader) throw ParseError("csv: unexpected header", line_no);
    std::vector<ResultRow> rows;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = detail::split_csv(line);
        if (f.size() != 9)
            throw ParseError("csv: expected 9 fields, got " + std::to_string(f.size()), line_no);
        ResultRow r;
        r.algo = f[0];
        r.kind = f[1];
        r.env = f[2];
        r.coverage = f[3];
        r.N = detail::parse_number<std::size_t>(f[4], line_no, "N");
        r.seed = detail::parse_number<std::uint64_t>(f[5], line_no, "seed");
        r.iterations = detail::parse_number<std::size_t>(f[6], line_no, "iterations");
        r.suboptimality = detail::parse_number<double>(f[7], line_no, "suboptimality");
        r.runtime_ms = detail::parse_number<double>(f[8], line_no, "runtime_ms");
        if (r.algo.empty()) throw ParseError("csv: empty algo", line_no);
        if (!(r.suboptimality >= 0.0)) throw ParseError("csv: negative suboptimality", line_no);
        rows.push_back(std::move(r));
    }
    return rows;
}

/// Across-seed statistics of one algorithm at one N.
struct SummaryPoint {
    std::size_t N = 0;
    double mean = 0.0;
    double median = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::size_t seeds = 0;
};

struct Series {
    std::string label; // algorithm label, e.g. drqi-tv
    std::vector<SummaryPoint> points; // increasing N
};

inline double median_of(std::vector<double> xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(xs.begin(), xs.end());
    const std::size_t m = xs.size() / 2;
    return xs.size() % 2 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

/// Groups rows by algorithm label (in first-appearance order) and N.
inline std::vector<Series> summarize(const std::vector<ResultRow>& rows) {
    std::vector<Series> out;
    std::vector<std::map<std::size_t, std::vector<double>>> groups;
    for (const auto& r : rows) {
        auto it = std::find_if(out.begin(), out.end(), [&](const Series& s) { return s.label == r.algo; });
        if (it == out.end()) {
            out.push_back({r.algo, {}});
            groups.emplace_back();
            it = out.end() - 1;
        }
        groups[static_cast<std::size_t>(it - out.begin())][r.N].push_back(r.suboptimality);
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (const auto& [n, xs] : groups[i]) {
            SummaryPoint p;
            p.N = n;
            p.seeds = xs.size();
            p.min = *std::min_element(xs.begin(), xs.end());
            p.max = *std::max_element(xs.begin(), xs.end());
            double sum = 0.0;
            for (double x : xs) sum += x;
            p.mean = sum / static_cast<double>(xs.size());
            p.median = median_of(xs);
            out[i].points.push_back(p);
        }
    }
    return out;
}

inline void emit_summary_csv(std::ostream& os, const std::vector<Series>& series) {
    os << "algo,N,seeds,mean,median,min,max\n";
    for (const auto& s : series)
        for (const auto& p : s.points) {
            os << s.label << ',' << p.N << ',' << p.seeds << ',';
            detail::write_real(os, p.mean);
            os << ',';
            detail::write_real(os, p.median);
            os << ',';
            detail::write_real(os, p.min);
            os << ',';
            detail::write_real(os, p.max);
            os << '\n';
        }
}

/// Pixel geometry of a plot. The x axis is log10(N), the y axis is linear
/// from 0 to the largest band value.
struct PlotLayout {
    double width = 640.0;
    double height = 420.0;
    double margin_left = 70.0;
    double margin_right = 150.0;
    double margin_top = 30.0;
    double margin_bottom = 50.0;
    double log_n_min = 0.0;
    double log_n_max = 1.0;
    double y_max = 1.0;

    double x(double n) const {
        const double span = log_n_max > log_n_min ? log_n_max - log_n_min : 1.0;
        return margin_left + (std::log10(n) - log_n_min) / span * (width - margin_left - margin_right);
    }
    double y(double value) const {
        const double top = y_max > 0.0 ? y_max : 1.0;
        return height - margin_bottom - value / top * (height - margin_top - margin_bottom);
    }
};

inline PlotLayout fit_layout(const std::vector<Series>& series) {
    PlotLayout layout;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo, top = 0.0;
    for (const auto& s : series)
        for (const auto& p : s.points) {
            lo = std::min(lo, std::log10(static_cast<double>(p.N)));
            hi = std::max(hi, std::log10(static_cast<double>(p.N)));
            top = std::max(top, p.max);
        }
    if (std::isfinite(lo)) {
        layout.log_n_min = lo;
        layout.log_n_max = hi;
    }
    layout.y_max = top > 0.0 ? top * 1.05 : 1.0;
    return layout;
}

/// Vertices of the mean polyline, left to right.
inline std::vector<std::pair<double, double>> mean_polyline(const Series& s, const PlotLayout& layout) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : s.points) pts.emplace_back(layout.x(static_cast<double>(p.N)), layout.y(p.mean));
    return pts;
}

namespace detail {

inline std::string fmt_coord(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

} // namespace detail

inline void render_svg(std::ostream& os, const std::vector<Series>& series, const std::string& title = "") {
    static constexpr const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
    const PlotLayout L = fit_layout(series);
    using detail::fmt_coord;
    const double x0 = L.margin_left, x1 = L.width - L.margin_right;
    const double y0 = L.height - L.margin_bottom, y1 = L.margin_top;

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << L.width << "\" height=\"" << L.height
       << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!title.empty())
        os << "<text x=\"" << fmt_coord((x0 + x1) / 2) << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">"
           << detail::xml_escape(title) << "</text>\n";
    os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0 << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1 << "\" stroke=\"black\"/>\n";

    for (int e = static_cast<int>(std::ceil(L.log_n_min - 1e-9)); e <= static_cast<int>(std::floor(L.log_n_max + 1e-9)); ++e) {
        const double x = L.x(std::pow(10.0, e));
        os << "<line x1=\"" << fmt_coord(x) << "\" y1=\"" << y0 << "\" x2=\"" << fmt_coord(x) << "\" y2=\"" << y0 + 5
           << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << fmt_coord(x) << "\" y=\"" << y0 + 18 << "\" text-anchor=\"middle\">1e" << e << "</text>\n";
    }
    for (int i = 0; i <= 4; ++i) {
        const double v = L.y_max * i / 4.0;
        char label[32];
        std::snprintf(label, sizeof label, "%.3g", v);
        os << "<text x=\"" << x0 - 6 << "\" y=\"" << fmt_coord(L.y(v) + 4) << "\" text-anchor=\"end\">" << label
           << "</text>\n";
    }
    os << "<text x=\"" << fmt_coord((x0 + x1) / 2) << "\" y=\"" << L.height - 10
       << "\" text-anchor=\"middle\">N (log scale)</text>\n";
    os << "<text transform=\"translate(16," << fmt_coord((y0 + y1) / 2)
       << ") rotate(-90)\" text-anchor=\"middle\">suboptimality</text>\n";

    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        const char* color = palette[i % std::size(palette)];
        if (s.points.empty()) continue;
        os << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
        for (const auto& p : s.points)
            os << fmt_coord(L.x(static_cast<double>(p.N))) << ',' << fmt_coord(L.y(p.max)) << ' ';
        for (auto it = s.points.rbegin(); it != s.points.rend(); ++it)
            os << fmt_coord(L.x(static_cast<double>(it->N))) << ',' << fmt_coord(L.y(it->min)) << ' ';
        os << "\"/>\n";
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (const auto& [x, y] : mean_polyline(s, L)) os << fmt_coord(x) << ',' << fmt_coord(y) << ' ';
        os << "\"/>\n";
        const double ly = y1 + 16.0 * static_cast<double>(i) + 10.0;
        os << "<line x1=\"" << x1 + 10 << "\" y1=\"" << ly << "\" x2=\"" << x1 + 30 << "\" y2=\"" << ly
           << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << x1 + 36 << "\" y=\"" << ly + 4 << "\">" << detail::xml_escape(s.label) << "</text>\n";
    }
    os << "</svg>\n";
}

} // namespace drorl
