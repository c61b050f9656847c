#pragma once

// CSV tables and self-contained SVG figures.

#include "lfm/metrics.hpp"
#include "lfm/trainer.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace lfm {

/// Shortest text that reads back to the same double.
inline std::string fmt(double v) {
    char buf[32];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InvalidArgument("cannot write " + path);
    return out;
}

/// Header x0,...,x{d-1}, one row per point.
inline void write_points_csv(std::ostream& out, const RowMatrix& x, std::size_t dim) {
    for (std::size_t k = 0; k < dim; ++k) out << (k ? "," : "") << 'x' << k;
    out << '\n';
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index k = 0; k < x.cols(); ++k) out << (k ? "," : "") << fmt(x(i, k));
        out << '\n';
    }
}

inline void write_points_csv(const std::string& path, const RowMatrix& x, std::size_t dim) {
    auto out = open_output(path);
    write_points_csv(out, x, dim);
}

inline RowMatrix read_points_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open " + path);
    std::string line;
    std::getline(in, line);
    const auto dim = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',') + 1);
    std::vector<double> vals;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        Eigen::Index cols = 0;
        while (std::getline(ss, cell, ',')) {
            vals.push_back(std::stod(cell));
            ++cols;
        }
        require(cols == dim, path + ": ragged row");
    }
    const auto rows = static_cast<Eigen::Index>(vals.size()) / dim;
    return Eigen::Map<RowMatrix>(vals.data(), rows, dim);
}

inline void write_train_log(const std::string& path, const std::vector<TrainRecord>& records) {
    auto out = open_output(path);
    out << "step,loss,elapsed_seconds,w2,npe\n";
    for (const auto& r : records)
        out << r.step << ',' << fmt(r.loss) << ',' << fmt(r.elapsed_seconds) << ',' << fmt(r.w2) << ',' << fmt(r.npe) << '\n';
}

inline const char* kEvalCsvHeader =
    "w2,npe,coupling_excess,path_excess,kinetic_energy,reference_cost,model_pair_energy,npe_omega,nfe,n_eval,n_npe,"
    "runtime_seconds";

inline std::string eval_csv_row(const EvalReport& r) {
    std::ostringstream s;
    s << fmt(r.w2) << ',' << fmt(r.npe) << ',' << fmt(r.coupling_excess) << ',' << fmt(r.path_excess) << ','
      << fmt(r.kinetic_energy) << ',' << fmt(r.reference_cost) << ',' << fmt(r.model_pair_energy) << ',' << fmt(r.npe_omega)
      << ',' << r.nfe << ',' << r.n_eval << ',' << r.n_npe << ',' << fmt(r.runtime_seconds);
    return s.str();
}

inline void write_eval_csv(const std::string& path, const EvalReport& r) {
    auto out = open_output(path);
    out << kEvalCsvHeader << '\n' << eval_csv_row(r) << '\n';
}

/// Long format: one row per (point, grid node).
inline void write_trajectories_csv(const std::string& path, const SolveResult& sol) {
    auto out = open_output(path);
    const auto d = sol.states.empty() ? 0 : sol.states.front().cols();
    out << "point,step,t";
    for (Eigen::Index k = 0; k < d; ++k) out << ",x" << k;
    out << '\n';
    for (std::size_t s = 0; s < sol.states.size(); ++s)
        for (Eigen::Index i = 0; i < sol.states[s].rows(); ++i) {
            out << i << ',' << s << ',' << fmt(sol.times[s]);
            for (Eigen::Index k = 0; k < d; ++k) out << ',' << fmt(sol.states[s](i, k));
            out << '\n';
        }
}

// ---------------------------------------------------------------------------
// SVG

namespace svg {

struct Frame {
    double x_lo, x_hi, y_lo, y_hi;
    double width = 640, height = 480, margin = 56;
    bool log_x = false;

    [[nodiscard]] double px(double x) const {
        const double a = log_x ? std::log10(x_lo) : x_lo, b = log_x ? std::log10(x_hi) : x_hi;
        const double v = log_x ? std::log10(x) : x;
        return margin + (v - a) / (b - a) * (width - 2 * margin);
    }
    [[nodiscard]] double py(double y) const { return height - margin - (y - y_lo) / (y_hi - y_lo) * (height - 2 * margin); }
};

inline std::string escape(const std::string& s) {
    std::string o;
    for (char c : s) {
        if (c == '<') o += "&lt;";
        else if (c == '>') o += "&gt;";
        else if (c == '&') o += "&amp;";
        else o += c;
    }
    return o;
}

inline std::string header(const Frame& f, const std::string& title) {
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\"" << f.height << "\" viewBox=\"0 0 "
      << f.width << ' ' << f.height << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << f.width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title) << "</text>\n";
    return s.str();
}

inline std::string axes(const Frame& f, const std::string& xlabel, const std::string& ylabel, const std::vector<double>& xticks) {
    std::ostringstream s;
    const double x0 = f.margin, x1 = f.width - f.margin, y0 = f.height - f.margin, y1 = f.margin;
    s << "<path d=\"M" << x0 << ' ' << y1 << " V" << y0 << " H" << x1 << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (double t : xticks) {
        const double x = f.px(t);
        s << "<line x1=\"" << x << "\" y1=\"" << y0 << "\" x2=\"" << x << "\" y2=\"" << y0 + 5 << "\" stroke=\"black\"/>"
          << "<text x=\"" << x << "\" y=\"" << y0 + 18 << "\" text-anchor=\"middle\">" << fmt(t) << "</text>\n";
    }
    for (int k = 0; k <= 4; ++k) {
        const double v = f.y_lo + (f.y_hi - f.y_lo) * k / 4.0;
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3g", v);
        s << "<line x1=\"" << x0 - 5 << "\" y1=\"" << f.py(v) << "\" x2=\"" << x0 << "\" y2=\"" << f.py(v) << "\" stroke=\"black\"/>"
          << "<text x=\"" << x0 - 8 << "\" y=\"" << f.py(v) + 4 << "\" text-anchor=\"end\">" << buf << "</text>\n";
    }
    s << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << f.height - 12 << "\" text-anchor=\"middle\">" << escape(xlabel) << "</text>\n"
      << "<text x=\"14\" y=\"" << (y0 + y1) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " << (y0 + y1) / 2
      << ")\">" << escape(ylabel) << "</text>\n";
    return s.str();
}

inline const char* palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#808000", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};
    return colors[i % 7];
}

}  // namespace svg

/// Source samples (grey), target samples (blue), learned trajectories (olive)
/// with their endpoints in black. Uses the first two coordinates.
inline std::string trajectory_svg(const RowMatrix& source, const RowMatrix& target, const std::vector<RowMatrix>& states,
                                  std::size_t max_paths, const std::string& title) {
    double lo_x = 0, hi_x = 0, lo_y = 0, hi_y = 0;
    bool first = true;
    auto extend = [&](const RowMatrix& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            const double x = m(i, 0), y = m.cols() > 1 ? m(i, 1) : 0.0;
            if (first) {
                lo_x = hi_x = x;
                lo_y = hi_y = y;
                first = false;
            }
            lo_x = std::min(lo_x, x), hi_x = std::max(hi_x, x), lo_y = std::min(lo_y, y), hi_y = std::max(hi_y, y);
        }
    };
    extend(source);
    extend(target);
    for (const auto& s : states) extend(s);
    const double pad = 0.05 * std::max({hi_x - lo_x, hi_y - lo_y, 1e-9});
    svg::Frame f{lo_x - pad, hi_x + pad, lo_y - pad, hi_y + pad};
    f.width = f.height = 640;
    f.margin = 30;

    std::ostringstream s;
    s << svg::header(f, title);
    auto dots = [&](const RowMatrix& m, const char* color, double r, double opacity) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            s << "<circle cx=\"" << f.px(m(i, 0)) << "\" cy=\"" << f.py(m.cols() > 1 ? m(i, 1) : 0.0) << "\" r=\"" << r
              << "\" fill=\"" << color << "\" fill-opacity=\"" << opacity << "\"/>\n";
    };
    dots(target, "#1f77b4", 1.5, 0.35);
    dots(source, "#7f7f7f", 1.5, 0.25);
    if (!states.empty()) {
        const auto paths = std::min<Eigen::Index>(static_cast<Eigen::Index>(max_paths), states.front().rows());
        for (Eigen::Index i = 0; i < paths; ++i) {
            s << "<polyline fill=\"none\" stroke=\"#808000\" stroke-opacity=\"0.6\" stroke-width=\"0.8\" points=\"";
            for (const auto& st : states) s << f.px(st(i, 0)) << ',' << f.py(st.cols() > 1 ? st(i, 1) : 0.0) << ' ';
            s << "\"/>\n";
        }
        dots(states.front().topRows(paths), "black", 1.8, 1.0);
        dots(states.back().topRows(paths), "black", 1.8, 1.0);
    }
    s << "</svg>\n";
    return s.str();
}

struct Series {
    std::string name;
    std::vector<double> x, mean, std;
};

/// Metric against a sweep axis, one line per series with a shaded +-1 std band.
inline std::string line_plot_svg(const std::vector<Series>& series, const std::string& xlabel, const std::string& ylabel,
                                 const std::string& title, bool log_x) {
    std::vector<double> xs;
    double lo = 0, hi = 0;
    bool first = true;
    for (const auto& sr : series)
        for (std::size_t i = 0; i < sr.x.size(); ++i) {
            xs.push_back(sr.x[i]);
            const double a = sr.mean[i] - sr.std[i], b = sr.mean[i] + sr.std[i];
            if (first) lo = a, hi = b, first = false;
            lo = std::min(lo, a), hi = std::max(hi, b);
        }
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    require(!xs.empty(), "line_plot_svg: no data");
    if (log_x) require(xs.front() > 0.0, "line_plot_svg: log axis needs positive values");
    const double span = hi - lo > 0 ? hi - lo : std::max(1e-9, std::abs(hi));
    svg::Frame f{xs.front(), xs.size() > 1 ? xs.back() : xs.front() + 1, lo - 0.05 * span, hi + 0.05 * span};
    if (xs.size() == 1) f.x_lo = log_x ? xs.front() / 2 : xs.front() - 1, f.x_hi = log_x ? xs.front() * 2 : xs.front() + 1;
    f.log_x = log_x;

    std::ostringstream s;
    s << svg::header(f, title) << svg::axes(f, xlabel, ylabel, xs);
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& sr = series[k];
        const char* color = svg::palette(k);
        s << "<path fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" d=\"";
        for (std::size_t i = 0; i < sr.x.size(); ++i) s << (i ? 'L' : 'M') << f.px(sr.x[i]) << ' ' << f.py(sr.mean[i] + sr.std[i]);
        for (std::size_t i = sr.x.size(); i-- > 0;) s << 'L' << f.px(sr.x[i]) << ' ' << f.py(sr.mean[i] - sr.std[i]);
        s << "Z\"/>\n<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < sr.x.size(); ++i) s << f.px(sr.x[i]) << ',' << f.py(sr.mean[i]) << ' ';
        s << "\"/>\n";
        for (std::size_t i = 0; i < sr.x.size(); ++i)
            s << "<circle cx=\"" << f.px(sr.x[i]) << "\" cy=\"" << f.py(sr.mean[i]) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        s << "<rect x=\"" << f.width - f.margin - 120 << "\" y=\"" << f.margin + 16 * k << "\" width=\"10\" height=\"10\" fill=\""
          << color << "\"/><text x=\"" << f.width - f.margin - 105 << "\" y=\"" << f.margin + 16 * k + 10 << "\">"
          << svg::escape(sr.name) << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

inline void write_text(const std::string& path, const std::string& text) {
    auto out = open_output(path);
    out << text;
}

}  // namespace lfm
