#include "jumplim/harness/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace jumplim {

void Table::add(std::vector<Cell> row) {
    if (row.size() != columns.size())
        throw std::logic_error("row width does not match the header of " + file);
    rows.push_back(std::move(row));
}

std::vector<double> Table::column(const std::string& name) const {
    auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end())
        throw std::out_of_range("no column " + name + " in " + file);
    std::size_t c = static_cast<std::size_t>(it - columns.begin());
    std::vector<double> out;
    for (const auto& r : rows) {
        if (const double* d = std::get_if<double>(&r[c]))
            out.push_back(*d);
        else if (const std::int64_t* i = std::get_if<std::int64_t>(&r[c]))
            out.push_back(static_cast<double>(*i));
        else
            throw std::invalid_argument("column " + name + " is not numeric");
    }
    return out;
}

namespace {

std::string format_double(double x) {
    if (std::isnan(x))
        return "nan";
    if (std::isinf(x))
        return x > 0 ? "inf" : "-inf";
    if (x == 0)
        return "0";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + "\"";
}

std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<':
            out += "&lt;";
            break;
        case '>':
            out += "&gt;";
            break;
        case '&':
            out += "&amp;";
            break;
        default:
            out += c;
        }
    }
    return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#e377c2", "#17becf"};

constexpr double kWidth = 640;
constexpr double kHeight = 420;
constexpr double kLeft = 70;
constexpr double kRight = 170;
constexpr double kTop = 40;
constexpr double kBottom = 50;

struct Axis {
    double lo = 0;
    double hi = 1;
    bool log = false;

    double map(double v, double a, double b) const {
        double t = log ? (std::log10(v) - std::log10(lo)) / (std::log10(hi) - std::log10(lo))
                       : (v - lo) / (hi - lo);
        return a + t * (b - a);
    }
};

Axis fit_axis(std::vector<double> vals, bool log) {
    Axis ax;
    ax.log = log;
    vals.erase(std::remove_if(vals.begin(), vals.end(),
                              [&](double v) { return !std::isfinite(v) || (log && v <= 0); }),
               vals.end());
    if (vals.empty()) {
        ax.lo = log ? 0.1 : 0;
        ax.hi = log ? 10 : 1;
        return ax;
    }
    auto [mn, mx] = std::minmax_element(vals.begin(), vals.end());
    ax.lo = *mn;
    ax.hi = *mx;
    if (log) {
        ax.lo = std::pow(10, std::floor(std::log10(ax.lo)));
        ax.hi = std::pow(10, std::ceil(std::log10(ax.hi)));
        if (ax.hi <= ax.lo)
            ax.hi = ax.lo * 10;
    } else {
        double pad = ax.hi > ax.lo ? 0.05 * (ax.hi - ax.lo) : std::max(1.0, std::fabs(ax.lo));
        ax.lo -= pad;
        ax.hi += pad;
    }
    return ax;
}

std::vector<double> ticks(const Axis& ax) {
    std::vector<double> out;
    if (ax.log) {
        for (double v = ax.lo; v <= ax.hi * 1.0001; v *= 10)
            out.push_back(v);
        return out;
    }
    for (int i = 0; i <= 5; ++i)
        out.push_back(ax.lo + (ax.hi - ax.lo) * i / 5.0);
    return out;
}

void frame(std::ostringstream& os, const std::string& title, const std::string& xl,
           const std::string& yl, const Axis& ax, const Axis& ay) {
    double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
       << kHeight << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
       << escape_xml(title) << "</text>\n";
    os << "<rect x=\"" << x0 << "\" y=\"" << y1 << "\" width=\"" << x1 - x0 << "\" height=\""
       << y0 - y1 << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (double t : ticks(ax)) {
        double x = ax.map(t, x0, x1);
        os << "<line x1=\"" << x << "\" y1=\"" << y0 << "\" x2=\"" << x << "\" y2=\"" << y0 + 5
           << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << x << "\" y=\"" << y0 + 18 << "\" text-anchor=\"middle\">"
           << format_double(std::round(t * 1e6) / 1e6) << "</text>\n";
    }
    for (double t : ticks(ay)) {
        double y = ay.map(t, y0, y1);
        os << "<line x1=\"" << x0 - 5 << "\" y1=\"" << y << "\" x2=\"" << x0 << "\" y2=\"" << y
           << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << x0 - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">"
           << format_double(ay.log ? t : std::round(t * 1e6) / 1e6) << "</text>\n";
    }
    os << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 12
       << "\" text-anchor=\"middle\">" << escape_xml(xl) << "</text>\n";
    os << "<text x=\"16\" y=\"" << (y0 + y1) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << (y0 + y1) / 2 << ")\">" << escape_xml(yl) << "</text>\n";
}

void legend(std::ostringstream& os, std::size_t i, const std::string& label) {
    double x = kWidth - kRight + 12;
    double y = kTop + 14 + 16 * static_cast<double>(i);
    const char* color = kPalette[i % std::size(kPalette)];
    os << "<line x1=\"" << x << "\" y1=\"" << y - 4 << "\" x2=\"" << x + 18 << "\" y2=\"" << y - 4
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << x + 24 << "\" y=\"" << y << "\">" << escape_xml(label) << "</text>\n";
}

} // namespace

std::string to_csv(const Table& t) {
    std::string out;
    for (std::size_t c = 0; c < t.columns.size(); ++c)
        out += (c ? "," : "") + quote(t.columns[c]);
    out += '\n';
    for (const auto& r : t.rows) {
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (c)
                out += ',';
            if (const double* d = std::get_if<double>(&r[c]))
                out += format_double(*d);
            else if (const std::int64_t* i = std::get_if<std::int64_t>(&r[c]))
                out += std::to_string(*i);
            else
                out += quote(std::get<std::string>(r[c]));
        }
        out += '\n';
    }
    return out;
}

void write_text(const std::string& text, const std::filesystem::path& file) {
    if (file.has_parent_path())
        std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + file.string());
    out << text;
}

void write_csv(const Table& t, const std::filesystem::path& dir) {
    write_text(to_csv(t), dir / t.file);
}

std::string line_plot_svg(const LinePlot& plot) {
    std::vector<double> xs, ys;
    for (const auto& s : plot.series) {
        xs.insert(xs.end(), s.x.begin(), s.x.end());
        ys.insert(ys.end(), s.y.begin(), s.y.end());
    }
    Axis ax = fit_axis(xs, plot.log_x);
    Axis ay = fit_axis(ys, plot.log_y);
    std::ostringstream os;
    frame(os, plot.title, plot.x_label, plot.y_label, ax, ay);
    double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
    for (std::size_t i = 0; i < plot.series.size(); ++i) {
        const Series& s = plot.series[i];
        const char* color = kPalette[i % std::size(kPalette)];
        std::ostringstream pts;
        for (std::size_t p = 0; p < s.x.size() && p < s.y.size(); ++p) {
            double x = s.x[p], y = s.y[p];
            if (!std::isfinite(x) || !std::isfinite(y) || (ax.log && x <= 0) || (ay.log && y <= 0))
                continue;
            double px = ax.map(x, x0, x1), py = ay.map(y, y0, y1);
            pts << px << "," << py << " ";
            os << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"3\" fill=\"" << color
               << "\"/>\n";
        }
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
           << pts.str() << "\"/>\n";
        legend(os, i, s.label);
    }
    os << "</svg>\n";
    return os.str();
}

std::string histogram_svg(const Histogram& h) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& [name, xs] : h.samples)
        for (double x : xs)
            if (std::isfinite(x)) {
                lo = std::min(lo, x);
                hi = std::max(hi, x);
            }
    if (!(lo < hi)) {
        lo = std::isfinite(lo) ? lo - 0.5 : 0;
        hi = lo + 1;
    }
    int bins = std::max(1, h.bins);
    double width = (hi - lo) / bins;
    std::vector<std::vector<double>> dens;
    double top = 0;
    for (const auto& [name, xs] : h.samples) {
        std::vector<double> d(static_cast<std::size_t>(bins), 0.0);
        double n = 0;
        for (double x : xs) {
            if (!std::isfinite(x))
                continue;
            int b = std::min(bins - 1, static_cast<int>((x - lo) / width));
            d[static_cast<std::size_t>(b)] += 1;
            n += 1;
        }
        for (double& v : d) {
            v = n > 0 ? v / (n * width) : 0;
            top = std::max(top, v);
        }
        dens.push_back(std::move(d));
    }
    Axis ax{lo, hi, false};
    Axis ay{0, top > 0 ? top * 1.05 : 1, false};
    std::ostringstream os;
    frame(os, h.title, h.x_label, "density", ax, ay);
    double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
    for (std::size_t i = 0; i < dens.size(); ++i) {
        const char* color = kPalette[i % std::size(kPalette)];
        std::ostringstream pts;
        pts << ax.map(lo, x0, x1) << "," << y0 << " ";
        for (int b = 0; b < bins; ++b) {
            double y = ay.map(dens[i][static_cast<std::size_t>(b)], y0, y1);
            pts << ax.map(lo + b * width, x0, x1) << "," << y << " "
                << ax.map(lo + (b + 1) * width, x0, x1) << "," << y << " ";
        }
        pts << ax.map(hi, x0, x1) << "," << y0;
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
           << pts.str() << "\"/>\n";
        legend(os, i, h.samples[i].first);
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace jumplim
