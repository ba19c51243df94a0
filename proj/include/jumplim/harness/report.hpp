#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace jumplim {

using Cell = std::variant<double, std::int64_t, std::string>;

struct Table {
    std::string file; //!< CSV file name inside the output directory
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    void add(std::vector<Cell> row);
    //! Numeric column by name (integers widened).
    std::vector<double> column(const std::string& name) const;
};

//! Doubles are written with %.12g, so equal runs give byte-equal files.
std::string to_csv(const Table& t);
void write_csv(const Table& t, const std::filesystem::path& dir);

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct LinePlot {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    bool log_y = false;
    std::vector<Series> series;
};

//! Static SVG line chart; non-positive values are dropped on log axes.
std::string line_plot_svg(const LinePlot& plot);

struct Histogram {
    std::string title;
    std::string x_label;
    int bins = 40;
    std::vector<std::pair<std::string, std::vector<double>>> samples;
};

//! Overlaid step histograms (densities) on a common range.
std::string histogram_svg(const Histogram& h);

void write_text(const std::string& text, const std::filesystem::path& file);

} // namespace jumplim
