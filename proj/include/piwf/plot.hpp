#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "piwf/errors.hpp"
#include "piwf/metrics.hpp"

namespace piwf {

struct Series {
    std::string name;
    std::vector<double> x, y;
};

// Minimal static SVG line chart; acceptance assertions always run against the
// CSV twins, never against these pixels.
inline void write_svg_chart(const std::filesystem::path& path, const std::string& title,
                            const std::string& xlabel, const std::string& ylabel,
                            const std::vector<Series>& series) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    const double w = 640, h = 420, ml = 60, mr = 20, mt = 40, mb = 50;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (xmin > xmax) {
        xmin = 0;
        xmax = 1;
    }
    if (ymin > ymax) {
        ymin = 0;
        ymax = 1;
    }
    if (xmax - xmin < 1e-12) xmax = xmin + 1;
    if (ymax - ymin < 1e-12) ymax = ymin + 1;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
    auto py = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };

    std::ostringstream os;
    os << std::setprecision(6);
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << w / 2 << "' y='22' text-anchor='middle' font-size='15'>" << title
       << "</text>\n";
    os << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr << "' y2='" << h - mb
       << "' stroke='black'/>\n";
    os << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << h - mb
       << "' stroke='black'/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double xv = xmin + (xmax - xmin) * i / 5.0;
        const double yv = ymin + (ymax - ymin) * i / 5.0;
        os << "<text x='" << px(xv) << "' y='" << h - mb + 18
           << "' text-anchor='middle' font-size='11'>" << std::setprecision(3) << xv << "</text>\n";
        os << "<text x='" << ml - 8 << "' y='" << py(yv) + 4
           << "' text-anchor='end' font-size='11'>" << std::setprecision(3) << yv << "</text>\n";
        os << "<line x1='" << ml << "' y1='" << py(yv) << "' x2='" << w - mr << "' y2='" << py(yv)
           << "' stroke='#dddddd'/>\n";
    }
    os << "<text x='" << (ml + w - mr) / 2 << "' y='" << h - 10
       << "' text-anchor='middle' font-size='12'>" << xlabel << "</text>\n";
    os << "<text x='16' y='" << (mt + h - mb) / 2
       << "' text-anchor='middle' font-size='12' transform='rotate(-90 16 " << (mt + h - mb) / 2
       << ")'>" << ylabel << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = palette[s % 8];
        os << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
        for (std::size_t i = 0; i < series[s].x.size(); ++i)
            os << px(series[s].x[i]) << "," << py(series[s].y[i]) << " ";
        os << "'/>\n";
        os << "<text x='" << w - mr - 6 << "' y='" << mt + 16 * static_cast<double>(s)
           << "' text-anchor='end' font-size='11' fill='" << color << "'>" << series[s].name
           << "</text>\n";
    }
    os << "</svg>\n";

    std::ofstream file(path);
    if (!file) throw IoError("cannot open for write: " + path.string());
    file << os.str();
}

inline void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for write: " + path.string());
    for (std::size_t i = 0; i < header.size(); ++i)
        os << header[i] << (i + 1 < header.size() ? "," : "\n");
    os << std::setprecision(10);
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            os << row[i] << (i + 1 < row.size() ? "," : "\n");
    }
}

// PCK curves (four joint groups), AP table, and their SVG renderings.
inline void write_report_files(const std::filesystem::path& dir, const EvalReport& rep) {
    std::filesystem::create_directories(dir);

    std::vector<std::string> header{"a"};
    std::vector<std::string> groups;
    for (const auto& [name, curve] : rep.group_pck) {
        header.push_back(name);
        groups.push_back(name);
    }
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < rep.pck_grid.size(); ++i) {
        std::vector<double> row{rep.pck_grid[i]};
        for (const auto& g : groups) row.push_back(rep.group_pck.at(g)[i]);
        rows.push_back(std::move(row));
    }
    write_csv(dir / "pck_curves.csv", header, rows);

    std::vector<Series> series;
    for (const auto& g : groups) {
        if (g == "mean") continue;
        series.push_back({g, rep.pck_grid, rep.group_pck.at(g)});
    }
    if (series.empty()) series.push_back({"mean", rep.pck_grid, rep.group_pck.at("mean")});
    write_svg_chart(dir / "pck_curves.svg", "PCK by joint group", "normalized distance", "PCK",
                    series);

    std::vector<std::vector<double>> ap_rows;
    for (const auto& [a, v] : rep.ap) ap_rows.push_back({static_cast<double>(a), v});
    write_csv(dir / "ap_table.csv", {"a", "ap"}, ap_rows);
    std::vector<Series> ap_series{{"AP@a", {}, {}}};
    for (const auto& [a, v] : rep.ap) {
        ap_series[0].x.push_back(a);
        ap_series[0].y.push_back(v);
    }
    write_svg_chart(dir / "ap_table.svg", "Segmentation AP", "IoU threshold (x100)", "AP",
                    ap_series);
}

}  // namespace piwf
