#include "derender/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "derender/common.hpp"

namespace derender::plot {

namespace {

std::string fmt(double v, const char* spec = "%.2f") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

// Colors shared across plots: blue for the primary/ID series, red for the
// contrast/OOD series, then a small fixed cycle.
constexpr const char* kBlue = "#1f77b4";
constexpr const char* kRed = "#d62728";
constexpr const char* kCycle[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

struct Frame {
    double width = 480, height = 480;
    double left = 56, right = 16, top = 16, bottom = 44;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;  // data domain

    double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
    double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

void open_svg(std::ostringstream& out, const Frame& f) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(f.width, "%.0f") << "\" height=\""
        << fmt(f.height, "%.0f") << "\" viewBox=\"0 0 " << fmt(f.width, "%.0f") << " " << fmt(f.height, "%.0f")
        << "\">\n";
    out << "<rect x=\"0\" y=\"0\" width=\"" << fmt(f.width, "%.0f") << "\" height=\"" << fmt(f.height, "%.0f")
        << "\" fill=\"white\"/>\n";
    // Axis frame.
    out << "<rect x=\"" << fmt(f.left) << "\" y=\"" << fmt(f.top) << "\" width=\"" << fmt(f.width - f.left - f.right)
        << "\" height=\"" << fmt(f.height - f.top - f.bottom)
        << "\" fill=\"none\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
}

void x_tick(std::ostringstream& out, const Frame& f, double x, const std::string& label) {
    double px = f.px(x), py = f.height - f.bottom;
    out << "<line x1=\"" << fmt(px) << "\" y1=\"" << fmt(py) << "\" x2=\"" << fmt(px) << "\" y2=\"" << fmt(py + 4)
        << "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << fmt(px) << "\" y=\"" << fmt(py + 16)
        << "\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"middle\">" << label << "</text>\n";
}

void y_tick(std::ostringstream& out, const Frame& f, double y, const std::string& label) {
    double px = f.left, py = f.py(y);
    out << "<line x1=\"" << fmt(px - 4) << "\" y1=\"" << fmt(py) << "\" x2=\"" << fmt(px) << "\" y2=\"" << fmt(py)
        << "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << fmt(px - 6) << "\" y=\"" << fmt(py + 3)
        << "\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"end\">" << label << "</text>\n";
}

void axis_titles(std::ostringstream& out, const Frame& f, const std::string& x_title, const std::string& y_title) {
    out << "<text x=\"" << fmt((f.left + f.width - f.right) / 2) << "\" y=\"" << fmt(f.height - 8)
        << "\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">" << x_title << "</text>\n";
    out << "<text x=\"12\" y=\"" << fmt((f.top + f.height - f.bottom) / 2)
        << "\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 12 "
        << fmt((f.top + f.height - f.bottom) / 2) << ")\">" << y_title << "</text>\n";
}

void legend_entry(std::ostringstream& out, const Frame& f, int slot, const char* color, const std::string& label) {
    double x = f.width - f.right - 150, y = f.top + 14 + 14 * slot;
    out << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y - 8) << "\" width=\"10\" height=\"10\" fill=\"" << color
        << "\"/>\n";
    out << "<text x=\"" << fmt(x + 14) << "\" y=\"" << fmt(y + 1)
        << "\" font-family=\"monospace\" font-size=\"10\">" << label << "</text>\n";
}

}  // namespace

Csv Csv::parse(const std::string& text) {
    Csv csv;
    std::size_t at = 0;
    bool header = true;
    while (at <= text.size()) {
        std::size_t nl = text.find('\n', at);
        std::string line = text.substr(at, nl == std::string::npos ? std::string::npos : nl - at);
        at = nl == std::string::npos ? text.size() + 1 : nl + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && at > text.size()) break;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            std::size_t comma = line.find(',', start);
            fields.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (header) {
            csv.columns = std::move(fields);
            header = false;
        } else {
            fields.resize(csv.columns.size());
            csv.rows.push_back(std::move(fields));
        }
    }
    require(!csv.columns.empty(), Errc::data_error, "CSV has no header row");
    return csv;
}

Csv Csv::read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), Errc::io_error, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

std::string Csv::dump() const {
    std::string out;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (i > 0) out += ',';
        out += columns[i];
    }
    out += '\n';
    for (const std::vector<std::string>& row : rows) {
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (i > 0) out += ',';
            if (i < row.size()) out += row[i];
        }
        out += '\n';
    }
    return out;
}

int Csv::column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return static_cast<int>(i);
    fail(Errc::missing_column, "required column '" + name + "' not found");
}

bool Csv::try_number(std::size_t row, int col, double* out) const {
    if (row >= rows.size() || col < 0 || static_cast<std::size_t>(col) >= rows[row].size()) return false;
    const std::string& cell = rows[row][static_cast<std::size_t>(col)];
    if (cell.empty()) return false;
    char* end = nullptr;
    double v = std::strtod(cell.c_str(), &end);
    if (end != cell.c_str() + cell.size()) return false;
    *out = v;
    return true;
}

PlotOutput scatter2d(const Csv& input) {
    int cgx = input.column("gt_x"), cgy = input.column("gt_y");
    int cpx = input.column("pred_x"), cpy = input.column("pred_y");

    Frame f;
    f.width = 480;
    f.height = 480;
    std::ostringstream out;
    open_svg(out, f);
    for (int i = 0; i <= 4; ++i) {
        double v = i / 4.0;
        x_tick(out, f, v, fmt(v));
        y_tick(out, f, v, fmt(v));
    }
    axis_titles(out, f, "x", "y");

    PlotOutput result;
    result.sidecar.columns = {"gt_x", "gt_y", "pred_x", "pred_y"};

    // Ground truth below, predictions on top.
    std::ostringstream preds;
    for (std::size_t r = 0; r < input.rows.size(); ++r) {
        double gx = 0, gy = 0, px = 0, py = 0;
        bool has_gt = input.try_number(r, cgx, &gx) && input.try_number(r, cgy, &gy);
        bool has_pred = input.try_number(r, cpx, &px) && input.try_number(r, cpy, &py);
        if (!has_gt && !has_pred) continue;
        std::vector<std::string> row(4);
        if (has_gt) {
            out << "<circle cx=\"" << fmt(f.px(gx)) << "\" cy=\"" << fmt(f.py(gy)) << "\" r=\"2.5\" fill=\"" << kRed
                << "\" fill-opacity=\"0.8\"/>\n";
            row[0] = fmt(gx, "%.6f");
            row[1] = fmt(gy, "%.6f");
        }
        if (has_pred) {
            preds << "<circle cx=\"" << fmt(f.px(px)) << "\" cy=\"" << fmt(f.py(py)) << "\" r=\"2\" fill=\"" << kBlue
                  << "\" fill-opacity=\"0.8\"/>\n";
            row[2] = fmt(px, "%.6f");
            row[3] = fmt(py, "%.6f");
        }
        result.sidecar.rows.push_back(std::move(row));
    }
    out << preds.str();
    legend_entry(out, f, 0, kRed, "ground truth");
    legend_entry(out, f, 1, kBlue, "prediction");
    out << "</svg>\n";
    result.svg = out.str();
    return result;
}

PlotOutput dynamics(const std::vector<std::pair<std::string, Csv>>& series) {
    struct Point {
        double step, mse;
    };
    std::vector<std::vector<Point>> curves;
    double max_step = 0;
    double lo = 0, hi = 0;
    bool any = false;
    for (const auto& [name, csv] : series) {
        int cs = csv.column("step");
        int cv = csv.column("val_mse");
        std::vector<Point> pts;
        for (std::size_t r = 0; r < csv.rows.size(); ++r) {
            Point p{};
            if (!csv.try_number(r, cs, &p.step) || !csv.try_number(r, cv, &p.mse)) continue;
            p.mse = std::log10(std::max(p.mse, 1e-12));
            pts.push_back(p);
            max_step = std::max(max_step, p.step);
            if (!any) {
                lo = hi = p.mse;
                any = true;
            } else {
                lo = std::min(lo, p.mse);
                hi = std::max(hi, p.mse);
            }
        }
        curves.push_back(std::move(pts));
    }
    if (!any) {
        lo = -4;
        hi = 0;
        max_step = 1;
    }
    if (hi - lo < 1e-9) {
        lo -= 1;
        hi += 1;
    }

    Frame f;
    f.width = 560;
    f.height = 320;
    f.x0 = 0;
    f.x1 = std::max(max_step, 1.0);
    f.y0 = std::floor(lo);
    f.y1 = std::ceil(hi);
    if (f.y1 - f.y0 < 1e-9) f.y1 = f.y0 + 1;

    std::ostringstream out;
    open_svg(out, f);
    for (int i = 0; i <= 4; ++i) {
        double s = f.x0 + (f.x1 - f.x0) * i / 4.0;
        x_tick(out, f, s, fmt(s, "%.0f"));
    }
    for (int k = static_cast<int>(f.y0); k <= static_cast<int>(f.y1); ++k) {
        y_tick(out, f, k, "1e" + std::to_string(k));
    }
    axis_titles(out, f, "step", "val mse");

    PlotOutput result;
    result.sidecar.columns = {"series", "step", "val_mse"};
    for (std::size_t s = 0; s < curves.size(); ++s) {
        const char* color = kCycle[s % (sizeof kCycle / sizeof kCycle[0])];
        if (!curves[s].empty()) {
            out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < curves[s].size(); ++i) {
                if (i > 0) out << ' ';
                out << fmt(f.px(curves[s][i].step)) << ',' << fmt(f.py(curves[s][i].mse));
            }
            out << "\"/>\n";
        }
        legend_entry(out, f, static_cast<int>(s), color, series[s].first);
        for (const Point& p : curves[s]) {
            result.sidecar.rows.push_back({series[s].first, fmt(p.step, "%.0f"), fmt(std::pow(10.0, p.mse), "%.8g")});
        }
    }
    out << "</svg>\n";
    result.svg = out.str();
    return result;
}

PlotOutput id_ood_bars(const Csv& input) {
    int cl = input.column("label");
    int cid = input.column("id");
    int cood = input.column("ood");

    struct Group {
        std::string label;
        double id, ood;
    };
    std::vector<Group> groups;
    double top = 0;
    for (std::size_t r = 0; r < input.rows.size(); ++r) {
        Group g;
        if (!input.try_number(r, cid, &g.id) || !input.try_number(r, cood, &g.ood)) continue;
        if (static_cast<std::size_t>(cl) < input.rows[r].size()) g.label = input.rows[r][static_cast<std::size_t>(cl)];
        top = std::max({top, g.id, g.ood});
        groups.push_back(std::move(g));
    }

    Frame f;
    f.width = 480;
    f.height = 320;
    f.x0 = 0;
    f.x1 = 1;
    f.y0 = 0;
    f.y1 = top > 0 ? top * 1.15 : 1.0;

    std::ostringstream out;
    open_svg(out, f);
    for (int i = 0; i <= 4; ++i) {
        double v = f.y1 * i / 4.0;
        y_tick(out, f, v, fmt(v, "%.3g"));
    }
    axis_titles(out, f, "", "rmse");

    PlotOutput result;
    result.sidecar.columns = {"label", "id", "ood"};
    const double span = f.width - f.left - f.right;
    const std::size_t n = groups.size();
    for (std::size_t i = 0; i < n; ++i) {
        double cell = span / static_cast<double>(std::max<std::size_t>(n, 1));
        double cx = f.left + cell * (static_cast<double>(i) + 0.5);
        double bw = std::min(cell * 0.28, 40.0);
        double base = f.py(0);
        double id_h = base - f.py(groups[i].id);
        double ood_h = base - f.py(groups[i].ood);
        out << "<rect x=\"" << fmt(cx - bw - 2) << "\" y=\"" << fmt(base - id_h) << "\" width=\"" << fmt(bw)
            << "\" height=\"" << fmt(id_h) << "\" fill=\"" << kBlue << "\"/>\n";
        out << "<rect x=\"" << fmt(cx + 2) << "\" y=\"" << fmt(base - ood_h) << "\" width=\"" << fmt(bw)
            << "\" height=\"" << fmt(ood_h) << "\" fill=\"" << kRed << "\"/>\n";
        out << "<text x=\"" << fmt(cx) << "\" y=\"" << fmt(f.height - f.bottom + 16)
            << "\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"middle\">" << groups[i].label
            << "</text>\n";
        result.sidecar.rows.push_back({groups[i].label, fmt(groups[i].id, "%.8g"), fmt(groups[i].ood, "%.8g")});
    }
    legend_entry(out, f, 0, kBlue, "id");
    legend_entry(out, f, 1, kRed, "ood");
    out << "</svg>\n";
    result.svg = out.str();
    return result;
}

}  // namespace derender::plot
