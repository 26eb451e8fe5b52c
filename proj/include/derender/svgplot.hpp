#pragma once

// Dependency-free SVG plot emission.  Every plot is produced from small CSV
// tables and returns both the SVG text and a consolidated CSV sidecar holding
// exactly the numbers that were drawn.  Output bytes are deterministic for
// fixed inputs: fixed formatting, no timestamps, no randomness.
//
// CSV dialect: header row of column names, comma-separated unquoted fields.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace derender::plot {

struct Csv {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;  // each row padded/truncated to columns.size()

    static Csv parse(const std::string& text);
    static Csv read_file(const std::filesystem::path& path);
    std::string dump() const;

    // Index of a named column; throws MissingColumn.
    int column(const std::string& name) const;
    // Numeric cell access; false for blank or non-numeric cells.
    bool try_number(std::size_t row, int col, double* out) const;
};

struct PlotOutput {
    std::string svg;
    Csv sidecar;
};

// Ground-truth points in red, predictions in blue, fixed unit-square axes.
// Requires columns gt_x, gt_y, pred_x, pred_y; blank cells skip that point.
PlotOutput scatter2d(const Csv& input);

// Validation MSE (log scale) against training step, one polyline per named
// series.  Each series table requires columns step and val_mse; rows with a
// blank val_mse are skipped.
PlotOutput dynamics(const std::vector<std::pair<std::string, Csv>>& series);

// Grouped ID/OOD bars, one group per row.  Requires columns label, id, ood.
PlotOutput id_ood_bars(const Csv& input);

}  // namespace derender::plot
