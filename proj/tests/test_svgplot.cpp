#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "derender/common.hpp"
#include "derender/svgplot.hpp"
#include "doctest.h"

using namespace derender;
using namespace derender::plot;

namespace {

std::optional<Errc> code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

std::size_t count_of(const std::string& text, const std::string& needle) {
    std::size_t n = 0;
    for (std::size_t at = text.find(needle); at != std::string::npos; at = text.find(needle, at + needle.size())) ++n;
    return n;
}

Csv make_csv(std::vector<std::string> columns, std::vector<std::vector<std::string>> rows) {
    Csv csv;
    csv.columns = std::move(columns);
    csv.rows = std::move(rows);
    return csv;
}

}  // namespace

TEST_CASE("svgplot: csv parsing pads short rows and truncates long ones") {
    Csv csv = Csv::parse("a,b,c\n1,2,3\n4,5\n6,7,8,9\n");
    CHECK(csv.columns == std::vector<std::string>{"a", "b", "c"});
    REQUIRE(csv.rows.size() == 3);
    CHECK(csv.rows[0] == std::vector<std::string>{"1", "2", "3"});
    CHECK(csv.rows[1] == std::vector<std::string>{"4", "5", ""});
    CHECK(csv.rows[2] == std::vector<std::string>{"6", "7", "8"});

    // dump() -> parse() is stable.
    std::string dumped = csv.dump();
    CHECK(dumped == "a,b,c\n1,2,3\n4,5,\n6,7,8\n");
    Csv again = Csv::parse(dumped);
    CHECK(again.columns == csv.columns);
    CHECK(again.rows == csv.rows);

    CHECK(csv.column("a") == 0);
    CHECK(csv.column("c") == 2);
    CHECK(code_of([&] { csv.column("missing"); }) == Errc::missing_column);

    double v = 0.0;
    CHECK(csv.try_number(0, 0, &v));
    CHECK(v == 1.0);
    CHECK_FALSE(csv.try_number(1, 2, &v));   // blank cell
    CHECK_FALSE(csv.try_number(99, 0, &v));  // row out of range
    CHECK_FALSE(csv.try_number(0, -1, &v));

    Csv text_cell = Csv::parse("x\n1.5e-3\nnot_a_number\n");
    CHECK(text_cell.try_number(0, 0, &v));
    CHECK(v == 1.5e-3);
    CHECK_FALSE(text_cell.try_number(1, 0, &v));

    CHECK(code_of([] { Csv::parse(""); }) == Errc::data_error);
    Csv header_only = Csv::parse("h1,h2\n");
    CHECK(header_only.columns.size() == 2);
    CHECK(header_only.rows.empty());
}

TEST_CASE("svgplot: csv file io round trips and reports missing files") {
    std::filesystem::path dir = std::filesystem::temp_directory_path() / "derender_svgplot_test";
    std::filesystem::create_directories(dir);
    std::filesystem::path path = dir / "table.csv";
    {
        std::ofstream out(path, std::ios::binary);
        out << "step,val_mse\n1,0.5\n2,0.25\n";
    }
    Csv csv = Csv::read_file(path);
    CHECK(csv.columns == std::vector<std::string>{"step", "val_mse"});
    CHECK(csv.rows.size() == 2);

    CHECK(code_of([&] { Csv::read_file(dir / "nope.csv"); }) == Errc::io_error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("svgplot: scatter2d draws valid points and lists them in the sidecar") {
    Csv input = make_csv({"gt_x", "gt_y", "pred_x", "pred_y"},
                         {
                             {"0.25", "0.5", "0.3", "0.4"},  // both points
                             {"0.1", "0.9", "", ""},         // ground truth only
                             {"", "", "0.7", "0.2"},         // prediction only
                             {"", "", "", ""},               // skipped entirely
                             {"oops", "1", "0.5", "0.5"},    // bad gt cell -> prediction only
                         });

    PlotOutput out = scatter2d(input);
    CHECK(out.svg.find("<svg") != std::string::npos);
    CHECK(out.svg.rfind("</svg>\n") == out.svg.size() - 7);
    CHECK(count_of(out.svg, "r=\"2.5\"") == 2);  // ground-truth dots
    CHECK(count_of(out.svg, "r=\"2\"") == 3);    // prediction dots

    CHECK(out.sidecar.columns == std::vector<std::string>{"gt_x", "gt_y", "pred_x", "pred_y"});
    REQUIRE(out.sidecar.rows.size() == 4);
    CHECK(out.sidecar.rows[0] == std::vector<std::string>{"0.250000", "0.500000", "0.300000", "0.400000"});
    CHECK(out.sidecar.rows[1] == std::vector<std::string>{"0.100000", "0.900000", "", ""});
    CHECK(out.sidecar.rows[2] == std::vector<std::string>{"", "", "0.700000", "0.200000"});
    CHECK(out.sidecar.rows[3] == std::vector<std::string>{"", "", "0.500000", "0.500000"});

    // Byte-determinism.
    PlotOutput again = scatter2d(input);
    CHECK(again.svg == out.svg);
    CHECK(again.sidecar.dump() == out.sidecar.dump());

    Csv missing = make_csv({"gt_x", "gt_y", "pred_x"}, {});
    CHECK(code_of([&] { scatter2d(missing); }) == Errc::missing_column);
}

TEST_CASE("svgplot: dynamics emits one polyline per series and a tidy sidecar") {
    Csv a = make_csv({"step", "val_mse"}, {{"1", "1.0"}, {"2", "0.1"}, {"3", "0.01"}, {"4", ""}, {"5", "junk"}});
    Csv b = make_csv({"step", "val_mse", "extra"}, {{"10", "0.5", "x"}, {"20", "0.05", "y"}});

    PlotOutput out = dynamics({{"char", a}, {"float", b}});
    CHECK(count_of(out.svg, "<polyline") == 2);
    CHECK(out.svg.find("char") != std::string::npos);
    CHECK(out.svg.find("float") != std::string::npos);

    CHECK(out.sidecar.columns == std::vector<std::string>{"series", "step", "val_mse"});
    REQUIRE(out.sidecar.rows.size() == 5);  // blank and non-numeric rows are dropped
    CHECK(out.sidecar.rows[0] == std::vector<std::string>{"char", "1", "1"});
    CHECK(out.sidecar.rows[2] == std::vector<std::string>{"char", "3", "0.01"});
    CHECK(out.sidecar.rows[3] == std::vector<std::string>{"float", "10", "0.5"});

    PlotOutput again = dynamics({{"char", a}, {"float", b}});
    CHECK(again.svg == out.svg);

    // An empty series list still yields a valid frame.
    PlotOutput empty = dynamics({});
    CHECK(empty.svg.find("<svg") != std::string::npos);
    CHECK(empty.sidecar.rows.empty());

    Csv missing = make_csv({"step"}, {{"1"}});
    CHECK(code_of([&] { dynamics({{"only", missing}}); }) == Errc::missing_column);
}

TEST_CASE("svgplot: id/ood bars draw two rects per group") {
    Csv input = make_csv({"label", "id", "ood"},
                         {
                             {"char", "0.02", "0.12"},
                             {"float", "0.01", "0.03"},
                             {"skipme", "", "0.5"},
                         });
    PlotOutput out = id_ood_bars(input);
    // Fixed chrome (canvas, frame, two legend swatches) plus two bars per group.
    CHECK(count_of(out.svg, "<rect") == 4 + 2 * 2);
    Csv three = make_csv({"label", "id", "ood"}, {{"a", "1", "2"}, {"b", "3", "4"}, {"c", "5", "6"}});
    CHECK(count_of(id_ood_bars(three).svg, "<rect") == 4 + 3 * 2);
    CHECK(out.svg.find(">char</text>") != std::string::npos);
    CHECK(out.svg.find(">float</text>") != std::string::npos);
    CHECK(out.svg.find("skipme") == std::string::npos);

    CHECK(out.sidecar.columns == std::vector<std::string>{"label", "id", "ood"});
    REQUIRE(out.sidecar.rows.size() == 2);
    CHECK(out.sidecar.rows[0] == std::vector<std::string>{"char", "0.02", "0.12"});
    CHECK(out.sidecar.rows[1] == std::vector<std::string>{"float", "0.01", "0.03"});

    PlotOutput again = id_ood_bars(input);
    CHECK(again.svg == out.svg);

    Csv missing = make_csv({"label", "id"}, {});
    CHECK(code_of([&] { id_ood_bars(missing); }) == Errc::missing_column);
}
