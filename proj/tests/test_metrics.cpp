#include "doctest.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "derender/common.hpp"
#include "derender/metrics.hpp"
#include "derender/rng.hpp"
#include "derender/rotation.hpp"
#include "derender/scene.hpp"

using namespace derender;

namespace {

// Brute-force assignment oracle: enumerate every injective map of the smaller
// side into the larger and keep the minimum total.  The winning total is
// re-accumulated in ascending pred-row order, the same order the solver uses,
// so optimal totals compare exactly.
double brute_force_min(const Eigen::MatrixXd& cost) {
    int n = static_cast<int>(cost.rows()), m = static_cast<int>(cost.cols());
    bool transposed = n > m;
    Eigen::MatrixXd c = cost;
    if (transposed) c = cost.transpose().eval();  // rows <= cols
    int r = static_cast<int>(c.rows()), k = static_cast<int>(c.cols());
    std::vector<int> cols(static_cast<std::size_t>(k));
    std::iota(cols.begin(), cols.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::pair<int, int>> best_pairs;
    // Permute the columns; the first r entries pair with rows 0..r-1.
    std::sort(cols.begin(), cols.end());
    do {
        double total = 0.0;
        for (int i = 0; i < r; ++i) total += c(i, cols[static_cast<std::size_t>(i)]);
        if (total < best) {
            best = total;
            best_pairs.clear();
            for (int i = 0; i < r; ++i) best_pairs.push_back({i, cols[static_cast<std::size_t>(i)]});
        }
    } while (std::next_permutation(cols.begin(), cols.end()));
    // Re-accumulate in ascending pred order (pred = original rows).
    if (transposed)
        for (auto& [a, b] : best_pairs) std::swap(a, b);
    std::sort(best_pairs.begin(), best_pairs.end());
    double total = 0.0;
    for (auto& [pr, gt] : best_pairs) total += cost(pr, gt);
    return total;
}

scene::SceneProgram random_scene(Rng& rng, int n_objects) {
    auto cat = scene::clevr_catalog();
    scene::SceneProgram s;
    s.camera = scene::clevr_camera();
    for (int i = 0; i < n_objects; ++i) {
        scene::ObjectRecord o;
        o.shape = rng.pick(cat.shapes);
        o.size = rng.pick(cat.sizes).name;
        o.color = rng.pick(cat.colors).name;
        o.material = rng.pick(cat.materials);
        o.location = {rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0, 1)};
        o.rotation = rot::axis_rotation(2, rng.uniform(-3, 3));
        s.objects.push_back(o);
    }
    return s;
}

}  // namespace

TEST_CASE("metrics: assignment equals brute force on random continuous costs") {
    Rng rng(71);
    for (int trial = 0; trial < 300; ++trial) {
        int n = 1 + static_cast<int>(rng.below(6));
        int m = 1 + static_cast<int>(rng.below(6));
        Eigen::MatrixXd cost(n, m);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) cost(i, j) = rng.uniform(0, 10);
        auto a = eval::solve_assignment(cost);
        CHECK(a.total_cost == brute_force_min(cost));
        CHECK(static_cast<int>(a.pairs.size()) == std::min(n, m));
        // Pair lists are consistent: ascending pred, no duplicates.
        std::set<int> preds, gts;
        double resum = 0.0;
        for (auto [p, g] : a.pairs) {
            preds.insert(p);
            gts.insert(g);
            resum += cost(p, g);
        }
        CHECK(preds.size() == a.pairs.size());
        CHECK(gts.size() == a.pairs.size());
        CHECK(resum == a.total_cost);
        CHECK(a.unmatched_pred.size() == static_cast<std::size_t>(n) - a.pairs.size());
        CHECK(a.unmatched_gt.size() == static_cast<std::size_t>(m) - a.pairs.size());
    }
}

TEST_CASE("metrics: assignment equals brute force on dyadic and degenerate costs") {
    Rng rng(72);
    for (int trial = 0; trial < 200; ++trial) {
        int n = 1 + static_cast<int>(rng.below(6));
        int m = 1 + static_cast<int>(rng.below(6));
        Eigen::MatrixXd cost(n, m);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) cost(i, j) = 0.25 * static_cast<double>(rng.below(16));
        auto a = eval::solve_assignment(cost);
        CHECK(a.total_cost == brute_force_min(cost));
    }
    // Ties everywhere: any permutation is optimal; cost must still be minimal.
    Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(4, 4, 1.5);
    CHECK(eval::solve_assignment(flat).total_cost == 6.0);
    // 1x1 and rectangular edges.
    Eigen::MatrixXd one(1, 1);
    one << 3.25;
    CHECK(eval::solve_assignment(one).total_cost == 3.25);
    Eigen::MatrixXd row(1, 4);
    row << 4, 2, 9, 7;
    auto ra = eval::solve_assignment(row);
    CHECK(ra.total_cost == 2.0);
    CHECK(ra.pairs == std::vector<std::pair<int, int>>{{0, 1}});
    CHECK(ra.unmatched_gt == std::vector<int>{0, 2, 3});
}

TEST_CASE("metrics: assignment rejects non-finite costs") {
    Eigen::MatrixXd bad(2, 2);
    bad << 1, 2, std::numeric_limits<double>::infinity(), 3;
    CHECK_THROWS_AS(eval::solve_assignment(bad), Error);
}

TEST_CASE("metrics: object cost combines location distance and attribute mismatches") {
    scene::ObjectRecord a, b;
    a.shape = b.shape = "cube";
    a.size = b.size = "large";
    a.color = b.color = "red";
    a.material = b.material = "metal";
    a.location = {0, 0, 0};
    b.location = {3, 4, 0};
    CHECK(eval::object_cost(a, b) == doctest::Approx(5.0));
    b.color = "blue";
    CHECK(eval::object_cost(a, b) == doctest::Approx(6.0));
    b.shape = "sphere";
    b.material = "rubber";
    b.size = "small";
    CHECK(eval::object_cost(a, b) == doctest::Approx(9.0));
    CHECK(eval::object_cost(a, a) == 0.0);
}

TEST_CASE("metrics: match_objects equals brute force over object costs") {
    Rng rng(73);
    for (int trial = 0; trial < 150; ++trial) {
        auto pred = random_scene(rng, 1 + static_cast<int>(rng.below(6)));
        auto gt = random_scene(rng, 1 + static_cast<int>(rng.below(6)));
        Eigen::MatrixXd cost(pred.objects.size(), gt.objects.size());
        for (std::size_t i = 0; i < pred.objects.size(); ++i)
            for (std::size_t j = 0; j < gt.objects.size(); ++j)
                cost(static_cast<int>(i), static_cast<int>(j)) =
                    eval::object_cost(pred.objects[i], gt.objects[j]);
        auto a = eval::match_objects(pred, gt);
        CHECK(a.total_cost == brute_force_min(cost));
    }
}

TEST_CASE("metrics: matching is invariant to prediction order") {
    Rng rng(74);
    auto pred = random_scene(rng, 5);
    auto gt = random_scene(rng, 4);
    auto base = eval::match_objects(pred, gt);
    scene::SceneProgram shuffled = pred;
    std::reverse(shuffled.objects.begin(), shuffled.objects.end());
    auto flipped = eval::match_objects(shuffled, gt);
    CHECK(base.total_cost == doctest::Approx(flipped.total_cost).epsilon(1e-12));
    // Same pairing after undoing the reversal.
    std::set<std::pair<int, int>> a, b;
    int n = static_cast<int>(pred.objects.size());
    for (auto [p, g] : base.pairs) a.insert({p, g});
    for (auto [p, g] : flipped.pairs) b.insert({n - 1 - p, g});
    CHECK(a == b);
}

TEST_CASE("metrics: attribute accuracies count matched pairs only") {
    Rng rng(75);
    auto gt = random_scene(rng, 3);
    scene::SceneProgram pred = gt;  // perfect prediction
    auto assign = eval::match_objects(pred, gt);
    auto m = eval::attribute_metrics(assign, pred, gt);
    CHECK(m.at("shape_acc") == 100.0);
    CHECK(m.at("size_acc") == 100.0);
    CHECK(m.at("color_acc") == 100.0);
    CHECK(m.at("material_acc") == 100.0);
    CHECK(m.at("category_acc") == 100.0);

    pred.objects[0].color = pred.objects[0].color == "red" ? "blue" : "red";
    pred.objects[1].shape = pred.objects[1].shape == "cube" ? "sphere" : "cube";
    assign = eval::match_objects(pred, gt);
    m = eval::attribute_metrics(assign, pred, gt);
    CHECK(m.at("color_acc") == doctest::Approx(100.0 * 2 / 3));
    CHECK(m.at("shape_acc") == doctest::Approx(100.0 * 2 / 3));
    CHECK(m.at("material_acc") == 100.0);
}

TEST_CASE("metrics: category accuracy groups shapes by name prefix") {
    scene::SceneProgram pred, gt;
    pred.camera = gt.camera = scene::clevr_camera();
    scene::ObjectRecord o;
    o.shape = "chairs_0001";
    o.color = "red";
    o.location = {0, 0, 0};
    gt.objects.push_back(o);
    o.shape = "chairs_0002";  // wrong instance, right category
    pred.objects.push_back(o);
    auto assign = eval::match_objects(pred, gt);
    auto m = eval::attribute_metrics(assign, pred, gt);
    CHECK(m.at("shape_acc") == 0.0);
    CHECK(m.at("category_acc") == 100.0);
    // Attributes absent from the task report NaN.
    CHECK(std::isnan(m.at("size_acc")));
    CHECK(std::isnan(m.at("material_acc")));
    CHECK(m.at("color_acc") == 100.0);
}

TEST_CASE("metrics: count error is the mean absolute object-count gap") {
    Rng rng(76);
    std::vector<scene::SceneProgram> preds, gts;
    preds.push_back(random_scene(rng, 3));
    gts.push_back(random_scene(rng, 5));  // |3-5| = 2
    preds.push_back(random_scene(rng, 4));
    gts.push_back(random_scene(rng, 4));  // 0
    preds.push_back(random_scene(rng, 6));
    gts.push_back(random_scene(rng, 1));  // 5
    CHECK(eval::count_error(preds, gts) == doctest::Approx((2.0 + 0.0 + 5.0) / 3));
    std::vector<scene::SceneProgram> a{preds[0]}, b;
    CHECK_THROWS_AS(eval::count_error(a, b), Error);
}

TEST_CASE("metrics: k-deletion moves count error by exactly k") {
    Rng rng(77);
    for (int k = 1; k <= 2; ++k) {
        std::vector<scene::SceneProgram> preds, gts;
        for (int i = 0; i < 25; ++i) {
            auto s = random_scene(rng, 3 + k);
            gts.push_back(s);
            scene::SceneProgram del = s;
            del.objects.erase(del.objects.begin(), del.objects.begin() + k);
            preds.push_back(del);
        }
        CHECK(eval::count_error(preds, gts) == static_cast<double>(k));
    }
}

TEST_CASE("metrics: pose metrics average matched location and rotation errors") {
    scene::SceneProgram gt, pred;
    gt.camera = pred.camera = scene::clevr_camera();
    for (int i = 0; i < 2; ++i) {
        scene::ObjectRecord o;
        o.shape = "cube";
        o.size = "large";
        o.color = i ? "red" : "blue";
        o.material = "metal";
        o.location = {static_cast<double>(3 * i), 0, 0};
        gt.objects.push_back(o);
        pred.objects.push_back(o);
    }
    pred.objects[0].location.x() += 0.3;
    pred.objects[1].rotation = rot::axis_rotation(2, 0.5);
    auto assign = eval::match_objects(pred, gt);
    auto pm = eval::pose_metrics(assign, pred, gt);
    CHECK(pm.pairs == 2);
    CHECK(pm.l2 == doctest::Approx(0.15).epsilon(1e-9));
    CHECK(pm.geodesic_deg == doctest::Approx(0.25 * 180.0 / 3.14159265358979323846).epsilon(1e-9));
}

TEST_CASE("metrics: chamfer on point sets matches a hand computation") {
    std::vector<Eigen::Vector3d> a = {{0, 0, 0}};
    std::vector<Eigen::Vector3d> b = {{1, 0, 0}};
    CHECK(eval::chamfer_points(a, b) == 2.0);  // 1^2 each direction, sum of means
    std::vector<Eigen::Vector3d> c = {{0, 0, 0}, {2, 0, 0}};
    std::vector<Eigen::Vector3d> d = {{0, 0, 0}};
    // c->d: (0 + 4)/2 = 2; d->c: 0 -> total 2.
    CHECK(eval::chamfer_points(c, d) == 2.0);
    CHECK(eval::chamfer_points(a, a) == 0.0);
}

TEST_CASE("metrics: scene chamfer is zero on identity and bitwise symmetric") {
    Rng rng(78);
    auto cat = scene::clevr_catalog();
    for (int i = 0; i < 40; ++i) {
        auto s = random_scene(rng, 1 + static_cast<int>(rng.below(4)));
        CHECK(eval::chamfer_scene(s, s, cat, 128, 9) == 0.0);
        auto t = random_scene(rng, 1 + static_cast<int>(rng.below(4)));
        double st = eval::chamfer_scene(s, t, cat, 128, 9);
        double ts = eval::chamfer_scene(t, s, cat, 128, 9);
        CHECK(st == ts);  // bitwise
        CHECK(st >= 0.0);
    }
    scene::SceneProgram empty;
    empty.camera = scene::clevr_camera();
    auto s = random_scene(rng, 2);
    CHECK_THROWS_AS(eval::chamfer_scene(empty, s, cat, 64, 1), Error);
}

TEST_CASE("metrics: chamfer grows with location noise") {
    Rng rng(79);
    auto cat = scene::clevr_catalog();
    auto s = random_scene(rng, 3);
    double prev = 0.0;
    for (double sigma : {0.1, 0.4, 1.6}) {
        scene::SceneProgram noisy = s;
        Rng noise(5);
        for (auto& o : noisy.objects) o.location += sigma * Eigen::Vector3d(noise.normal(), noise.normal(), 0);
        double cd = eval::chamfer_scene(noisy, s, cat, 128, 3);
        CHECK(cd > prev);
        prev = cd;
    }
}

TEST_CASE("metrics: memorization ratio matches constructed samplers") {
    std::set<std::string> train;
    for (int i = 0; i < 500; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "0.%03d", i);
        train.insert(buf);
    }
    const long domain = 1001;

    // Uniform predictions over the whole domain -> ratio ~ 1.
    std::vector<std::string> uniform;
    for (int i = 0; i <= 1000; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "0.%03d", i);
        uniform.push_back(buf);
    }
    // hits_in = 500 of 500 train values, hits_out = 501 of 501 others: exactly 1.
    CHECK(eval::memorization_ratio(uniform, train, domain) == 1.0);

    // All predictions in the train set -> +inf.
    std::vector<std::string> all_in(uniform.begin(), uniform.begin() + 500);
    CHECK(std::isinf(eval::memorization_ratio(all_in, train, domain)));

    // None in the train set -> 0.
    std::vector<std::string> all_out(uniform.begin() + 500, uniform.end());
    CHECK(eval::memorization_ratio(all_out, train, domain) == 0.0);

    // Constructed 4:1 per-value sampler: each train value predicted 4 times,
    // each non-train value once -> ratio exactly 4.
    std::vector<std::string> skewed;
    for (int rep = 0; rep < 4; ++rep) skewed.insert(skewed.end(), all_in.begin(), all_in.end());
    skewed.insert(skewed.end(), all_out.begin(), all_out.end());
    CHECK(eval::memorization_ratio(skewed, train, domain) == 4.0);

    // Preconditions.
    CHECK_THROWS_AS(eval::memorization_ratio({}, train, domain), Error);
    CHECK_THROWS_AS(eval::memorization_ratio(uniform, {}, domain), Error);
    CHECK_THROWS_AS(eval::memorization_ratio(uniform, train, 500), Error);
}

TEST_CASE("metrics: evaluate_scenes on identical inputs yields exact zeros and hundreds") {
    Rng rng(80);
    auto cat = scene::clevr_catalog();
    std::vector<std::optional<scene::SceneProgram>> preds;
    std::vector<scene::SceneProgram> gts;
    for (int i = 0; i < 30; ++i) {
        auto s = random_scene(rng, 1 + static_cast<int>(rng.below(5)));
        gts.push_back(s);
        preds.push_back(s);
    }
    eval::EvaluateOptions opts;
    opts.with_chamfer = true;
    opts.chamfer_points = 64;
    auto res = eval::evaluate_scenes(preds, gts, cat, opts);
    CHECK(res.report.l2 == 0.0);
    CHECK(res.report.geodesic_deg == 0.0);
    CHECK(res.report.count == 0.0);
    CHECK(res.report.chamfer == 0.0);
    CHECK(res.report.size_acc == 100.0);
    CHECK(res.report.color_acc == 100.0);
    CHECK(res.report.material_acc == 100.0);
    CHECK(res.report.shape_acc == 100.0);
    CHECK(res.report.category_acc == 100.0);
    CHECK(res.report.malformed_rate == 0.0);
    REQUIRE(res.rows.size() == 30);
    for (const auto& row : res.rows) {
        CHECK(row.l2 == 0.0);
        CHECK(row.count_err == 0.0);
        CHECK_FALSE(row.malformed);
    }
}

TEST_CASE("metrics: malformed predictions are penalised, not fatal") {
    Rng rng(81);
    auto cat = scene::clevr_catalog();
    std::vector<std::optional<scene::SceneProgram>> preds;
    std::vector<scene::SceneProgram> gts;
    for (int i = 0; i < 4; ++i) gts.push_back(random_scene(rng, 2));
    preds.push_back(gts[0]);
    preds.push_back(std::nullopt);  // malformed
    preds.push_back(gts[2]);
    preds.push_back(std::nullopt);
    eval::EvaluateOptions opts;
    opts.with_chamfer = true;
    opts.chamfer_points = 32;
    opts.chamfer_penalty = 123.0;
    auto res = eval::evaluate_scenes(preds, gts, cat, opts);
    CHECK(res.report.malformed_rate == doctest::Approx(0.5));
    CHECK(res.rows[1].malformed);
    CHECK(res.rows[3].malformed);
    CHECK(res.rows[1].count_err == 2.0);  // empty vs 2 objects
    CHECK(res.rows[1].chamfer == 123.0);
    CHECK(res.rows[0].chamfer == 0.0);
    // Count error blends in the malformed scenes.
    CHECK(res.report.count == doctest::Approx(1.0));
    // Attribute accuracies unaffected by unmatched objects (exclusion rule).
    CHECK(res.report.shape_acc == 100.0);
}

TEST_CASE("metrics: csv row shape matches the header") {
    eval::MetricReport r;
    auto header = eval::MetricReport::csv_header();
    auto row = r.csv_row();
    CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));
    CHECK(header.substr(0, 2) == "l2");
}

TEST_CASE("metrics: length mismatches raise") {
    Rng rng(82);
    auto cat = scene::clevr_catalog();
    std::vector<std::optional<scene::SceneProgram>> preds;
    std::vector<scene::SceneProgram> gts;
    gts.push_back(random_scene(rng, 2));
    try {
        eval::evaluate_scenes(preds, gts, cat, {});
        FAIL("expected length_mismatch");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::length_mismatch);
    }
}
